#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tunedemand::io {

struct DrawTable {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  // draws x names
};

/// Columnar draw files: one little-endian f64 file per parameter block
/// (the name before '['), each "TDDRAWS1" + u64 chains, draws, width, then
/// values chain by chain, draw by draw. names.json lists the blocks and the
/// original column order.
void write_draws(const std::filesystem::path& dir, const DrawTable& table);
DrawTable read_draws(const std::filesystem::path& dir);

}  // namespace tunedemand::io
