#include "tunedemand/io/draws_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "tunedemand/error.hpp"

namespace tunedemand::io {
namespace {

constexpr char kMagic[8] = {'T', 'D', 'D', 'R', 'A', 'W', 'S', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ValidationError("truncated draw file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string block_of(const std::string& name) { return name.substr(0, name.find('[')); }

}  // namespace

void write_draws(const std::filesystem::path& dir, const DrawTable& table) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> blocks;
  for (std::size_t k = 0; k < table.names.size(); ++k) {
    const auto b = block_of(table.names[k]);
    if (!blocks.count(b)) order.push_back(b);
    blocks[b].push_back(k);
  }
  const auto draws = table.chains.empty() ? 0 : static_cast<std::uint64_t>(table.chains.front().rows());
  nlohmann::json sidecar{{"names", table.names}, {"chains", table.chains.size()}, {"draws", draws}};
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& b : order) {
    const auto& cols = blocks[b];
    std::ofstream os(dir / (b + ".bin"), std::ios::binary | std::ios::trunc);
    os.write(kMagic, 8);
    put_u64(os, table.chains.size());
    put_u64(os, draws);
    put_u64(os, cols.size());
    for (const auto& chain : table.chains) {
      for (Eigen::Index i = 0; i < chain.rows(); ++i) {
        for (auto k : cols) put_u64(os, std::bit_cast<std::uint64_t>(chain(i, static_cast<Eigen::Index>(k))));
      }
    }
    if (!os) throw std::runtime_error("cannot write draw file for block " + b);
    nlohmann::json columns = nlohmann::json::array();
    for (auto k : cols) columns.push_back(table.names[k]);
    listing.push_back({{"block", b}, {"file", b + ".bin"}, {"columns", columns}});
  }
  sidecar["blocks"] = listing;
  std::ofstream(dir / "names.json", std::ios::trunc) << sidecar.dump(2) << '\n';
}

DrawTable read_draws(const std::filesystem::path& dir) {
  std::ifstream side(dir / "names.json");
  if (!side) throw NotFoundError("no draws at " + dir.string());
  const auto sidecar = nlohmann::json::parse(side);
  DrawTable table;
  table.names = sidecar.at("names").get<std::vector<std::string>>();
  const auto n_chains = sidecar.at("chains").get<std::size_t>();
  const auto n_draws = sidecar.at("draws").get<std::size_t>();
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < table.names.size(); ++k) index[table.names[k]] = k;
  table.chains.assign(n_chains, Eigen::MatrixXd(static_cast<Eigen::Index>(n_draws), static_cast<Eigen::Index>(table.names.size())));
  for (const auto& b : sidecar.at("blocks")) {
    std::ifstream is(dir / b.at("file").get<std::string>(), std::ios::binary);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw ValidationError("bad draw file header");
    const auto chains = get_u64(is), draws = get_u64(is), width = get_u64(is);
    const auto cols = b.at("columns").get<std::vector<std::string>>();
    if (chains != n_chains || draws != n_draws || width != cols.size()) throw ValidationError("draw file shape mismatch");
    for (std::size_t c = 0; c < chains; ++c)
      for (std::size_t i = 0; i < draws; ++i)
        for (const auto& name : cols) {
          table.chains[c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(index.at(name))) =
              std::bit_cast<double>(get_u64(is));
        }
  }
  return table;
}

}  // namespace tunedemand::io
