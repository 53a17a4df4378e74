#pragma once

#include <span>
#include <vector>

namespace tunedemand {

/// Split-R-hat over equally long chains of one scalar.
double split_rhat(std::span<const std::vector<double>> chains);

/// Effective sample size from the chains' autocorrelations, summing
/// Geyer's initial positive pairs.
double effective_sample_size(std::span<const std::vector<double>> chains);

}  // namespace tunedemand
