#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tunedemand/envelope.hpp"
#include "tunedemand/estimation.hpp"

namespace tunedemand::io {

struct SongReport {
  std::string title;
  std::vector<std::int64_t> observed;
  std::optional<ControlChart> chart;
  std::optional<EnvelopeFit> envelope;
};

/// Standalone SVG: observed weekly counts as points, the control band as a
/// shaded polygon with its mean line, and the envelope with dashed phase markers.
std::string render_song_svg(const SongReport& report, int width = 720, int height = 360);

}  // namespace tunedemand::io
