#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace tunedemand::io {

/// Days since 1970-01-01 of an ISO "YYYY-MM-DD" date; nullopt when the text
/// is not a valid calendar date.
std::optional<std::int64_t> parse_date(std::string_view text);

std::string format_date(std::int64_t days);

/// Week index of `day` counted from `release`, weeks starting on the
/// release weekday. Negative before release.
std::int64_t week_index(std::int64_t release, std::int64_t day);

}  // namespace tunedemand::io
