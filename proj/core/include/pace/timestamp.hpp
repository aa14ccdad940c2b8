#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace pace {

/// Wall-clock instant, stored as hours since 1970-01-01T00:00:00Z.
///
/// The simulator starts every trainee at hour 0; the co-pilot service stores
/// real instants. Both serialize as ISO-8601 UTC with millisecond precision.
struct Timestamp {
  double hours = 0.0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

/// Elapsed hours from `earlier` to `later`, clamped at zero on clock regression.
inline double elapsed_hours(Timestamp earlier, Timestamp later) {
  const double gap = later.hours - earlier.hours;
  return gap > 0.0 ? gap : 0.0;
}

std::string to_iso8601(Timestamp t);

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]`. Throws std::invalid_argument.
Timestamp parse_iso8601(std::string_view text);

Timestamp now_utc();

}  // namespace pace
