#include "pace/timestamp.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace pace {
namespace {

using namespace std::chrono;

int read_digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) {
    throw std::invalid_argument("truncated timestamp: " + std::string(text));
  }
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') {
      throw std::invalid_argument("malformed timestamp: " + std::string(text));
    }
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw std::invalid_argument("malformed timestamp: " + std::string(text));
  }
}

}  // namespace

std::string to_iso8601(Timestamp t) {
  const auto total_ms = static_cast<std::int64_t>(std::llround(t.hours * 3600.0 * 1000.0));
  const sys_time<milliseconds> tp{milliseconds{total_ms}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss<milliseconds> hms{tp - day};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()), static_cast<int>(hms.subseconds().count()));
  return buf;
}

Timestamp parse_iso8601(std::string_view text) {
  const int y = read_digits(text, 0, 4);
  expect(text, 4, '-');
  const int mo = read_digits(text, 5, 2);
  expect(text, 7, '-');
  const int d = read_digits(text, 8, 2);
  if (text.size() <= 10 || (text[10] != 'T' && text[10] != ' ')) {
    throw std::invalid_argument("malformed timestamp: " + std::string(text));
  }
  const int h = read_digits(text, 11, 2);
  expect(text, 13, ':');
  const int mi = read_digits(text, 14, 2);
  expect(text, 16, ':');
  const int s = read_digits(text, 17, 2);
  std::size_t pos = 19;
  double fraction = 0.0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    double scale = 0.1;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      fraction += scale * (text[pos] - '0');
      scale /= 10.0;
      ++pos;
    }
  }
  int offset_minutes = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z') {
      ++pos;
    } else if (text[pos] == '+' || text[pos] == '-') {
      const int sign = text[pos] == '+' ? 1 : -1;
      const int oh = read_digits(text, pos + 1, 2);
      expect(text, pos + 3, ':');
      const int om = read_digits(text, pos + 4, 2);
      offset_minutes = sign * (oh * 60 + om);
      pos += 6;
    }
  }
  if (pos != text.size()) {
    throw std::invalid_argument("trailing characters in timestamp: " + std::string(text));
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
    throw std::invalid_argument("invalid calendar value in timestamp: " + std::string(text));
  }
  const auto day_count = sys_days{ymd}.time_since_epoch().count();
  const double seconds = static_cast<double>(day_count) * 86400.0 + h * 3600.0 + mi * 60.0 + s + fraction -
                         offset_minutes * 60.0;
  return Timestamp{seconds / 3600.0};
}

Timestamp now_utc() {
  const auto ms = duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  return Timestamp{static_cast<double>(ms) / 3'600'000.0};
}

}  // namespace pace
