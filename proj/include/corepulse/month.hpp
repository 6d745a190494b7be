#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace corepulse {

/// Calendar month; the atomic time unit of the whole pipeline.
struct Month {
  int year = 1970;
  int month = 1;  // 1..12

  int serial() const { return year * 12 + (month - 1); }
  static Month from_serial(int serial) { return Month{serial / 12, serial % 12 + 1}; }

  std::string to_string() const;  // YYYY-MM
  static std::optional<Month> parse(std::string_view text);

  auto operator<=>(const Month& other) const { return serial() <=> other.serial(); }
  bool operator==(const Month& other) const = default;
};

/// Inclusive range of months. Month indices inside the window are 1-based.
struct StudyWindow {
  Month start{2008, 8};
  Month end{2009, 6};

  int length() const { return end.serial() - start.serial() + 1; }
  bool contains(Month m) const { return m >= start && m <= end; }
  /// 1-based position of `m` inside the window (may fall outside [1, length]).
  int index_of(Month m) const { return m.serial() - start.serial() + 1; }
  Month at(int index) const { return Month::from_serial(start.serial() + index - 1); }
  bool valid() const { return end >= start; }
};

/// Parsed ISO-8601 timestamp truncated to what the pipeline needs.
struct Timestamp {
  Month month;
  std::int64_t key = 0;  // YYYYMMDDhhmmss, sortable

  std::string to_iso() const;
};

/// Accepts `YYYY-MM`, `YYYY-MM-DD`, and `YYYY-MM-DD[T ]hh:mm[:ss][Z]`.
std::optional<Timestamp> parse_timestamp(std::string_view text);

}  // namespace corepulse
