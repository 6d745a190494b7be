#include "corepulse/month.hpp"

#include <charconv>
#include <cstdio>

namespace corepulse {

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto res = std::from_chars(text.data() + pos, text.data() + pos + width, out);
  return res.ec == std::errc{};
}

int days_in_month(int year, int month) {
  static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2 && ((year % 4 == 0 && year % 100 != 0) || year % 400 == 0)) return 29;
  return days[month - 1];
}

}  // namespace

std::string Month::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

std::optional<Month> Month::parse(std::string_view text) {
  int y = 0, m = 0;
  if (text.size() != 7 || text[4] != '-') return std::nullopt;
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, m)) return std::nullopt;
  if (m < 1 || m > 12) return std::nullopt;
  return Month{y, m};
}

std::string Timestamp::to_iso() const {
  std::int64_t k = key;
  const int ss = static_cast<int>(k % 100); k /= 100;
  const int mi = static_cast<int>(k % 100); k /= 100;
  const int hh = static_cast<int>(k % 100); k /= 100;
  const int dd = static_cast<int>(k % 100);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d", month.year, month.month, dd, hh,
                mi, ss);
  return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  int y = 0, mo = 0, d = 1, h = 0, mi = 0, s = 0;
  if (text.size() < 7 || text[4] != '-') return std::nullopt;
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, mo)) return std::nullopt;
  if (mo < 1 || mo > 12) return std::nullopt;
  if (text.size() > 7) {
    if (text.size() < 10 || text[7] != '-' || !read_int(text, 8, 2, d)) return std::nullopt;
    if (d < 1 || d > days_in_month(y, mo)) return std::nullopt;
    if (text.size() > 10) {
      if (text[10] != 'T' && text[10] != ' ') return std::nullopt;
      if (text.size() != 16 && text.size() != 19) return std::nullopt;
      if (text[13] != ':' || !read_int(text, 11, 2, h) || !read_int(text, 14, 2, mi))
        return std::nullopt;
      if (text.size() == 19 && (text[16] != ':' || !read_int(text, 17, 2, s))) return std::nullopt;
      if (h > 23 || mi > 59 || s > 60) return std::nullopt;
    }
  }
  Timestamp ts;
  ts.month = Month{y, mo};
  ts.key = ((((static_cast<std::int64_t>(y) * 100 + mo) * 100 + d) * 100 + h) * 100 + mi) * 100 + s;
  return ts;
}

}  // namespace corepulse
