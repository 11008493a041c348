#pragma once

#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "sentfeed/error.hpp"

namespace sentfeed {

// Calendar month, stored as a serial month count so arithmetic is exact.
class YearMonth {
 public:
  constexpr YearMonth() = default;
  constexpr YearMonth(int year, int month) : serial_(year * 12 + (month - 1)) {}

  static constexpr YearMonth from_serial(int serial) {
    YearMonth ym;
    ym.serial_ = serial;
    return ym;
  }

  // Accepts `YYYY-MM`.
  static YearMonth parse(std::string_view text) {
    auto bad = [&] { fail(ErrorKind::SchemaViolation, "bad month '" + std::string(text) + "', expected YYYY-MM"); };
    if (text.size() != 7 || text[4] != '-') bad();
    int year = 0, month = 0;
    for (int i = 0; i < 4; ++i) {
      if (text[i] < '0' || text[i] > '9') bad();
      year = year * 10 + (text[i] - '0');
    }
    for (int i = 5; i < 7; ++i) {
      if (text[i] < '0' || text[i] > '9') bad();
      month = month * 10 + (text[i] - '0');
    }
    if (month < 1 || month > 12) bad();
    return YearMonth(year, month);
  }

  constexpr int year() const { return floor_div(serial_, 12); }
  constexpr int month() const { return serial_ - 12 * floor_div(serial_, 12) + 1; }
  constexpr int serial() const { return serial_; }

  std::string str() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
    return buf;
  }

  constexpr YearMonth operator+(int months) const { return from_serial(serial_ + months); }
  constexpr YearMonth operator-(int months) const { return from_serial(serial_ - months); }
  constexpr int operator-(YearMonth other) const { return serial_ - other.serial_; }

  constexpr auto operator<=>(const YearMonth&) const = default;

 private:
  static constexpr int floor_div(int a, int b) { return (a >= 0) ? a / b : -((-a + b - 1) / b); }

  int serial_ = 0;
};

}  // namespace sentfeed
