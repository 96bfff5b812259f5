#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace healthvault {

using Timestamp = std::chrono::sys_seconds;

enum class ValueKind : std::uint8_t {
  null = 0,
  integer = 1,
  decimal = 2,
  date = 3,
  month = 4,
  time = 5,
  text = 6,
};

std::string_view kind_name(ValueKind kind);
std::optional<ValueKind> parse_kind(std::string_view name);
bool is_ordered_kind(ValueKind kind);

// Calendar date, days since 1970-01-01.
struct Date {
  std::int32_t days = 0;

  static Date from_ymd(int year, unsigned month, unsigned day);
  static Date from_timestamp(Timestamp ts);
  std::chrono::year_month_day ymd() const;
  int year() const;
  unsigned month() const;
  unsigned day() const;
  std::string iso() const;

  auto operator<=>(const Date&) const = default;
};

// Calendar month stored as year * 12 + (month - 1).
struct Month {
  std::int32_t index = 0;

  static Month from_ym(int year, unsigned month);
  static Month of(Date d);
  int year() const { return index / 12; }
  unsigned month() const { return static_cast<unsigned>(index % 12) + 1; }
  Date first_day() const;
  Date last_day() const;
  std::string iso() const;      // YYYY-MM
  std::string display() const;  // MM/YY

  auto operator<=>(const Month&) const = default;
};

struct TimeOfDay {
  std::int32_t seconds = 0;

  static TimeOfDay of(Timestamp ts);
  std::string iso() const;  // HH:MM or HH:MM:SS

  auto operator<=>(const TimeOfDay&) const = default;
};

// Fixed-point decimal with four fractional digits.
struct Decimal {
  static constexpr std::int64_t kScale = 10000;
  std::int64_t scaled = 0;

  static Decimal from_integer(std::int64_t v) { return Decimal{v * kScale}; }
  std::string str() const;

  auto operator<=>(const Decimal&) const = default;
};

class Value {
 public:
  Value() = default;
  static Value integer(std::int64_t v);
  static Value decimal(Decimal v);
  static Value date(Date v);
  static Value month(Month v);
  static Value time(TimeOfDay v);
  static Value text(std::string v);

  ValueKind kind() const { return static_cast<ValueKind>(data_.index()); }
  bool is_null() const { return kind() == ValueKind::null; }

  std::int64_t as_integer() const;
  Decimal as_decimal() const;
  Date as_date() const;
  Month as_month() const;
  TimeOfDay as_time() const;
  const std::string& as_text() const;

  // Canonical rendering: ISO dates, YYYY-MM months, plain numbers.
  std::string str() const;

  // Null sorts below every other value; different kinds order by kind tag.
  friend std::strong_ordering operator<=>(const Value& a, const Value& b);
  friend bool operator==(const Value& a, const Value& b);

 private:
  std::variant<std::monostate, std::int64_t, Decimal, Date, Month, TimeOfDay,
               std::string>
      data_;
};

// Lossless, self-describing byte form used as the plaintext for encryption.
std::string encode_value(const Value& v);
Value decode_value(std::string_view bytes);

// Parsing helpers. Two-digit years map to 2000-2099.
std::optional<Date> parse_date(std::string_view text);
std::optional<Month> parse_month(std::string_view text);
std::optional<TimeOfDay> parse_time(std::string_view text);
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::optional<std::int64_t> parse_integer(std::string_view text);
std::optional<Decimal> parse_decimal(std::string_view text);

// Parse `text` as the given kind; nullopt when it does not fit. Empty text
// yields Null for every kind.
std::optional<Value> parse_as(ValueKind kind, std::string_view text);
// Best-effort typing for keywords outside the dictionary.
Value infer_value(std::string_view text);

std::string format_timestamp(Timestamp ts);

enum class Provenance : std::uint8_t {
  source = 0,
  computed_aggregate = 1,
  extrapolated = 2,
};

std::string_view provenance_name(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view name);

struct Binding {
  std::string attribute;
  Value value;
  Provenance provenance = Provenance::source;

  bool operator==(const Binding&) const = default;
};

const Binding* find_binding(const std::vector<Binding>& bindings,
                            std::string_view attribute);

// Shared string helpers.
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool iequals(std::string_view a, std::string_view b);

}  // namespace healthvault
