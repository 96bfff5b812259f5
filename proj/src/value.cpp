#include "healthvault/value.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

#include "healthvault/errors.hpp"

namespace healthvault {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::empty_document: return "EmptyDocument";
    case Errc::malformed_tabular: return "MalformedTabular";
    case Errc::malformed_value: return "MalformedValue";
    case Errc::missing_timestamp_column: return "MissingTimestampColumn";
    case Errc::unknown_format: return "UnknownFormat";
    case Errc::duplicate_document: return "DuplicateDocument";
    case Errc::schema_conflict: return "SchemaConflict";
    case Errc::wrong_scheme: return "WrongScheme";
    case Errc::decrypt_auth_failure: return "DecryptAuthFailure";
    case Errc::domain_overflow: return "DomainOverflow";
    case Errc::unknown_table: return "UnknownTable";
    case Errc::unknown_row: return "UnknownRow";
    case Errc::scheme_mismatch: return "SchemeMismatch";
    case Errc::inverted_range: return "InvertedRange";
    case Errc::unknown_object: return "UnknownObject";
    case Errc::store_unavailable: return "StoreUnavailable";
    case Errc::protocol_error: return "ProtocolError";
    case Errc::unrecognized_query: return "UnrecognizedQuery";
    case Errc::unknown_proposal: return "UnknownProposal";
    case Errc::already_decided: return "AlreadyDecided";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::corrupt_state: return "CorruptState";
  }
  return "Unknown";
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::string_view kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::null: return "null";
    case ValueKind::integer: return "integer";
    case ValueKind::decimal: return "decimal";
    case ValueKind::date: return "date";
    case ValueKind::month: return "month";
    case ValueKind::time: return "time";
    case ValueKind::text: return "text";
  }
  return "null";
}

std::optional<ValueKind> parse_kind(std::string_view name) {
  for (auto k : {ValueKind::null, ValueKind::integer, ValueKind::decimal,
                 ValueKind::date, ValueKind::month, ValueKind::time,
                 ValueKind::text}) {
    if (iequals(kind_name(k), name)) return k;
  }
  return std::nullopt;
}

bool is_ordered_kind(ValueKind kind) {
  return kind == ValueKind::integer || kind == ValueKind::decimal ||
         kind == ValueKind::date || kind == ValueKind::month ||
         kind == ValueKind::time;
}

// ---- Date / Month / Time ---------------------------------------------------

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  std::chrono::year_month_day ymd{std::chrono::year{year},
                                  std::chrono::month{month},
                                  std::chrono::day{day}};
  return Date{static_cast<std::int32_t>(
      std::chrono::sys_days{ymd}.time_since_epoch().count())};
}

Date Date::from_timestamp(Timestamp ts) {
  auto days = std::chrono::floor<std::chrono::days>(ts);
  return Date{static_cast<std::int32_t>(days.time_since_epoch().count())};
}

std::chrono::year_month_day Date::ymd() const {
  return std::chrono::year_month_day{
      std::chrono::sys_days{std::chrono::days{days}}};
}

int Date::year() const { return static_cast<int>(ymd().year()); }
unsigned Date::month() const { return static_cast<unsigned>(ymd().month()); }
unsigned Date::day() const { return static_cast<unsigned>(ymd().day()); }

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
  return buf;
}

Month Month::from_ym(int year, unsigned month) {
  return Month{year * 12 + static_cast<std::int32_t>(month) - 1};
}

Month Month::of(Date d) { return from_ym(d.year(), d.month()); }

Date Month::first_day() const { return Date::from_ymd(year(), month(), 1); }

Date Month::last_day() const {
  std::chrono::year_month_day_last last{
      std::chrono::year{year()},
      std::chrono::month_day_last{std::chrono::month{month()}}};
  return Date::from_ymd(year(), month(), static_cast<unsigned>(last.day()));
}

std::string Month::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", year(), month());
  return buf;
}

std::string Month::display() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02u/%02d", month(), year() % 100);
  return buf;
}

TimeOfDay TimeOfDay::of(Timestamp ts) {
  auto day = std::chrono::floor<std::chrono::days>(ts);
  return TimeOfDay{static_cast<std::int32_t>((ts - day).count())};
}

std::string TimeOfDay::iso() const {
  char buf[16];
  int h = seconds / 3600;
  int m = (seconds / 60) % 60;
  int s = seconds % 60;
  if (s == 0) {
    std::snprintf(buf, sizeof buf, "%02d:%02d", h, m);
  } else {
    std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", h, m, s);
  }
  return buf;
}

std::string Decimal::str() const {
  std::int64_t whole = scaled / kScale;
  std::int64_t frac = scaled % kScale;
  bool negative = scaled < 0;
  if (frac < 0) frac = -frac;
  std::string out;
  if (negative && whole == 0) out = "-";
  out += std::to_string(whole);
  if (frac != 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(frac));
    std::string f(buf);
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += "." + f;
  }
  return out;
}

// ---- Value -----------------------------------------------------------------

Value Value::integer(std::int64_t v) {
  Value out;
  out.data_ = v;
  return out;
}
Value Value::decimal(Decimal v) {
  Value out;
  out.data_ = v;
  return out;
}
Value Value::date(Date v) {
  Value out;
  out.data_ = v;
  return out;
}
Value Value::month(Month v) {
  Value out;
  out.data_ = v;
  return out;
}
Value Value::time(TimeOfDay v) {
  Value out;
  out.data_ = v;
  return out;
}
Value Value::text(std::string v) {
  Value out;
  out.data_ = std::move(v);
  return out;
}

namespace {
[[noreturn]] void bad_kind(ValueKind want, ValueKind have) {
  throw Error(Errc::malformed_value,
              "expected " + std::string(kind_name(want)) + " value, found " +
                  std::string(kind_name(have)));
}
}  // namespace

std::int64_t Value::as_integer() const {
  if (kind() != ValueKind::integer) bad_kind(ValueKind::integer, kind());
  return std::get<std::int64_t>(data_);
}
Decimal Value::as_decimal() const {
  if (kind() != ValueKind::decimal) bad_kind(ValueKind::decimal, kind());
  return std::get<Decimal>(data_);
}
Date Value::as_date() const {
  if (kind() != ValueKind::date) bad_kind(ValueKind::date, kind());
  return std::get<Date>(data_);
}
Month Value::as_month() const {
  if (kind() != ValueKind::month) bad_kind(ValueKind::month, kind());
  return std::get<Month>(data_);
}
TimeOfDay Value::as_time() const {
  if (kind() != ValueKind::time) bad_kind(ValueKind::time, kind());
  return std::get<TimeOfDay>(data_);
}
const std::string& Value::as_text() const {
  if (kind() != ValueKind::text) bad_kind(ValueKind::text, kind());
  return std::get<std::string>(data_);
}

std::string Value::str() const {
  switch (kind()) {
    case ValueKind::null: return "NULL";
    case ValueKind::integer: return std::to_string(as_integer());
    case ValueKind::decimal: return as_decimal().str();
    case ValueKind::date: return as_date().iso();
    case ValueKind::month: return as_month().iso();
    case ValueKind::time: return as_time().iso();
    case ValueKind::text: return as_text();
  }
  return "NULL";
}

std::strong_ordering operator<=>(const Value& a, const Value& b) {
  if (a.data_.index() != b.data_.index()) {
    return a.data_.index() <=> b.data_.index();
  }
  return std::visit(
      [&](const auto& x) -> std::strong_ordering {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return std::strong_ordering::equal;
        } else if constexpr (std::is_same_v<T, std::string>) {
          int c = x.compare(std::get<std::string>(b.data_));
          return c < 0 ? std::strong_ordering::less
                       : (c > 0 ? std::strong_ordering::greater
                                : std::strong_ordering::equal);
        } else {
          return x <=> std::get<T>(b.data_);
        }
      },
      a.data_);
}

bool operator==(const Value& a, const Value& b) { return (a <=> b) == 0; }

// ---- encoding --------------------------------------------------------------

namespace {

void put_be64(std::string& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((v >> (i * 8)) & 0xff));
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (i * 8)) & 0xff));
}

std::uint64_t get_be(std::string_view s, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v = (v << 8) | static_cast<unsigned char>(s[i]);
  return v;
}

}  // namespace

std::string encode_value(const Value& v) {
  std::string out;
  out.push_back(static_cast<char>(v.kind()));
  switch (v.kind()) {
    case ValueKind::null: break;
    case ValueKind::integer: put_be64(out, static_cast<std::uint64_t>(v.as_integer())); break;
    case ValueKind::decimal: put_be64(out, static_cast<std::uint64_t>(v.as_decimal().scaled)); break;
    case ValueKind::date: put_be32(out, static_cast<std::uint32_t>(v.as_date().days)); break;
    case ValueKind::month: put_be32(out, static_cast<std::uint32_t>(v.as_month().index)); break;
    case ValueKind::time: put_be32(out, static_cast<std::uint32_t>(v.as_time().seconds)); break;
    case ValueKind::text: out += v.as_text(); break;
  }
  return out;
}

Value decode_value(std::string_view bytes) {
  if (bytes.empty()) throw Error(Errc::corrupt_state, "empty value encoding");
  auto kind = static_cast<ValueKind>(static_cast<unsigned char>(bytes[0]));
  std::string_view body = bytes.substr(1);
  auto need = [&](std::size_t n) {
    if (body.size() != n) throw Error(Errc::corrupt_state, "bad value encoding length");
  };
  switch (kind) {
    case ValueKind::null: need(0); return Value{};
    case ValueKind::integer:
      need(8);
      return Value::integer(static_cast<std::int64_t>(get_be(body, 8)));
    case ValueKind::decimal:
      need(8);
      return Value::decimal(Decimal{static_cast<std::int64_t>(get_be(body, 8))});
    case ValueKind::date:
      need(4);
      return Value::date(Date{static_cast<std::int32_t>(static_cast<std::uint32_t>(get_be(body, 4)))});
    case ValueKind::month:
      need(4);
      return Value::month(Month{static_cast<std::int32_t>(static_cast<std::uint32_t>(get_be(body, 4)))});
    case ValueKind::time:
      need(4);
      return Value::time(TimeOfDay{static_cast<std::int32_t>(static_cast<std::uint32_t>(get_be(body, 4)))});
    case ValueKind::text: return Value::text(std::string(body));
  }
  throw Error(Errc::corrupt_state, "unknown value kind tag");
}

// ---- parsing ---------------------------------------------------------------

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
  });
}

std::optional<int> to_int(std::string_view s) {
  if (!all_digits(s)) return std::nullopt;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<Date> checked_date(int y, int m, int d) {
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y},
                                  std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date::from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

int expand_year(std::string_view y, int value) {
  return y.size() == 2 ? 2000 + value : value;
}

constexpr std::array<std::string_view, 12> kMonthNames = {
    "january", "february", "march",     "april",   "may",      "june",
    "july",    "august",   "september", "october", "november", "december"};

}  // namespace

std::optional<Date> parse_date(std::string_view raw) {
  std::string text = trim(raw);
  std::string_view s = text;
  if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
    auto y = to_int(s.substr(0, 4));
    auto m = to_int(s.substr(5, 2));
    auto d = to_int(s.substr(8, 2));
    if (!y || !m || !d) return std::nullopt;
    return checked_date(*y, *m, *d);
  }
  auto parts = split(s, '/');
  if (parts.size() == 3) {
    auto m = to_int(parts[0]);
    auto d = to_int(parts[1]);
    auto y = to_int(parts[2]);
    if (!m || !d || !y) return std::nullopt;
    if (parts[0].size() > 2 || parts[1].size() > 2) return std::nullopt;
    if (parts[2].size() != 2 && parts[2].size() != 4) return std::nullopt;
    return checked_date(expand_year(parts[2], *y), *m, *d);
  }
  return std::nullopt;
}

std::optional<Month> parse_month(std::string_view raw) {
  std::string text = trim(raw);
  std::string_view s = text;
  if (s.size() == 7 && s[4] == '-') {
    auto y = to_int(s.substr(0, 4));
    auto m = to_int(s.substr(5, 2));
    if (!y || !m || *m < 1 || *m > 12) return std::nullopt;
    return Month::from_ym(*y, static_cast<unsigned>(*m));
  }
  auto slash = split(s, '/');
  if (slash.size() == 2) {
    auto m = to_int(slash[0]);
    auto y = to_int(slash[1]);
    if (!m || !y || *m < 1 || *m > 12) return std::nullopt;
    if (slash[1].size() != 2 && slash[1].size() != 4) return std::nullopt;
    return Month::from_ym(expand_year(slash[1], *y), static_cast<unsigned>(*m));
  }
  auto words = split(s, ' ');
  words.erase(std::remove_if(words.begin(), words.end(),
                             [](const std::string& w) { return w.empty(); }),
              words.end());
  if (words.size() == 2) {
    std::string name = to_lower(words[0]);
    auto y = to_int(words[1]);
    if (!y || words[1].size() != 4) return std::nullopt;
    for (std::size_t i = 0; i < kMonthNames.size(); ++i) {
      if (name == kMonthNames[i] ||
          (name.size() == 3 && kMonthNames[i].substr(0, 3) == name)) {
        return Month::from_ym(*y, static_cast<unsigned>(i + 1));
      }
    }
  }
  return std::nullopt;
}

std::optional<TimeOfDay> parse_time(std::string_view raw) {
  std::string text = trim(raw);
  auto parts = split(text, ':');
  if (parts.size() < 2 || parts.size() > 3) return std::nullopt;
  auto h = to_int(parts[0]);
  auto m = to_int(parts[1]);
  int sec = 0;
  if (parts.size() == 3) {
    auto s = to_int(parts[2]);
    if (!s) return std::nullopt;
    sec = *s;
  }
  if (!h || !m || *h > 23 || *m > 59 || sec > 59) return std::nullopt;
  return TimeOfDay{*h * 3600 + *m * 60 + sec};
}

std::optional<Timestamp> parse_timestamp(std::string_view raw) {
  std::string text = trim(raw);
  if (!text.empty() && (text.back() == 'Z' || text.back() == 'z')) text.pop_back();
  std::size_t sep = text.find('T');
  if (sep == std::string::npos) sep = text.find(' ');
  if (sep == std::string::npos) return std::nullopt;
  auto date = parse_date(std::string_view(text).substr(0, sep));
  auto time = parse_time(std::string_view(text).substr(sep + 1));
  if (!date || !time) return std::nullopt;
  return Timestamp{std::chrono::seconds{static_cast<std::int64_t>(date->days) * 86400 +
                                        time->seconds}};
}

std::optional<std::int64_t> parse_integer(std::string_view raw) {
  std::string text = trim(raw);
  if (text.empty()) return std::nullopt;
  std::int64_t v = 0;
  const char* first = text.data();
  if (*first == '+') ++first;
  auto [p, ec] = std::from_chars(first, text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) return std::nullopt;
  return v;
}

std::optional<Decimal> parse_decimal(std::string_view raw) {
  std::string text = trim(raw);
  if (text.empty()) return std::nullopt;
  bool negative = false;
  std::string_view s = text;
  if (s[0] == '-' || s[0] == '+') {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  auto dot = s.find('.');
  std::string_view whole = s.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() && frac.empty()) return std::nullopt;
  if (!whole.empty() && !all_digits(whole)) return std::nullopt;
  if (dot != std::string_view::npos && !frac.empty() && !all_digits(frac)) return std::nullopt;
  if (frac.size() > 4 || whole.size() > 14) return std::nullopt;
  std::int64_t w = 0;
  if (!whole.empty()) std::from_chars(whole.data(), whole.data() + whole.size(), w);
  std::int64_t f = 0;
  if (!frac.empty()) {
    std::from_chars(frac.data(), frac.data() + frac.size(), f);
    for (std::size_t i = frac.size(); i < 4; ++i) f *= 10;
  }
  std::int64_t scaled = w * Decimal::kScale + f;
  return Decimal{negative ? -scaled : scaled};
}

std::optional<Value> parse_as(ValueKind kind, std::string_view raw) {
  std::string text = trim(raw);
  if (text.empty()) return Value{};
  switch (kind) {
    case ValueKind::null: return std::nullopt;
    case ValueKind::integer:
      if (auto v = parse_integer(text)) return Value::integer(*v);
      return std::nullopt;
    case ValueKind::decimal:
      if (auto v = parse_decimal(text)) return Value::decimal(*v);
      return std::nullopt;
    case ValueKind::date:
      if (auto v = parse_date(text)) return Value::date(*v);
      return std::nullopt;
    case ValueKind::month:
      if (auto v = parse_month(text)) return Value::month(*v);
      return std::nullopt;
    case ValueKind::time:
      if (auto v = parse_time(text)) return Value::time(*v);
      return std::nullopt;
    case ValueKind::text: return Value::text(text);
  }
  return std::nullopt;
}

Value infer_value(std::string_view raw) {
  std::string text = trim(raw);
  if (text.empty()) return Value{};
  if (auto v = parse_integer(text)) return Value::integer(*v);
  if (auto v = parse_decimal(text)) return Value::decimal(*v);
  if (auto v = parse_date(text)) return Value::date(*v);
  return Value::text(text);
}

std::string format_timestamp(Timestamp ts) {
  Date d = Date::from_timestamp(ts);
  TimeOfDay t = TimeOfDay::of(ts);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", d.iso().c_str(),
                t.seconds / 3600, (t.seconds / 60) % 60, t.seconds % 60);
  return buf;
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::source: return "source";
    case Provenance::computed_aggregate: return "computed_aggregate";
    case Provenance::extrapolated: return "extrapolated";
  }
  return "source";
}

std::optional<Provenance> parse_provenance(std::string_view name) {
  for (auto p : {Provenance::source, Provenance::computed_aggregate,
                 Provenance::extrapolated}) {
    if (provenance_name(p) == name) return p;
  }
  return std::nullopt;
}

const Binding* find_binding(const std::vector<Binding>& bindings,
                            std::string_view attribute) {
  for (const auto& b : bindings) {
    if (b.attribute == attribute) return &b;
  }
  return nullptr;
}

}  // namespace healthvault
