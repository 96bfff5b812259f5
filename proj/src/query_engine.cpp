#include "healthvault/query_engine.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include "healthvault/errors.hpp"
#include "healthvault/row_codec.hpp"

namespace healthvault::query {

using enrich::RowRef;
using schema::kDateColumn;
using schema::TableSchema;

std::string_view query_kind_name(QueryKind k) {
  switch (k) {
    case QueryKind::select: return "select";
    case QueryKind::aggregate: return "aggregate";
    case QueryKind::share: return "share";
  }
  return "select";
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::eq: return "=";
    case Op::lt: return "<";
    case Op::le: return "<=";
    case Op::gt: return ">";
    case Op::ge: return ">=";
    case Op::between: return "between";
  }
  return "=";
}

std::string_view step_name(StepKind k) {
  switch (k) {
    case StepKind::index_lookup: return "index_lookup";
    case StepKind::store_point_scan: return "store_point_scan";
    case StepKind::store_range_scan: return "store_range_scan";
    case StepKind::store_full_scan: return "store_full_scan";
    case StepKind::store_object_fetch: return "store_object_fetch";
    case StepKind::local_filter: return "local_filter";
    case StepKind::enrich: return "enrich";
    case StepKind::aggregate: return "aggregate";
    case StepKind::share_filter: return "share_filter";
  }
  return "local_filter";
}

bool QueryPlan::has(StepKind k, std::string_view table) const {
  return std::any_of(steps.begin(), steps.end(), [&](const PlanStep& s) {
    return s.kind == k && (table.empty() || s.table == table);
  });
}

std::string Vocabulary::canonical(std::string_view surface) const {
  std::string s = trim(surface);
  if (keywords) {
    if (const auto* e = keywords->lookup(s)) s = e->keyword;
  }
  if (synonyms) s = synonyms->canonical(s);
  return s;
}

std::optional<policy::Aggregate> aggregate_of(std::string_view word) {
  std::string w = to_lower(word);
  if (w == "max" || w == "maximum" || w == "highest" || w == "monthly_max") {
    return policy::Aggregate::monthly_max;
  }
  if (w == "min" || w == "minimum" || w == "lowest" || w == "monthly_min") {
    return policy::Aggregate::monthly_min;
  }
  if (w == "avg" || w == "average" || w == "mean" || w == "monthly_avg") {
    return policy::Aggregate::monthly_avg;
  }
  return std::nullopt;
}

std::string template_help() {
  return "recognized forms:\n"
         "  what was my <max|min|average> <column> [and <column>] in <month>\n"
         "  <max|min|average> <column> [from <date> to <date>]\n"
         "  monthly <max|min|average> <column>   (or: ... by month)\n"
         "  records from <doctor|facility> <name>\n"
         "  records from <date> to <date>\n"
         "  records on <condition>\n"
         "  share [records for] <condition>\n"
         "  show <table> [on <date> | in <month> | from <date> to <date>]\n"
         "  select \"<table>\" [where \"<column>\" <op> <literal> [and ...]]\n"
         "  aggregate <max|min|avg>(\"<column>\"[, ...]) [from \"<table>\"] [where ...] [by month]\n"
         "  share '<condition>'";
}

// ---- parsing ---------------------------------------------------------------

namespace {

[[noreturn]] void unrecognized(std::string_view text) {
  throw Error(Errc::unrecognized_query, "unrecognized query '" + std::string(text) + "'; " +
                                            template_help());
}

std::string collapse(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  while (!out.empty() && (out.back() == '?' || out.back() == '.' || out.back() == '!')) {
    out.pop_back();
  }
  return out;
}

std::vector<std::string> split_columns(const std::string& s, const Vocabulary& vocab) {
  std::vector<std::string> out;
  std::string norm = std::regex_replace(s, std::regex(R"(\s*,\s*|\s+and\s+)", std::regex::icase), "\x1f");
  for (auto& part : split(norm, '\x1f')) {
    std::string p = trim(part);
    if (p.empty()) continue;
    std::string c = vocab.canonical(p);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  if (out.empty()) throw Error(Errc::unrecognized_query, "no columns named");
  return out;
}

std::string iso_date(std::string_view text) {
  auto d = parse_date(text);
  if (!d) throw Error(Errc::unrecognized_query, "not a date: '" + std::string(text) + "'");
  return d->iso();
}

// "in <period>": a month, a year or a single date.
Filter period_filter(std::string_view text) {
  std::string t = trim(text);
  if (auto m = parse_month(t)) {
    return Filter{std::string(kDateColumn), Op::between, m->first_day().iso(), m->last_day().iso()};
  }
  if (t.size() == 4 && std::all_of(t.begin(), t.end(), ::isdigit)) {
    return Filter{std::string(kDateColumn), Op::between, t + "-01-01", t + "-12-31"};
  }
  if (auto d = parse_date(t)) return Filter{std::string(kDateColumn), Op::eq, d->iso(), ""};
  throw Error(Errc::unrecognized_query, "not a month, year or date: '" + t + "'");
}

// ---- structured form ----

struct Token {
  enum Kind { word, ident, string, symbol } kind;
  std::string text;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '"' || c == '\'') {
      auto end = s.find(c, i + 1);
      if (end == std::string_view::npos) throw Error(Errc::unrecognized_query, "unterminated quote");
      out.push_back({c == '"' ? Token::ident : Token::string, std::string(s.substr(i + 1, end - i - 1))});
      i = end + 1;
      continue;
    }
    if (c == '<' || c == '>') {
      std::string op(1, c);
      if (i + 1 < s.size() && s[i + 1] == '=') op += '=';
      out.push_back({Token::symbol, op});
      i += op.size();
      continue;
    }
    if (c == '=' || c == '(' || c == ')' || c == ',') {
      out.push_back({Token::symbol, std::string(1, c)});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) &&
           std::string_view("\"'<>=(),").find(s[j]) == std::string_view::npos) {
      ++j;
    }
    out.push_back({Token::word, std::string(s.substr(i, j - i))});
    i = j;
  }
  return out;
}

class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> t) : t_(std::move(t)) {}
  bool done() const { return i_ >= t_.size(); }
  const Token* peek() const { return done() ? nullptr : &t_[i_]; }
  bool accept_word(std::string_view w) {
    if (!done() && t_[i_].kind == Token::word && iequals(t_[i_].text, w)) {
      ++i_;
      return true;
    }
    return false;
  }
  bool accept_symbol(std::string_view s) {
    if (!done() && t_[i_].kind == Token::symbol && t_[i_].text == s) {
      ++i_;
      return true;
    }
    return false;
  }
  void expect_symbol(std::string_view s) {
    if (!accept_symbol(s)) throw Error(Errc::unrecognized_query, "expected '" + std::string(s) + "'");
  }
  std::string ident() {
    if (done() || t_[i_].kind != Token::ident) {
      throw Error(Errc::unrecognized_query, "expected a double-quoted name");
    }
    return t_[i_++].text;
  }
  std::string literal() {
    if (done() || t_[i_].kind == Token::symbol || t_[i_].kind == Token::ident) {
      throw Error(Errc::unrecognized_query, "expected a literal");
    }
    return t_[i_++].text;
  }
  std::string word() {
    if (done() || t_[i_].kind != Token::word) throw Error(Errc::unrecognized_query, "expected a word");
    return t_[i_++].text;
  }

 private:
  std::vector<Token> t_;
  std::size_t i_ = 0;
};

std::vector<Filter> parse_where(TokenStream& ts, const Vocabulary& vocab) {
  std::vector<Filter> out;
  if (!ts.accept_word("where")) return out;
  do {
    Filter f;
    f.column = vocab.canonical(ts.ident());
    if (ts.accept_word("between")) {
      f.op = Op::between;
      f.lo = ts.literal();
      if (!ts.accept_word("and")) throw Error(Errc::unrecognized_query, "between needs 'and'");
      f.hi = ts.literal();
    } else {
      static const std::vector<std::pair<std::string, Op>> ops = {
          {"=", Op::eq}, {"<=", Op::le}, {">=", Op::ge}, {"<", Op::lt}, {">", Op::gt}};
      bool found = false;
      for (const auto& [sym, op] : ops) {
        if (ts.accept_symbol(sym)) {
          f.op = op;
          found = true;
          break;
        }
      }
      if (!found) throw Error(Errc::unrecognized_query, "expected a comparison operator");
      f.lo = ts.literal();
    }
    out.push_back(std::move(f));
  } while (ts.accept_word("and"));
  return out;
}

std::optional<Query> parse_structured(std::string_view text, const Vocabulary& vocab) {
  auto tokens = tokenize(text);
  if (tokens.empty() || tokens[0].kind != Token::word) return std::nullopt;
  TokenStream ts(tokens);
  Query q;
  if (ts.accept_word("select")) {
    q.kind = QueryKind::select;
    q.scope = ts.ident();
    q.filters = parse_where(ts, vocab);
  } else if (ts.accept_word("aggregate")) {
    q.kind = QueryKind::aggregate;
    auto fn = aggregate_of(ts.word());
    if (!fn) throw Error(Errc::unrecognized_query, "aggregate must be max, min or avg");
    AggregateSpec spec{*fn, {}};
    ts.expect_symbol("(");
    do {
      spec.columns.push_back(vocab.canonical(ts.ident()));
    } while (ts.accept_symbol(","));
    ts.expect_symbol(")");
    q.scope = std::string(kAllTables);
    if (ts.accept_word("from")) q.scope = ts.ident();
    q.filters = parse_where(ts, vocab);
    if (ts.accept_word("by")) {
      if (!ts.accept_word("month")) throw Error(Errc::unrecognized_query, "expected 'by month'");
      q.group_by_month = true;
    }
    q.aggregate = std::move(spec);
  } else if (ts.accept_word("share")) {
    q.kind = QueryKind::share;
    const Token* t = ts.peek();
    if (t == nullptr || (t->kind != Token::string && t->kind != Token::ident)) {
      throw Error(Errc::unrecognized_query, "share needs a quoted condition");
    }
    q.scope = to_lower(trim(t->kind == Token::string ? ts.literal() : ts.ident()));
    q.condition_scope = true;
  } else {
    return std::nullopt;
  }
  if (!ts.done()) throw Error(Errc::unrecognized_query, "trailing input after query");
  return q;
}

const std::string kAgg = "(maximum|max|highest|minimum|min|lowest|average|avg|mean)";
const std::string kLead = "(?:(?:what|how) (?:was|is|were|are) (?:my|the) |show (?:my |the )?|my )?";

}  // namespace

Query parse_query(std::string_view raw, const Vocabulary& vocab) {
  std::string text = collapse(raw);
  if (text.empty()) unrecognized(raw);
  bool structured = text.find('"') != std::string::npos || text.find('\'') != std::string::npos ||
                    text.find('(') != std::string::npos;
  if (structured) {
    if (auto q = parse_structured(text, vocab)) return *q;
  }
  const auto icase = std::regex::icase | std::regex::ECMAScript;
  std::smatch m;
  Query q;

  static const std::regex monthly("^" + kLead + "monthly " + kAgg + " (?:of )?(.+)$", icase);
  static const std::regex by_month("^" + kLead + kAgg + " (?:of )?(.+) by month$", icase);
  if (std::regex_match(text, m, monthly) || std::regex_match(text, m, by_month)) {
    q.kind = QueryKind::aggregate;
    q.scope = std::string(kAllTables);
    q.aggregate = AggregateSpec{*aggregate_of(m[1].str()), split_columns(m[2].str(), vocab)};
    q.group_by_month = true;
    return q;
  }
  static const std::regex agg_in("^" + kLead + kAgg + " (?:of )?(.+?) (?:in|during|for) (.+)$", icase);
  if (std::regex_match(text, m, agg_in)) {
    q.kind = QueryKind::aggregate;
    q.scope = std::string(kAllTables);
    q.aggregate = AggregateSpec{*aggregate_of(m[1].str()), split_columns(m[2].str(), vocab)};
    q.filters.push_back(period_filter(m[3].str()));
    return q;
  }
  static const std::regex agg_range(
      "^" + kLead + kAgg + " (?:of )?(.+?) (?:from|between) (\\S+) (?:to|and) (\\S+)$", icase);
  if (std::regex_match(text, m, agg_range)) {
    q.kind = QueryKind::aggregate;
    q.scope = std::string(kAllTables);
    q.aggregate = AggregateSpec{*aggregate_of(m[1].str()), split_columns(m[2].str(), vocab)};
    q.filters.push_back(
        Filter{std::string(kDateColumn), Op::between, iso_date(m[3].str()), iso_date(m[4].str())});
    return q;
  }
  static const std::regex agg_all("^" + kLead + kAgg + " (?:of )?(.+)$", icase);
  if (std::regex_match(text, m, agg_all) && !std::regex_search(text, std::regex("^(?:show )?records", icase))) {
    q.kind = QueryKind::aggregate;
    q.scope = std::string(kAllTables);
    q.aggregate = AggregateSpec{*aggregate_of(m[1].str()), split_columns(m[2].str(), vocab)};
    return q;
  }
  static const std::regex from_who(
      "^(?:show |retrieve |get )?(?:my )?records (?:from|by|with) "
      "(doctor|dr\\.?|physician|provider|facility|clinic|hospital) (.+)$",
      icase);
  if (std::regex_match(text, m, from_who)) {
    std::string who = to_lower(m[1].str());
    bool doctor = who.rfind("d", 0) == 0 || who == "physician" || who == "provider";
    q.kind = QueryKind::select;
    q.scope = std::string(kAllTables);
    q.filters.push_back(Filter{doctor ? "Doctor" : "Facility", Op::eq, trim(m[2].str()), ""});
    return q;
  }
  static const std::regex dated(
      "^(?:show |retrieve |get )?(?:my )?records (?:from|between) (\\S+) (?:to|and) (\\S+)$", icase);
  if (std::regex_match(text, m, dated)) {
    q.kind = QueryKind::select;
    q.scope = std::string(kAllTables);
    q.filters.push_back(
        Filter{std::string(kDateColumn), Op::between, iso_date(m[1].str()), iso_date(m[2].str())});
    return q;
  }
  static const std::regex about(
      "^(?:show |retrieve |get )?(?:my |all )?records (?:on to|on|about|for|related to|regarding|"
      "pertaining to|concerning) (.+)$",
      icase);
  if (std::regex_match(text, m, about)) {
    q.kind = QueryKind::select;
    q.scope = to_lower(trim(m[1].str()));
    q.condition_scope = true;
    return q;
  }
  static const std::regex share_re(
      "^share (?:(?:my )?(?:records|data) (?:for|on|about|related to|regarding) )?(.+)$", icase);
  if (std::regex_match(text, m, share_re)) {
    q.kind = QueryKind::share;
    q.scope = to_lower(trim(m[1].str()));
    q.condition_scope = true;
    return q;
  }
  static const std::regex show_on("^show (.+?) on (\\S+)$", icase);
  static const std::regex show_range("^show (.+?) (?:from|between) (\\S+) (?:to|and) (\\S+)$", icase);
  static const std::regex show_in("^show (.+?) (?:in|during) (.+)$", icase);
  static const std::regex show("^show (.+)$", icase);
  q.kind = QueryKind::select;
  if (std::regex_match(text, m, show_on)) {
    q.scope = trim(m[1].str());
    q.filters.push_back(Filter{std::string(kDateColumn), Op::eq, iso_date(m[2].str()), ""});
    return q;
  }
  if (std::regex_match(text, m, show_range)) {
    q.scope = trim(m[1].str());
    q.filters.push_back(
        Filter{std::string(kDateColumn), Op::between, iso_date(m[2].str()), iso_date(m[3].str())});
    return q;
  }
  if (std::regex_match(text, m, show_in)) {
    q.scope = trim(m[1].str());
    q.filters.push_back(period_filter(m[2].str()));
    return q;
  }
  if (std::regex_match(text, m, show)) {
    q.scope = trim(m[1].str());
    return q;
  }
  unrecognized(raw);
}

// ---- shared helpers --------------------------------------------------------

std::optional<Value> type_literal(const std::string& text, ValueKind kind, bool casefold) {
  std::string t = trim(text);
  if (kind == ValueKind::text) return Value::text(casefold ? to_lower(t) : t);
  if (t.empty()) return std::nullopt;
  if (kind == ValueKind::month) {
    if (auto m = parse_month(t)) return Value::month(*m);
    if (auto d = parse_date(t)) return Value::month(Month::of(*d));
    return std::nullopt;
  }
  auto v = parse_as(kind, t);
  if (!v || v->is_null()) return std::nullopt;
  return v;
}

bool matches(const Value& cell, Op op, const Value& lo, const Value& hi) {
  if (cell.is_null()) return false;
  switch (op) {
    case Op::eq: return cell == lo;
    case Op::lt: return cell < lo;
    case Op::le: return cell <= lo;
    case Op::gt: return cell > lo;
    case Op::ge: return cell >= lo;
    case Op::between: return lo <= cell && cell <= hi;
  }
  return false;
}

const TableSchema* table_for_columns(const schema::SchemaRegistry& registry,
                                     const std::vector<std::string>& columns) {
  const TableSchema* best = nullptr;
  for (const auto& t : registry.tables()) {
    if (t.is_derived) continue;
    bool all = std::all_of(columns.begin(), columns.end(), [&](const std::string& c) {
      const auto* col = t.column(c);
      return col != nullptr && !col->hidden;
    });
    if (!all) continue;
    if (best == nullptr || t.columns.size() < best->columns.size() ||
        (t.columns.size() == best->columns.size() && t.name < best->name)) {
      best = &t;
    }
  }
  return best;
}

std::vector<std::string> extrapolation_columns(const TableSchema& target, const TableSchema& source,
                                               const ingest::KeywordDictionary& keywords) {
  std::vector<std::string> out;
  for (const auto* c : target.visible_columns()) {
    if (c->name == kDateColumn || c->name == schema::kTimeColumn) continue;
    const auto* e = keywords.lookup(c->name);
    if (e == nullptr || !e->vital) continue;
    const auto* s = source.column(c->name);
    if (s == nullptr || s->hidden || s->kind != c->kind) continue;
    out.push_back(c->name);
  }
  return out;
}

// ---- execution -------------------------------------------------------------

namespace {

std::string squash(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(c));
  }
  return out;
}

const TableSchema* find_table(const schema::SchemaRegistry& registry, const std::string& name) {
  if (const auto* t = registry.find(name)) return t;
  for (const auto& t : registry.tables()) {
    if (squash(t.name) == squash(name)) return &t;
  }
  return nullptr;
}

std::string row_id(const std::string& table, Handle h) {
  return "row:" + table + ":" + std::to_string(h);
}

std::string month_range_detail(const Value& lo, const Value& hi) {
  return "[" + lo.str() + ", " + hi.str() + "]";
}

}  // namespace

std::vector<RowRef> QueryEngine::decrypt(const TableSchema& t,
                                         const std::vector<store::EncryptedRow>& rows) const {
  std::vector<RowRef> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(RowRef{r.handle, codec::decrypt_row(state_.keys, t, r)});
  std::sort(out.begin(), out.end(), [](const RowRef& a, const RowRef& b) { return a.handle < b.handle; });
  return out;
}

std::vector<std::pair<Filter, Value>> QueryEngine::type_filters(
    const TableSchema& t, const std::vector<Filter>& filters) const {
  std::vector<std::pair<Filter, Value>> out;
  for (const auto& f : filters) {
    const auto* col = t.column(f.column);
    if (col == nullptr || col->hidden) {
      throw Error(Errc::invalid_argument, "table " + t.name + " has no column " + f.column);
    }
    const auto* kw = keywords_.lookup(f.column);
    bool casefold = kw != nullptr && kw->casefold;
    auto lo = type_literal(f.lo, col->kind, casefold);
    if (!lo) {
      throw Error(Errc::invalid_argument, "'" + f.lo + "' is not a " +
                                              std::string(kind_name(col->kind)) + " for " + f.column);
    }
    // The typed upper bound travels encoded in Filter::hi.
    Filter g = f;
    g.hi.clear();
    if (f.op == Op::between) {
      auto h = type_literal(f.hi, col->kind, casefold);
      if (!h) {
        throw Error(Errc::invalid_argument, "'" + f.hi + "' is not a " +
                                                std::string(kind_name(col->kind)) + " for " + f.column);
      }
      if (*h < *lo) throw Error(Errc::inverted_range, "between bounds are inverted");
      g.hi = encode_value(*h);
    }
    out.emplace_back(std::move(g), *lo);
  }
  return out;
}

std::vector<RowRef> QueryEngine::fetch(const TableSchema& t,
                                       const std::vector<std::pair<Filter, Value>>& typed,
                                       QueryPlan& plan) const {
  auto hi_of = [](const std::pair<Filter, Value>& f) {
    return f.first.op == Op::between ? decode_value(f.first.hi) : Value();
  };
  auto bounds = [&](const std::pair<Filter, Value>& f) -> Bound {
    switch (f.first.op) {
      case Op::eq: return {f.second, f.second};
      case Op::lt:
      case Op::le: return {std::nullopt, f.second};
      case Op::gt:
      case Op::ge: return {f.second, std::nullopt};
      case Op::between: return {f.second, hi_of(f)};
    }
    return {};
  };
  TableId tid = state_.keys.table_id(t.name);
  std::vector<store::EncryptedRow> raw;
  bool fetched = false;
  // 1. local index
  for (const auto& f : typed) {
    const auto* index = state_.indexes.find(t.name, f.first.column);
    if (index == nullptr) continue;
    auto b = bounds(f);
    std::set<Handle> hs = f.first.op == Op::eq ? index->lookup(f.second) : index->range(b.lo, b.hi);
    plan.steps.push_back({StepKind::index_lookup, t.name, f.first.column,
                          std::to_string(hs.size()) + " handles"});
    if (!hs.empty()) raw = store_.get_rows(tid, std::vector<Handle>(hs.begin(), hs.end()));
    fetched = true;
    break;
  }
  // 2. equality on a deterministic column
  if (!fetched) {
    for (const auto& f : typed) {
      const auto* col = t.column(f.first.column);
      if (col->scheme != Scheme::deterministic || f.first.op != Op::eq) continue;
      auto ct = codec::point_literal(state_.keys, t.name, col->name, f.second);
      plan.encrypted_literals.push_back(ct);
      plan.steps.push_back({StepKind::store_point_scan, t.name, col->name, ""});
      raw = store_.scan_point(tid, ct);
      fetched = true;
      break;
    }
  }
  // 3. any comparison on an order-preserving column
  if (!fetched) {
    for (const auto& f : typed) {
      const auto* col = t.column(f.first.column);
      if (col->scheme != Scheme::order_preserving) continue;
      auto b = bounds(f);
      auto range = codec::range_literal(state_.keys, t.name, col->name, b.lo, b.hi);
      plan.steps.push_back({StepKind::store_range_scan, t.name, col->name, range ? "" : "empty"});
      if (range) {
        plan.encrypted_literals.push_back(range->lo);
        plan.encrypted_literals.push_back(range->hi);
        raw = store_.scan_range(tid, range->lo, range->hi);
      }
      fetched = true;
      break;
    }
  }
  if (!fetched) {
    plan.steps.push_back({StepKind::store_full_scan, t.name, "", ""});
    raw = store_.scan_all(tid);
  }
  auto rows = decrypt(t, raw);
  if (!typed.empty()) {
    plan.steps.push_back({StepKind::local_filter, t.name, "", std::to_string(typed.size()) + " predicates"});
    std::erase_if(rows, [&](const RowRef& r) {
      for (const auto& f : typed) {
        const Binding* b = find_binding(r.cells, f.first.column);
        if (b == nullptr || !matches(b->value, f.first.op, f.second, hi_of(f))) return true;
      }
      return false;
    });
  }
  return rows;
}

std::vector<RowRef> QueryEngine::rows_in_dates(const std::string& table, const Value& lo,
                                               const Value& hi, QueryPlan* plan) const {
  const auto* t = state_.registry.find(table);
  if (t == nullptr) return {};
  QueryPlan scratch;
  Filter f{std::string(kDateColumn), Op::between, "", encode_value(hi)};
  return fetch(*t, {{f, lo}}, plan ? *plan : scratch);
}

std::vector<RowRef> QueryEngine::all_rows(const std::string& table, QueryPlan* plan) const {
  const auto* t = state_.registry.find(table);
  if (t == nullptr) return {};
  QueryPlan scratch;
  return fetch(*t, {}, plan ? *plan : scratch);
}

void QueryEngine::extrapolate(const TableSchema& t, std::vector<RowRef>& rows, ResultSet& out) const {
  if (t.is_derived) return;
  for (const auto& p : state_.policies.enrichment_policies()) {
    if (p.timing != policy::Timing::process_time || p.target_table != t.name) continue;
    const auto* source = state_.registry.find(p.source_table);
    if (source == nullptr || source->is_derived || source->column(kDateColumn) == nullptr) continue;
    auto columns = extrapolation_columns(t, *source, keywords_);
    if (columns.empty()) continue;
    std::set<Value> days;
    for (const auto& r : rows) {
      const Binding* d = find_binding(r.cells, kDateColumn);
      if (d == nullptr || d->value.kind() != ValueKind::date) continue;
      bool missing = std::any_of(columns.begin(), columns.end(), [&](const std::string& c) {
        const Binding* b = find_binding(r.cells, c);
        return b != nullptr && b->value.is_null() &&
               !state_.blocked.contains(CellRef{t.name, r.handle, c});
      });
      if (missing) days.insert(d->value);
    }
    if (days.empty()) continue;
    out.plan.steps.push_back({StepKind::enrich, t.name, "", "same-day from " + source->name});
    std::vector<RowRef> candidates;
    for (const auto& d : days) {
      auto found = rows_in_dates(source->name, d, d, &out.plan);
      candidates.insert(candidates.end(), found.begin(), found.end());
    }
    auto fills = enrich::extrapolate_at_query(
        rows, candidates, columns, [&](Handle h, const std::string& c) {
          return state_.blocked.contains(CellRef{t.name, h, c});
        });
    for (const auto& f : fills) {
      out.extrapolations.push_back(
          {CellRef{t.name, rows[f.row].handle, f.column}, f.value, source->name, f.source_handle});
    }
    if (std::find(out.tables_used.begin(), out.tables_used.end(), source->name) == out.tables_used.end()) {
      out.tables_used.push_back(source->name);
    }
  }
}

ResultSet QueryEngine::execute(const Query& q) const {
  switch (q.kind) {
    case QueryKind::select: return q.condition_scope ? share(q) : select(q);
    case QueryKind::aggregate: return aggregate(q);
    case QueryKind::share: return share(q);
  }
  return {};
}

ResultSet QueryEngine::select(const Query& q) const {
  ResultSet out;
  out.query = q;
  std::vector<const TableSchema*> tables;
  if (q.scope == kAllTables) {
    for (const auto& t : state_.registry.tables()) {
      if (t.is_derived) continue;
      bool all = std::all_of(q.filters.begin(), q.filters.end(), [&](const Filter& f) {
        const auto* c = t.column(f.column);
        return c != nullptr && !c->hidden;
      });
      if (all) tables.push_back(&t);
    }
  } else {
    const auto* t = find_table(state_.registry, q.scope);
    if (t == nullptr) throw Error(Errc::unknown_table, "no table named '" + q.scope + "'");
    tables.push_back(t);
  }
  for (const auto* t : tables) {
    auto typed = type_filters(*t, q.filters);
    auto rows = fetch(*t, typed, out.plan);
    extrapolate(*t, rows, out);
    out.tables_used.push_back(t->name);
    for (auto& r : rows) {
      out.rows.push_back(
          ResultRow{row_id(t->name, r.handle), "table:" + t->name, t->name, r.handle, std::move(r.cells), {}});
    }
  }
  return out;
}

ResultSet QueryEngine::aggregate(const Query& q) const {
  ResultSet out;
  out.query = q;
  const auto& spec = *q.aggregate;
  const TableSchema* t = nullptr;
  if (q.scope.empty() || q.scope == kAllTables) {
    auto needed = spec.columns;
    for (const auto& f : q.filters) needed.push_back(f.column);
    t = table_for_columns(state_.registry, needed);
  } else {
    t = find_table(state_.registry, q.scope);
    if (t == nullptr) throw Error(Errc::unknown_table, "no table named '" + q.scope + "'");
  }
  auto null_row = [&] {
    ResultRow r{"aggregate", "aggregate", t ? t->name : "", 0, {}, {}};
    for (const auto& c : spec.columns) r.cells.push_back(Binding{c, Value(), Provenance::computed_aggregate});
    return r;
  };
  if (t == nullptr) {
    if (!q.group_by_month) out.rows.push_back(null_row());
    return out;
  }
  for (const auto& c : spec.columns) {
    const auto* col = t->column(c);
    if (col == nullptr || col->hidden) throw Error(Errc::invalid_argument, t->name + " has no column " + c);
    bool numeric = col->kind == ValueKind::integer || col->kind == ValueKind::decimal;
    if (spec.fn == policy::Aggregate::monthly_avg ? !numeric : !is_ordered_kind(col->kind)) {
      throw Error(Errc::invalid_argument, "cannot " + std::string(policy::aggregate_name(spec.fn)) +
                                              " a " + std::string(kind_name(col->kind)) + " column");
    }
  }
  if (!t->is_derived) out.shape = policy::make_shape(spec.fn, t->name, spec.columns);
  out.tables_used.push_back(t->name);
  auto typed = type_filters(*t, q.filters);

  // Date window implied by the filters, if they touch only Date.
  bool date_only = !t->is_derived && t->column(kDateColumn) != nullptr;
  std::optional<Date> lo;
  std::optional<Date> hi;
  bool empty_window = false;
  for (const auto& [f, v] : typed) {
    if (f.column != kDateColumn || v.kind() != ValueKind::date) {
      date_only = false;
      continue;
    }
    std::optional<Date> flo;
    std::optional<Date> fhi;
    Date d = v.as_date();
    switch (f.op) {
      case Op::eq: flo = fhi = d; break;
      case Op::lt: fhi = Date{d.days - 1}; break;
      case Op::le: fhi = d; break;
      case Op::gt: flo = Date{d.days + 1}; break;
      case Op::ge: flo = d; break;
      case Op::between:
        flo = d;
        fhi = decode_value(f.hi).as_date();
        break;
    }
    if (flo && (!lo || *lo < *flo)) lo = flo;
    if (fhi && (!hi || *fhi < *hi)) hi = fhi;
  }
  if (lo && hi && *hi < *lo) empty_window = true;
  bool aligned = (!lo || lo->day() == 1) && (!hi || Month::of(*hi).last_day() == *hi);

  const TableSchema* derived = nullptr;
  if (date_only && aligned && !empty_window) {
    for (const auto* d : state_.registry.derived_of(t->name)) {
      if (!d->aggregate || *d->aggregate != spec.fn) continue;
      bool covers = std::all_of(spec.columns.begin(), spec.columns.end(),
                                [&](const std::string& c) { return d->column(c) != nullptr; });
      if (covers && (derived == nullptr || d->name < derived->name)) derived = d;
    }
  }
  bool single_month = lo && hi && Month::of(*lo) == Month::of(*hi);
  bool bounded = lo || hi;
  bool use_derived =
      derived != nullptr &&
      (q.group_by_month ||
       (single_month) ||
       (bounded && spec.fn != policy::Aggregate::monthly_avg));

  auto emit = [&](std::optional<Month> month, std::vector<Binding> cells) {
    ResultRow r{month ? "aggregate:" + month->iso() : "aggregate", "aggregate", t->name, 0, {}, {}};
    if (month) r.cells.push_back(Binding{std::string(kDateColumn), Value::month(*month), Provenance::source});
    for (auto& c : cells) r.cells.push_back(std::move(c));
    out.rows.push_back(std::move(r));
  };

  if (use_derived) {
    out.tables_used.push_back(derived->name);
    std::vector<RowRef> drows;
    TableId did = state_.keys.table_id(derived->name);
    if (single_month && !q.group_by_month) {
      auto ct = codec::point_literal(state_.keys, derived->name, std::string(kDateColumn),
                                     Value::month(Month::of(*lo)));
      out.plan.encrypted_literals.push_back(ct);
      out.plan.steps.push_back({StepKind::store_point_scan, derived->name, std::string(kDateColumn),
                                Month::of(*lo).iso()});
      drows = decrypt(*derived, store_.scan_point(did, ct));
    } else {
      out.plan.steps.push_back({StepKind::store_full_scan, derived->name, "", ""});
      drows = decrypt(*derived, store_.scan_all(did));
      std::optional<Month> mlo = lo ? std::optional(Month::of(*lo)) : std::nullopt;
      std::optional<Month> mhi = hi ? std::optional(Month::of(*hi)) : std::nullopt;
      out.plan.steps.push_back(
          {StepKind::local_filter, derived->name, std::string(kDateColumn),
           month_range_detail(mlo ? Value::month(*mlo) : Value(), mhi ? Value::month(*mhi) : Value())});
      std::erase_if(drows, [&](const RowRef& r) {
        const Binding* b = find_binding(r.cells, kDateColumn);
        if (b == nullptr || b->value.kind() != ValueKind::month) return true;
        Month m = b->value.as_month();
        return (mlo && m < *mlo) || (mhi && *mhi < m);
      });
    }
    out.plan.steps.push_back({StepKind::aggregate, derived->name, "", std::string(policy::aggregate_name(spec.fn))});
    if (q.group_by_month) {
      std::sort(drows.begin(), drows.end(), [](const RowRef& a, const RowRef& b) {
        return find_binding(a.cells, kDateColumn)->value < find_binding(b.cells, kDateColumn)->value;
      });
      for (const auto& r : drows) {
        std::vector<Binding> cells;
        for (const auto& c : spec.columns) {
          cells.push_back(Binding{c, find_binding(r.cells, c)->value, Provenance::computed_aggregate});
        }
        emit(find_binding(r.cells, kDateColumn)->value.as_month(), std::move(cells));
      }
    } else {
      std::vector<Binding> cells;
      for (const auto& c : spec.columns) {
        std::vector<Value> vals;
        for (const auto& r : drows) vals.push_back(find_binding(r.cells, c)->value);
        cells.push_back(Binding{c, enrich::aggregate(spec.fn, vals), Provenance::computed_aggregate});
      }
      emit(std::nullopt, std::move(cells));
    }
    return out;
  }

  auto rows = empty_window ? std::vector<RowRef>{} : fetch(*t, typed, out.plan);
  out.plan.steps.push_back({StepKind::aggregate, t->name, "", std::string(policy::aggregate_name(spec.fn))});
  if (q.group_by_month) {
    std::map<Month, std::vector<const RowRef*>> groups;
    for (const auto& r : rows) {
      const Binding* d = find_binding(r.cells, kDateColumn);
      if (d == nullptr || d->value.kind() != ValueKind::date) continue;
      groups[Month::of(d->value.as_date())].push_back(&r);
    }
    for (const auto& [m, members] : groups) {
      std::vector<Binding> cells;
      for (const auto& c : spec.columns) {
        std::vector<Value> vals;
        for (const auto* r : members) vals.push_back(find_binding(r->cells, c)->value);
        cells.push_back(Binding{c, enrich::aggregate(spec.fn, vals), Provenance::computed_aggregate});
      }
      emit(m, std::move(cells));
    }
  } else {
    std::vector<Binding> cells;
    for (const auto& c : spec.columns) {
      std::vector<Value> vals;
      for (const auto& r : rows) vals.push_back(find_binding(r.cells, c)->value);
      cells.push_back(Binding{c, enrich::aggregate(spec.fn, vals), Provenance::computed_aggregate});
    }
    emit(std::nullopt, std::move(cells));
  }
  return out;
}

std::vector<RowRef> QueryEngine::condition_rows(const TableSchema& t, const std::string& label,
                                                QueryPlan& plan) const {
  const auto* col = t.column(ingest::kCondition);
  if (col == nullptr) return fetch(t, {}, plan);
  Filter f{std::string(ingest::kCondition), Op::eq, label, ""};
  return fetch(t, {{f, Value::text(label)}}, plan);
}

ResultSet QueryEngine::share(const Query& q) const {
  ResultSet out;
  out.query = q;
  std::string label = to_lower(trim(q.scope));
  out.condition = label;
  auto lookup = state_.policies.lookup_sharing(label);
  policy::SharingPolicy pol = lookup.policy;
  if (lookup.needs_user_input) {
    if (q.kind == QueryKind::share) {
      out.needs_user_input = true;
      out.policy_version = pol.version;
      return out;
    }
    // Own records about a condition without a sharing policy: every table
    // that carries a Condition column and every known object class.
    pol.included.clear();
    for (const auto& t : state_.registry.tables()) {
      if (!t.is_derived && t.column(ingest::kCondition) != nullptr) {
        pol.included.push_back({policy::ItemKind::table, t.name});
      }
    }
    for (const auto& c : state_.object_classes) pol.included.push_back({policy::ItemKind::object_class, c});
  }
  out.policy_version = pol.version;
  std::set<std::string> seen;
  auto release_rows = [&](const TableSchema& t, std::vector<RowRef> rows, const std::string& category,
                          const std::string& keyword) {
    for (auto& r : rows) {
      std::string id = row_id(t.name, r.handle);
      if (!keyword.empty()) {
        const Binding* k = find_binding(r.cells, keyword);
        if (k == nullptr || k->value.is_null()) continue;
        std::vector<Binding> projected;
        if (const Binding* d = find_binding(r.cells, kDateColumn)) projected.push_back(*d);
        projected.push_back(*k);
        r.cells = std::move(projected);
      }
      if (!seen.insert(id).second) continue;
      out.rows.push_back(ResultRow{id, category, t.name, r.handle, std::move(r.cells), {}});
    }
  };
  for (const auto& item : pol.included) {
    switch (item.kind) {
      case policy::ItemKind::table: {
        const auto* t = find_table(state_.registry, item.name);
        if (t == nullptr || t->is_derived) break;
        out.tables_used.push_back(t->name);
        release_rows(*t, condition_rows(*t, label, out.plan), item.category(), "");
        break;
      }
      case policy::ItemKind::keyword: {
        std::string kw = item.name;
        if (const auto* e = keywords_.lookup(kw)) kw = e->keyword;
        for (const auto& t : state_.registry.tables()) {
          const auto* c = t.column(kw);
          if (t.is_derived || c == nullptr || c->hidden) continue;
          out.tables_used.push_back(t.name);
          release_rows(t, condition_rows(t, label, out.plan), item.category(), kw);
        }
        break;
      }
      case policy::ItemKind::object_class: {
        const auto* tag_key = state_.keys.find(std::string(kObjectsTable), std::string(kObjectClassColumn));
        const auto* payload_key =
            state_.keys.find(std::string(kObjectsTable), std::string(kObjectPayloadColumn));
        if (tag_key == nullptr || payload_key == nullptr) break;
        for (const auto& cls : state_.object_classes) {
          if (!iequals(cls, item.name)) continue;
          auto ct = crypto::det_encrypt(*tag_key, Value::text(cls));
          out.plan.encrypted_literals.push_back(ct);
          out.plan.steps.push_back({StepKind::store_object_fetch, std::string(kObjectsTable),
                                    std::string(kObjectClassColumn), ""});
          for (Handle h : store_.list_objects(ct)) {
            auto obj = store_.get_object(h);
            auto [tags, content] = codec::decode_envelope(crypto::opaque_decrypt(*payload_key, obj.payload));
            const Binding* cond = find_binding(tags, ingest::kCondition);
            if (cond == nullptr || cond->value.kind() != ValueKind::text ||
                to_lower(cond->value.as_text()) != label) {
              continue;
            }
            std::string id = "object:" + std::to_string(h);
            if (!seen.insert(id).second) continue;
            out.rows.push_back(ResultRow{id, item.category(), std::string(kObjectsTable), h, std::move(tags), std::move(content)});
          }
        }
        break;
      }
    }
  }
  // Release gate: category must be allowlisted and condition-tagged items
  // must carry this condition.
  out.plan.steps.push_back({StepKind::share_filter, "", "", label});
  std::erase_if(out.rows, [&](const ResultRow& r) {
    if (!pol.allows(r.category)) return true;
    const Binding* c = find_binding(r.cells, ingest::kCondition);
    if (c != nullptr && (c->value.kind() != ValueKind::text || c->value.as_text() != label)) return true;
    const auto* t = state_.registry.find(r.table);
    if (t != nullptr && t->column(ingest::kCondition) != nullptr && r.category.rfind("keyword:", 0) != 0 &&
        c == nullptr) {
      return true;
    }
    return false;
  });
  for (const auto& r : out.rows) out.manifest.push_back({r.item_id, r.category});
  return out;
}

}  // namespace healthvault::query
