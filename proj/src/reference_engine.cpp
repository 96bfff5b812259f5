#include "healthvault/reference_engine.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace healthvault::reference {

using query::Filter;
using query::Op;
using query::Query;
using query::QueryKind;
using schema::TableSchema;

namespace {

constexpr std::string_view kDate = "Date";
constexpr std::string_view kTime = "Time";

std::string fold_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(c));
  }
  return out;
}

const TableSchema* lookup_table(const schema::SchemaRegistry& reg, const std::string& name) {
  for (const auto& t : reg.tables()) {
    if (t.name == name) return &t;
  }
  for (const auto& t : reg.tables()) {
    if (fold_name(t.name) == fold_name(name)) return &t;
  }
  return nullptr;
}

const Binding* cell_of(const std::vector<Binding>& cells, std::string_view col) {
  for (const auto& b : cells) {
    if (b.attribute == col) return &b;
  }
  return nullptr;
}

// Mean rounded half up: floor(mean + 1/2). Integers and decimals mixed are
// averaged in decimal units.
Value mean_of(const std::vector<Value>& values) {
  bool decimal = std::any_of(values.begin(), values.end(),
                             [](const Value& v) { return v.kind() == ValueKind::decimal; });
  __int128 sum = 0;
  __int128 n = 0;
  for (const auto& v : values) {
    if (v.is_null()) continue;
    if (v.kind() == ValueKind::integer) {
      sum += decimal ? __int128(v.as_integer()) * Decimal::kScale : __int128(v.as_integer());
    } else if (v.kind() == ValueKind::decimal) {
      sum += v.as_decimal().scaled;
    } else {
      throw Error(Errc::invalid_argument, "cannot average " + std::string(kind_name(v.kind())));
    }
    ++n;
  }
  if (n == 0) return Value();
  __int128 q = sum / n;
  __int128 r = sum % n;
  if (r < 0) {
    r += n;
    --q;
  }
  if (2 * r >= n) ++q;
  auto m = static_cast<std::int64_t>(q);
  return decimal ? Value::decimal(Decimal{m}) : Value::integer(m);
}

Value extreme_of(const std::vector<Value>& values, bool want_max) {
  std::optional<Value> best;
  for (const auto& v : values) {
    if (v.is_null()) continue;
    if (!best || (want_max ? *best < v : v < *best)) best = v;
  }
  return best.value_or(Value());
}

Value compute(policy::Aggregate fn, const std::vector<Value>& values) {
  switch (fn) {
    case policy::Aggregate::monthly_avg: return mean_of(values);
    case policy::Aggregate::monthly_max: return extreme_of(values, true);
    case policy::Aggregate::monthly_min: return extreme_of(values, false);
  }
  return Value();
}

std::optional<std::string> read_if_present(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) return std::nullopt;
  return ingest::read_file(p);
}

std::string hex(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out += kDigits[c >> 4];
    out += kDigits[c & 15];
  }
  return out;
}

std::string line_of(std::string_view category, std::string_view table, const std::vector<Binding>& cells,
                    const std::optional<std::string>& content) {
  std::vector<std::string> parts;
  for (const auto& c : cells) {
    if (c.value.is_null()) continue;
    parts.push_back(c.attribute + "=" + hex(encode_value(c.value)) + "@" +
                    std::string(provenance_name(c.provenance)));
  }
  std::sort(parts.begin(), parts.end());
  std::string out = std::string(category) + "|" + std::string(table) + "|";
  for (const auto& p : parts) out += p + ";";
  if (content) out += "|" + hex(*content);
  return out;
}

}  // namespace

ReferenceEngine::ReferenceEngine(const std::filesystem::path& config_dir) {
  keywords_ = ingest::KeywordDictionary::load(config_dir / "keywords.conf");
  if (auto syn = read_if_present(config_dir / "synonyms.conf")) {
    synonyms_ = schema::SynonymDictionary::parse(*syn);
  }
  for (const auto& [surface, canonical] : synonyms_.pairs()) keywords_.add_surface(surface, canonical);
  registry_.set_dictionary(keywords_);
  if (auto tables = read_if_present(config_dir / "tables.conf")) {
    registry_.set_catalog(schema::TableCatalog::parse(*tables));
  }
  if (auto pol = read_if_present(config_dir / "policies.conf")) {
    policies_.apply(policy::PolicyFile::parse(*pol));
  }
}

void ReferenceEngine::ingest(const ingest::RawDocument& doc) {
  if (documents_.contains(doc.doc_id)) {
    throw Error(Errc::duplicate_document, "document '" + doc.doc_id + "' was already ingested");
  }
  auto sets = ingest::parse_document(doc, keywords_);
  for (auto& s : sets) s = schema::resolve_entities(s, synonyms_);
  documents_.insert(doc.doc_id);
  if (doc.declared_format == ingest::DocumentFormat::opaque_binary) {
    StoredObject obj;
    const auto& set = sets.at(0);
    const auto* cls = set.find(ingest::kObjectClass);
    obj.object_class = cls ? cls->value.str() : "Unclassified";
    for (const auto& t : set.tags) obj.tags.push_back(Binding{t.keyword, t.value, Provenance::source});
    obj.content = doc.content;
    objects_.push_back(std::move(obj));
    return;
  }
  for (const auto& s : sets) registry_.ensure_tables(s, {});
  for (const auto& s : sets) {
    for (const auto& tag : registry_.make_schema_tags(s)) {
      const auto* t = registry_.find(tag.table_name);
      if (t == nullptr || t->is_derived) continue;
      tables_[t->name].push_back(StoredRow{next_seq_++, tag.bindings});
    }
  }
}

std::size_t ReferenceEngine::row_count(const std::string& table) const {
  auto it = tables_.find(table);
  return it == tables_.end() ? 0 : it->second.size();
}

// Rows padded to the current schema: one cell per visible column.
std::vector<ReferenceEngine::StoredRow> ReferenceEngine::rows_of(const TableSchema& t) const {
  std::vector<StoredRow> out;
  auto it = tables_.find(t.name);
  if (it == tables_.end()) return out;
  for (const auto& r : it->second) {
    StoredRow row{r.seq, {}};
    for (const auto& c : t.columns) {
      if (c.hidden) continue;
      const Binding* b = cell_of(r.cells, c.name);
      row.cells.push_back(b ? *b : Binding{c.name, Value(), Provenance::source});
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<ReferenceEngine::StoredRow> ReferenceEngine::filtered(const TableSchema& t,
                                                                  const std::vector<Filter>& filters) const {
  struct Typed {
    std::string column;
    Op op;
    Value lo;
    Value hi;
  };
  std::vector<Typed> typed;
  for (const auto& f : filters) {
    const auto* col = t.column(f.column);
    if (col == nullptr || col->hidden) throw Error(Errc::invalid_argument, "no column " + f.column);
    const auto* kw = keywords_.lookup(f.column);
    bool fold = kw != nullptr && kw->casefold;
    auto lo = query::type_literal(f.lo, col->kind, fold);
    if (!lo) throw Error(Errc::invalid_argument, "bad literal " + f.lo);
    Value hi;
    if (f.op == Op::between) {
      auto h = query::type_literal(f.hi, col->kind, fold);
      if (!h) throw Error(Errc::invalid_argument, "bad literal " + f.hi);
      if (*h < *lo) throw Error(Errc::inverted_range, "between bounds are inverted");
      hi = *h;
    }
    typed.push_back({f.column, f.op, *lo, hi});
  }
  auto rows = rows_of(t);
  std::erase_if(rows, [&](const StoredRow& r) {
    for (const auto& f : typed) {
      const Binding* b = cell_of(r.cells, f.column);
      if (b == nullptr || !query::matches(b->value, f.op, f.lo, f.hi)) return true;
    }
    return false;
  });
  return rows;
}

void ReferenceEngine::fill_same_day(const TableSchema& t, std::vector<StoredRow>& rows) const {
  for (const auto& p : policies_.enrichment_policies()) {
    if (p.timing != policy::Timing::process_time || p.target_table != t.name) continue;
    const auto* source = registry_.find(p.source_table);
    if (source == nullptr || source->is_derived || source->column(kDate) == nullptr) continue;
    auto columns = query::extrapolation_columns(t, *source, keywords_);
    auto sources = rows_of(*source);
    for (auto& row : rows) {
      const Binding* day = cell_of(row.cells, kDate);
      if (day == nullptr || day->value.kind() != ValueKind::date) continue;
      const Binding* at = cell_of(row.cells, kTime);
      for (const auto& col : columns) {
        Binding* target = nullptr;
        for (auto& b : row.cells) {
          if (b.attribute == col) target = &b;
        }
        if (target == nullptr || !target->value.is_null()) continue;
        // Nearest in time; a missing time is a day away; ties to the earlier
        // reading, then to the earlier insertion.
        const StoredRow* best = nullptr;
        std::int64_t best_dist = 0;
        std::int64_t best_time = 0;
        for (const auto& s : sources) {
          const Binding* sday = cell_of(s.cells, kDate);
          if (sday == nullptr || !(sday->value == day->value)) continue;
          const Binding* sv = cell_of(s.cells, col);
          if (sv == nullptr || sv->value.is_null()) continue;
          const Binding* stime = cell_of(s.cells, kTime);
          bool has_s = stime != nullptr && stime->value.kind() == ValueKind::time;
          bool has_t = at != nullptr && at->value.kind() == ValueKind::time;
          std::int64_t st = has_s ? stime->value.as_time().seconds : 86400;
          std::int64_t dist = has_s && has_t ? std::llabs(at->value.as_time().seconds - st) : 86400;
          if (best == nullptr || dist < best_dist || (dist == best_dist && st < best_time)) {
            best = &s;
            best_dist = dist;
            best_time = st;
          }
        }
        if (best == nullptr) continue;
        target->value = cell_of(best->cells, col)->value;
        target->provenance = Provenance::extrapolated;
      }
    }
  }
}

Result ReferenceEngine::select(const Query& q) const {
  Result out;
  std::vector<const TableSchema*> tables;
  if (q.scope == query::kAllTables) {
    for (const auto& t : registry_.tables()) {
      if (t.is_derived) continue;
      bool has_all = true;
      for (const auto& f : q.filters) {
        const auto* c = t.column(f.column);
        if (c == nullptr || c->hidden) has_all = false;
      }
      if (has_all) tables.push_back(&t);
    }
  } else {
    const auto* t = lookup_table(registry_, q.scope);
    if (t == nullptr) throw Error(Errc::unknown_table, "no table named '" + q.scope + "'");
    tables.push_back(t);
  }
  for (const auto* t : tables) {
    auto rows = filtered(*t, q.filters);
    if (!t->is_derived) fill_same_day(*t, rows);
    for (auto& r : rows) out.rows.push_back(Row{"table:" + t->name, t->name, std::move(r.cells), {}});
  }
  return out;
}

Result ReferenceEngine::aggregate(const Query& q) const {
  Result out;
  const auto& spec = *q.aggregate;
  const TableSchema* t = nullptr;
  if (q.scope.empty() || q.scope == query::kAllTables) {
    auto needed = spec.columns;
    for (const auto& f : q.filters) needed.push_back(f.column);
    t = query::table_for_columns(registry_, needed);
  } else {
    t = lookup_table(registry_, q.scope);
    if (t == nullptr) throw Error(Errc::unknown_table, "no table named '" + q.scope + "'");
  }
  if (t == nullptr) {
    if (!q.group_by_month) {
      Row r{"aggregate", "", {}, {}};
      for (const auto& c : spec.columns) r.cells.push_back(Binding{c, Value(), Provenance::computed_aggregate});
      out.rows.push_back(std::move(r));
    }
    return out;
  }
  for (const auto& c : spec.columns) {
    const auto* col = t->column(c);
    if (col == nullptr || col->hidden) throw Error(Errc::invalid_argument, "no column " + c);
    bool numeric = col->kind == ValueKind::integer || col->kind == ValueKind::decimal;
    bool ok = spec.fn == policy::Aggregate::monthly_avg ? numeric : is_ordered_kind(col->kind);
    if (!ok) throw Error(Errc::invalid_argument, "cannot aggregate " + c);
  }
  auto rows = filtered(*t, q.filters);
  auto emit = [&](std::optional<Month> m, const std::vector<const StoredRow*>& members) {
    Row r{"aggregate", t->name, {}, {}};
    if (m) r.cells.push_back(Binding{std::string(kDate), Value::month(*m), Provenance::source});
    for (const auto& c : spec.columns) {
      std::vector<Value> vals;
      for (const auto* row : members) vals.push_back(cell_of(row->cells, c)->value);
      r.cells.push_back(Binding{c, compute(spec.fn, vals), Provenance::computed_aggregate});
    }
    out.rows.push_back(std::move(r));
  };
  if (q.group_by_month) {
    std::map<Month, std::vector<const StoredRow*>> groups;
    for (const auto& r : rows) {
      const Binding* d = cell_of(r.cells, kDate);
      if (d != nullptr && d->value.kind() == ValueKind::date) groups[Month::of(d->value.as_date())].push_back(&r);
    }
    for (const auto& [m, members] : groups) emit(m, members);
  } else {
    std::vector<const StoredRow*> all;
    for (const auto& r : rows) all.push_back(&r);
    emit(std::nullopt, all);
  }
  return out;
}

Result ReferenceEngine::share(const Query& q) const {
  Result out;
  std::string label = to_lower(trim(q.scope));
  auto lookup = policies_.lookup_sharing(label);
  auto pol = lookup.policy;
  if (lookup.needs_user_input) {
    if (q.kind == QueryKind::share) {
      out.needs_user_input = true;
      return out;
    }
    pol.included.clear();
    for (const auto& t : registry_.tables()) {
      if (!t.is_derived && t.column(ingest::kCondition) != nullptr) {
        pol.included.push_back({policy::ItemKind::table, t.name});
      }
    }
    std::set<std::string> classes;
    for (const auto& o : objects_) classes.insert(o.object_class);
    for (const auto& c : classes) pol.included.push_back({policy::ItemKind::object_class, c});
  }
  std::set<std::pair<std::string, std::size_t>> released;
  auto about = [&](const TableSchema& t) {
    if (t.column(ingest::kCondition) == nullptr) return rows_of(t);
    return filtered(t, {Filter{std::string(ingest::kCondition), Op::eq, label, ""}});
  };
  for (const auto& item : pol.included) {
    if (item.kind == policy::ItemKind::table) {
      const auto* t = lookup_table(registry_, item.name);
      if (t == nullptr || t->is_derived) continue;
      for (auto& r : about(*t)) {
        if (released.insert({t->name, r.seq}).second) {
          out.rows.push_back(Row{item.category(), t->name, std::move(r.cells), {}});
        }
      }
    } else if (item.kind == policy::ItemKind::keyword) {
      std::string kw = item.name;
      if (const auto* e = keywords_.lookup(kw)) kw = e->keyword;
      for (const auto& t : registry_.tables()) {
        const auto* c = t.column(kw);
        if (t.is_derived || c == nullptr || c->hidden) continue;
        for (auto& r : about(t)) {
          const Binding* k = cell_of(r.cells, kw);
          if (k == nullptr || k->value.is_null()) continue;
          std::vector<Binding> cells;
          if (const Binding* d = cell_of(r.cells, kDate)) cells.push_back(*d);
          cells.push_back(*k);
          if (released.insert({t.name, r.seq}).second) {
            out.rows.push_back(Row{item.category(), t.name, std::move(cells), {}});
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < objects_.size(); ++i) {
        const auto& o = objects_[i];
        if (!iequals(o.object_class, item.name)) continue;
        const Binding* cond = cell_of(o.tags, ingest::kCondition);
        if (cond == nullptr || cond->value.kind() != ValueKind::text || to_lower(cond->value.as_text()) != label) {
          continue;
        }
        if (released.insert({"", i}).second) {
          out.rows.push_back(Row{item.category(), "", o.tags, o.content});
        }
      }
    }
  }
  std::erase_if(out.rows, [&](const Row& r) {
    if (!pol.allows(r.category)) return true;
    const Binding* c = cell_of(r.cells, ingest::kCondition);
    if (c != nullptr) return c->value.kind() != ValueKind::text || c->value.as_text() != label;
    const auto* t = r.table.empty() ? nullptr : registry_.find(r.table);
    return t != nullptr && t->column(ingest::kCondition) != nullptr && !r.category.starts_with("keyword:");
  });
  return out;
}

Result ReferenceEngine::execute(const Query& q) const {
  switch (q.kind) {
    case QueryKind::select: return q.condition_scope ? share(q) : select(q);
    case QueryKind::aggregate: return aggregate(q);
    case QueryKind::share: return share(q);
  }
  return {};
}

Result ReferenceEngine::run(std::string_view text) const {
  return execute(query::parse_query(text, query::Vocabulary{&keywords_, &synonyms_}));
}

std::vector<std::string> canonical(const Result& r) {
  std::vector<std::string> out;
  if (r.needs_user_input) out.push_back("needs_user_input");
  for (const auto& row : r.rows) {
    out.push_back(line_of(row.category, row.category.starts_with("object:") ? "" : row.table, row.cells,
                          row.content));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> canonical(const query::ResultSet& r) {
  std::vector<std::string> out;
  if (r.needs_user_input) out.push_back("needs_user_input");
  for (const auto& row : r.rows) {
    out.push_back(line_of(row.category, row.category.starts_with("object:") ? "" : row.table, row.cells,
                          row.content));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace healthvault::reference
