#include "healthvault/schema_manager.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "healthvault/errors.hpp"

namespace healthvault::schema {

using ingest::MetadataTag;
using ingest::MetadataTagSet;

const ColumnSchema* TableSchema::column(std::string_view name) const {
  for (const auto& c : columns) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::vector<std::string> TableSchema::signature() const {
  std::vector<std::string> sig;
  for (const auto& c : columns) {
    if (!c.hidden && c.name != kTimeColumn) sig.push_back(c.name);
  }
  std::sort(sig.begin(), sig.end());
  return sig;
}

std::vector<const ColumnSchema*> TableSchema::visible_columns() const {
  std::vector<const ColumnSchema*> out;
  for (const auto& c : columns) {
    if (!c.hidden) out.push_back(&c);
  }
  return out;
}

// ---- synonyms --------------------------------------------------------------

SynonymDictionary SynonymDictionary::parse(std::string_view text) {
  SynonymDictionary dict;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::invalid_argument,
                  "synonyms line " + std::to_string(line_no) + ": expected 'surface=canonical'");
    }
    dict.add(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return dict;
}

SynonymDictionary SynonymDictionary::load(const std::filesystem::path& path) {
  return parse(ingest::read_file(path));
}

void SynonymDictionary::add(std::string_view surface, std::string_view canonical) {
  std::string c = trim(canonical);
  std::string s = trim(surface);
  if (c.empty() || s.empty()) throw Error(Errc::invalid_argument, "empty synonym entry");
  // Chains collapse to the final canonical form so resolution is idempotent.
  c = this->canonical(c);
  by_key_[ingest::normalize_keyword(c)] = c;
  by_key_[ingest::normalize_keyword(s)] = c;
  for (auto& [k, v] : by_key_) {
    if (ingest::normalize_keyword(v) == ingest::normalize_keyword(s)) v = c;
  }
  pairs_.emplace_back(s, c);
}

std::string SynonymDictionary::canonical(std::string_view keyword) const {
  auto it = by_key_.find(ingest::normalize_keyword(keyword));
  return it == by_key_.end() ? std::string(keyword) : it->second;
}

MetadataTagSet resolve_entities(const MetadataTagSet& tags, const SynonymDictionary& dict) {
  MetadataTagSet out = tags;
  for (auto& t : out.tags) t.keyword = dict.canonical(t.keyword);
  return out;
}

// ---- catalog ---------------------------------------------------------------

TableCatalog TableCatalog::parse(std::string_view text) {
  TableCatalog cat;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    TableCatalogEntry e;
    auto bar = line.find('|');
    if (bar != std::string::npos) {
      std::string flag = trim(line.substr(bar + 1));
      if (flag != "fallback") {
        throw Error(Errc::invalid_argument,
                    "tables line " + std::to_string(line_no) + ": unknown flag '" + flag + "'");
      }
      e.fallback = true;
      line = trim(line.substr(0, bar));
    }
    auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw Error(Errc::invalid_argument,
                  "tables line " + std::to_string(line_no) + ": expected '<name>: <columns>'");
    }
    e.name = trim(line.substr(0, colon));
    for (const auto& c : split(line.substr(colon + 1), ',')) {
      if (!trim(c).empty()) e.columns.push_back(trim(c));
    }
    if (e.name.empty() || e.columns.empty()) {
      throw Error(Errc::invalid_argument,
                  "tables line " + std::to_string(line_no) + ": empty name or column list");
    }
    cat.entries.push_back(std::move(e));
  }
  return cat;
}

TableCatalog TableCatalog::load(const std::filesystem::path& path) {
  return parse(ingest::read_file(path));
}

const TableCatalogEntry* TableCatalog::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

// ---- helpers ---------------------------------------------------------------

Scheme assign_scheme(ValueKind kind, const ingest::KeywordEntry* entry) {
  if (entry != nullptr) {
    if (entry->equality_queryable) return Scheme::deterministic;
    if (entry->range_queryable && is_ordered_kind(kind)) return Scheme::order_preserving;
    return Scheme::opaque;
  }
  return is_ordered_kind(kind) ? Scheme::order_preserving : Scheme::opaque;
}

std::optional<Value> coerce(const Value& v, ValueKind column_kind) {
  if (v.is_null() || v.kind() == column_kind) return v;
  if (v.kind() == ValueKind::integer && column_kind == ValueKind::decimal) {
    return Value::decimal(Decimal::from_integer(v.as_integer()));
  }
  if (column_kind == ValueKind::text) return Value::text(v.str());
  return std::nullopt;
}

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<std::string> tag_signature(const std::vector<MetadataTag>& tags) {
  std::vector<std::string> sig;
  for (const auto& t : tags) {
    if (t.keyword != kTimeColumn) sig.push_back(t.keyword);
  }
  return sorted_unique(std::move(sig));
}

bool is_subset(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Adds Date/Time from observed_at and merges repeated keywords.
std::vector<MetadataTag> normalize_tags(const MetadataTagSet& set) {
  std::vector<MetadataTag> tags;
  for (const auto& t : set.tags) {
    auto dup = std::find_if(tags.begin(), tags.end(),
                            [&](const MetadataTag& e) { return e.keyword == t.keyword; });
    if (dup == tags.end()) {
      tags.push_back(t);
    } else if (dup->value != t.value) {
      throw Error(Errc::schema_conflict, "keyword '" + t.keyword + "' has two different values (" +
                                             dup->value.str() + ", " + t.value.str() + ")");
    }
  }
  bool has_date = set.find(kDateColumn) != nullptr;
  bool has_time = set.find(kTimeColumn) != nullptr;
  if (!has_date && !has_time) {
    for (const auto& t : set.tags) {
      if (!t.observed_at) continue;
      tags.push_back(MetadataTag{std::string(kDateColumn),
                                 Value::date(Date::from_timestamp(*t.observed_at)), std::nullopt});
      tags.push_back(MetadataTag{std::string(kTimeColumn),
                                 Value::time(TimeOfDay::of(*t.observed_at)), std::nullopt});
      break;
    }
  }
  return tags;
}

std::string join_sig(const std::vector<std::string>& sig) {
  std::string s = "{";
  for (std::size_t i = 0; i < sig.size(); ++i) s += (i ? ", " : "") + sig[i];
  return s + "}";
}

}  // namespace

// ---- registry --------------------------------------------------------------

const TableSchema* SchemaRegistry::find(std::string_view name) const {
  for (const auto& t : tables_) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<const TableSchema*> SchemaRegistry::derived_of(std::string_view base) const {
  std::vector<const TableSchema*> out;
  for (const auto& t : tables_) {
    if (t.is_derived && t.base_table == base) out.push_back(&t);
  }
  return out;
}

void SchemaRegistry::restore(TableSchema t) {
  if (find(t.name) != nullptr) {
    throw Error(Errc::corrupt_state, "table '" + t.name + "' restored twice");
  }
  tables_.push_back(std::move(t));
}

void SchemaRegistry::add_table(TableSchema t) { tables_.push_back(std::move(t)); }

std::string SchemaRegistry::auto_name(const std::vector<std::string>& signature) const {
  std::string name;
  for (const auto& kw : signature) {
    if (kw == kDateColumn && signature.size() > 1) continue;
    bool start = true;
    for (char c : kw) {
      auto u = static_cast<unsigned char>(c);
      if (std::isalnum(u)) {
        if (start && !name.empty() && name.back() != '_') name.push_back('_');
        name.push_back(start ? static_cast<char>(std::toupper(u)) : c);
        start = false;
      } else {
        start = true;
      }
    }
  }
  if (name.empty()) name = "Records";
  std::string candidate = name;
  for (int n = 2; find(candidate) != nullptr || catalog_.find(candidate) != nullptr; ++n) {
    candidate = name + "_" + std::to_string(n);
  }
  return candidate;
}

Placement SchemaRegistry::place_one(std::vector<MetadataTag> tags) const {
  auto sig = tag_signature(tags);
  if (sig.empty()) {
    throw Error(Errc::schema_conflict, "tag set has no storable keywords");
  }
  auto base_tables = [&] {
    std::vector<const TableSchema*> out;
    for (const auto& t : tables_) {
      if (!t.is_derived) out.push_back(&t);
    }
    return out;
  }();

  for (const auto* t : base_tables) {
    if (t->signature() == sig) return Placement{t->name, false, std::move(tags)};
  }
  for (const auto& e : catalog_.entries) {
    if (sorted_unique(e.columns) != sig) continue;
    if (find(e.name) != nullptr) {
      throw Error(Errc::schema_conflict, "table '" + e.name + "' exists with a different column set");
    }
    return Placement{e.name, true, std::move(tags)};
  }

  const TableSchema* best = nullptr;
  for (const auto* t : base_tables) {
    auto ts = t->signature();
    if (!is_subset(sig, ts)) continue;
    if (best == nullptr || ts.size() < best->signature().size() ||
        (ts.size() == best->signature().size() && t->name < best->name)) {
      best = t;
    }
  }
  if (best != nullptr) return Placement{best->name, false, std::move(tags)};

  const TableCatalogEntry* best_cfg = nullptr;
  for (const auto& e : catalog_.entries) {
    auto es = sorted_unique(e.columns);
    if (!is_subset(sig, es) || find(e.name) != nullptr) continue;
    if (best_cfg == nullptr || es.size() < best_cfg->columns.size() ||
        (es.size() == best_cfg->columns.size() && e.name < best_cfg->name)) {
      best_cfg = &e;
    }
  }
  if (best_cfg != nullptr) return Placement{best_cfg->name, true, std::move(tags)};

  for (const auto* t : base_tables) {
    if (!t->fallback && is_subset(t->signature(), sig)) {
      throw Error(Errc::schema_conflict, "keywords " + join_sig(sig) + " extend table '" +
                                             t->name + "'; widening needs review");
    }
  }
  for (const auto& e : catalog_.entries) {
    if (!e.fallback && is_subset(sorted_unique(e.columns), sig)) {
      throw Error(Errc::schema_conflict, "keywords " + join_sig(sig) + " extend table '" +
                                             e.name + "'; widening needs review");
    }
  }
  return Placement{auto_name(sig), true, std::move(tags)};
}

std::vector<Placement> SchemaRegistry::place(const MetadataTagSet& set) const {
  auto tags = normalize_tags(set);
  const TableCatalogEntry* fallback = nullptr;
  for (const auto& e : catalog_.entries) {
    if (e.fallback) fallback = &e;
  }
  bool has_description = std::any_of(tags.begin(), tags.end(), [](const MetadataTag& t) {
    return t.keyword == ingest::kDescription;
  });
  bool has_other = std::any_of(tags.begin(), tags.end(), [](const MetadataTag& t) {
    return t.keyword != ingest::kDescription && t.keyword != kDateColumn &&
           t.keyword != kTimeColumn;
  });
  if (fallback == nullptr || !has_description || !has_other) {
    return {place_one(std::move(tags))};
  }
  std::vector<MetadataTag> main;
  std::vector<MetadataTag> notes;
  for (const auto& t : tags) {
    bool shared = t.keyword == kDateColumn || t.keyword == kTimeColumn;
    bool in_notes =
        shared || std::find(fallback->columns.begin(), fallback->columns.end(), t.keyword) !=
                      fallback->columns.end();
    if (t.keyword == ingest::kDescription || (shared && in_notes)) notes.push_back(t);
    if (t.keyword != ingest::kDescription) main.push_back(t);
  }
  std::vector<Placement> out;
  out.push_back(place_one(std::move(main)));
  auto p = place_one(std::move(notes));
  if (p.table == out.front().table) {
    throw Error(Errc::schema_conflict, "description split resolved to the same table");
  }
  out.push_back(std::move(p));
  return out;
}

TableSchema SchemaRegistry::build_base(const std::string& name,
                                       const std::vector<std::string>& columns,
                                       const std::vector<MetadataTag>& sample,
                                       bool fallback) const {
  TableSchema t;
  t.name = name;
  t.fallback = fallback;
  auto add_column = [&](const std::string& col) {
    if (t.column(col) != nullptr) return;
    const auto* entry = dict_.lookup(col);
    ValueKind kind = ValueKind::text;
    if (entry != nullptr) {
      kind = entry->kind;
    } else if (col == kTimeColumn) {
      kind = ValueKind::time;
    } else {
      for (const auto& tag : sample) {
        if (tag.keyword == col && !tag.value.is_null()) kind = tag.value.kind();
      }
    }
    t.columns.push_back(ColumnSchema{col, kind, assign_scheme(kind, entry), false});
  };
  for (const auto& c : columns) {
    if (c != kTimeColumn) add_column(c);
  }
  add_column(std::string(kTimeColumn));
  t.columns.push_back(
      ColumnSchema{std::string(kProvenanceColumn), ValueKind::text, Scheme::opaque, true});
  return t;
}

TableSchema SchemaRegistry::build_derived(const TableSchema& base,
                                          const policy::DerivedTableSpec& spec) const {
  if (spec.columns.empty()) {
    throw Error(Errc::schema_conflict, "derived table '" + spec.name + "' names no columns");
  }
  if (base.column(kDateColumn) == nullptr) {
    throw Error(Errc::schema_conflict,
                "derived table '" + spec.name + "' needs a Date column in '" + base.name + "'");
  }
  TableSchema t;
  t.name = spec.name;
  t.is_derived = true;
  t.base_table = base.name;
  t.aggregate = spec.aggregate;
  t.columns.push_back(
      ColumnSchema{std::string(kDateColumn), ValueKind::month, Scheme::deterministic, false});
  for (const auto& c : spec.columns) {
    const auto* bc = base.column(c);
    if (bc == nullptr || bc->hidden || c == kDateColumn) {
      throw Error(Errc::schema_conflict,
                  "derived table '" + spec.name + "': '" + c + "' is not a column of " + base.name);
    }
    bool numeric = bc->kind == ValueKind::integer || bc->kind == ValueKind::decimal;
    if (spec.aggregate == policy::Aggregate::monthly_avg ? !numeric : !is_ordered_kind(bc->kind)) {
      throw Error(Errc::schema_conflict, "derived table '" + spec.name + "': cannot aggregate " +
                                             std::string(kind_name(bc->kind)) + " column '" + c +
                                             "'");
    }
    t.columns.push_back(ColumnSchema{c, bc->kind, Scheme::order_preserving, false});
  }
  return t;
}

std::vector<TableSchema> SchemaRegistry::ensure_derived(
    const std::vector<policy::StoragePolicy>& policies) {
  std::vector<TableSchema> created;
  for (const auto& p : policies) {
    const TableSchema* base = find(p.base_table);
    if (base == nullptr || base->is_derived) continue;
    for (const auto& spec : p.derived_tables) {
      auto t = build_derived(*base, spec);
      if (const auto* existing = find(spec.name)) {
        if (existing->columns != t.columns || existing->base_table != t.base_table ||
            existing->aggregate != t.aggregate) {
          throw Error(Errc::schema_conflict,
                      "table '" + spec.name + "' exists with a different definition");
        }
        continue;
      }
      add_table(t);
      created.push_back(std::move(t));
      base = find(p.base_table);
    }
  }
  return created;
}

std::vector<TableSchema> SchemaRegistry::ensure_tables(
    const MetadataTagSet& tags, const std::vector<policy::StoragePolicy>& policies) {
  std::vector<TableSchema> created;
  std::set<std::string> bases;
  for (auto& p : place(tags)) {
    bases.insert(p.table);
    if (!p.create) continue;
    std::vector<std::string> columns;
    bool fallback = false;
    if (const auto* e = catalog_.find(p.table)) {
      columns = e->columns;
      fallback = e->fallback;
    } else {
      for (const auto& t : p.tags) {
        if (t.keyword == kDateColumn) columns.insert(columns.begin(), t.keyword);
        else columns.push_back(t.keyword);
      }
    }
    auto t = build_base(p.table, columns, p.tags, fallback);
    add_table(t);
    created.push_back(std::move(t));
  }
  std::vector<policy::StoragePolicy> relevant;
  for (const auto& p : policies) {
    if (bases.contains(p.base_table)) relevant.push_back(p);
  }
  for (auto& t : ensure_derived(relevant)) created.push_back(std::move(t));
  return created;
}

std::vector<SchemaTag> SchemaRegistry::make_schema_tags(const MetadataTagSet& tags) const {
  std::vector<SchemaTag> out;
  for (const auto& p : place(tags)) {
    if (p.create) {
      throw Error(Errc::unknown_table, "table '" + p.table + "' has not been created");
    }
    const TableSchema* table = find(p.table);
    SchemaTag base{table->name, {}};
    for (const auto* col : table->visible_columns()) {
      Value v;
      for (const auto& t : p.tags) {
        if (t.keyword == col->name) v = t.value;
      }
      auto c = coerce(v, col->kind);
      if (!c) {
        throw Error(Errc::schema_conflict, "column " + table->name + "." + col->name +
                                               " holds " + std::string(kind_name(col->kind)) +
                                               ", got " + std::string(kind_name(v.kind())) +
                                               " '" + v.str() + "'");
      }
      base.bindings.push_back(Binding{col->name, *c, Provenance::source});
    }
    const Binding* date = base.find(kDateColumn);
    out.push_back(base);
    if (date == nullptr || date->value.is_null()) continue;
    for (const auto* derived : derived_of(table->name)) {
      SchemaTag d{derived->name, {}};
      d.bindings.push_back(Binding{std::string(kDateColumn),
                                   Value::month(Month::of(date->value.as_date())),
                                   Provenance::source});
      for (const auto& col : derived->columns) {
        if (col.name == kDateColumn) continue;
        d.bindings.push_back(Binding{col.name, base.find(col.name)->value, Provenance::source});
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace healthvault::schema
