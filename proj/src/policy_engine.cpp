#include "healthvault/policy_engine.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "healthvault/errors.hpp"

namespace healthvault::policy {

std::string_view aggregate_name(Aggregate a) {
  switch (a) {
    case Aggregate::monthly_avg: return "monthly_avg";
    case Aggregate::monthly_max: return "monthly_max";
    case Aggregate::monthly_min: return "monthly_min";
  }
  return "monthly_avg";
}

std::optional<Aggregate> parse_aggregate(std::string_view name) {
  for (auto a : {Aggregate::monthly_avg, Aggregate::monthly_max, Aggregate::monthly_min}) {
    if (aggregate_name(a) == name) return a;
  }
  return std::nullopt;
}

std::string_view item_kind_name(ItemKind k) {
  switch (k) {
    case ItemKind::table: return "table";
    case ItemKind::object_class: return "object";
    case ItemKind::keyword: return "keyword";
  }
  return "table";
}

std::string ShareItem::category() const {
  return std::string(item_kind_name(kind)) + ":" + name;
}

bool SharingPolicy::allows(const std::string& category) const {
  return std::any_of(included.begin(), included.end(),
                     [&](const ShareItem& i) { return i.category() == category; });
}

std::string QueryShape::key() const {
  std::string k = std::string(aggregate_name(aggregate)) + "(";
  for (std::size_t i = 0; i < columns.size(); ++i) k += (i ? "," : "") + columns[i];
  return k + ")@" + table;
}

QueryShape make_shape(Aggregate a, std::string table, std::vector<std::string> columns) {
  std::sort(columns.begin(), columns.end());
  columns.erase(std::unique(columns.begin(), columns.end()), columns.end());
  return QueryShape{a, std::move(table), std::move(columns)};
}

std::string derived_table_name(const QueryShape& shape) {
  std::string fn;
  switch (shape.aggregate) {
    case Aggregate::monthly_avg: fn = "Avg"; break;
    case Aggregate::monthly_max: fn = "High"; break;
    case Aggregate::monthly_min: fn = "Low"; break;
  }
  std::string subject = shape.columns.size() == 1 ? shape.columns.front() : shape.table + "s";
  std::replace(subject.begin(), subject.end(), ' ', '_');
  return "Monthly_" + fn + "_" + subject;
}

std::vector<StoragePolicy> derive_storage_policies(
    const std::map<QueryShape, std::uint64_t>& patterns, std::uint64_t threshold) {
  std::map<std::string, StoragePolicy> by_base;
  for (const auto& [shape, freq] : patterns) {
    if (freq < threshold || shape.columns.empty()) continue;
    auto& p = by_base[shape.table];
    p.base_table = shape.table;
    p.origin = Origin::learned;
    p.derived_tables.push_back(
        DerivedTableSpec{derived_table_name(shape), shape.aggregate, shape.columns});
    IndexSpec idx{shape.table, std::string(kDateColumn)};
    if (std::find(p.index_specs.begin(), p.index_specs.end(), idx) == p.index_specs.end()) {
      p.index_specs.push_back(idx);
    }
  }
  std::vector<StoragePolicy> out;
  for (auto& [_, p] : by_base) out.push_back(std::move(p));
  return out;
}

// ---- policy file -----------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_fields(std::string_view body, int line_no) {
  std::map<std::string, std::string> out;
  for (const auto& part : split(body, ';')) {
    if (trim(part).empty()) continue;
    auto eq = part.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::invalid_argument, "policy line " + std::to_string(line_no) +
                                              ": expected key=value, got '" + trim(part) + "'");
    }
    out[trim(part.substr(0, eq))] = trim(part.substr(eq + 1));
  }
  return out;
}

std::string require(const std::map<std::string, std::string>& f, const std::string& key,
                    int line_no) {
  auto it = f.find(key);
  if (it == f.end() || it->second.empty()) {
    throw Error(Errc::invalid_argument,
                "policy line " + std::to_string(line_no) + ": missing '" + key + "'");
  }
  return it->second;
}

std::vector<std::string> list_of(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& s : split(text, ',')) {
    auto t = trim(s);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace

PolicyFile PolicyFile::parse(std::string_view text) {
  PolicyFile file;
  std::map<std::string, std::size_t> storage_index;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw Error(Errc::invalid_argument,
                  "policy line " + std::to_string(line_no) + ": expected '<kind>: ...'");
    }
    std::string kind = trim(line.substr(0, colon));
    auto f = parse_fields(line.substr(colon + 1), line_no);
    if (kind == "storage") {
      std::string base = require(f, "base", line_no);
      auto agg = parse_aggregate(require(f, "aggregate", line_no));
      if (!agg) {
        throw Error(Errc::invalid_argument,
                    "policy line " + std::to_string(line_no) + ": unknown aggregate");
      }
      auto shape = make_shape(*agg, base, list_of(require(f, "columns", line_no)));
      DerivedTableSpec spec{f.contains("name") ? f["name"] : derived_table_name(shape), *agg,
                            list_of(f["columns"])};
      auto [it, fresh] = storage_index.try_emplace(base, file.storage.size());
      if (fresh) file.storage.push_back(StoragePolicy{base, {}, {}, Origin::user_preference});
      file.storage[it->second].derived_tables.push_back(std::move(spec));
    } else if (kind == "index") {
      IndexSpec idx{require(f, "table", line_no), require(f, "column", line_no)};
      auto [it, fresh] = storage_index.try_emplace(idx.table, file.storage.size());
      if (fresh) file.storage.push_back(StoragePolicy{idx.table, {}, {}, Origin::user_preference});
      file.storage[it->second].index_specs.push_back(std::move(idx));
    } else if (kind == "enrichment") {
      EnrichmentPolicy p;
      std::string timing = require(f, "timing", line_no);
      if (timing == "ingest_time") {
        p.timing = Timing::ingest_time;
        p.rule = Rule::aggregate_fill;
      } else if (timing == "process_time") {
        p.timing = Timing::process_time;
        p.rule = Rule::same_day_extrapolation;
      } else {
        throw Error(Errc::invalid_argument,
                    "policy line " + std::to_string(line_no) + ": unknown timing '" + timing + "'");
      }
      p.source_table = require(f, "source", line_no);
      p.target_table = require(f, "target", line_no);
      file.enrichment.push_back(std::move(p));
    } else if (kind == "sharing") {
      SharingPolicy p;
      p.condition_label = to_lower(require(f, "condition", line_no));
      if (f.contains("version")) {
        auto v = parse_integer(f["version"]);
        if (!v || *v < 1) {
          throw Error(Errc::invalid_argument,
                      "policy line " + std::to_string(line_no) + ": bad version");
        }
        p.version = static_cast<int>(*v);
      }
      for (const auto& item : list_of(f["include"])) {
        auto sep = item.find(':');
        std::string k = sep == std::string::npos ? "" : trim(item.substr(0, sep));
        std::string name = sep == std::string::npos ? "" : trim(item.substr(sep + 1));
        ShareItem si;
        if (k == "table") si.kind = ItemKind::table;
        else if (k == "object") si.kind = ItemKind::object_class;
        else if (k == "keyword") si.kind = ItemKind::keyword;
        else {
          throw Error(Errc::invalid_argument, "policy line " + std::to_string(line_no) +
                                                  ": include item '" + item +
                                                  "' must be table:, object: or keyword:");
        }
        if (name.empty()) {
          throw Error(Errc::invalid_argument,
                      "policy line " + std::to_string(line_no) + ": empty include name");
        }
        si.name = name;
        p.included.push_back(std::move(si));
      }
      file.sharing.push_back(std::move(p));
    } else {
      throw Error(Errc::invalid_argument, "policy line " + std::to_string(line_no) +
                                              ": unknown policy kind '" + kind + "'");
    }
  }
  return file;
}

std::string serialize_sharing(const SharingPolicy& p) {
  std::ostringstream out;
  out << "sharing: condition=" << p.condition_label << "; version=" << p.version << "; include=";
  for (std::size_t i = 0; i < p.included.size(); ++i) {
    out << (i ? ", " : "") << p.included[i].category();
  }
  return out.str();
}

// ---- PolicyEngine ----------------------------------------------------------

void PolicyEngine::set_threshold(std::uint64_t k) {
  if (k < 1) throw Error(Errc::invalid_argument, "threshold must be at least 1");
  threshold_ = k;
}

std::uint64_t PolicyEngine::record_query(const QueryShape& shape) { return ++patterns_[shape]; }

std::uint64_t PolicyEngine::frequency(const QueryShape& shape) const {
  auto it = patterns_.find(shape);
  return it == patterns_.end() ? 0 : it->second;
}

void PolicyEngine::restore_pattern(const QueryShape& shape, std::uint64_t frequency) {
  patterns_[shape] = frequency;
}

std::vector<StoragePolicy> PolicyEngine::learned_policies() const {
  return derive_storage_policies(patterns_, threshold_);
}

std::vector<StoragePolicy> PolicyEngine::storage_policies() const {
  std::vector<StoragePolicy> out = user_storage_;
  std::set<std::string> names;
  for (const auto& p : out) {
    for (const auto& d : p.derived_tables) names.insert(d.name);
  }
  for (auto p : learned_policies()) {
    std::erase_if(p.derived_tables,
                  [&](const DerivedTableSpec& d) { return !names.insert(d.name).second; });
    if (!p.derived_tables.empty()) out.push_back(std::move(p));
  }
  return out;
}

void PolicyEngine::add_storage_policy(StoragePolicy p) {
  for (auto& existing : user_storage_) {
    if (existing.base_table != p.base_table) continue;
    for (auto& d : p.derived_tables) {
      bool dup = std::any_of(existing.derived_tables.begin(), existing.derived_tables.end(),
                             [&](const DerivedTableSpec& e) { return e.name == d.name; });
      if (!dup) existing.derived_tables.push_back(std::move(d));
    }
    for (auto& i : p.index_specs) {
      if (std::find(existing.index_specs.begin(), existing.index_specs.end(), i) ==
          existing.index_specs.end()) {
        existing.index_specs.push_back(std::move(i));
      }
    }
    return;
  }
  p.origin = Origin::user_preference;
  user_storage_.push_back(std::move(p));
}

std::vector<EnrichmentPolicy> PolicyEngine::enrichment_policies() const {
  std::vector<EnrichmentPolicy> out = enrichment_;
  for (const auto& sp : storage_policies()) {
    for (const auto& d : sp.derived_tables) {
      EnrichmentPolicy e{Timing::ingest_time, sp.base_table, d.name, Rule::aggregate_fill};
      if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(std::move(e));
    }
  }
  return out;
}

void PolicyEngine::add_enrichment_policy(EnrichmentPolicy p) {
  if (std::find(enrichment_.begin(), enrichment_.end(), p) == enrichment_.end()) {
    enrichment_.push_back(std::move(p));
  }
}

const SharingPolicy& PolicyEngine::add_sharing_policy(SharingPolicy p) {
  p.condition_label = to_lower(trim(p.condition_label));
  const SharingPolicy* latest = nullptr;
  for (const auto& s : sharing_) {
    if (s.condition_label == p.condition_label && (!latest || s.version >= latest->version)) {
      latest = &s;
    }
  }
  if (latest != nullptr) {
    if (latest->included == p.included && (p.version == 0 || p.version <= latest->version)) {
      return *latest;
    }
    p.version = std::max(p.version, latest->version + 1);
  } else if (p.version < 1) {
    p.version = 1;
  }
  sharing_.push_back(std::move(p));
  return sharing_.back();
}

SharingLookup PolicyEngine::lookup_sharing(std::string_view condition_label) const {
  std::string label = to_lower(trim(condition_label));
  const SharingPolicy* latest = nullptr;
  for (const auto& s : sharing_) {
    if (s.condition_label == label && (!latest || s.version >= latest->version)) latest = &s;
  }
  if (latest == nullptr || latest->empty()) {
    return SharingLookup{SharingPolicy{label, {}, latest ? latest->version : 0}, true};
  }
  return SharingLookup{*latest, false};
}

void PolicyEngine::apply(const PolicyFile& file) {
  for (const auto& s : file.storage) add_storage_policy(s);
  for (const auto& e : file.enrichment) add_enrichment_policy(e);
  for (const auto& s : file.sharing) add_sharing_policy(s);
}

void PolicyEngine::note_table_use(const std::string& table, Timestamp when) {
  auto& t = last_use_[table];
  t = std::max(t, when);
}

std::vector<std::string> PolicyEngine::dormant_tables(const std::vector<std::string>& derived_tables,
                                                      Timestamp now,
                                                      std::chrono::seconds dormancy) const {
  std::vector<std::string> out;
  for (const auto& t : derived_tables) {
    auto it = last_use_.find(t);
    if (it == last_use_.end() || now - it->second >= dormancy) out.push_back(t);
  }
  return out;
}

}  // namespace healthvault::policy
