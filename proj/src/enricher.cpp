#include "healthvault/enricher.hpp"

#include <algorithm>

#include "healthvault/errors.hpp"

namespace healthvault::enrich {

using schema::kDateColumn;
using schema::kTimeColumn;

// ---- indexes ---------------------------------------------------------------

void LocalIndex::erase(const Value& v, Handle h) {
  auto it = entries_.find(v);
  if (it == entries_.end()) return;
  it->second.erase(h);
  if (it->second.empty()) entries_.erase(it);
}

std::set<Handle> LocalIndex::lookup(const Value& v) const {
  if (v.is_null()) return {};
  auto it = entries_.find(v);
  return it == entries_.end() ? std::set<Handle>{} : it->second;
}

std::set<Handle> LocalIndex::range(const std::optional<Value>& lo,
                                   const std::optional<Value>& hi) const {
  std::set<Handle> out;
  auto it = lo ? entries_.lower_bound(*lo) : entries_.begin();
  for (; it != entries_.end(); ++it) {
    if (hi && *hi < it->first) break;
    if (it->first.is_null()) continue;
    out.insert(it->second.begin(), it->second.end());
  }
  return out;
}

std::size_t LocalIndex::handle_count() const {
  std::size_t n = 0;
  for (const auto& [v, hs] : entries_) n += hs.size();
  return n;
}

bool IndexSet::ensure(const std::string& table, const std::string& column) {
  auto key = std::make_pair(table, column);
  if (indexes_.contains(key)) return false;
  indexes_.emplace(key, LocalIndex(table, column));
  return true;
}

const LocalIndex* IndexSet::find(const std::string& table, const std::string& column) const {
  auto it = indexes_.find({table, column});
  return it == indexes_.end() ? nullptr : &it->second;
}

LocalIndex* IndexSet::find(const std::string& table, const std::string& column) {
  auto it = indexes_.find({table, column});
  return it == indexes_.end() ? nullptr : &it->second;
}

void IndexSet::add_row(const std::string& table, Handle h, const std::vector<Binding>& cells) {
  for (auto& [key, index] : indexes_) {
    if (key.first != table) continue;
    const Binding* b = find_binding(cells, key.second);
    index.insert(b ? b->value : Value(), h);
  }
}

void IndexSet::remove_row(const std::string& table, Handle h, const std::vector<Binding>& cells) {
  for (auto& [key, index] : indexes_) {
    if (key.first != table) continue;
    const Binding* b = find_binding(cells, key.second);
    index.erase(b ? b->value : Value(), h);
  }
}

void IndexSet::remap(const std::function<Handle(Handle)>& fn) {
  for (auto& [key, index] : indexes_) {
    for (auto& [v, hs] : index.mutable_entries()) {
      std::set<Handle> next;
      for (Handle h : hs) next.insert(fn(h));
      hs = std::move(next);
    }
  }
}

void IndexSet::restore(LocalIndex index) {
  auto key = std::make_pair(index.table(), index.column());
  indexes_[key] = std::move(index);
}

void maintain_indexes(IndexSet& indexes, const std::vector<IndexedRow>& rows,
                      const std::vector<policy::IndexSpec>& specs) {
  for (const auto& s : specs) indexes.ensure(s.table, s.column);
  for (const auto& r : rows) indexes.add_row(r.table, r.handle, r.cells);
}

// ---- aggregates ------------------------------------------------------------

namespace {

__int128 floor_div(__int128 a, __int128 b) {
  __int128 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

Value round_half_up_mean(const std::vector<Value>& values) {
  __int128 sum = 0;
  __int128 n = 0;
  bool decimal = false;
  for (const auto& v : values) {
    if (v.kind() == ValueKind::decimal) decimal = true;
  }
  for (const auto& v : values) {
    if (v.is_null()) continue;
    if (v.kind() == ValueKind::integer) {
      sum += decimal ? __int128(v.as_integer()) * Decimal::kScale : v.as_integer();
    } else if (v.kind() == ValueKind::decimal) {
      sum += v.as_decimal().scaled;
    } else {
      throw Error(Errc::invalid_argument, "cannot average " + std::string(kind_name(v.kind())));
    }
    ++n;
  }
  if (n == 0) return Value();
  auto mean = static_cast<std::int64_t>(floor_div(2 * sum + n, 2 * n));
  return decimal ? Value::decimal(Decimal{mean}) : Value::integer(mean);
}

Value aggregate(policy::Aggregate fn, const std::vector<Value>& values) {
  if (fn == policy::Aggregate::monthly_avg) return round_half_up_mean(values);
  const Value* best = nullptr;
  for (const auto& v : values) {
    if (v.is_null()) continue;
    if (best == nullptr || (fn == policy::Aggregate::monthly_max ? *best < v : v < *best)) {
      best = &v;
    }
  }
  return best ? *best : Value();
}

schema::SchemaTag compute_derived_row(const schema::TableSchema& derived, Month month,
                                      const std::vector<std::vector<Binding>>& base_rows) {
  if (!derived.is_derived || !derived.aggregate) {
    throw Error(Errc::invalid_argument, derived.name + " is not a derived table");
  }
  schema::SchemaTag tag{derived.name, {}};
  tag.bindings.push_back(
      Binding{std::string(kDateColumn), Value::month(month), Provenance::source});
  for (const auto& col : derived.columns) {
    if (col.name == kDateColumn) continue;
    std::vector<Value> values;
    for (const auto& row : base_rows) {
      const Binding* b = find_binding(row, col.name);
      if (b) values.push_back(b->value);
    }
    Value v = aggregate(*derived.aggregate, values);
    if (v.kind() == ValueKind::decimal && col.kind == ValueKind::integer) {
      throw Error(Errc::schema_conflict, "integer column aggregated to a decimal");
    }
    tag.bindings.push_back(Binding{col.name, v, Provenance::computed_aggregate});
  }
  return tag;
}

std::vector<schema::SchemaTag> apply_ingest_enrichment(
    const std::vector<schema::SchemaTag>& tags, const schema::SchemaRegistry& registry,
    const std::vector<policy::EnrichmentPolicy>& policies, const MonthRowsFetcher& fetch) {
  std::vector<schema::SchemaTag> out;
  std::set<std::string> ingest_targets;
  for (const auto& p : policies) {
    if (p.timing == policy::Timing::ingest_time && p.rule == policy::Rule::aggregate_fill) {
      ingest_targets.insert(p.target_table);
    }
  }
  // Incoming base rows per (base table, month).
  std::map<std::pair<std::string, Month>, std::vector<std::vector<Binding>>> incoming;
  std::vector<std::pair<std::string, Month>> order;
  std::set<std::pair<std::string, Month>> wanted;  // (derived table, month)
  for (const auto& tag : tags) {
    const auto* table = registry.find(tag.table_name);
    if (table == nullptr) throw Error(Errc::unknown_table, "unknown table " + tag.table_name);
    if (!table->is_derived) {
      out.push_back(tag);
      const Binding* date = tag.find(kDateColumn);
      if (date == nullptr || date->value.kind() != ValueKind::date) continue;
      auto key = std::make_pair(table->name, Month::of(date->value.as_date()));
      if (!incoming.contains(key)) order.push_back(key);
      incoming[key].push_back(tag.bindings);
      continue;
    }
    if (!ingest_targets.contains(table->name)) continue;
    const Binding* date = tag.find(kDateColumn);
    if (date == nullptr || date->value.kind() != ValueKind::month) continue;
    wanted.insert({table->name, date->value.as_month()});
  }
  std::set<std::pair<std::string, Month>> emitted;
  for (const auto& key : order) {
    const auto& [base, month] = key;
    std::vector<const schema::TableSchema*> targets;
    for (const auto* d : registry.derived_of(base)) {
      if (wanted.contains({d->name, month}) && !emitted.contains({d->name, month})) {
        targets.push_back(d);
      }
    }
    if (targets.empty()) continue;
    auto rows = fetch(base, month);
    const auto& mine = incoming[key];
    rows.insert(rows.end(), mine.begin(), mine.end());
    for (const auto* d : targets) {
      out.push_back(compute_derived_row(*d, month, rows));
      emitted.insert({d->name, month});
    }
  }
  return out;
}

// ---- extrapolation ---------------------------------------------------------

namespace {

constexpr std::int64_t kDaySeconds = 86400;

std::optional<Date> date_of(const std::vector<Binding>& cells) {
  const Binding* b = find_binding(cells, kDateColumn);
  if (b == nullptr || b->value.kind() != ValueKind::date) return std::nullopt;
  return b->value.as_date();
}

std::optional<std::int64_t> time_of(const std::vector<Binding>& cells) {
  const Binding* b = find_binding(cells, kTimeColumn);
  if (b == nullptr || b->value.kind() != ValueKind::time) return std::nullopt;
  return b->value.as_time().seconds;
}

}  // namespace

std::vector<Extrapolation> extrapolate_at_query(
    std::vector<RowRef>& rows, const std::vector<RowRef>& source_rows,
    const std::vector<std::string>& columns,
    const std::function<bool(Handle, const std::string&)>& blocked) {
  std::map<Date, std::vector<const RowRef*>> by_day;
  for (const auto& s : source_rows) {
    if (auto d = date_of(s.cells)) by_day[*d].push_back(&s);
  }
  std::vector<Extrapolation> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    auto day = date_of(row.cells);
    if (!day) continue;
    auto it = by_day.find(*day);
    if (it == by_day.end()) continue;
    auto t = time_of(row.cells);
    for (const auto& col : columns) {
      auto cell = std::find_if(row.cells.begin(), row.cells.end(),
                               [&](const Binding& b) { return b.attribute == col; });
      if (cell == row.cells.end() || !cell->value.is_null()) continue;
      if (blocked && blocked(row.handle, col)) continue;
      const RowRef* best = nullptr;
      std::tuple<std::int64_t, std::int64_t, Handle> best_key{};
      for (const RowRef* s : it->second) {
        const Binding* sv = find_binding(s->cells, col);
        if (sv == nullptr || sv->value.is_null()) continue;
        auto st = time_of(s->cells);
        std::int64_t dist = (t && st) ? std::llabs(*t - *st) : kDaySeconds;
        std::tuple<std::int64_t, std::int64_t, Handle> key{dist, st.value_or(kDaySeconds),
                                                            s->handle};
        if (best == nullptr || key < best_key) {
          best = s;
          best_key = key;
        }
      }
      if (best == nullptr) continue;
      cell->value = find_binding(best->cells, col)->value;
      cell->provenance = Provenance::extrapolated;
      out.push_back(Extrapolation{i, col, cell->value, best->handle});
    }
  }
  return out;
}

}  // namespace healthvault::enrich
