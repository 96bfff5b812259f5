#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "healthvault/policy_engine.hpp"
#include "healthvault/schema_manager.hpp"
#include "healthvault/store/protocol.hpp"
#include "healthvault/value.hpp"

namespace healthvault::enrich {

using store::Handle;

// Plaintext value -> row handles for one (table, column). Lives only in the
// vault state.
class LocalIndex {
 public:
  LocalIndex() = default;
  LocalIndex(std::string table, std::string column)
      : table_(std::move(table)), column_(std::move(column)) {}

  const std::string& table() const { return table_; }
  const std::string& column() const { return column_; }

  void insert(const Value& v, Handle h) { entries_[v].insert(h); }
  void erase(const Value& v, Handle h);
  std::set<Handle> lookup(const Value& v) const;
  // Inclusive; either side may be open. NULL keys never match.
  std::set<Handle> range(const std::optional<Value>& lo, const std::optional<Value>& hi) const;
  std::size_t handle_count() const;

  const std::map<Value, std::set<Handle>>& entries() const { return entries_; }
  std::map<Value, std::set<Handle>>& mutable_entries() { return entries_; }

 private:
  std::string table_;
  std::string column_;
  std::map<Value, std::set<Handle>> entries_;
};

class IndexSet {
 public:
  // Returns true when the index did not exist yet.
  bool ensure(const std::string& table, const std::string& column);
  const LocalIndex* find(const std::string& table, const std::string& column) const;
  LocalIndex* find(const std::string& table, const std::string& column);

  void add_row(const std::string& table, Handle h, const std::vector<Binding>& cells);
  void remove_row(const std::string& table, Handle h, const std::vector<Binding>& cells);
  void remap(const std::function<Handle(Handle)>& fn);

  const std::map<std::pair<std::string, std::string>, LocalIndex>& all() const { return indexes_; }
  void restore(LocalIndex index);

 private:
  std::map<std::pair<std::string, std::string>, LocalIndex> indexes_;
};

struct IndexedRow {
  std::string table;
  Handle handle = 0;
  std::vector<Binding> cells;
};

// Makes sure every spec has an index and adds the given rows to all indexes
// of their tables.
void maintain_indexes(IndexSet& indexes, const std::vector<IndexedRow>& rows,
                      const std::vector<policy::IndexSpec>& specs);

// NULLs are ignored; an empty input yields NULL. Averages round half up to the
// column's unit (whole numbers for integers, 0.0001 for decimals).
Value aggregate(policy::Aggregate fn, const std::vector<Value>& values);
Value round_half_up_mean(const std::vector<Value>& values);

// Committed base rows of one month, as plaintext bindings.
using MonthRowsFetcher =
    std::function<std::vector<std::vector<Binding>>(const std::string& base_table, Month month)>;

// Builds the derived row of `derived` for `month` from the given base rows.
schema::SchemaTag compute_derived_row(const schema::TableSchema& derived, Month month,
                                      const std::vector<std::vector<Binding>>& base_rows);

// Base tags pass through unchanged. For every derived table with an
// ingest-time policy, the provisional tags are replaced by one tag per
// (table, month) carrying aggregates over committed plus incoming rows.
// Derived tags without such a policy are dropped; they are never stored.
std::vector<schema::SchemaTag> apply_ingest_enrichment(
    const std::vector<schema::SchemaTag>& tags, const schema::SchemaRegistry& registry,
    const std::vector<policy::EnrichmentPolicy>& policies, const MonthRowsFetcher& fetch);

struct RowRef {
  Handle handle = 0;
  std::vector<Binding> cells;
};

struct Extrapolation {
  std::size_t row = 0;  // index into the target rows
  std::string column;
  Value value;
  Handle source_handle = 0;
};

// Fills NULL cells of `columns` in `rows` from the same-day source row nearest
// in Time (missing times count as a full day apart; ties go to the earlier
// source row, then the lower handle). Filled cells are marked extrapolated.
// `blocked(handle, column)` vetoes individual cells. Non-NULL cells are never
// touched.
std::vector<Extrapolation> extrapolate_at_query(
    std::vector<RowRef>& rows, const std::vector<RowRef>& source_rows,
    const std::vector<std::string>& columns,
    const std::function<bool(Handle, const std::string&)>& blocked = {});

}  // namespace healthvault::enrich
