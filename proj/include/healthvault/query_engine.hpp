#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/ingest_parser.hpp"
#include "healthvault/policy_engine.hpp"
#include "healthvault/schema_manager.hpp"
#include "healthvault/store/client.hpp"
#include "healthvault/vault_state.hpp"

namespace healthvault::query {

enum class QueryKind { select, aggregate, share };
enum class Op { eq, lt, le, gt, ge, between };

std::string_view query_kind_name(QueryKind k);
std::string_view op_name(Op op);

// Literals stay textual until the planner knows the column type.
struct Filter {
  std::string column;
  Op op = Op::eq;
  std::string lo;
  std::string hi;  // between only

  bool operator==(const Filter&) const = default;
};

struct AggregateSpec {
  policy::Aggregate fn = policy::Aggregate::monthly_max;
  std::vector<std::string> columns;

  bool operator==(const AggregateSpec&) const = default;
};

inline constexpr std::string_view kAllTables = "*";

struct Query {
  QueryKind kind = QueryKind::select;
  // Table name, "*" (every base table holding the filter columns) or a
  // condition label when condition_scope is set.
  std::string scope;
  bool condition_scope = false;
  std::vector<Filter> filters;
  std::optional<AggregateSpec> aggregate;
  bool group_by_month = false;

  bool operator==(const Query&) const = default;
};

// Resolves user spellings of column names to canonical keywords.
struct Vocabulary {
  const ingest::KeywordDictionary* keywords = nullptr;
  const schema::SynonymDictionary* synonyms = nullptr;

  std::string canonical(std::string_view surface) const;
};

// Plain-language templates:
//   what was my <max|min|average> <col> [and <col>...] in <month>
//   <max|min|average> <col> [and <col>...] [from <date> to <date>]
//   monthly <max|min|average> <col> [and <col>...]   (also "... by month")
//   records from <doctor|facility> <name>
//   records (from|between) <date> (to|and) <date>
//   records (on|about|for|related to|on to) <condition>
//   share [records (for|on|about)] <condition>
//   show <table> [on <date> | in <month> | from <date> to <date>]
// Structured form:
//   select "<table>|*" [where "<col>" <op> <literal> [and ...]]
//   aggregate <max|min|avg>("<col>"[, "<col>"]) [from "<table>"] [where ...] [by month]
//   share '<condition>'
// ops: = < <= > >= between <lit> and <lit>
Query parse_query(std::string_view text, const Vocabulary& vocab);

// Template list used in UnrecognizedQuery messages.
std::string template_help();

enum class StepKind {
  index_lookup,
  store_point_scan,
  store_range_scan,
  store_full_scan,
  store_object_fetch,
  local_filter,
  enrich,
  aggregate,
  share_filter,
};
std::string_view step_name(StepKind k);

struct PlanStep {
  StepKind kind = StepKind::local_filter;
  std::string table;
  std::string column;
  std::string detail;
};

struct QueryPlan {
  std::vector<PlanStep> steps;
  std::vector<Ciphertext> encrypted_literals;

  bool has(StepKind k, std::string_view table = {}) const;
};

struct ResultRow {
  std::string item_id;   // row:<table>:<handle> | object:<handle> | aggregate
  std::string category;  // table:<t> | object:<class> | keyword:<k> | aggregate
  std::string table;
  Handle handle = 0;
  std::vector<Binding> cells;
  std::optional<std::string> content;  // objects only
};

struct ManifestItem {
  std::string item_id;
  std::string category;
};

struct CellExtrapolation {
  CellRef target;
  Value value;
  std::string source_table;
  Handle source_handle = 0;
};

struct ResultSet {
  Query query;
  std::vector<ResultRow> rows;
  QueryPlan plan;
  bool needs_user_input = false;
  std::string condition;
  int policy_version = 0;
  std::vector<ManifestItem> manifest;
  std::vector<CellExtrapolation> extrapolations;
  std::optional<policy::QueryShape> shape;
  std::vector<std::string> tables_used;
};

// Read-only over the vault state; never mutates the store.
class QueryEngine {
 public:
  QueryEngine(const VaultState& state, const ingest::KeywordDictionary& keywords,
              store::StoreClient& store)
      : state_(state), keywords_(keywords), store_(store) {}

  ResultSet execute(const Query& q) const;

  // Committed rows of `table` whose Date lies in [lo, hi], decrypted.
  std::vector<enrich::RowRef> rows_in_dates(const std::string& table, const Value& lo,
                                            const Value& hi, QueryPlan* plan = nullptr) const;
  std::vector<enrich::RowRef> all_rows(const std::string& table, QueryPlan* plan = nullptr) const;

 private:
  struct Bound {
    std::optional<Value> lo;
    std::optional<Value> hi;
  };

  ResultSet select(const Query& q) const;
  ResultSet aggregate(const Query& q) const;
  ResultSet share(const Query& q) const;

  std::vector<enrich::RowRef> fetch(const schema::TableSchema& t,
                                    const std::vector<std::pair<Filter, Value>>& typed,
                                    QueryPlan& plan) const;
  std::vector<enrich::RowRef> condition_rows(const schema::TableSchema& t, const std::string& label,
                                             QueryPlan& plan) const;
  void extrapolate(const schema::TableSchema& t, std::vector<enrich::RowRef>& rows,
                   ResultSet& out) const;
  std::vector<std::pair<Filter, Value>> type_filters(const schema::TableSchema& t,
                                                     const std::vector<Filter>& filters) const;
  std::vector<enrich::RowRef> decrypt(const schema::TableSchema& t,
                                      const std::vector<store::EncryptedRow>& rows) const;

  const VaultState& state_;
  const ingest::KeywordDictionary& keywords_;
  store::StoreClient& store_;
};

// Helpers shared with the plaintext reference engine.
std::optional<Value> type_literal(const std::string& text, ValueKind kind, bool casefold);
bool matches(const Value& cell, Op op, const Value& lo, const Value& hi);
std::optional<policy::Aggregate> aggregate_of(std::string_view word);
// The base table an aggregate over `columns` reads when no table is named:
// the one with the fewest columns holding all of them, ties by name.
const schema::TableSchema* table_for_columns(const schema::SchemaRegistry& registry,
                                             const std::vector<std::string>& columns);
// Columns eligible for same-day extrapolation from `source` into `target`.
std::vector<std::string> extrapolation_columns(const schema::TableSchema& target,
                                               const schema::TableSchema& source,
                                               const ingest::KeywordDictionary& keywords);

}  // namespace healthvault::query
