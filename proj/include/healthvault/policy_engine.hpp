#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/value.hpp"

namespace healthvault::policy {

inline constexpr std::string_view kDateColumn = "Date";

enum class Aggregate { monthly_avg, monthly_max, monthly_min };

std::string_view aggregate_name(Aggregate a);
std::optional<Aggregate> parse_aggregate(std::string_view name);

struct DerivedTableSpec {
  std::string name;
  Aggregate aggregate = Aggregate::monthly_avg;
  std::vector<std::string> columns;

  bool operator==(const DerivedTableSpec&) const = default;
};

struct IndexSpec {
  std::string table;
  std::string column;

  auto operator<=>(const IndexSpec&) const = default;
};

enum class Origin { learned, user_preference };

struct StoragePolicy {
  std::string base_table;
  std::vector<DerivedTableSpec> derived_tables;
  std::vector<IndexSpec> index_specs;
  Origin origin = Origin::learned;

  bool operator==(const StoragePolicy&) const = default;
};

enum class Timing { ingest_time, process_time };
enum class Rule { aggregate_fill, same_day_extrapolation };

struct EnrichmentPolicy {
  Timing timing = Timing::ingest_time;
  std::string source_table;
  std::string target_table;
  Rule rule = Rule::aggregate_fill;

  bool operator==(const EnrichmentPolicy&) const = default;
};

enum class ItemKind { table, object_class, keyword };

std::string_view item_kind_name(ItemKind k);

struct ShareItem {
  ItemKind kind = ItemKind::table;
  std::string name;

  std::string category() const;  // "table:Medications", "object:MRI", ...
  bool operator==(const ShareItem&) const = default;
};

struct SharingPolicy {
  std::string condition_label;
  std::vector<ShareItem> included;
  int version = 0;

  bool empty() const { return included.empty(); }
  bool allows(const std::string& category) const;
  bool operator==(const SharingPolicy&) const = default;
};

struct SharingLookup {
  SharingPolicy policy;
  bool needs_user_input = false;
};

// Normalized aggregate query shape; granularity is always the calendar month.
struct QueryShape {
  Aggregate aggregate = Aggregate::monthly_avg;
  std::string table;
  std::vector<std::string> columns;  // kept sorted

  std::string key() const;
  auto operator<=>(const QueryShape&) const = default;
};

QueryShape make_shape(Aggregate a, std::string table, std::vector<std::string> columns);

// Monthly_Avg_Vitals, Monthly_High_Cholesterol, Monthly_Low_Weight, ...
std::string derived_table_name(const QueryShape& shape);

// Groups every shape at or above `threshold` into one policy per base table.
std::vector<StoragePolicy> derive_storage_policies(
    const std::map<QueryShape, std::uint64_t>& patterns, std::uint64_t threshold);

// Policy file grammar, one declaration per line ('#' comments):
//   storage: base=<table>; aggregate=<monthly_avg|monthly_max|monthly_min>;
//            columns=<col>, <col>; name=<table>
//   index: table=<table>; column=<col>
//   enrichment: timing=<ingest_time|process_time>; source=<table>; target=<table>
//   sharing: condition=<label>; version=<n>; include=table:<t>, object:<class>, keyword:<kw>
struct PolicyFile {
  std::vector<StoragePolicy> storage;
  std::vector<EnrichmentPolicy> enrichment;
  std::vector<SharingPolicy> sharing;

  static PolicyFile parse(std::string_view text);
};

std::string serialize_sharing(const SharingPolicy& p);

class PolicyEngine {
 public:
  explicit PolicyEngine(std::uint64_t threshold = 3) : threshold_(threshold) {}

  std::uint64_t threshold() const { return threshold_; }
  void set_threshold(std::uint64_t k);

  std::uint64_t record_query(const QueryShape& shape);
  std::uint64_t frequency(const QueryShape& shape) const;
  const std::map<QueryShape, std::uint64_t>& patterns() const { return patterns_; }

  // Learned policies at the current threshold plus user preferences.
  std::vector<StoragePolicy> storage_policies() const;
  std::vector<StoragePolicy> learned_policies() const;
  void add_storage_policy(StoragePolicy p);
  const std::vector<StoragePolicy>& user_storage_policies() const { return user_storage_; }

  // Configured policies plus one ingest_time policy per derived table.
  std::vector<EnrichmentPolicy> enrichment_policies() const;
  void add_enrichment_policy(EnrichmentPolicy p);
  const std::vector<EnrichmentPolicy>& configured_enrichment() const { return enrichment_; }

  // Append-only; a policy with an unchanged body is ignored, otherwise it is
  // appended with a version above every earlier version for its label.
  const SharingPolicy& add_sharing_policy(SharingPolicy p);
  SharingLookup lookup_sharing(std::string_view condition_label) const;
  const std::vector<SharingPolicy>& sharing_history() const { return sharing_; }

  void apply(const PolicyFile& file);

  // Dormancy advisory: flags tables whose last use is older than `dormancy`.
  // Nothing is ever dropped.
  void note_table_use(const std::string& table, Timestamp when);
  std::vector<std::string> dormant_tables(const std::vector<std::string>& derived_tables,
                                          Timestamp now,
                                          std::chrono::seconds dormancy) const;
  const std::map<std::string, Timestamp>& table_use() const { return last_use_; }

  // Restores counters without touching history; used when loading state.
  void restore_pattern(const QueryShape& shape, std::uint64_t frequency);
  void restore_sharing(SharingPolicy p) { sharing_.push_back(std::move(p)); }
  void restore_use(const std::string& table, Timestamp when) { last_use_[table] = when; }

 private:
  std::uint64_t threshold_;
  std::map<QueryShape, std::uint64_t> patterns_;
  std::vector<StoragePolicy> user_storage_;
  std::vector<EnrichmentPolicy> enrichment_;
  std::vector<SharingPolicy> sharing_;
  std::map<std::string, Timestamp> last_use_;
};

}  // namespace healthvault::policy
