#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/ingest_parser.hpp"
#include "healthvault/policy_engine.hpp"
#include "healthvault/value.hpp"
#include "healthvault/wire.hpp"

namespace healthvault::schema {

inline constexpr std::string_view kDateColumn = "Date";
inline constexpr std::string_view kTimeColumn = "Time";
// Per-row opaque cell recording non-source provenance of the row's cells.
inline constexpr std::string_view kProvenanceColumn = "__provenance";

struct ColumnSchema {
  std::string name;
  ValueKind kind = ValueKind::text;
  Scheme scheme = Scheme::opaque;
  bool hidden = false;

  bool operator==(const ColumnSchema&) const = default;
};

struct TableSchema {
  std::string name;
  std::vector<ColumnSchema> columns;
  bool is_derived = false;
  bool provenance_enabled = true;
  bool fallback = false;
  // Derived tables only.
  std::string base_table;
  std::optional<policy::Aggregate> aggregate;

  const ColumnSchema* column(std::string_view name) const;
  // Sorted keyword set used for table matching; excludes Time and hidden cells.
  std::vector<std::string> signature() const;
  std::vector<const ColumnSchema*> visible_columns() const;

  bool operator==(const TableSchema&) const = default;
};

struct SchemaTag {
  std::string table_name;
  std::vector<Binding> bindings;

  const Binding* find(std::string_view attribute) const {
    return find_binding(bindings, attribute);
  }
  bool operator==(const SchemaTag&) const = default;
};

// "surface=canonical" per line. Canonical forms map to themselves.
class SynonymDictionary {
 public:
  static SynonymDictionary parse(std::string_view text);
  static SynonymDictionary load(const std::filesystem::path& path);

  void add(std::string_view surface, std::string_view canonical);
  std::string canonical(std::string_view keyword) const;
  // (surface spelling, canonical) pairs in insertion order.
  const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

 private:
  std::map<std::string, std::string> by_key_;
  std::vector<std::pair<std::string, std::string>> pairs_;
};

ingest::MetadataTagSet resolve_entities(const ingest::MetadataTagSet& tags,
                                        const SynonymDictionary& dict);

// Named-table registry. One table per line:
//   <name>: <column>, <column> ... [| fallback]
struct TableCatalogEntry {
  std::string name;
  std::vector<std::string> columns;
  bool fallback = false;
};

struct TableCatalog {
  std::vector<TableCatalogEntry> entries;

  static TableCatalog parse(std::string_view text);
  static TableCatalog load(const std::filesystem::path& path);
  const TableCatalogEntry* find(std::string_view name) const;
};

// Equality-flagged keywords are deterministic, range-flagged (and unknown
// ordered) keywords order-preserving, everything else opaque.
Scheme assign_scheme(ValueKind kind, const ingest::KeywordEntry* entry);

// Integer widens to decimal and a text column accepts any value rendered as
// text; other mismatches are rejected.
std::optional<Value> coerce(const Value& v, ValueKind column_kind);

// A slice of one tag set bound to a single base table.
struct Placement {
  std::string table;
  bool create = false;  // table does not exist yet
  std::vector<ingest::MetadataTag> tags;
};

class SchemaRegistry {
 public:
  SchemaRegistry() = default;
  SchemaRegistry(TableCatalog catalog, ingest::KeywordDictionary dict)
      : catalog_(std::move(catalog)), dict_(std::move(dict)) {}

  void set_catalog(TableCatalog catalog) { catalog_ = std::move(catalog); }
  void set_dictionary(ingest::KeywordDictionary dict) { dict_ = std::move(dict); }
  const ingest::KeywordDictionary& dictionary() const { return dict_; }

  const TableSchema* find(std::string_view name) const;
  const std::vector<TableSchema>& tables() const { return tables_; }
  std::vector<const TableSchema*> derived_of(std::string_view base) const;
  // Restores a persisted schema verbatim.
  void restore(TableSchema t);

  // Routes a resolved tag set to base tables (Description is split off to the
  // fallback table when other keywords are present). Creates nothing.
  std::vector<Placement> place(const ingest::MetadataTagSet& tags) const;

  // Creates the base tables `tags` needs plus every derived table a storage
  // policy demands for them. Returns only the tables created by this call.
  std::vector<TableSchema> ensure_tables(const ingest::MetadataTagSet& tags,
                                         const std::vector<policy::StoragePolicy>& policies);
  // Creates derived tables for policies whose base table exists.
  std::vector<TableSchema> ensure_derived(const std::vector<policy::StoragePolicy>& policies);

  std::vector<SchemaTag> make_schema_tags(const ingest::MetadataTagSet& tags) const;

 private:
  TableSchema build_base(const std::string& name, const std::vector<std::string>& columns,
                         const std::vector<ingest::MetadataTag>& sample, bool fallback) const;
  TableSchema build_derived(const TableSchema& base, const policy::DerivedTableSpec& spec) const;
  void add_table(TableSchema t);
  std::string auto_name(const std::vector<std::string>& signature) const;
  Placement place_one(std::vector<ingest::MetadataTag> tags) const;

  TableCatalog catalog_;
  ingest::KeywordDictionary dict_;
  std::vector<TableSchema> tables_;
};

}  // namespace healthvault::schema
