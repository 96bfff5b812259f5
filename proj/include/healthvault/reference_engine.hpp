#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "healthvault/ingest_parser.hpp"
#include "healthvault/policy_engine.hpp"
#include "healthvault/query_engine.hpp"
#include "healthvault/schema_manager.hpp"

namespace healthvault::reference {

// A naive plaintext engine answering the same queries as the vault: rows live
// in memory in insertion order, every query is a full scan, aggregates are
// always computed from base rows. No crypto, no store, no derived tables.

struct Row {
  std::string category;
  std::string table;
  std::vector<Binding> cells;
  std::optional<std::string> content;
};

struct Result {
  std::vector<Row> rows;
  bool needs_user_input = false;
};

class ReferenceEngine {
 public:
  explicit ReferenceEngine(const std::filesystem::path& config_dir);

  // Ingests one document; throws the parser's Error on malformed input and
  // DuplicateDocument for a repeated id, leaving the engine unchanged.
  void ingest(const ingest::RawDocument& doc);
  Result execute(const query::Query& q) const;
  Result run(std::string_view text) const;

  const schema::SchemaRegistry& registry() const { return registry_; }
  std::size_t row_count(const std::string& table) const;

 private:
  struct StoredRow {
    std::size_t seq = 0;
    std::vector<Binding> cells;
  };
  struct StoredObject {
    std::string object_class;
    std::vector<Binding> tags;
    std::string content;
  };

  Result select(const query::Query& q) const;
  Result aggregate(const query::Query& q) const;
  Result share(const query::Query& q) const;
  std::vector<StoredRow> rows_of(const schema::TableSchema& t) const;
  std::vector<StoredRow> filtered(const schema::TableSchema& t, const std::vector<query::Filter>& filters) const;
  void fill_same_day(const schema::TableSchema& t, std::vector<StoredRow>& rows) const;

  ingest::KeywordDictionary keywords_;
  schema::SynonymDictionary synonyms_;
  schema::SchemaRegistry registry_;
  policy::PolicyEngine policies_;
  std::map<std::string, std::vector<StoredRow>> tables_;
  std::vector<StoredObject> objects_;
  std::set<std::string> documents_;
  std::size_t next_seq_ = 1;
};

// Order-insensitive comparable form of a result: one line per row with the
// category, table, non-NULL cells sorted by column, provenance and content.
std::vector<std::string> canonical(const Result& r);
std::vector<std::string> canonical(const query::ResultSet& r);

}  // namespace healthvault::reference
