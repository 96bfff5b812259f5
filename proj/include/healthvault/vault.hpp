#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "healthvault/ingest_parser.hpp"
#include "healthvault/query_engine.hpp"
#include "healthvault/store/client.hpp"
#include "healthvault/vault_state.hpp"
#include "json.hpp"

namespace healthvault {

struct VaultConfig {
  std::filesystem::path data_dir;    // state, journal, reports
  std::filesystem::path config_dir;  // keywords, synonyms, tables, policies
  std::string store = "memory:";     // transport spec, see store::open_transport
  std::uint64_t learn_threshold = 3;
  int ope_code_bits = 64;
  bool auto_materialize = true;  // create learned derived tables right after the query
};

struct DocumentOutcome {
  std::string doc_id;
  bool ok = false;
  std::string error_code;
  std::string message;
  std::vector<std::string> tables;
  std::size_t rows_added = 0;
  std::size_t derived_rows_updated = 0;
  std::size_t objects_added = 0;
};

struct IngestReport {
  std::vector<DocumentOutcome> documents;
  std::vector<std::string> tables_created;

  std::size_t ingested() const;
  std::size_t failed() const;
};

struct QueryOutcome {
  query::ResultSet result;
  std::string report_id;
  std::vector<PendingConfirmation> proposals;  // created or refreshed by this query
  std::vector<std::string> materialized;       // derived tables created afterwards
};

// Thrown by fault hooks to emulate a process crash. Deliberately not an
// std::exception so that no recovery path swallows it.
struct SimulatedCrash {
  std::string stage;
};

// Pipeline stages reported to the fault hook, in order. "put.pending" fires
// once the pending state is on disk and before the store commit;
// "put.committed" fires after the commit and before local promotion.
inline constexpr std::string_view kPipelineStages[] = {
    "parse", "resolve", "ensure_tables", "schema_tags", "enrich", "encrypt", "put.pending", "put.committed"};

class Vault {
 public:
  explicit Vault(VaultConfig cfg);
  Vault(VaultConfig cfg, std::shared_ptr<store::Transport> transport);

  IngestReport upload(const std::vector<ingest::RawDocument>& docs);
  IngestReport upload_manifest(const std::filesystem::path& manifest);

  QueryOutcome query(const std::string& text);
  QueryOutcome share(const std::string& condition);
  // Appends a sharing policy version for `condition`.
  policy::SharingPolicy define_sharing(const std::string& condition,
                                       const std::vector<policy::ShareItem>& items);

  std::vector<PendingConfirmation> pending() const;
  PendingConfirmation confirm(const std::string& proposal_id, bool accept);

  nlohmann::json report(const std::string& report_id) const;
  std::string report_text(const std::string& report_id) const;

  // Materializes derived tables demanded by current storage policies.
  std::vector<std::string> learn();

  void set_fault_hook(std::function<void(std::string_view)> hook) { fault_ = std::move(hook); }

  // Not synchronized; for tests and tools while no request is in flight.
  const VaultState& state() const { return state_; }
  store::StoreClient& store() { return store_; }
  const ingest::KeywordDictionary& keywords() const { return state_.registry.dictionary(); }
  std::filesystem::path state_path() const { return cfg_.data_dir / "vault_state.json"; }
  std::filesystem::path pending_path() const { return cfg_.data_dir / "vault_state.pending.json"; }
  std::filesystem::path journal_path() const { return cfg_.data_dir / "journal.log"; }
  const VaultConfig& config() const { return cfg_; }

 private:
  class Batch;
  using DerivedRows = std::map<std::pair<std::string, Month>, schema::SchemaTag>;

  void load();
  void apply_config(VaultState& s) const;
  void recover_locked();
  void persist_locked();
  void fault(std::string_view stage) const;
  DocumentOutcome ingest_one(const ingest::RawDocument& doc, std::vector<std::string>& created);
  void materialize(VaultState& next, Batch& batch, const std::vector<schema::TableSchema>& made,
                   DerivedRows& derived);
  std::vector<std::string> learn_locked();
  void commit(VaultState& next, Batch& batch);
  QueryOutcome finish_query(const std::string& text, query::ResultSet result);
  void journal(const nlohmann::json& entry) const;

  VaultConfig cfg_;
  std::shared_ptr<store::Transport> transport_;
  store::StoreClient store_;
  VaultState state_;
  mutable std::shared_mutex mu_;
  std::function<void(std::string_view)> fault_;
};

// Result rendering shared by the CLI, the HTTP API and the report files.
nlohmann::json result_to_json(const query::ResultSet& r);
std::string result_to_text(const query::ResultSet& r);
nlohmann::json proposal_to_json(const PendingConfirmation& p);
nlohmann::json ingest_report_to_json(const IngestReport& r);

}  // namespace healthvault
