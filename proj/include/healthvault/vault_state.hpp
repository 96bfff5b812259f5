#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "healthvault/crypto_layer.hpp"
#include "healthvault/enricher.hpp"
#include "healthvault/policy_engine.hpp"
#include "healthvault/schema_manager.hpp"
#include "json.hpp"

namespace healthvault {

using store::Handle;

// Handles above this bit are placeholders for rows of an uncommitted batch:
// bit 63 | op index << 24 | row index.
inline constexpr Handle kPlaceholderBit = Handle{1} << 63;
inline Handle placeholder(std::size_t op, std::size_t row) {
  return kPlaceholderBit | (static_cast<Handle>(op) << 24) | static_cast<Handle>(row);
}
inline bool is_placeholder(Handle h) { return (h & kPlaceholderBit) != 0; }

struct CellRef {
  std::string table;
  Handle handle = 0;
  std::string column;

  auto operator<=>(const CellRef&) const = default;
};

enum class ProposalStatus { pending, accepted, rejected };
std::string_view proposal_status_name(ProposalStatus s);

struct PendingConfirmation {
  std::string id;
  CellRef target;
  Value value;
  std::string source_table;
  Handle source_handle = 0;
  ProposalStatus status = ProposalStatus::pending;
};

struct StoredRow {
  std::string table;
  Handle handle = 0;

  auto operator<=>(const StoredRow&) const = default;
};

struct DocumentRecord {
  std::string doc_id;
  std::string source_label;
  std::vector<StoredRow> rows;  // base rows only
  std::vector<Handle> objects;
};

inline constexpr std::string_view kObjectsTable = "__objects";
inline constexpr std::string_view kObjectClassColumn = "ObjectClass";
inline constexpr std::string_view kObjectPayloadColumn = "payload";

// Everything the trusted side knows. All secrets live here and only here.
struct VaultState {
  crypto::KeyRing keys;
  schema::SchemaRegistry registry;
  schema::SynonymDictionary synonyms;
  policy::PolicyEngine policies;
  enrich::IndexSet indexes;
  std::map<std::string, DocumentRecord> documents;
  std::set<std::string> object_classes;
  std::vector<PendingConfirmation> proposals;
  std::set<CellRef> blocked;  // rejected cells; never extrapolated again
  std::uint64_t next_proposal = 1;
  std::uint64_t next_report = 1;

  PendingConfirmation* find_proposal(const std::string& id);
  void remap(const std::function<Handle(Handle)>& fn);
};

nlohmann::json state_to_json(const VaultState& s);
// Fills `s` from its persisted form. Catalog and keyword dictionary are
// configuration and are not part of the state.
void state_from_json(const nlohmann::json& j, VaultState& s);

nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

// Write to a temporary sibling, fsync, rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& data);

}  // namespace healthvault
