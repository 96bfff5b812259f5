#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "healthvault/reference_engine.hpp"
#include "healthvault/vault.hpp"

namespace healthvault::reference {

// Randomized corpus over the configured tables: Vital, Visit_Details,
// Medications, Physical_Therapy_Plans, Diagnoses, Notes and MRI/X-ray
// objects, about `rows` table rows in total, split into small documents.
std::vector<ingest::RawDocument> random_corpus(std::uint64_t seed, std::size_t rows);

// Point, range, aggregate and share queries in the template grammar, drawn
// from the same value pools as random_corpus.
std::vector<std::string> random_queries(std::uint64_t seed, std::size_t n);

struct Mismatch {
  std::string query;
  std::vector<std::string> vault;
  std::vector<std::string> reference;
};

struct DiffReport {
  std::size_t queries = 0;
  std::size_t rows_compared = 0;
  std::vector<Mismatch> mismatches;
};

// Runs every query through both engines. Errors compare by code.
DiffReport diff(Vault& vault, const ReferenceEngine& ref, const std::vector<std::string>& queries);

struct LeakHit {
  std::size_t entry = 0;  // index into the log
  std::string sentinel;
};

// Sentinels found in the observation log, raw or hex-encoded.
std::vector<LeakHit> audit_leakage(const std::vector<store::LogEntry>& log,
                                   const std::vector<std::string>& sentinels);

}  // namespace healthvault::reference
