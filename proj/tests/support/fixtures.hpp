#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "healthvault/errors.hpp"

#include "healthvault/ingest_parser.hpp"
#include "healthvault/schema_manager.hpp"

namespace hvtest {

inline std::filesystem::path config_dir() {
  return std::filesystem::path(HV_SOURCE_DIR) / "config";
}

// Reserved keywords plus synonym spellings, as the vault assembles them.
inline healthvault::ingest::KeywordDictionary dictionary() {
  auto dict = healthvault::ingest::KeywordDictionary::load(config_dir() / "keywords.conf");
  auto syn = healthvault::schema::SynonymDictionary::load(config_dir() / "synonyms.conf");
  for (const auto& [surface, canonical] : syn.pairs()) dict.add_surface(surface, canonical);
  return dict;
}

inline healthvault::schema::SynonymDictionary synonyms() {
  return healthvault::schema::SynonymDictionary::load(config_dir() / "synonyms.conf");
}

inline healthvault::schema::TableCatalog catalog() {
  return healthvault::schema::TableCatalog::load(config_dir() / "tables.conf");
}

inline healthvault::ingest::RawDocument doc(std::string id, healthvault::ingest::DocumentFormat f,
                                            std::string content) {
  healthvault::ingest::RawDocument d;
  d.doc_id = std::move(id);
  d.declared_format = f;
  d.content = std::move(content);
  d.source_label = "test";
  d.upload_time = healthvault::Timestamp{std::chrono::seconds{1700000000}};
  return d;
}

// Runs `fn` and returns the error code it throws; fails the test otherwise.
inline healthvault::Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const healthvault::Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return healthvault::Errc::invalid_argument;
}

// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("hvtest-" + std::to_string(::getpid()) + "-" + std::to_string(++counter));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace hvtest
