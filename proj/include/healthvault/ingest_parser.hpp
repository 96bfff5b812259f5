#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/value.hpp"

namespace healthvault::ingest {

enum class DocumentFormat { tabular, keyvalue_text, timeseries, opaque_binary };

std::string_view format_name(DocumentFormat f);
std::optional<DocumentFormat> parse_format(std::string_view name);

struct RawDocument {
  std::string doc_id;
  std::string content;
  DocumentFormat declared_format = DocumentFormat::keyvalue_text;
  std::string source_label;
  Timestamp upload_time{};
  // opaque_binary only: keyvalue_text companion standing in for extracted text.
  std::optional<std::string> sidecar;
  std::optional<std::string> object_class;
  // Attached to every tag set lacking a Condition tag.
  std::optional<std::string> condition;
};

struct MetadataTag {
  std::string keyword;
  Value value;
  std::optional<Timestamp> observed_at;

  bool operator==(const MetadataTag&) const = default;
};

struct MetadataTagSet {
  std::string doc_id;
  std::vector<MetadataTag> tags;

  const MetadataTag* find(std::string_view keyword) const;
  bool operator==(const MetadataTagSet&) const = default;
};

// Lowercased alphanumerics only, so "Heart Rate", "heart  rate" and
// "HEART-RATE" collapse to the same key.
std::string normalize_keyword(std::string_view surface);

struct KeywordEntry {
  std::string keyword;  // canonical spelling
  ValueKind kind = ValueKind::text;
  bool range_queryable = false;
  bool equality_queryable = false;
  bool vital = false;     // eligible for same-day extrapolation
  bool casefold = false;  // text values normalized to lowercase
};

// Reserved-keyword dictionary. Config grammar, one entry per line:
//   <keyword> | <type> [| flag, flag...]
// flags: range, equality, vital, casefold. '#' starts a comment.
class KeywordDictionary {
 public:
  static KeywordDictionary parse(std::string_view text);
  static KeywordDictionary load(const std::filesystem::path& path);

  void add(KeywordEntry entry);
  // Registers `surface` as a recognized spelling that keeps its own keyword
  // text but borrows the type and flags of `canonical`.
  void add_surface(std::string_view surface, std::string_view canonical);

  const KeywordEntry* lookup(std::string_view surface) const;
  std::vector<KeywordEntry> entries() const;
  std::string serialize() const;

 private:
  std::map<std::string, KeywordEntry> by_key_;
  std::vector<std::string> order_;
};

inline constexpr std::string_view kDescription = "Description";
inline constexpr std::string_view kObjectClass = "ObjectClass";
inline constexpr std::string_view kDate = "Date";
inline constexpr std::string_view kTime = "Time";
inline constexpr std::string_view kCondition = "Condition";

// tabular and keyvalue_text documents. Tabular input yields one tag set per
// data row; keyvalue_text yields exactly one.
std::vector<MetadataTagSet> parse_record(const RawDocument& doc,
                                         const KeywordDictionary& reserved);

// One tag set per sample; each tag's observed_at comes from the sample.
std::vector<MetadataTagSet> parse_timeseries(const RawDocument& doc,
                                             const KeywordDictionary& reserved);

// opaque_binary: ObjectClass, Date and any sidecar tags. The payload itself is
// left untouched for object storage.
MetadataTagSet ingest_object(const RawDocument& doc,
                             const KeywordDictionary& reserved);

// Dispatches on declared_format and applies the condition override.
std::vector<MetadataTagSet> parse_document(const RawDocument& doc,
                                           const KeywordDictionary& reserved);

// Ingestion manifest, one document per line:
//   <path> | <format> | <source label> [| key=value ...]
// keys: id, sidecar, class, condition. Relative paths resolve against the
// manifest's directory.
struct ManifestEntry {
  std::string path;
  DocumentFormat format = DocumentFormat::keyvalue_text;
  std::string source_label;
  std::optional<std::string> doc_id;
  std::optional<std::string> sidecar_path;
  std::optional<std::string> object_class;
  std::optional<std::string> condition;
};

std::vector<ManifestEntry> parse_manifest(std::string_view text);
std::vector<RawDocument> load_manifest(const std::filesystem::path& manifest,
                                       Timestamp upload_time);
std::string read_file(const std::filesystem::path& path);

}  // namespace healthvault::ingest
