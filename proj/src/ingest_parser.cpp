#include "healthvault/ingest_parser.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "healthvault/errors.hpp"

namespace healthvault::ingest {

std::string_view format_name(DocumentFormat f) {
  switch (f) {
    case DocumentFormat::tabular: return "tabular";
    case DocumentFormat::keyvalue_text: return "keyvalue_text";
    case DocumentFormat::timeseries: return "timeseries";
    case DocumentFormat::opaque_binary: return "opaque_binary";
  }
  return "keyvalue_text";
}

std::optional<DocumentFormat> parse_format(std::string_view name) {
  for (auto f : {DocumentFormat::tabular, DocumentFormat::keyvalue_text,
                 DocumentFormat::timeseries, DocumentFormat::opaque_binary}) {
    if (format_name(f) == name) return f;
  }
  return std::nullopt;
}

const MetadataTag* MetadataTagSet::find(std::string_view keyword) const {
  for (const auto& t : tags) {
    if (t.keyword == keyword) return &t;
  }
  return nullptr;
}

std::string normalize_keyword(std::string_view surface) {
  std::string out;
  out.reserve(surface.size());
  for (char c : surface) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

// ---- KeywordDictionary -----------------------------------------------------

KeywordDictionary KeywordDictionary::parse(std::string_view text) {
  KeywordDictionary dict;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto fields = split(line, '|');
    if (fields.size() < 2) {
      throw Error(Errc::invalid_argument,
                  "keywords line " + std::to_string(line_no) + ": expected '<keyword> | <type>'");
    }
    KeywordEntry e;
    e.keyword = trim(fields[0]);
    auto kind = parse_kind(trim(fields[1]));
    if (e.keyword.empty() || !kind || *kind == ValueKind::null) {
      throw Error(Errc::invalid_argument,
                  "keywords line " + std::to_string(line_no) + ": bad keyword or type");
    }
    e.kind = *kind;
    if (fields.size() > 2) {
      for (const auto& f : split(fields[2], ',')) {
        std::string flag = trim(f);
        if (flag == "range") e.range_queryable = true;
        else if (flag == "equality") e.equality_queryable = true;
        else if (flag == "vital") e.vital = true;
        else if (flag == "casefold") e.casefold = true;
        else if (!flag.empty()) {
          throw Error(Errc::invalid_argument, "keywords line " + std::to_string(line_no) +
                                                  ": unknown flag '" + flag + "'");
        }
      }
    }
    dict.add(std::move(e));
  }
  return dict;
}

KeywordDictionary KeywordDictionary::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

void KeywordDictionary::add(KeywordEntry entry) {
  std::string key = normalize_keyword(entry.keyword);
  if (!by_key_.contains(key)) order_.push_back(key);
  by_key_[key] = std::move(entry);
}

void KeywordDictionary::add_surface(std::string_view surface, std::string_view canonical) {
  std::string key = normalize_keyword(surface);
  if (key.empty() || by_key_.contains(key)) return;
  const KeywordEntry* base = lookup(canonical);
  if (base == nullptr) return;
  KeywordEntry e = *base;
  e.keyword = trim(surface);
  by_key_[key] = std::move(e);
  order_.push_back(key);
}

const KeywordEntry* KeywordDictionary::lookup(std::string_view surface) const {
  auto it = by_key_.find(normalize_keyword(surface));
  return it == by_key_.end() ? nullptr : &it->second;
}

std::vector<KeywordEntry> KeywordDictionary::entries() const {
  std::vector<KeywordEntry> out;
  for (const auto& k : order_) out.push_back(by_key_.at(k));
  return out;
}

std::string KeywordDictionary::serialize() const {
  std::ostringstream out;
  for (const auto& e : entries()) {
    out << e.keyword << " | " << kind_name(e.kind);
    std::vector<std::string> flags;
    if (e.range_queryable) flags.emplace_back("range");
    if (e.equality_queryable) flags.emplace_back("equality");
    if (e.vital) flags.emplace_back("vital");
    if (e.casefold) flags.emplace_back("casefold");
    if (!flags.empty()) {
      out << " |";
      for (std::size_t i = 0; i < flags.size(); ++i) out << (i ? ", " : " ") << flags[i];
    }
    out << '\n';
  }
  return out.str();
}

// ---- helpers ---------------------------------------------------------------

namespace {

std::vector<std::string> lines_of(std::string_view content) {
  std::vector<std::string> out;
  for (auto& l : split(content, '\n')) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    out.push_back(std::move(l));
  }
  return out;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
}

// RFC 4180-style field splitting; quoted fields may contain commas and "".
std::vector<std::string> csv_fields(std::string_view line, int line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw Error(Errc::malformed_tabular,
                "line " + std::to_string(line_no) + ": unterminated quoted field");
  }
  fields.push_back(trim(cur));
  return fields;
}

struct ColumnSpec {
  std::string keyword;
  const KeywordEntry* entry = nullptr;
};

ColumnSpec column_for(std::string_view header, const KeywordDictionary& reserved) {
  ColumnSpec spec;
  spec.entry = reserved.lookup(header);
  spec.keyword = spec.entry ? spec.entry->keyword : trim(header);
  return spec;
}

Value typed_value(const ColumnSpec& spec, std::string_view text, std::string_view where) {
  if (spec.entry == nullptr) return infer_value(text);
  auto v = parse_as(spec.entry->kind, text);
  if (!v) {
    throw Error(Errc::malformed_value,
                std::string(where) + ": '" + trim(text) + "' is not a valid " +
                    std::string(kind_name(spec.entry->kind)) + " for " + spec.keyword);
  }
  if (spec.entry->casefold && v->kind() == ValueKind::text) {
    return Value::text(to_lower(v->as_text()));
  }
  return *v;
}

void require_content(const RawDocument& doc) {
  if (doc.content.empty() || blank(doc.content)) {
    throw Error(Errc::empty_document, "document '" + doc.doc_id + "' is empty");
  }
}

std::vector<MetadataTagSet> parse_tabular(const RawDocument& doc,
                                          const KeywordDictionary& reserved) {
  auto lines = lines_of(doc.content);
  std::size_t i = 0;
  while (i < lines.size() && blank(lines[i])) ++i;
  if (i == lines.size()) throw Error(Errc::empty_document, "document '" + doc.doc_id + "' is empty");

  auto headers = csv_fields(lines[i], static_cast<int>(i + 1));
  std::vector<ColumnSpec> columns;
  std::set<std::string> seen;
  for (const auto& h : headers) {
    if (h.empty()) {
      throw Error(Errc::malformed_tabular, "header line has an empty column name");
    }
    auto spec = column_for(h, reserved);
    if (!seen.insert(normalize_keyword(spec.keyword)).second) {
      throw Error(Errc::malformed_tabular, "header repeats column '" + spec.keyword + "'");
    }
    columns.push_back(std::move(spec));
  }

  std::vector<MetadataTagSet> out;
  for (++i; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    int line_no = static_cast<int>(i + 1);
    auto cells = csv_fields(lines[i], line_no);
    if (cells.size() != columns.size()) {
      throw Error(Errc::malformed_tabular,
                  "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " fields but the header has " + std::to_string(columns.size()));
    }
    MetadataTagSet set{doc.doc_id, {}};
    for (std::size_t c = 0; c < cells.size(); ++c) {
      set.tags.push_back(MetadataTag{
          columns[c].keyword,
          typed_value(columns[c], cells[c], "line " + std::to_string(line_no)),
          std::nullopt});
    }
    out.push_back(std::move(set));
  }
  if (out.empty()) {
    throw Error(Errc::empty_document, "document '" + doc.doc_id + "' has a header but no data rows");
  }
  return out;
}

MetadataTagSet parse_keyvalue_text(std::string_view content, const std::string& doc_id,
                                   const KeywordDictionary& reserved) {
  MetadataTagSet set{doc_id, {}};
  std::vector<std::string> description;
  std::set<std::string> seen;
  int line_no = 0;
  for (const auto& line : lines_of(content)) {
    ++line_no;
    if (blank(line)) continue;
    auto colon = line.find(':');
    const KeywordEntry* entry = nullptr;
    if (colon != std::string::npos) entry = reserved.lookup(line.substr(0, colon));
    if (entry == nullptr) {
      description.push_back(trim(line));
      continue;
    }
    std::string rest = line.substr(colon + 1);
    if (entry->keyword == kDescription) {
      if (!blank(rest)) description.push_back(trim(rest));
      continue;
    }
    if (!seen.insert(entry->keyword).second) {
      throw Error(Errc::malformed_value, "line " + std::to_string(line_no) + ": keyword '" +
                                             entry->keyword + "' appears twice");
    }
    ColumnSpec spec{entry->keyword, entry};
    set.tags.push_back(MetadataTag{entry->keyword,
                                   typed_value(spec, rest, "line " + std::to_string(line_no)),
                                   std::nullopt});
  }
  if (!description.empty()) {
    std::string text;
    for (std::size_t i = 0; i < description.size(); ++i) {
      if (i) text += '\n';
      text += description[i];
    }
    const KeywordEntry* entry = reserved.lookup(kDescription);
    set.tags.push_back(MetadataTag{entry ? entry->keyword : std::string(kDescription),
                                   Value::text(std::move(text)), std::nullopt});
  }
  return set;
}

}  // namespace

std::vector<MetadataTagSet> parse_record(const RawDocument& doc,
                                         const KeywordDictionary& reserved) {
  require_content(doc);
  switch (doc.declared_format) {
    case DocumentFormat::tabular: return parse_tabular(doc, reserved);
    case DocumentFormat::keyvalue_text: {
      auto set = parse_keyvalue_text(doc.content, doc.doc_id, reserved);
      if (set.tags.empty()) {
        throw Error(Errc::empty_document, "document '" + doc.doc_id + "' is empty");
      }
      return {std::move(set)};
    }
    case DocumentFormat::timeseries:
    case DocumentFormat::opaque_binary:
      break;
  }
  throw Error(Errc::invalid_argument,
              "parse_record handles tabular and keyvalue_text documents only");
}

std::vector<MetadataTagSet> parse_timeseries(const RawDocument& doc,
                                             const KeywordDictionary& reserved) {
  require_content(doc);
  if (doc.declared_format != DocumentFormat::timeseries) {
    throw Error(Errc::invalid_argument, "parse_timeseries requires a timeseries document");
  }
  auto lines = lines_of(doc.content);
  std::size_t i = 0;
  while (i < lines.size() && blank(lines[i])) ++i;
  auto header = csv_fields(lines[i], static_cast<int>(i + 1));
  static const std::set<std::string> kTimestampHeaders = {"timestamp", "time", "datetime"};
  if (header.size() < 2 || !kTimestampHeaders.contains(normalize_keyword(header[0]))) {
    throw Error(Errc::missing_timestamp_column,
                "timeseries header must be 'timestamp,<stream name>'");
  }
  if (header.size() != 2 || header[1].empty()) {
    throw Error(Errc::malformed_tabular, "timeseries header must name exactly one stream");
  }
  ColumnSpec stream = column_for(header[1], reserved);

  std::vector<MetadataTagSet> out;
  for (++i; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    int line_no = static_cast<int>(i + 1);
    auto cells = csv_fields(lines[i], line_no);
    if (cells.size() != 2) {
      throw Error(Errc::malformed_tabular, "line " + std::to_string(line_no) +
                                               ": expected 'timestamp,value'");
    }
    auto ts = parse_timestamp(cells[0]);
    if (!ts) {
      throw Error(Errc::missing_timestamp_column,
                  "line " + std::to_string(line_no) + ": sample has no valid timestamp");
    }
    MetadataTagSet set{doc.doc_id, {}};
    set.tags.push_back(MetadataTag{
        stream.keyword, typed_value(stream, cells[1], "line " + std::to_string(line_no)), ts});
    out.push_back(std::move(set));
  }
  if (out.empty()) {
    throw Error(Errc::empty_document, "timeseries '" + doc.doc_id + "' has no samples");
  }
  return out;
}

MetadataTagSet ingest_object(const RawDocument& doc, const KeywordDictionary& reserved) {
  if (doc.content.empty()) {
    throw Error(Errc::empty_document, "object '" + doc.doc_id + "' is a zero-byte file");
  }
  if (doc.declared_format != DocumentFormat::opaque_binary) {
    throw Error(Errc::invalid_argument, "ingest_object requires an opaque_binary document");
  }
  MetadataTagSet sidecar{doc.doc_id, {}};
  if (doc.sidecar && !blank(*doc.sidecar)) {
    sidecar = parse_keyvalue_text(*doc.sidecar, doc.doc_id, reserved);
  }
  const KeywordEntry* class_entry = reserved.lookup(kObjectClass);
  const KeywordEntry* date_entry = reserved.lookup(kDate);
  std::string class_kw = class_entry ? class_entry->keyword : std::string(kObjectClass);
  std::string date_kw = date_entry ? date_entry->keyword : std::string(kDate);

  MetadataTagSet set{doc.doc_id, {}};
  std::string object_class = "Unclassified";
  if (doc.object_class && !trim(*doc.object_class).empty()) {
    object_class = trim(*doc.object_class);
  } else if (const auto* t = sidecar.find(class_kw); t && !t->value.is_null()) {
    object_class = t->value.str();
  }
  set.tags.push_back(MetadataTag{class_kw, Value::text(object_class), std::nullopt});
  if (const auto* t = sidecar.find(date_kw); t && !t->value.is_null()) {
    set.tags.push_back(*t);
  } else {
    set.tags.push_back(
        MetadataTag{date_kw, Value::date(Date::from_timestamp(doc.upload_time)), std::nullopt});
  }
  for (const auto& t : sidecar.tags) {
    if (t.keyword == class_kw || t.keyword == date_kw) continue;
    set.tags.push_back(t);
  }
  return set;
}

std::vector<MetadataTagSet> parse_document(const RawDocument& doc,
                                           const KeywordDictionary& reserved) {
  std::vector<MetadataTagSet> sets;
  switch (doc.declared_format) {
    case DocumentFormat::tabular:
    case DocumentFormat::keyvalue_text: sets = parse_record(doc, reserved); break;
    case DocumentFormat::timeseries: sets = parse_timeseries(doc, reserved); break;
    case DocumentFormat::opaque_binary: sets = {ingest_object(doc, reserved)}; break;
  }
  if (doc.condition && !trim(*doc.condition).empty()) {
    const KeywordEntry* entry = reserved.lookup(kCondition);
    std::string kw = entry ? entry->keyword : std::string(kCondition);
    std::string label = trim(*doc.condition);
    if (entry == nullptr || entry->casefold) label = to_lower(label);
    for (auto& set : sets) {
      if (set.find(kw) == nullptr) {
        set.tags.push_back(MetadataTag{kw, Value::text(label), std::nullopt});
      }
    }
  }
  return sets;
}

// ---- manifest --------------------------------------------------------------

std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  int line_no = 0;
  for (const auto& raw : lines_of(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, '|');
    if (fields.size() < 3) {
      throw Error(Errc::invalid_argument, "manifest line " + std::to_string(line_no) +
                                              ": expected '<path> | <format> | <source label>'");
    }
    ManifestEntry e;
    e.path = trim(fields[0]);
    std::string fmt = trim(fields[1]);
    auto format = parse_format(fmt);
    if (!format) {
      throw Error(Errc::unknown_format,
                  "manifest line " + std::to_string(line_no) + ": unknown format '" + fmt + "'");
    }
    e.format = *format;
    e.source_label = trim(fields[2]);
    if (e.path.empty()) {
      throw Error(Errc::invalid_argument,
                  "manifest line " + std::to_string(line_no) + ": empty path");
    }
    for (std::size_t i = 3; i < fields.size(); ++i) {
      std::string opt = trim(fields[i]);
      auto eq = opt.find('=');
      if (eq == std::string::npos) {
        throw Error(Errc::invalid_argument, "manifest line " + std::to_string(line_no) +
                                                ": option '" + opt + "' is not key=value");
      }
      std::string key = trim(opt.substr(0, eq));
      std::string value = trim(opt.substr(eq + 1));
      if (key == "id") e.doc_id = value;
      else if (key == "sidecar") e.sidecar_path = value;
      else if (key == "class") e.object_class = value;
      else if (key == "condition") e.condition = value;
      else {
        throw Error(Errc::invalid_argument, "manifest line " + std::to_string(line_no) +
                                                ": unknown option '" + key + "'");
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::invalid_argument, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<RawDocument> load_manifest(const std::filesystem::path& manifest,
                                       Timestamp upload_time) {
  auto base = manifest.parent_path();
  std::vector<RawDocument> docs;
  for (const auto& e : parse_manifest(read_file(manifest))) {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base / path;
    };
    RawDocument doc;
    doc.doc_id = e.doc_id.value_or(e.path);
    doc.declared_format = e.format;
    doc.source_label = e.source_label;
    doc.upload_time = upload_time;
    doc.object_class = e.object_class;
    doc.condition = e.condition;
    auto path = resolve(e.path);
    if (std::filesystem::exists(path)) doc.content = read_file(path);
    if (e.sidecar_path) doc.sidecar = read_file(resolve(*e.sidecar_path));
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace healthvault::ingest
