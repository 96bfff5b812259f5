#include "healthvault/vault_state.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>

#include "healthvault/errors.hpp"

namespace healthvault {

using nlohmann::json;

std::string_view proposal_status_name(ProposalStatus s) {
  switch (s) {
    case ProposalStatus::pending: return "pending";
    case ProposalStatus::accepted: return "accepted";
    case ProposalStatus::rejected: return "rejected";
  }
  return "pending";
}

namespace {

ProposalStatus parse_status(const std::string& s) {
  if (s == "accepted") return ProposalStatus::accepted;
  if (s == "rejected") return ProposalStatus::rejected;
  return ProposalStatus::pending;
}

std::string vhex(const Value& v) { return to_hex(encode_value(v)); }
Value unvhex(const json& j) { return decode_value(from_hex(j.get<std::string>())); }

std::string khex(const crypto::KeyBytes& k) {
  return to_hex(std::string_view(reinterpret_cast<const char*>(k.data()), k.size()));
}

crypto::KeyBytes unkhex(const json& j) {
  std::string raw = from_hex(j.get<std::string>());
  crypto::KeyBytes k{};
  if (raw.size() != k.size()) throw Error(Errc::corrupt_state, "bad key length in state");
  std::copy(raw.begin(), raw.end(), k.begin());
  return k;
}

json table_to_json(const schema::TableSchema& t) {
  json cols = json::array();
  for (const auto& c : t.columns) {
    cols.push_back({{"name", c.name},
                    {"kind", kind_name(c.kind)},
                    {"scheme", scheme_name(c.scheme)},
                    {"hidden", c.hidden}});
  }
  json j = {{"name", t.name},
            {"columns", cols},
            {"derived", t.is_derived},
            {"provenance", t.provenance_enabled},
            {"fallback", t.fallback},
            {"base", t.base_table}};
  if (t.aggregate) j["aggregate"] = policy::aggregate_name(*t.aggregate);
  return j;
}

Scheme parse_scheme_name(const std::string& s) {
  for (Scheme x : {Scheme::deterministic, Scheme::order_preserving, Scheme::opaque}) {
    if (scheme_name(x) == s) return x;
  }
  throw Error(Errc::corrupt_state, "unknown scheme " + s);
}

schema::TableSchema table_from_json(const json& j) {
  schema::TableSchema t;
  t.name = j.at("name");
  for (const auto& c : j.at("columns")) {
    auto kind = parse_kind(c.at("kind").get<std::string>());
    if (!kind) throw Error(Errc::corrupt_state, "unknown column kind in state");
    t.columns.push_back(schema::ColumnSchema{c.at("name"), *kind,
                                             parse_scheme_name(c.at("scheme")), c.at("hidden")});
  }
  t.is_derived = j.at("derived");
  t.provenance_enabled = j.at("provenance");
  t.fallback = j.at("fallback");
  t.base_table = j.at("base");
  if (j.contains("aggregate")) t.aggregate = policy::parse_aggregate(j.at("aggregate").get<std::string>());
  return t;
}

json shape_to_json(const policy::QueryShape& s) {
  return {{"aggregate", policy::aggregate_name(s.aggregate)}, {"table", s.table}, {"columns", s.columns}};
}

json sharing_to_json(const policy::SharingPolicy& p) {
  json items = json::array();
  for (const auto& i : p.included) items.push_back(i.category());
  return {{"condition", p.condition_label}, {"version", p.version}, {"include", items}};
}

policy::SharingPolicy sharing_from_json(const json& j) {
  // Reuse the policy-file grammar for the item list.
  std::string line = "sharing: condition=" + j.at("condition").get<std::string>() +
                     "; version=" + std::to_string(j.at("version").get<int>()) + "; include=";
  bool first = true;
  for (const auto& i : j.at("include")) {
    if (!first) line += ", ";
    line += i.get<std::string>();
    first = false;
  }
  auto f = policy::PolicyFile::parse(line);
  if (f.sharing.size() != 1) throw Error(Errc::corrupt_state, "bad sharing policy in state");
  return f.sharing[0];
}

}  // namespace

PendingConfirmation* VaultState::find_proposal(const std::string& id) {
  for (auto& p : proposals) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

void VaultState::remap(const std::function<Handle(Handle)>& fn) {
  indexes.remap(fn);
  for (auto& [id, doc] : documents) {
    for (auto& r : doc.rows) r.handle = fn(r.handle);
    for (auto& h : doc.objects) h = fn(h);
  }
}

json value_to_json(const Value& v) {
  switch (v.kind()) {
    case ValueKind::null: return nullptr;
    case ValueKind::integer: return v.as_integer();
    default: return v.str();
  }
}

Value value_from_json(const json& j) {
  if (j.is_null()) return Value();
  if (j.is_number_integer()) return Value::integer(j.get<std::int64_t>());
  if (j.is_number()) {
    auto d = parse_decimal(j.dump());
    if (d) return Value::decimal(*d);
  }
  if (j.is_string()) return infer_value(j.get<std::string>());
  throw Error(Errc::invalid_argument, "unsupported literal " + j.dump());
}

json state_to_json(const VaultState& s) {
  json j;
  j["format"] = 1;

  json keys = {{"name_key", khex(s.keys.name_key())}, {"columns", json::array()}, {"ope", json::array()}};
  for (const auto& [tc, k] : s.keys.keys()) {
    keys["columns"].push_back({{"table", k.table},
                               {"column", k.column},
                               {"scheme", scheme_name(k.scheme)},
                               {"id", k.id.hex()},
                               {"key", khex(k.key_material)}});
  }
  for (const auto& [tc, d] : s.keys.ope_dictionaries()) {
    json entries = json::array();
    for (const auto& [v, code] : d.entries()) entries.push_back({vhex(v), std::to_string(code)});
    keys["ope"].push_back({{"table", tc.first},
                           {"column", tc.second},
                           {"bits", d.code_bits()},
                           {"generation", d.generation()},
                           {"entries", entries}});
  }
  j["keys"] = keys;

  json tables = json::array();
  for (const auto& t : s.registry.tables()) tables.push_back(table_to_json(t));
  j["tables"] = tables;

  j["synonyms"] = s.synonyms.pairs();

  json pol;
  pol["threshold"] = s.policies.threshold();
  pol["patterns"] = json::array();
  for (const auto& [shape, n] : s.policies.patterns()) {
    pol["patterns"].push_back({{"shape", shape_to_json(shape)}, {"count", n}});
  }
  pol["sharing"] = json::array();
  for (const auto& p : s.policies.sharing_history()) pol["sharing"].push_back(sharing_to_json(p));
  pol["use"] = json::object();
  for (const auto& [t, when] : s.policies.table_use()) {
    pol["use"][t] = when.time_since_epoch().count();
  }
  j["policies"] = pol;

  json idx = json::array();
  for (const auto& [key, index] : s.indexes.all()) {
    json entries = json::array();
    for (const auto& [v, hs] : index.entries()) {
      std::vector<std::string> handles;
      for (Handle h : hs) handles.push_back(std::to_string(h));
      entries.push_back({vhex(v), handles});
    }
    idx.push_back({{"table", index.table()}, {"column", index.column()}, {"entries", entries}});
  }
  j["indexes"] = idx;

  json docs = json::array();
  for (const auto& [id, d] : s.documents) {
    json rows = json::array();
    for (const auto& r : d.rows) rows.push_back({r.table, std::to_string(r.handle)});
    std::vector<std::string> objs;
    for (Handle h : d.objects) objs.push_back(std::to_string(h));
    docs.push_back({{"id", id}, {"source", d.source_label}, {"rows", rows}, {"objects", objs}});
  }
  j["documents"] = docs;
  j["object_classes"] = s.object_classes;

  json props = json::array();
  for (const auto& p : s.proposals) {
    props.push_back({{"id", p.id},
                     {"table", p.target.table},
                     {"handle", std::to_string(p.target.handle)},
                     {"column", p.target.column},
                     {"value", vhex(p.value)},
                     {"source_table", p.source_table},
                     {"source_handle", std::to_string(p.source_handle)},
                     {"status", proposal_status_name(p.status)}});
  }
  j["proposals"] = props;
  json blocked = json::array();
  for (const auto& c : s.blocked) blocked.push_back({c.table, std::to_string(c.handle), c.column});
  j["blocked"] = blocked;
  j["next_proposal"] = s.next_proposal;
  j["next_report"] = s.next_report;
  return j;
}

void state_from_json(const json& j, VaultState& s) {
  try {
    if (j.at("format") != 1) throw Error(Errc::corrupt_state, "unsupported state format");
    const auto& keys = j.at("keys");
    s.keys = crypto::KeyRing(unkhex(keys.at("name_key")));
    for (const auto& k : keys.at("columns")) {
      crypto::ColumnKey ck;
      ck.table = k.at("table");
      ck.column = k.at("column");
      ck.scheme = parse_scheme_name(k.at("scheme"));
      ck.id = Pseudonym::from_view(from_hex(k.at("id").get<std::string>()));
      ck.key_material = unkhex(k.at("key"));
      s.keys.restore_key(std::move(ck));
    }
    for (const auto& d : keys.at("ope")) {
      crypto::OpeDictionary dict(d.at("bits").get<int>());
      std::vector<std::pair<Value, std::uint64_t>> entries;
      for (const auto& e : d.at("entries")) {
        entries.emplace_back(unvhex(e.at(0)), std::stoull(e.at(1).get<std::string>()));
      }
      dict.restore(d.at("generation").get<std::uint32_t>(), entries);
      s.keys.restore_ope(d.at("table"), d.at("column"), std::move(dict));
    }

    for (const auto& t : j.at("tables")) s.registry.restore(table_from_json(t));

    for (const auto& p : j.at("synonyms")) {
      s.synonyms.add(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    }

    const auto& pol = j.at("policies");
    s.policies.set_threshold(pol.at("threshold").get<std::uint64_t>());
    for (const auto& p : pol.at("patterns")) {
      const auto& sh = p.at("shape");
      auto agg = policy::parse_aggregate(sh.at("aggregate").get<std::string>());
      if (!agg) throw Error(Errc::corrupt_state, "bad query shape in state");
      s.policies.restore_pattern(
          policy::make_shape(*agg, sh.at("table"), sh.at("columns").get<std::vector<std::string>>()),
          p.at("count").get<std::uint64_t>());
    }
    for (const auto& p : pol.at("sharing")) s.policies.restore_sharing(sharing_from_json(p));
    for (const auto& [t, secs] : pol.at("use").items()) {
      s.policies.restore_use(t, Timestamp{std::chrono::seconds{secs.get<std::int64_t>()}});
    }

    for (const auto& i : j.at("indexes")) {
      enrich::LocalIndex index(i.at("table"), i.at("column"));
      for (const auto& e : i.at("entries")) {
        Value v = unvhex(e.at(0));
        for (const auto& h : e.at(1)) index.insert(v, std::stoull(h.get<std::string>()));
      }
      s.indexes.restore(std::move(index));
    }

    for (const auto& d : j.at("documents")) {
      DocumentRecord rec;
      rec.doc_id = d.at("id");
      rec.source_label = d.at("source");
      for (const auto& r : d.at("rows")) {
        rec.rows.push_back({r.at(0).get<std::string>(), std::stoull(r.at(1).get<std::string>())});
      }
      for (const auto& h : d.at("objects")) rec.objects.push_back(std::stoull(h.get<std::string>()));
      s.documents[rec.doc_id] = std::move(rec);
    }
    s.object_classes = j.at("object_classes").get<std::set<std::string>>();

    for (const auto& p : j.at("proposals")) {
      PendingConfirmation pc;
      pc.id = p.at("id");
      pc.target = {p.at("table"), std::stoull(p.at("handle").get<std::string>()), p.at("column")};
      pc.value = unvhex(p.at("value"));
      pc.source_table = p.at("source_table");
      pc.source_handle = std::stoull(p.at("source_handle").get<std::string>());
      pc.status = parse_status(p.at("status"));
      s.proposals.push_back(std::move(pc));
    }
    for (const auto& c : j.at("blocked")) {
      s.blocked.insert({c.at(0).get<std::string>(), std::stoull(c.at(1).get<std::string>()),
                        c.at(2).get<std::string>()});
    }
    s.next_proposal = j.at("next_proposal");
    s.next_report = j.at("next_report");
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_state, std::string("vault state: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& data) {
  auto tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  if (fd < 0) throw Error(Errc::corrupt_state, "cannot write " + tmp.string());
  std::string_view rest = data;
  while (!rest.empty()) {
    ssize_t n = ::write(fd, rest.data(), rest.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw Error(Errc::corrupt_state, "cannot write " + tmp.string());
    }
    rest.remove_prefix(static_cast<std::size_t>(n));
  }
  ::fsync(fd);
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

}  // namespace healthvault
