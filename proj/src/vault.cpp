#include "healthvault/vault.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "healthvault/errors.hpp"
#include "healthvault/row_codec.hpp"

namespace healthvault {

using nlohmann::json;
using schema::kDateColumn;
using schema::TableSchema;
using store::BatchOp;
using store::MessageKind;

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::uint64_t fresh_txn() {
  std::string raw = crypto::random_bytes(8);
  std::uint64_t v = 0;
  for (unsigned char c : raw) v = (v << 8) | c;
  v &= ~kPlaceholderBit;
  return v == 0 ? 1 : v;
}

std::optional<std::string> read_optional(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) return std::nullopt;
  return ingest::read_file(p);
}

void add_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

}  // namespace

std::size_t IngestReport::ingested() const {
  return static_cast<std::size_t>(
      std::count_if(documents.begin(), documents.end(), [](const DocumentOutcome& d) { return d.ok; }));
}

std::size_t IngestReport::failed() const { return documents.size() - ingested(); }

// ---- write batches ---------------------------------------------------------

// Stages row and object writes against a copy of the vault state. Encryption
// is deferred to finish() so every order-preserving value of the batch is
// registered before any ciphertext is produced. New rows get placeholder
// handles (group << 24 | row) that commit() replaces with store handles.
class Vault::Batch {
 public:
  Batch(VaultState& next, const VaultState& committed, store::StoreClient& store)
      : next_(next), committed_(committed), store_(store) {}

  void create_table(const TableSchema& t) {
    Group g;
    g.kind = MessageKind::create_table;
    g.table = t.name;
    groups_.push_back(std::move(g));
  }

  Handle put_row(const std::string& table, std::vector<Binding> cells) {
    std::size_t gi = groups_.size();
    for (std::size_t i = groups_.size(); i-- > 0;) {
      if (groups_[i].kind == MessageKind::put_rows && groups_[i].table == table) {
        gi = i;
        break;
      }
    }
    if (gi == groups_.size()) {
      Group g;
      g.kind = MessageKind::put_rows;
      g.table = table;
      groups_.push_back(std::move(g));
    }
    auto& g = groups_[gi];
    Handle h = placeholder(gi, g.rows.size());
    g.rows.push_back(std::move(cells));
    g.handles.push_back(h);
    next_.indexes.add_row(table, h, g.rows.back());
    return h;
  }

  // Overwrites a committed row, or a row staged earlier in this batch.
  void replace_row(const std::string& table, Handle h, const std::vector<Binding>& old_cells,
                   std::vector<Binding> cells) {
    next_.indexes.remove_row(table, h, old_cells);
    next_.indexes.add_row(table, h, cells);
    for (auto& g : groups_) {
      if (g.table != table || g.kind == MessageKind::create_table) continue;
      for (std::size_t i = 0; i < g.handles.size(); ++i) {
        if (g.handles[i] == h) {
          g.rows[i] = std::move(cells);
          return;
        }
      }
    }
    Group* rg = nullptr;
    for (auto& g : groups_) {
      if (g.kind == MessageKind::replace_rows && g.table == table) rg = &g;
    }
    if (rg == nullptr) {
      Group g;
      g.kind = MessageKind::replace_rows;
      g.table = table;
      groups_.push_back(std::move(g));
      rg = &groups_.back();
    }
    rg->handles.push_back(h);
    rg->rows.push_back(std::move(cells));
  }

  Handle put_object(const std::string& object_class, std::vector<Binding> tags, std::string content) {
    Group g;
    g.kind = MessageKind::put_object;
    g.object_class = object_class;
    g.rows.push_back(std::move(tags));
    g.content = std::move(content);
    Handle h = placeholder(groups_.size(), 0);
    g.handles.push_back(h);
    groups_.push_back(std::move(g));
    return h;
  }

  // Derived rows are keyed by month through the (table, Date) index.
  // Returns true when an existing row was replaced.
  bool upsert_derived(const TableSchema& derived, const schema::SchemaTag& row) {
    const Binding* month = row.find(kDateColumn);
    auto* index = next_.indexes.find(derived.name, std::string(kDateColumn));
    if (index != nullptr) {
      auto hs = index->lookup(month->value);
      if (!hs.empty()) {
        Handle h = *hs.begin();
        std::vector<Binding> old{Binding{std::string(kDateColumn), month->value, Provenance::source}};
        replace_row(derived.name, h, old, row.bindings);
        return true;
      }
    }
    put_row(derived.name, row.bindings);
    return false;
  }

  bool empty() const { return groups_.empty(); }

  // Encrypts everything and returns the ops plus group -> op mapping.
  std::vector<BatchOp> finish() {
    std::vector<BatchOp> ops;
    for (const auto& g : groups_) {
      if (g.kind != MessageKind::create_table) continue;
      const auto* t = next_.registry.find(g.table);
      ops.push_back(BatchOp{MessageKind::create_table, next_.keys.table_id(t->name),
                            codec::column_specs(next_.keys, *t), {}, {}});
    }
    for (const auto& g : groups_) {
      if (g.kind != MessageKind::put_rows && g.kind != MessageKind::replace_rows) continue;
      const auto* t = next_.registry.find(g.table);
      for (const auto& r : g.rows) codec::register_ordered_values(next_.keys, *t, r);
    }
    // A re-spaced dictionary invalidates every committed ciphertext of its
    // column, so those tables are rewritten in full.
    std::set<std::string> rewrite;
    for (const auto& [tc, dict] : next_.keys.ope_dictionaries()) {
      const auto* old = committed_.keys.find_ope(tc.first, tc.second);
      if (old != nullptr && old->generation() != dict.generation()) rewrite.insert(tc.first);
    }
    query::QueryEngine reader(committed_, committed_.registry.dictionary(), store_);
    for (const auto& name : rewrite) {
      const auto* t = next_.registry.find(name);
      std::set<Handle> staged;
      for (const auto& g : groups_) {
        if (g.table == name) staged.insert(g.handles.begin(), g.handles.end());
      }
      BatchOp op{MessageKind::replace_rows, next_.keys.table_id(name), {}, {}, {}};
      for (const auto& r : reader.all_rows(name)) {
        if (staged.contains(r.handle)) continue;
        op.rows.push_back(codec::encrypt_row(next_.keys, *t, r.cells, r.handle));
      }
      if (!op.rows.empty()) ops.push_back(std::move(op));
    }
    group_op_.assign(groups_.size(), 0);
    const auto* tag_key = object_keys();
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const auto& g = groups_[gi];
      if (g.kind == MessageKind::create_table) continue;
      group_op_[gi] = ops.size();
      if (g.kind == MessageKind::put_object) {
        const auto* payload_key =
            next_.keys.find(std::string(kObjectsTable), std::string(kObjectPayloadColumn));
        store::EncryptedObject obj;
        obj.class_tag = crypto::det_encrypt(*tag_key, Value::text(g.object_class));
        obj.payload = crypto::opaque_encrypt(*payload_key, codec::encode_envelope(g.rows[0], g.content));
        ops.push_back(BatchOp{MessageKind::put_object, {}, {}, {}, std::move(obj)});
        continue;
      }
      const auto* t = next_.registry.find(g.table);
      BatchOp op{g.kind, next_.keys.table_id(g.table), {}, {}, {}};
      for (std::size_t i = 0; i < g.rows.size(); ++i) {
        Handle h = g.kind == MessageKind::replace_rows ? g.handles[i] : 0;
        op.rows.push_back(codec::encrypt_row(next_.keys, *t, g.rows[i], h));
      }
      ops.push_back(std::move(op));
    }
    return ops;
  }

  Handle resolve(Handle h, const std::vector<std::vector<Handle>>& assigned) const {
    if (!is_placeholder(h)) return h;
    std::size_t gi = (h & ~kPlaceholderBit) >> 24;
    std::size_t row = h & 0xFFFFFF;
    if (gi >= group_op_.size()) throw Error(Errc::corrupt_state, "placeholder out of range");
    const auto& hs = assigned.at(group_op_[gi]);
    if (row >= hs.size()) throw Error(Errc::corrupt_state, "placeholder out of range");
    return hs[row];
  }

  const std::vector<std::size_t>& group_ops() const { return group_op_; }

 private:
  struct Group {
    MessageKind kind = MessageKind::put_rows;
    std::string table;
    std::vector<Handle> handles;
    std::vector<std::vector<Binding>> rows;
    std::string object_class;
    std::string content;
  };

  const crypto::ColumnKey* object_keys() {
    bool any = std::any_of(groups_.begin(), groups_.end(),
                           [](const Group& g) { return g.kind == MessageKind::put_object; });
    if (!any) return nullptr;
    next_.keys.column_key(std::string(kObjectsTable), std::string(kObjectPayloadColumn), Scheme::opaque);
    return &next_.keys.column_key(std::string(kObjectsTable), std::string(kObjectClassColumn),
                                  Scheme::deterministic);
  }

  VaultState& next_;
  const VaultState& committed_;
  store::StoreClient& store_;
  std::vector<Group> groups_;
  std::vector<std::size_t> group_op_;
};

// ---- setup -----------------------------------------------------------------

Vault::Vault(VaultConfig cfg) : Vault(cfg, store::open_transport(cfg.store)) {}

Vault::Vault(VaultConfig cfg, std::shared_ptr<store::Transport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), store_(transport_) {
  std::filesystem::create_directories(cfg_.data_dir / "reports");
  load();
}

void Vault::apply_config(VaultState& s) const {
  auto dict = ingest::KeywordDictionary::load(cfg_.config_dir / "keywords.conf");
  if (auto syn = read_optional(cfg_.config_dir / "synonyms.conf")) {
    auto parsed = schema::SynonymDictionary::parse(*syn);
    for (const auto& [surface, canonical] : parsed.pairs()) s.synonyms.add(surface, canonical);
  }
  for (const auto& [surface, canonical] : s.synonyms.pairs()) dict.add_surface(surface, canonical);
  s.registry.set_dictionary(std::move(dict));
  if (auto tables = read_optional(cfg_.config_dir / "tables.conf")) {
    s.registry.set_catalog(schema::TableCatalog::parse(*tables));
  }
  s.policies.set_threshold(cfg_.learn_threshold);
  if (auto pol = read_optional(cfg_.config_dir / "policies.conf")) {
    auto file = policy::PolicyFile::parse(*pol);
    for (auto& p : file.storage) s.policies.add_storage_policy(std::move(p));
    for (auto& p : file.enrichment) s.policies.add_enrichment_policy(std::move(p));
    for (auto& p : file.sharing) s.policies.add_sharing_policy(std::move(p));
  }
  s.keys.set_ope_code_bits(cfg_.ope_code_bits);
}

void Vault::load() {
  std::unique_lock lock(mu_);
  VaultState s;
  if (auto text = read_optional(state_path())) {
    try {
      state_from_json(json::parse(*text), s);
    } catch (const json::exception& e) {
      throw Error(Errc::corrupt_state, std::string("vault state: ") + e.what());
    }
  }
  apply_config(s);
  state_ = std::move(s);
  if (std::filesystem::exists(pending_path())) {
    try {
      recover_locked();
    } catch (const Error& e) {
      // Store unreachable: the next write retries recovery.
      if (e.code() != Errc::store_unavailable) throw;
    }
  }
}

// The pending file holds the state a batch would produce. Whether it becomes
// current depends only on whether the store committed its transaction.
void Vault::recover_locked() {
  auto text = read_optional(pending_path());
  if (!text) return;
  json j;
  try {
    j = json::parse(*text);
  } catch (const json::exception&) {
    // Torn before it was complete: nothing was sent to the store.
    std::filesystem::remove(pending_path());
    return;
  }
  std::uint64_t txn = j.at("txn").get<std::uint64_t>();
  auto status = store_.txn_status(txn);
  if (status.committed) {
    VaultState next;
    state_from_json(j.at("state"), next);
    apply_config(next);
    auto groups = j.at("groups").get<std::vector<std::size_t>>();
    next.remap([&](Handle h) -> Handle {
      if (!is_placeholder(h)) return h;
      std::size_t gi = (h & ~kPlaceholderBit) >> 24;
      return status.handles.at(groups.at(gi)).at(h & 0xFFFFFF);
    });
    write_file_atomic(state_path(), state_to_json(next).dump());
    state_ = std::move(next);
    journal({{"event", "recovered"}, {"txn", txn}, {"outcome", "committed"}});
  } else {
    journal({{"event", "recovered"}, {"txn", txn}, {"outcome", "discarded"}});
  }
  std::filesystem::remove(pending_path());
}

void Vault::persist_locked() { write_file_atomic(state_path(), state_to_json(state_).dump()); }

void Vault::fault(std::string_view stage) const {
  if (fault_) fault_(stage);
}

void Vault::journal(const json& entry) const {
  json e = entry;
  e["ts_ms"] = now_ms();
  std::ofstream out(journal_path(), std::ios::app);
  out << e.dump() << '\n';
}

// Writes the pending state, commits the batch, then promotes the state.
void Vault::commit(VaultState& next, Batch& batch) {
  auto ops = batch.finish();
  fault("encrypt");
  std::uint64_t txn = fresh_txn();
  json pending = {{"txn", txn}, {"groups", batch.group_ops()}, {"state", state_to_json(next)}};
  write_file_atomic(pending_path(), pending.dump());
  fault("put.pending");
  auto assigned = store_.commit_batch(txn, ops);
  fault("put.committed");
  next.remap([&](Handle h) { return batch.resolve(h, assigned); });
  write_file_atomic(state_path(), state_to_json(next).dump());
  std::filesystem::remove(pending_path());
  state_ = std::move(next);
}

// ---- ingestion -------------------------------------------------------------

void Vault::materialize(VaultState& next, Batch& batch, const std::vector<TableSchema>& made,
                        DerivedRows& derived) {
  for (const auto& t : made) batch.create_table(t);
  std::vector<policy::IndexSpec> specs;
  for (const auto& p : next.policies.storage_policies()) {
    specs.insert(specs.end(), p.index_specs.begin(), p.index_specs.end());
  }
  for (const auto& t : next.registry.tables()) {
    if (t.is_derived) specs.push_back({t.name, std::string(kDateColumn)});
  }
  query::QueryEngine reader(state_, state_.registry.dictionary(), store_);
  std::map<std::string, std::vector<enrich::RowRef>> committed_rows;
  auto rows_of = [&](const std::string& table) -> const std::vector<enrich::RowRef>& {
    auto it = committed_rows.find(table);
    if (it == committed_rows.end()) it = committed_rows.emplace(table, reader.all_rows(table)).first;
    return it->second;
  };
  for (const auto& s : specs) {
    const auto* t = next.registry.find(s.table);
    if (t == nullptr || t->column(s.column) == nullptr || !next.indexes.ensure(s.table, s.column)) continue;
    if (state_.registry.find(s.table) == nullptr) continue;
    auto* index = next.indexes.find(s.table, s.column);
    for (const auto& r : rows_of(s.table)) {
      const Binding* b = find_binding(r.cells, s.column);
      index->insert(b ? b->value : Value(), r.handle);
    }
  }
  for (const auto& t : made) {
    if (!t.is_derived || state_.registry.find(t.base_table) == nullptr) continue;
    std::map<Month, std::vector<std::vector<Binding>>> months;
    for (const auto& r : rows_of(t.base_table)) {
      const Binding* d = find_binding(r.cells, kDateColumn);
      if (d == nullptr || d->value.kind() != ValueKind::date) continue;
      months[Month::of(d->value.as_date())].push_back(r.cells);
    }
    for (const auto& [m, rows] : months) derived[{t.name, m}] = enrich::compute_derived_row(t, m, rows);
  }
}

DocumentOutcome Vault::ingest_one(const ingest::RawDocument& doc, std::vector<std::string>& created) {
  DocumentOutcome out;
  out.doc_id = doc.doc_id;
  if (state_.documents.contains(doc.doc_id)) {
    throw Error(Errc::duplicate_document, "document '" + doc.doc_id + "' was already ingested");
  }
  VaultState next = state_;
  auto sets = ingest::parse_document(doc, next.registry.dictionary());
  fault("parse");
  for (auto& s : sets) s = schema::resolve_entities(s, next.synonyms);
  fault("resolve");

  bool object = doc.declared_format == ingest::DocumentFormat::opaque_binary;
  Batch batch(next, state_, store_);
  auto policies = next.policies.storage_policies();
  std::vector<TableSchema> made;
  if (!object) {
    for (const auto& s : sets) {
      for (auto& t : next.registry.ensure_tables(s, policies)) made.push_back(std::move(t));
    }
  }
  for (auto& t : next.registry.ensure_derived(policies)) made.push_back(std::move(t));
  DerivedRows derived;
  materialize(next, batch, made, derived);
  for (const auto& t : made) add_unique(created, t.name);
  fault("ensure_tables");

  std::vector<schema::SchemaTag> tags;
  if (!object) {
    for (const auto& s : sets) {
      auto st = next.registry.make_schema_tags(s);
      tags.insert(tags.end(), st.begin(), st.end());
    }
  }
  fault("schema_tags");

  query::QueryEngine reader(state_, state_.registry.dictionary(), store_);
  auto enriched = enrich::apply_ingest_enrichment(
      tags, next.registry, next.policies.enrichment_policies(), [&](const std::string& base, Month m) {
        std::vector<std::vector<Binding>> rows;
        if (state_.registry.find(base) == nullptr) return rows;
        for (auto& r : reader.rows_in_dates(base, Value::date(m.first_day()), Value::date(m.last_day()))) {
          rows.push_back(std::move(r.cells));
        }
        return rows;
      });
  fault("enrich");

  DocumentRecord rec{doc.doc_id, doc.source_label, {}, {}};
  for (const auto& tag : enriched) {
    const auto* t = next.registry.find(tag.table_name);
    if (t->is_derived) {
      derived[{t->name, tag.find(kDateColumn)->value.as_month()}] = tag;
      continue;
    }
    rec.rows.push_back({t->name, batch.put_row(t->name, tag.bindings)});
    ++out.rows_added;
    add_unique(out.tables, t->name);
  }
  for (const auto& [key, tag] : derived) {
    batch.upsert_derived(*next.registry.find(key.first), tag);
    ++out.derived_rows_updated;
    add_unique(out.tables, key.first);
  }
  if (object) {
    const auto& set = sets.at(0);
    const auto* cls = set.find(ingest::kObjectClass);
    std::string object_class = cls ? cls->value.str() : "Unclassified";
    std::vector<Binding> envelope;
    for (const auto& t : set.tags) envelope.push_back(Binding{t.keyword, t.value, Provenance::source});
    rec.objects.push_back(batch.put_object(object_class, std::move(envelope), doc.content));
    next.object_classes.insert(object_class);
    ++out.objects_added;
  }
  next.documents[doc.doc_id] = std::move(rec);
  commit(next, batch);
  out.ok = true;
  return out;
}

IngestReport Vault::upload(const std::vector<ingest::RawDocument>& docs) {
  std::unique_lock lock(mu_);
  IngestReport report;
  for (const auto& doc : docs) {
    DocumentOutcome out;
    try {
      if (std::filesystem::exists(pending_path())) recover_locked();
      out = ingest_one(doc, report.tables_created);
    } catch (const Error& e) {
      out = DocumentOutcome{};
      out.doc_id = doc.doc_id;
      out.error_code = std::string(errc_name(e.code()));
      out.message = e.what();
    }
    journal({{"event", "upload"},
             {"doc", doc.doc_id},
             {"ok", out.ok},
             {"error", out.error_code},
             {"rows", out.rows_added},
             {"derived", out.derived_rows_updated},
             {"objects", out.objects_added}});
    report.documents.push_back(std::move(out));
  }
  return report;
}

IngestReport Vault::upload_manifest(const std::filesystem::path& manifest) {
  auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  return upload(ingest::load_manifest(manifest, Timestamp{now.time_since_epoch()}));
}

std::vector<std::string> Vault::learn_locked() {
  if (std::filesystem::exists(pending_path())) recover_locked();
  VaultState next = state_;
  Batch batch(next, state_, store_);
  auto made = next.registry.ensure_derived(next.policies.storage_policies());
  std::size_t indexes_before = next.indexes.all().size();
  DerivedRows derived;
  materialize(next, batch, made, derived);
  if (made.empty() && next.indexes.all().size() == indexes_before) return {};
  for (const auto& [key, tag] : derived) batch.upsert_derived(*next.registry.find(key.first), tag);
  commit(next, batch);
  std::vector<std::string> names;
  for (const auto& t : made) names.push_back(t.name);
  journal({{"event", "materialize"}, {"tables", names}});
  return names;
}

std::vector<std::string> Vault::learn() {
  std::unique_lock lock(mu_);
  return learn_locked();
}

// ---- queries ---------------------------------------------------------------

QueryOutcome Vault::query(const std::string& text) {
  {
    std::unique_lock lock(mu_);
    if (std::filesystem::exists(pending_path())) recover_locked();
  }
  query::ResultSet result;
  try {
    std::shared_lock lock(mu_);
    query::Vocabulary vocab{&state_.registry.dictionary(), &state_.synonyms};
    auto q = query::parse_query(text, vocab);
    query::QueryEngine engine(state_, state_.registry.dictionary(), store_);
    result = engine.execute(q);
  } catch (const Error& e) {
    journal({{"event", "query"}, {"text", text}, {"error", errc_name(e.code())}});
    throw;
  }
  return finish_query(text, std::move(result));
}

QueryOutcome Vault::share(const std::string& condition) {
  std::string label = to_lower(trim(condition));
  std::string text = "share '" + label + "'";
  {
    std::unique_lock lock(mu_);
    if (std::filesystem::exists(pending_path())) recover_locked();
  }
  query::ResultSet result;
  try {
    std::shared_lock lock(mu_);
    query::Query q;
    q.kind = query::QueryKind::share;
    q.scope = label;
    q.condition_scope = true;
    query::QueryEngine engine(state_, state_.registry.dictionary(), store_);
    result = engine.execute(q);
  } catch (const Error& e) {
    journal({{"event", "share"}, {"text", text}, {"error", errc_name(e.code())}});
    throw;
  }
  return finish_query(text, std::move(result));
}

QueryOutcome Vault::finish_query(const std::string& text, query::ResultSet result) {
  std::unique_lock lock(mu_);
  QueryOutcome out;
  auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  if (result.shape) state_.policies.record_query(*result.shape);
  for (const auto& t : result.tables_used) state_.policies.note_table_use(t, Timestamp{now.time_since_epoch()});

  for (const auto& x : result.extrapolations) {
    if (state_.blocked.contains(x.target)) continue;
    PendingConfirmation* existing = nullptr;
    for (auto& p : state_.proposals) {
      if (p.target == x.target && p.status == ProposalStatus::pending) existing = &p;
    }
    if (existing == nullptr) {
      state_.proposals.push_back(PendingConfirmation{"p" + std::to_string(state_.next_proposal++), x.target,
                                                     x.value, x.source_table, x.source_handle,
                                                     ProposalStatus::pending});
      existing = &state_.proposals.back();
    } else {
      existing->value = x.value;
      existing->source_table = x.source_table;
      existing->source_handle = x.source_handle;
    }
    out.proposals.push_back(*existing);
  }

  out.report_id = "r" + std::to_string(state_.next_report++);
  json report = result_to_json(result);
  report["id"] = out.report_id;
  report["query"] = text;
  report["created_ms"] = now_ms();
  write_file_atomic(cfg_.data_dir / "reports" / (out.report_id + ".json"), report.dump(2));
  write_file_atomic(cfg_.data_dir / "reports" / (out.report_id + ".txt"),
                    "query: " + text + "\n" + result_to_text(result));
  persist_locked();
  journal({{"event", result.query.kind == query::QueryKind::share ? "share" : "query"},
           {"text", text},
           {"rows", result.rows.size()},
           {"report", out.report_id}});

  if (cfg_.auto_materialize && result.shape) {
    try {
      out.materialized = learn_locked();
    } catch (const Error& e) {
      journal({{"event", "materialize"}, {"error", errc_name(e.code())}, {"message", e.what()}});
    }
  }
  out.result = std::move(result);
  return out;
}

policy::SharingPolicy Vault::define_sharing(const std::string& condition,
                                            const std::vector<policy::ShareItem>& items) {
  std::unique_lock lock(mu_);
  policy::SharingPolicy p;
  p.condition_label = condition;
  p.included = items;
  auto stored = state_.policies.add_sharing_policy(std::move(p));
  persist_locked();
  journal({{"event", "define_sharing"}, {"condition", stored.condition_label}, {"version", stored.version}});
  return stored;
}

// ---- confirmations ---------------------------------------------------------

std::vector<PendingConfirmation> Vault::pending() const {
  std::shared_lock lock(mu_);
  std::vector<PendingConfirmation> out;
  for (const auto& p : state_.proposals) {
    if (p.status == ProposalStatus::pending) out.push_back(p);
  }
  return out;
}

PendingConfirmation Vault::confirm(const std::string& proposal_id, bool accept) {
  std::unique_lock lock(mu_);
  if (std::filesystem::exists(pending_path())) recover_locked();
  PendingConfirmation* p = state_.find_proposal(proposal_id);
  if (p == nullptr) throw Error(Errc::unknown_proposal, "no proposal '" + proposal_id + "'");
  if (p->status != ProposalStatus::pending) {
    throw Error(Errc::already_decided, "proposal '" + proposal_id + "' is already " +
                                           std::string(proposal_status_name(p->status)));
  }
  if (!accept) {
    p->status = ProposalStatus::rejected;
    state_.blocked.insert(p->target);
    PendingConfirmation done = *p;
    persist_locked();
    journal({{"event", "confirm"}, {"proposal", proposal_id}, {"decision", "reject"}});
    return done;
  }

  VaultState next = state_;
  PendingConfirmation target = *p;
  const auto* t = next.registry.find(target.target.table);
  if (t == nullptr) throw Error(Errc::unknown_table, "no table '" + target.target.table + "'");
  query::QueryEngine reader(state_, state_.registry.dictionary(), store_);
  auto raw = store_.get_rows(state_.keys.table_id(t->name), {target.target.handle});
  if (raw.empty()) throw Error(Errc::unknown_row, "row of proposal '" + proposal_id + "' is gone");
  auto old_cells = codec::decrypt_row(state_.keys, *t, raw[0]);
  auto cells = old_cells;
  auto cell = std::find_if(cells.begin(), cells.end(),
                           [&](const Binding& b) { return b.attribute == target.target.column; });
  if (cell == cells.end()) throw Error(Errc::invalid_argument, "no column " + target.target.column);
  if (!cell->value.is_null()) {
    throw Error(Errc::already_decided, "cell of proposal '" + proposal_id + "' already holds a value");
  }
  cell->value = target.value;
  cell->provenance = Provenance::extrapolated;

  Batch batch(next, state_, store_);
  batch.replace_row(t->name, target.target.handle, old_cells, cells);
  const Binding* date = find_binding(cells, kDateColumn);
  auto derived = next.registry.derived_of(t->name);
  if (date != nullptr && date->value.kind() == ValueKind::date && !derived.empty()) {
    Month m = Month::of(date->value.as_date());
    std::vector<std::vector<Binding>> month_rows;
    for (auto& r : reader.rows_in_dates(t->name, Value::date(m.first_day()), Value::date(m.last_day()))) {
      month_rows.push_back(r.handle == target.target.handle ? cells : std::move(r.cells));
    }
    for (const auto* d : derived) batch.upsert_derived(*d, enrich::compute_derived_row(*d, m, month_rows));
  }
  next.find_proposal(proposal_id)->status = ProposalStatus::accepted;
  commit(next, batch);
  journal({{"event", "confirm"}, {"proposal", proposal_id}, {"decision", "accept"}});
  return *state_.find_proposal(proposal_id);
}

// ---- reports ---------------------------------------------------------------

json Vault::report(const std::string& report_id) const {
  bool valid = !report_id.empty() && std::all_of(report_id.begin(), report_id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c));
  });
  auto path = cfg_.data_dir / "reports" / (report_id + ".json");
  if (!valid || !std::filesystem::exists(path)) {
    throw Error(Errc::unknown_object, "no report '" + report_id + "'");
  }
  return json::parse(ingest::read_file(path));
}

std::string Vault::report_text(const std::string& report_id) const {
  report(report_id);
  return ingest::read_file(cfg_.data_dir / "reports" / (report_id + ".txt"));
}

json proposal_to_json(const PendingConfirmation& p) {
  return {{"id", p.id},
          {"table", p.target.table},
          {"handle", std::to_string(p.target.handle)},
          {"column", p.target.column},
          {"value", value_to_json(p.value)},
          {"source_table", p.source_table},
          {"source_handle", std::to_string(p.source_handle)},
          {"status", proposal_status_name(p.status)}};
}

json ingest_report_to_json(const IngestReport& r) {
  json docs = json::array();
  for (const auto& d : r.documents) {
    json j = {{"doc_id", d.doc_id}, {"ok", d.ok}};
    if (d.ok) {
      j["tables"] = d.tables;
      j["rows_added"] = d.rows_added;
      j["derived_rows_updated"] = d.derived_rows_updated;
      j["objects_added"] = d.objects_added;
    } else {
      j["error"] = d.error_code;
      j["message"] = d.message;
    }
    docs.push_back(std::move(j));
  }
  return {{"documents", docs},
          {"ingested", r.ingested()},
          {"failed", r.failed()},
          {"tables_created", r.tables_created}};
}

json result_to_json(const query::ResultSet& r) {
  json rows = json::array();
  std::set<std::string> categories;
  for (const auto& row : r.rows) {
    json cells = json::array();
    for (const auto& c : row.cells) {
      cells.push_back({{"column", c.attribute},
                       {"value", value_to_json(c.value)},
                       {"provenance", provenance_name(c.provenance)}});
    }
    json j = {{"item", row.item_id}, {"category", row.category}, {"table", row.table}, {"cells", cells}};
    if (row.content) {
      j["content_hex"] = to_hex(*row.content);
      j["content_bytes"] = row.content->size();
    }
    rows.push_back(std::move(j));
    categories.insert(row.category);
  }
  json manifest = json::array();
  for (const auto& m : r.manifest) manifest.push_back({{"item", m.item_id}, {"category", m.category}});
  json extrapolations = json::array();
  for (const auto& x : r.extrapolations) {
    extrapolations.push_back({{"table", x.target.table},
                              {"handle", std::to_string(x.target.handle)},
                              {"column", x.target.column},
                              {"value", value_to_json(x.value)},
                              {"source_table", x.source_table},
                              {"source_handle", std::to_string(x.source_handle)}});
  }
  json plan = json::array();
  for (const auto& s : r.plan.steps) {
    plan.push_back({{"step", query::step_name(s.kind)}, {"table", s.table}, {"column", s.column}, {"detail", s.detail}});
  }
  json j = {{"kind", query::query_kind_name(r.query.kind)},
            {"scope", r.query.scope},
            {"rows", rows},
            {"extrapolations", extrapolations},
            {"plan", plan},
            {"tables_used", r.tables_used}};
  if (r.query.condition_scope) {
    j["condition"] = r.condition;
    j["needs_user_input"] = r.needs_user_input;
    j["policy_version"] = r.policy_version;
    j["manifest"] = manifest;
    j["released_categories"] = categories;
  }
  return j;
}

std::string result_to_text(const query::ResultSet& r) {
  std::ostringstream out;
  if (r.needs_user_input) {
    out << "no sharing policy for '" << r.condition << "'; define the categories to release\n";
    return out.str();
  }
  std::string current;
  bool marked = false;
  for (const auto& row : r.rows) {
    std::string header;
    for (const auto& c : row.cells) header += (header.empty() ? "" : " | ") + c.attribute;
    std::string label = row.table + " [" + row.category + "]";
    if (label + header != current) {
      current = label + header;
      out << "\n" << label << "\n" << header << "\n";
    }
    std::string line;
    for (const auto& c : row.cells) {
      std::string v = c.value.is_null() ? "NULL" : c.value.str();
      if (c.provenance == Provenance::extrapolated) {
        v += "*";
        marked = true;
      }
      line += (line.empty() ? "" : " | ") + v;
    }
    if (row.content) line += (line.empty() ? "" : " | ") + std::to_string(row.content->size()) + " bytes";
    out << line << "\n";
  }
  if (r.rows.empty()) out << "(no rows)\n";
  if (marked) out << "\n* extrapolated by the system, not from a source document\n";
  if (r.query.condition_scope) {
    out << "\nmanifest (" << r.manifest.size() << " items):\n";
    for (const auto& m : r.manifest) out << "  " << m.item_id << "  " << m.category << "\n";
  }
  return out.str();
}

}  // namespace healthvault
