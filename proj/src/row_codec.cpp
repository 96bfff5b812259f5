#include "healthvault/row_codec.hpp"

#include "healthvault/errors.hpp"

namespace healthvault::codec {

using schema::kProvenanceColumn;

namespace {

const crypto::ColumnKey& key_of(const crypto::KeyRing& ring, const std::string& table,
                                const std::string& column) {
  const auto* k = ring.find(table, column);
  if (k == nullptr) {
    throw Error(Errc::unknown_table, "no key for column " + table + "." + column);
  }
  return *k;
}

std::string encode_provenance(const std::vector<Binding>& cells) {
  std::string out;
  for (const auto& c : cells) {
    if (c.provenance == Provenance::source) continue;
    out += c.attribute;
    out += '=';
    out += provenance_name(c.provenance);
    out += '\n';
  }
  return out;
}

}  // namespace

std::vector<store::ColumnSpec> column_specs(crypto::KeyRing& ring,
                                            const schema::TableSchema& table) {
  std::vector<store::ColumnSpec> out;
  for (const auto& c : table.columns) {
    const auto& k = ring.column_key(table.name, c.name, c.scheme);
    if (c.scheme == Scheme::order_preserving) ring.ope(table.name, c.name);
    out.push_back({k.id, c.scheme});
  }
  return out;
}

void register_ordered_values(crypto::KeyRing& ring, const schema::TableSchema& table,
                             const std::vector<Binding>& cells) {
  for (const auto& c : table.columns) {
    if (c.scheme != Scheme::order_preserving) continue;
    const Binding* b = find_binding(cells, c.name);
    Value v = b ? b->value : Value();
    const auto& k = key_of(ring, table.name, c.name);
    crypto::ope_encrypt(k, ring.ope(table.name, c.name), v);
  }
}

store::EncryptedRow encrypt_row(const crypto::KeyRing& ring, const schema::TableSchema& table,
                                const std::vector<Binding>& cells, store::Handle handle) {
  store::EncryptedRow row{handle, {}};
  for (const auto& c : table.columns) {
    const auto& k = key_of(ring, table.name, c.name);
    Value v;
    if (c.name == kProvenanceColumn) {
      v = Value::text(encode_provenance(cells));
    } else if (const Binding* b = find_binding(cells, c.name)) {
      v = b->value;
    }
    switch (c.scheme) {
      case Scheme::deterministic:
        row.cells.push_back(crypto::det_encrypt(k, v));
        break;
      case Scheme::order_preserving: {
        const auto* dict = ring.find_ope(table.name, c.name);
        if (dict == nullptr) throw Error(Errc::corrupt_state, "missing order dictionary");
        row.cells.push_back(crypto::ope_encrypt_existing(k, *dict, v));
        break;
      }
      case Scheme::opaque:
        row.cells.push_back(crypto::opaque_encrypt(k, encode_value(v)));
        break;
    }
  }
  return row;
}

std::vector<Binding> decrypt_row(const crypto::KeyRing& ring, const schema::TableSchema& table,
                                 const store::EncryptedRow& row) {
  std::vector<Binding> out;
  std::string provenance;
  for (const auto& c : table.columns) {
    const auto& k = key_of(ring, table.name, c.name);
    const Ciphertext* ct = row.cell(k.id);
    if (ct == nullptr) throw Error(Errc::corrupt_state, "row lacks column " + c.name);
    Value v;
    switch (c.scheme) {
      case Scheme::deterministic:
        v = crypto::det_decrypt(k, *ct);
        break;
      case Scheme::order_preserving: {
        const auto* dict = ring.find_ope(table.name, c.name);
        if (dict == nullptr) throw Error(Errc::corrupt_state, "missing order dictionary");
        v = crypto::ope_decrypt(k, *dict, *ct);
        break;
      }
      case Scheme::opaque:
        v = decode_value(crypto::opaque_decrypt(k, *ct));
        break;
    }
    if (c.name == kProvenanceColumn) {
      if (v.kind() == ValueKind::text) provenance = v.as_text();
      continue;
    }
    Provenance p = Provenance::source;
    if (table.is_derived && c.name != schema::kDateColumn) p = Provenance::computed_aggregate;
    out.push_back(Binding{c.name, std::move(v), p});
  }
  for (const auto& line : split(provenance, '\n')) {
    auto eq = line.rfind('=');
    if (eq == std::string::npos) continue;
    auto p = parse_provenance(line.substr(eq + 1));
    std::string col = line.substr(0, eq);
    for (auto& b : out) {
      if (b.attribute == col && p) b.provenance = *p;
    }
  }
  return out;
}

Ciphertext point_literal(const crypto::KeyRing& ring, const std::string& table,
                         const std::string& column, const Value& v) {
  const auto& k = key_of(ring, table, column);
  if (k.scheme != Scheme::deterministic) {
    throw Error(Errc::scheme_mismatch, table + "." + column + " has no equality encryption");
  }
  return crypto::det_encrypt(k, v);
}

std::optional<crypto::OpeRange> range_literal(const crypto::KeyRing& ring,
                                              const std::string& table,
                                              const std::string& column,
                                              const std::optional<Value>& lo,
                                              const std::optional<Value>& hi) {
  const auto& k = key_of(ring, table, column);
  if (k.scheme != Scheme::order_preserving) {
    throw Error(Errc::scheme_mismatch, table + "." + column + " has no order-preserving encryption");
  }
  const auto* dict = ring.find_ope(table, column);
  if (dict == nullptr) return std::nullopt;
  return crypto::ope_range(k, *dict, lo, hi);
}

std::string encode_envelope(const std::vector<Binding>& tags, const std::string& content) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(tags.size()));
  for (const auto& t : tags) {
    w.bytes(t.attribute);
    w.bytes(encode_value(t.value));
  }
  w.bytes(content);
  return std::move(w).str();
}

std::pair<std::vector<Binding>, std::string> decode_envelope(std::string_view bytes) {
  ByteReader r(bytes);
  std::vector<Binding> tags(r.u32());
  for (auto& t : tags) {
    t.attribute = r.bytes();
    t.value = decode_value(r.bytes());
  }
  std::string content = r.bytes();
  r.expect_done();
  return {std::move(tags), std::move(content)};
}

}  // namespace healthvault::codec
