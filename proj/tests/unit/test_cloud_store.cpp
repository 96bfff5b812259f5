#include <fstream>
#include <regex>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "healthvault/store/client.hpp"
#include "healthvault/store/engine.hpp"
#include "healthvault/store/server.hpp"

using namespace healthvault;
using namespace healthvault::store;
using hvtest::error_of;

namespace {

Pseudonym pid(std::uint8_t tag) {
  Pseudonym p;
  p.bytes.fill(tag);
  return p;
}

const TableId kTable = pid(0x10);
const ColumnId kDate = pid(0x21);
const ColumnId kChol = pid(0x22);
const ColumnId kNote = pid(0x23);

std::vector<ColumnSpec> columns() {
  return {{kDate, Scheme::deterministic}, {kChol, Scheme::order_preserving}, {kNote, Scheme::opaque}};
}

std::string be(std::uint64_t v) {
  ByteWriter w;
  w.u64(v);
  return std::move(w).str() + std::string(8, '\x5a');
}

EncryptedRow row(const std::string& date, std::uint64_t chol, const std::string& note) {
  return EncryptedRow{0,
                      {{Scheme::deterministic, kDate, date},
                       {Scheme::order_preserving, kChol, be(chol)},
                       {Scheme::opaque, kNote, note}}};
}

std::vector<std::uint64_t> chol_codes(const std::vector<EncryptedRow>& rows) {
  std::vector<std::uint64_t> out;
  for (const auto& r : rows) {
    ByteReader br(r.cell(kChol)->bytes);
    out.push_back(br.u64());
  }
  return out;
}

void seed(StoreEngine& e) {
  e.create_table(kTable, columns());
  e.put_rows(kTable, {row("d1", 190, "a"), row("d2", 150, "b"), row("d3", 200, "c"),
                      row("d4", 220, "d")});
}

Ciphertext bound(std::uint64_t code, char fill) {
  ByteWriter w;
  w.u64(code);
  return {Scheme::order_preserving, kChol, std::move(w).str() + std::string(8, fill)};
}

}  // namespace

TEST_SUITE("cloud_store") {
  TEST_CASE("point, range and full scans") {
    StoreEngine e;
    seed(e);
    auto hit = e.scan_point(kTable, kDate, {Scheme::deterministic, kDate, "d3"});
    REQUIRE(hit.size() == 1);
    CHECK(chol_codes(hit) == std::vector<std::uint64_t>{200});
    CHECK(chol_codes(e.scan_range(kTable, kChol, bound(200, '\0'), bound(230, '\xff'))) ==
          std::vector<std::uint64_t>{200, 220});
    CHECK(e.scan_all(kTable).size() == 4);
    CHECK(error_of([&] { e.scan_range(kTable, kChol, bound(230, '\0'), bound(200, '\xff')); }) ==
          Errc::inverted_range);
    CHECK(error_of([&] { e.scan_point(kTable, kChol, {Scheme::deterministic, kChol, "x"}); }) ==
          Errc::scheme_mismatch);
    CHECK(error_of([&] {
            e.scan_range(kTable, kDate, {Scheme::order_preserving, kDate, "a"},
                         {Scheme::order_preserving, kDate, "b"});
          }) == Errc::scheme_mismatch);
    CHECK(error_of([&] { e.scan_all(pid(0x99)); }) == Errc::unknown_table);
  }

  TEST_CASE("rows must match their table") {
    StoreEngine e;
    seed(e);
    auto bad = row("d5", 1, "x");
    bad.cells[0].scheme = Scheme::opaque;
    CHECK(error_of([&] { e.put_rows(kTable, {bad}); }) == Errc::scheme_mismatch);
    CHECK(error_of([&] { e.put_rows(kTable, {EncryptedRow{0, {}}}); }) == Errc::invalid_argument);
    CHECK(error_of([&] { e.put_rows(pid(0x77), {row("d", 1, "x")}); }) == Errc::unknown_table);
    auto r = row("d9", 9, "x");
    r.handle = 999;
    CHECK(error_of([&] { e.replace_rows(kTable, {r}); }) == Errc::unknown_row);
    CHECK(error_of([&] { e.create_table(kTable, {{kDate, Scheme::opaque}}); }) ==
          Errc::invalid_argument);
    CHECK_NOTHROW(e.create_table(kTable, columns()));
  }

  TEST_CASE("replace keeps the handle") {
    StoreEngine e;
    seed(e);
    auto first = e.scan_all(kTable).front();
    auto upd = row("d1", 191, "a2");
    upd.handle = first.handle;
    e.replace_rows(kTable, {upd});
    auto got = e.get_rows(kTable, {first.handle});
    CHECK(chol_codes(got) == std::vector<std::uint64_t>{191});
    CHECK(e.row_count(kTable) == 4);
  }

  TEST_CASE("commit_batch is atomic and idempotent") {
    StoreEngine e;
    BatchOp create{MessageKind::create_table, kTable, columns(), {}, {}};
    BatchOp put{MessageKind::put_rows, kTable, {}, {row("d1", 1, "a"), row("d2", 2, "b")}, {}};
    BatchOp bad{MessageKind::replace_rows, kTable, {}, {row("d3", 3, "c")}, {}};
    bad.rows[0].handle = 42;
    CHECK(error_of([&] { e.commit_batch(7, {create, put, bad}); }) == Errc::unknown_row);
    CHECK(e.table_count() == 0);
    CHECK_FALSE(e.txn_status(7).committed);

    BatchOp obj{MessageKind::put_object, {}, {}, {},
                {0, {Scheme::deterministic, pid(1), "mri"}, {Scheme::opaque, pid(2), "blob"}}};
    auto hs = e.commit_batch(7, {create, put, obj});
    REQUIRE(hs.size() == 3);
    CHECK(hs[1].size() == 2);
    CHECK(hs[2].size() == 1);
    auto again = e.commit_batch(7, {create, put, obj});
    CHECK(again == hs);
    CHECK(e.row_count(kTable) == 2);
    auto st = e.txn_status(7);
    CHECK(st.committed);
    CHECK(st.handles == hs);
    CHECK(e.list_objects({Scheme::deterministic, pid(1), "mri"}) == hs[2]);
    CHECK(e.get_object(hs[2][0]).payload.bytes == "blob");
    CHECK(error_of([&] { e.get_object(12345); }) == Errc::unknown_object);
  }

  TEST_CASE("persistence across restarts, torn tail and segment roll") {
    hvtest::TempDir dir;
    EngineOptions o;
    o.data_dir = dir.path();
    o.segment_bytes = 256;
    o.sync = false;
    std::vector<Handle> handles;
    {
      StoreEngine e(o);
      seed(e);
      for (int i = 0; i < 10; ++i) {
        auto hs = e.put_rows(kTable, {row("x" + std::to_string(i), 300 + i, "n")});
        handles.push_back(hs[0]);
      }
      e.commit_batch(99, {BatchOp{MessageKind::put_rows, kTable, {}, {row("y", 5, "z")}, {}}});
    }
    {
      StoreEngine e(o);
      CHECK(e.row_count(kTable) == 15);
      CHECK(e.txn_status(99).committed);
      CHECK(e.get_rows(kTable, {handles[3]}).size() == 1);
      auto h = e.put_rows(kTable, {row("after", 1, "n")})[0];
      CHECK(h > handles.back());
    }
    SegmentSet probe(dir.path(), "data", 256, false);
    auto files = probe.files();
    CHECK(files.size() > 1);
    {
      std::ofstream tail(files.back(), std::ios::app | std::ios::binary);
      tail << std::string("\x00\x00\x01\x00garbage", 11);
    }
    StoreEngine e(o);
    CHECK(e.row_count(kTable) == 16);
    CHECK_NOTHROW(e.put_rows(kTable, {row("more", 2, "n")}));
    StoreEngine again(o);
    CHECK(again.row_count(kTable) == 17);
  }

  TEST_CASE("damage before the last segment is reported") {
    hvtest::TempDir dir;
    EngineOptions o;
    o.data_dir = dir.path();
    o.segment_bytes = 64;
    o.sync = false;
    {
      StoreEngine e(o);
      seed(e);
      e.put_rows(kTable, {row("x", 1, "n")});
    }
    auto files = SegmentSet(dir.path(), "data", 64, false).files();
    REQUIRE(files.size() > 1);
    {
      std::fstream f(files.front(), std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(10);
      f.put('\x7f');
    }
    CHECK(error_of([&] { StoreEngine e(o); }) == Errc::corrupt_state);
  }

  TEST_CASE("observation log records every request body, even rejected ones") {
    hvtest::TempDir dir;
    EngineOptions o;
    o.data_dir = dir.path();
    o.sync = false;
    auto engine = std::make_shared<StoreEngine>(o);
    StoreClient client(std::make_shared<LoopbackTransport>(engine));
    client.create_table(kTable, columns());
    client.put_rows(kTable, {row("d1", 190, "secret-note")});
    CHECK(error_of([&] { client.scan_all(pid(0x55)); }) == Errc::unknown_table);
    auto log = client.dump_log();
    REQUIRE(log.size() == 4);
    CHECK(log[0].kind == MessageKind::create_table);
    CHECK(log[1].kind == MessageKind::put_rows);
    CHECK(log[1].body.find("secret-note") != std::string::npos);
    CHECK(log[2].kind == MessageKind::scan_all);
    CHECK(log[3].kind == MessageKind::dump_log);
    engine.reset();
    StoreEngine reopened(o);
    CHECK(reopened.log().size() == 4);
    CHECK(reopened.handle(std::string("\x63", 1))[0] != 0);
  }

  TEST_CASE("malformed requests get protocol errors") {
    StoreEngine e;
    CHECK(error_of([&] { unwrap_response(e.handle("")); }) == Errc::protocol_error);
    CHECK(error_of([&] { unwrap_response(e.handle(std::string("\x02\x01", 2))); }) ==
          Errc::protocol_error);
    CHECK(error_of([&] { unwrap_response(e.handle(std::string("\x0e\x00", 2))); }) ==
          Errc::protocol_error);
    CHECK(unwrap_response(e.handle(std::string("\x0e", 1))).empty());
  }

  TEST_CASE("tcp server and socket transport") {
    StoreEngine e;
    StoreServer server(e);
    server.start();
    REQUIRE(server.port() != 0);
    StoreClient client(open_transport("tcp:127.0.0.1:" + std::to_string(server.port())));
    client.ping();
    client.create_table(kTable, columns());
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] {
        StoreClient c(std::make_shared<SocketTransport>("127.0.0.1", server.port()));
        for (int i = 0; i < 25; ++i) c.put_rows(kTable, {row("t" + std::to_string(t), i, "n")});
      });
    }
    for (auto& th : threads) th.join();
    CHECK(client.scan_all(kTable).size() == 100);
    CHECK(error_of([&] { client.scan_all(pid(0x42)); }) == Errc::unknown_table);
    server.stop();
    CHECK(error_of([&] { client.ping(); }) == Errc::store_unavailable);
    StoreClient nowhere(std::make_shared<SocketTransport>("127.0.0.1", 1, 500));
    CHECK(error_of([&] { nowhere.ping(); }) == Errc::store_unavailable);
  }

  TEST_CASE("loopback transport can simulate an outage") {
    auto t = std::make_shared<LoopbackTransport>(std::make_shared<StoreEngine>());
    StoreClient c(t);
    c.ping();
    t->set_available(false);
    CHECK(error_of([&] { c.ping(); }) == Errc::store_unavailable);
    CHECK(error_of([] { open_transport("ftp:x"); }) == Errc::invalid_argument);
    CHECK(error_of([] { open_transport("tcp:host"); }) == Errc::invalid_argument);
  }

  TEST_CASE("store sources have no dependency on key material") {
    std::regex forbidden(R"(crypto_layer|sodium|KeyRing|ColumnKey|KeyBytes)");
    auto root = std::filesystem::path(HV_SOURCE_DIR);
    int scanned = 0;
    for (auto dir : {root / "src" / "store", root / "include" / "healthvault" / "store"}) {
      for (const auto& f : std::filesystem::directory_iterator(dir)) {
        std::string text = ingest::read_file(f.path());
        INFO(f.path().string());
        CHECK_FALSE(std::regex_search(text, forbidden));
        ++scanned;
      }
    }
    CHECK(scanned >= 8);
  }
}
