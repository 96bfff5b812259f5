#include <algorithm>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "healthvault/crypto_layer.hpp"
#include "healthvault/errors.hpp"

using namespace healthvault;
using namespace healthvault::crypto;

using hvtest::error_of;

TEST_SUITE("crypto_layer") {
  TEST_CASE("deterministic: equality contract and round trip") {
    KeyRing ring;
    const auto& k = ring.column_key("Vital", "Date", Scheme::deterministic);
    auto d = Value::date(Date::from_ymd(2023, 10, 10));
    CHECK(det_encrypt(k, d) == det_encrypt(k, d));
    CHECK(det_encrypt(k, Value::integer(90)) != det_encrypt(k, Value::integer(220)));
    auto ct = det_encrypt(k, Value::text("disc herniation"));
    CHECK(det_decrypt(k, ct) == Value::text("disc herniation"));
    CHECK(ct.column == ring.column_id("Vital", "Date"));
  }

  TEST_CASE("deterministic: different keys are unlinkable, tamper detected") {
    KeyRing ring;
    const auto& a = ring.column_key("T", "a", Scheme::deterministic);
    const auto& b = ring.column_key("T", "b", Scheme::deterministic);
    auto v = Value::text("same");
    CHECK(det_encrypt(a, v).bytes != det_encrypt(b, v).bytes);
    auto ct = det_encrypt(a, v);
    ct.bytes[ct.bytes.size() - 1] ^= 1;
    CHECK(error_of([&] { det_decrypt(a, ct); }) == Errc::decrypt_auth_failure);
    CHECK(error_of([&] { det_decrypt(b, det_encrypt(a, v)); }) == Errc::decrypt_auth_failure);
  }

  TEST_CASE("scheme mismatches") {
    KeyRing ring;
    const auto& det = ring.column_key("T", "d", Scheme::deterministic);
    const auto& opq = ring.column_key("T", "o", Scheme::opaque);
    CHECK(error_of([&] { opaque_encrypt(det, "x"); }) == Errc::wrong_scheme);
    CHECK(error_of([&] { det_encrypt(opq, Value::integer(1)); }) == Errc::wrong_scheme);
    CHECK(error_of([&] { ring.column_key("T", "d", Scheme::opaque); }) == Errc::wrong_scheme);
    auto ct = opaque_encrypt(opq, "x");
    CHECK(error_of([&] { det_decrypt(det, ct); }) == Errc::wrong_scheme);
  }

  TEST_CASE("opaque: randomized, authenticated, exact") {
    KeyRing ring;
    const auto& k = ring.column_key("__objects", "payload", Scheme::opaque);
    std::string payload(1 << 20, '\0');
    std::mt19937 rng(1);
    for (auto& c : payload) c = static_cast<char>(rng());
    auto a = opaque_encrypt(k, payload);
    auto b = opaque_encrypt(k, payload);
    CHECK(a != b);
    CHECK(opaque_decrypt(k, a) == payload);
    a.bytes[100] ^= 0x10;
    CHECK(error_of([&] { opaque_decrypt(k, a); }) == Errc::decrypt_auth_failure);
  }

  TEST_CASE("ope: byte order equals plaintext order on a random sample") {
    KeyRing ring;
    const auto& k = ring.column_key("Vital", "Cholesterol", Scheme::order_preserving);
    auto& dict = ring.ope("Vital", "Cholesterol");
    std::mt19937_64 rng(42);
    std::vector<std::int64_t> values(1000);
    for (auto& v : values) v = static_cast<std::int64_t>(rng() % 2'000'001) - 1'000'000;
    for (auto v : values) ope_encrypt(k, dict, Value::integer(v));
    std::vector<std::pair<std::string, std::int64_t>> cts;
    for (auto v : values) cts.emplace_back(ope_encrypt_existing(k, dict, Value::integer(v)).bytes, v);
    std::sort(cts.begin(), cts.end());
    for (std::size_t i = 1; i < cts.size(); ++i) CHECK(cts[i - 1].second <= cts[i].second);
    CHECK(ope_encrypt(k, dict, Value::integer(200)).bytes <
          ope_encrypt(k, dict, Value::integer(220)).bytes);
    CHECK(ope_encrypt(k, dict, Value::integer(5)) == ope_encrypt(k, dict, Value::integer(5)));
    for (auto v : {values[0], values[500]}) {
      CHECK(ope_decrypt(k, dict, ope_encrypt_existing(k, dict, Value::integer(v))) ==
            Value::integer(v));
    }
  }

  TEST_CASE("ope: domain limits") {
    KeyRing ring;
    const auto& k = ring.column_key("T", "c", Scheme::order_preserving);
    auto& dict = ring.ope("T", "c");
    CHECK(error_of([&] { ope_encrypt(k, dict, Value::text("abc")); }) == Errc::domain_overflow);
    CHECK(error_of([&] { ope_encrypt(k, dict, Value::integer(2'000'000'000'000'000)); }) ==
          Errc::domain_overflow);
    CHECK(error_of([&] { ope_encrypt(k, dict, Value::date(Date::from_ymd(1800, 1, 1))); }) ==
          Errc::domain_overflow);
    CHECK_NOTHROW(ope_encrypt(k, dict, Value()));
  }

  TEST_CASE("ope: exhaustion re-spaces codes and bumps the generation") {
    KeyRing ring;
    ring.set_ope_code_bits(10);
    const auto& k = ring.column_key("T", "c", Scheme::order_preserving);
    auto& dict = ring.ope("T", "c");
    std::uint32_t gen0 = dict.generation();
    auto stale = ope_encrypt(k, dict, Value::integer(0));
    for (int i = 1; i < 400; ++i) ope_encrypt(k, dict, Value::integer(i % 2 ? i : -i));
    CHECK(dict.generation() > gen0);
    CHECK(error_of([&] { ope_decrypt(k, dict, stale); }) == Errc::decrypt_auth_failure);
    std::vector<std::uint64_t> codes;
    for (const auto& [v, c] : dict.entries()) codes.push_back(c);
    CHECK(std::is_sorted(codes.begin(), codes.end()));
    CHECK(std::adjacent_find(codes.begin(), codes.end()) == codes.end());
    for (int i = 1500; i < 1530; ++i) ope_encrypt(k, dict, Value::integer(i));
    CHECK(error_of([&] {
            for (int i = 2000; i < 3000; ++i) ope_encrypt(k, dict, Value::integer(i));
          }) == Errc::domain_overflow);
  }

  TEST_CASE("ope: sequential appends stay cheap in the full code space") {
    KeyRing ring;
    const auto& k = ring.column_key("T", "d", Scheme::order_preserving);
    auto& dict = ring.ope("T", "d");
    for (int i = 0; i < 5000; ++i) ope_encrypt(k, dict, Value::integer(i));
    for (int i = 0; i < 5000; ++i) ope_encrypt(k, dict, Value::integer(-i - 1));
    CHECK(dict.generation() == 0);
  }

  TEST_CASE("ope: range bounds are exact and never mutate") {
    KeyRing ring;
    const auto& k = ring.column_key("Vital", "Cholesterol", Scheme::order_preserving);
    auto& dict = ring.ope("Vital", "Cholesterol");
    std::vector<int> chol = {190, 150, 200, 220};
    std::vector<std::string> cts;
    for (int c : chol) cts.push_back(ope_encrypt(k, dict, Value::integer(c)).bytes);
    auto r = ope_range(k, dict, Value::integer(200), Value::integer(230));
    REQUIRE(r);
    std::vector<int> hits;
    for (std::size_t i = 0; i < chol.size(); ++i) {
      if (r->lo.bytes <= cts[i] && cts[i] <= r->hi.bytes) hits.push_back(chol[i]);
    }
    CHECK(hits == std::vector<int>{200, 220});
    CHECK(dict.size() == 4);
    CHECK_FALSE(ope_range(k, dict, Value::integer(300), Value::integer(400)));
    CHECK_FALSE(ope_range(k, dict, Value::integer(201), Value::integer(219)));
    auto open = ope_range(k, dict, std::nullopt, Value::integer(190));
    REQUIRE(open);
    CHECK(open->lo.bytes <= cts[1]);
    CHECK(cts[0] <= open->hi.bytes);
    CHECK(cts[2] > open->hi.bytes);
  }

  TEST_CASE("pseudonyms are keyed and name-distinct") {
    KeyRing a;
    KeyRing b;
    CHECK(a.table_id("Vital") == a.table_id("Vital"));
    CHECK(a.table_id("Vital") != b.table_id("Vital"));
    CHECK(a.table_id("X") != a.column_id("t", "X"));
    CHECK(a.column_id("Vital", "Date") != a.column_id("Notes", "Date"));
  }

  TEST_CASE("dictionary restore validates order") {
    OpeDictionary d;
    CHECK_NOTHROW(d.restore(3, {{Value::integer(1), 10}, {Value::integer(2), 20}}));
    CHECK(d.generation() == 3);
    CHECK_THROWS_AS(d.restore(0, {{Value::integer(1), 20}, {Value::integer(2), 10}}), Error);
  }
}
