#include "doctest.h"
#include "healthvault/errors.hpp"
#include "healthvault/value.hpp"
#include "healthvault/wire.hpp"

using namespace healthvault;

TEST_SUITE("value") {
  TEST_CASE("two-digit and ISO dates normalize to the same calendar day") {
    auto a = parse_date("11/24/23");
    auto b = parse_date("2023-11-24");
    auto c = parse_date("11/24/2023");
    REQUIRE(a);
    REQUIRE(b);
    REQUIRE(c);
    CHECK(*a == *b);
    CHECK(*a == *c);
    CHECK(a->iso() == "2023-11-24");
    CHECK_FALSE(parse_date("13/01/23"));
    CHECK_FALSE(parse_date("02/30/23"));
  }

  TEST_CASE("month forms") {
    auto m = parse_month("November 2023");
    REQUIRE(m);
    CHECK(m->iso() == "2023-11");
    CHECK(m->display() == "11/23");
    CHECK(*parse_month("2023-11") == *m);
    CHECK(*parse_month("11/23") == *m);
    CHECK(m->first_day().iso() == "2023-11-01");
    CHECK(m->last_day().iso() == "2023-11-30");
    CHECK(Month::of(*parse_date("2024-02-29")).iso() == "2024-02");
  }

  TEST_CASE("decimal parsing keeps four fractional digits") {
    auto d = parse_decimal("70.25");
    REQUIRE(d);
    CHECK(d->scaled == 702500);
    CHECK(d->str() == "70.25");
    CHECK(parse_decimal("-1.5")->scaled == -15000);
    CHECK_FALSE(parse_decimal("1.23456"));
    CHECK_FALSE(parse_decimal("abc"));
  }

  TEST_CASE("null sorts first and kinds never compare equal") {
    CHECK(Value() < Value::integer(-5));
    CHECK(Value::integer(3) < Value::integer(4));
    CHECK(Value::integer(90) != Value::decimal(Decimal::from_integer(90)));
    CHECK(Value::text("a") < Value::text("b"));
  }

  TEST_CASE("encode/decode round trip for every kind") {
    std::vector<Value> values = {
        Value(),
        Value::integer(-42),
        Value::integer(220),
        Value::decimal(Decimal{123456}),
        Value::date(*parse_date("2023-10-10")),
        Value::month(Month::from_ym(2023, 11)),
        Value::time(*parse_time("08:30")),
        Value::text("disc herniation"),
        Value::text(std::string("\0bin\xff", 5)),
    };
    for (const auto& v : values) CHECK(decode_value(encode_value(v)) == v);
    CHECK_THROWS_AS(decode_value("\x09"), Error);
  }

  TEST_CASE("parse_as types or rejects") {
    CHECK(parse_as(ValueKind::integer, "90")->as_integer() == 90);
    CHECK(parse_as(ValueKind::integer, "")->is_null());
    CHECK_FALSE(parse_as(ValueKind::integer, "ninety"));
    CHECK(parse_as(ValueKind::text, " Dr. Smith ")->as_text() == "Dr. Smith");
    CHECK(infer_value("12").kind() == ValueKind::integer);
    CHECK(infer_value("1.5").kind() == ValueKind::decimal);
    CHECK(infer_value("10/01/23").kind() == ValueKind::date);
    CHECK(infer_value("hello").kind() == ValueKind::text);
  }

  TEST_CASE("timestamps") {
    auto ts = parse_timestamp("2023-11-24T08:00:00Z");
    REQUIRE(ts);
    CHECK(Date::from_timestamp(*ts).iso() == "2023-11-24");
    CHECK(TimeOfDay::of(*ts).seconds == 8 * 3600);
    CHECK(parse_timestamp("2023-11-24 09:00"));
    CHECK_FALSE(parse_timestamp("yesterday"));
  }

  TEST_CASE("wire ciphertext framing") {
    Ciphertext ct{Scheme::deterministic, Pseudonym{}, "abc"};
    ct.column.bytes[0] = 7;
    auto bytes = encode_ciphertext(ct);
    CHECK(bytes.size() == 1 + 16 + 4 + 3);
    CHECK(static_cast<unsigned char>(bytes[0]) == 1);
    CHECK(decode_ciphertext(bytes) == ct);
    CHECK_THROWS_AS(decode_ciphertext(bytes.substr(0, 10)), Error);
    CHECK(from_hex(to_hex("\x01\xab")) == "\x01\xab");
  }
}
