#include "doctest.h"
#include "fixtures.hpp"
#include "healthvault/query_engine.hpp"
#include "healthvault/row_codec.hpp"

using namespace healthvault;
using namespace healthvault::query;
using policy::Aggregate;

namespace {

struct Vocab {
  ingest::KeywordDictionary dict = hvtest::dictionary();
  schema::SynonymDictionary syn = hvtest::synonyms();
  Vocabulary v{&dict, &syn};
};

Query parse(std::string_view text) {
  static Vocab vocab;
  return parse_query(text, vocab.v);
}

}  // namespace

TEST_SUITE("query_parser") {
  TEST_CASE("aggregate over a named month") {
    auto q = parse("what was my maximum cholesterol in November 2023");
    CHECK(q.kind == QueryKind::aggregate);
    CHECK(q.scope == kAllTables);
    REQUIRE(q.aggregate);
    CHECK(q.aggregate->fn == Aggregate::monthly_max);
    CHECK(q.aggregate->columns == std::vector<std::string>{"Cholesterol"});
    REQUIRE(q.filters.size() == 1);
    CHECK(q.filters[0] == Filter{"Date", Op::between, "2023-11-01", "2023-11-30"});
    CHECK_FALSE(q.group_by_month);

    auto avg = parse("Average HR and chol in 2023-10?");
    CHECK(avg.aggregate->fn == Aggregate::monthly_avg);
    CHECK(avg.aggregate->columns == std::vector<std::string>{"Heart Rate", "Cholesterol"});
    CHECK(avg.filters[0].hi == "2023-10-31");

    auto year = parse("min weight in 2022");
    CHECK(year.filters[0] == Filter{"Date", Op::between, "2022-01-01", "2022-12-31"});
  }

  TEST_CASE("monthly grouping and open ranges") {
    auto g = parse("monthly average heart rate");
    CHECK(g.group_by_month);
    CHECK(g.filters.empty());
    CHECK(parse("max cholesterol by month").group_by_month);
    auto r = parse("highest pulse from 2023-10-05 to 11/24/23");
    CHECK(r.aggregate->columns == std::vector<std::string>{"Heart Rate"});
    CHECK(r.filters[0] == Filter{"Date", Op::between, "2023-10-05", "2023-11-24"});
    CHECK(parse("mean BMI").filters.empty());
  }

  TEST_CASE("record templates") {
    auto doc = parse("records from Dr. Smith Jones");
    CHECK(doc.kind == QueryKind::select);
    CHECK(doc.filters[0] == Filter{"Doctor", Op::eq, "Smith Jones", ""});
    CHECK(parse("show records from clinic Riverside").filters[0].column == "Facility");
    auto dated = parse("records between 2023-10-01 and 2023-10-31");
    CHECK(dated.filters[0] == Filter{"Date", Op::between, "2023-10-01", "2023-10-31"});
    auto cond = parse("retrieve records on to Disc Herniation");
    CHECK(cond.kind == QueryKind::select);
    CHECK(cond.condition_scope);
    CHECK(cond.scope == "disc herniation");
    CHECK(parse("records about OCD").scope == "ocd");
  }

  TEST_CASE("share templates") {
    auto s = parse("share records for disc herniation");
    CHECK(s.kind == QueryKind::share);
    CHECK(s.scope == "disc herniation");
    CHECK(s.condition_scope);
    CHECK(parse("share OCD").scope == "ocd");
    CHECK(parse("share 'Disc Herniation'").scope == "disc herniation");
  }

  TEST_CASE("show a table") {
    auto s = parse("show Visit_Details on 11/24/23");
    CHECK(s.scope == "Visit_Details");
    CHECK(s.filters[0] == Filter{"Date", Op::eq, "2023-11-24", ""});
    CHECK(parse("show visit details in November 2023").filters[0].op == Op::between);
    CHECK(parse("show Medications").filters.empty());
  }

  TEST_CASE("structured form") {
    auto q = parse(R"(select "Vital" where "HR" >= 90 and "Date" between 2023-10-01 and 2023-10-31)");
    CHECK(q.scope == "Vital");
    REQUIRE(q.filters.size() == 2);
    CHECK(q.filters[0] == Filter{"Heart Rate", Op::ge, "90", ""});
    CHECK(q.filters[1] == Filter{"Date", Op::between, "2023-10-01", "2023-10-31"});
    auto a = parse(R"(aggregate avg("Heart Rate", "Chol") from "Vital" where "Date" < 2024-01-01 by month)");
    CHECK(a.kind == QueryKind::aggregate);
    CHECK(a.scope == "Vital");
    CHECK(a.aggregate->columns == std::vector<std::string>{"Heart Rate", "Cholesterol"});
    CHECK(a.filters[0].op == Op::lt);
    CHECK(a.group_by_month);
    auto t = parse(R"(select "Notes" where "Description" = 'back pain')");
    CHECK(t.filters[0].lo == "back pain");
  }

  TEST_CASE("unrecognized text lists the templates") {
    try {
      parse("foo bar");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::unrecognized_query);
      CHECK(std::string(e.what()).find("records from") != std::string::npos);
    }
    CHECK(hvtest::error_of([] { parse(""); }) == Errc::unrecognized_query);
    CHECK(hvtest::error_of([] { parse(R"(select "Vital" where "HR" ~ 3)"); }) == Errc::unrecognized_query);
    CHECK(hvtest::error_of([] { parse("max cholesterol in Smarch"); }) == Errc::unrecognized_query);
  }

  TEST_CASE("literal typing and matching") {
    CHECK(type_literal("90", ValueKind::integer, false) == Value::integer(90));
    CHECK_FALSE(type_literal("ninety", ValueKind::integer, false));
    CHECK(type_literal(" OCD ", ValueKind::text, true) == Value::text("ocd"));
    CHECK(type_literal("2023-11-24", ValueKind::month, false) == Value::month(Month::from_ym(2023, 11)));
    CHECK(matches(Value::integer(5), Op::between, Value::integer(5), Value::integer(6)));
    CHECK_FALSE(matches(Value(), Op::le, Value::integer(5), Value()));
    CHECK(matches(Value::integer(4), Op::lt, Value::integer(5), Value()));
  }
}

TEST_SUITE("row_codec") {
  TEST_CASE("rows round trip with provenance") {
    schema::SchemaRegistry reg(hvtest::catalog(), hvtest::dictionary());
    ingest::MetadataTagSet tags{"d", {{"Date", Value::date(Date::from_ymd(2023, 11, 24)), std::nullopt},
                                      {"Heart Rate", Value::integer(90), std::nullopt},
                                      {"Cholesterol", Value::integer(220), std::nullopt}}};
    reg.ensure_tables(tags, {});
    const auto* vital = reg.find("Vital");
    REQUIRE(vital);
    crypto::KeyRing ring;
    auto specs = codec::column_specs(ring, *vital);
    CHECK(specs.size() == vital->columns.size());
    std::vector<Binding> cells{{"Date", Value::date(Date::from_ymd(2023, 11, 24)), Provenance::source},
                               {"Heart Rate", Value::integer(90), Provenance::extrapolated},
                               {"Cholesterol", Value(), Provenance::source}};
    codec::register_ordered_values(ring, *vital, cells);
    auto enc = codec::encrypt_row(ring, *vital, cells, 42);
    CHECK(enc.handle == 42);
    CHECK(enc.cells.size() == vital->columns.size());
    auto dec = codec::decrypt_row(ring, *vital, enc);
    CHECK(find_binding(dec, "Heart Rate")->value == Value::integer(90));
    CHECK(find_binding(dec, "Heart Rate")->provenance == Provenance::extrapolated);
    CHECK(find_binding(dec, "Cholesterol")->value.is_null());
    CHECK(find_binding(dec, "Time")->value.is_null());
    CHECK(find_binding(dec, std::string(schema::kProvenanceColumn)) == nullptr);

    CHECK(hvtest::error_of([&] { codec::point_literal(ring, "Vital", "Heart Rate", Value::integer(1)); }) ==
          Errc::scheme_mismatch);
    auto r = codec::range_literal(ring, "Vital", "Heart Rate", Value::integer(80), Value::integer(95));
    REQUIRE(r);
    CHECK_FALSE(codec::range_literal(ring, "Vital", "Heart Rate", Value::integer(91), std::nullopt));
  }

  TEST_CASE("object envelopes round trip") {
    std::vector<Binding> tags{{"Condition", Value::text("ocd"), Provenance::source}};
    auto [t, c] = codec::decode_envelope(codec::encode_envelope(tags, std::string("\0\x01bin", 5)));
    CHECK(t.size() == 1);
    CHECK(t[0].value == Value::text("ocd"));
    CHECK(c == std::string("\0\x01bin", 5));
    CHECK(hvtest::error_of([] { codec::decode_envelope("zz"); }) == Errc::protocol_error);
  }
}
