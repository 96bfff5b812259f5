#include "doctest.h"
#include "fixtures.hpp"
#include "healthvault/enricher.hpp"

using namespace healthvault;
using namespace healthvault::enrich;
using policy::Aggregate;

namespace {

Value date(int y, unsigned m, unsigned d) { return Value::date(Date::from_ymd(y, m, d)); }
Value hm(int h, int m) { return Value::time(TimeOfDay{h * 3600 + m * 60}); }

std::vector<Binding> row(std::vector<std::pair<std::string, Value>> kv) {
  std::vector<Binding> out;
  for (auto& [k, v] : kv) out.push_back(Binding{k, v, Provenance::source});
  return out;
}

schema::SchemaRegistry paper_registry() {
  schema::SchemaRegistry reg(hvtest::catalog(), hvtest::dictionary());
  policy::StoragePolicy p;
  p.base_table = "Vital";
  p.derived_tables = {{"Monthly_Avg_Vitals", Aggregate::monthly_avg, {"Heart Rate", "Cholesterol"}},
                      {"Monthly_High_Cholesterol", Aggregate::monthly_max, {"Cholesterol"}}};
  ingest::MetadataTagSet tags{"d", {{"Date", date(2023, 10, 1), std::nullopt},
                                    {"Heart Rate", Value::integer(90), std::nullopt},
                                    {"Cholesterol", Value::integer(190), std::nullopt}}};
  reg.ensure_tables(tags, {p});
  return reg;
}

}  // namespace

TEST_SUITE("enricher") {
  TEST_CASE("averages round half up and ignore nulls") {
    CHECK(round_half_up_mean({Value::integer(90), Value::integer(80)}) == Value::integer(85));
    CHECK(round_half_up_mean({Value::integer(1), Value::integer(2)}) == Value::integer(2));
    CHECK(round_half_up_mean({Value::integer(-1), Value::integer(-2)}) == Value::integer(-1));
    CHECK(round_half_up_mean({Value::integer(7), Value()}) == Value::integer(7));
    CHECK(round_half_up_mean({}).is_null());
    CHECK(round_half_up_mean({Value(), Value()}).is_null());
    auto d = round_half_up_mean({Value::decimal(*parse_decimal("1.5")), Value::integer(2)});
    CHECK(d == Value::decimal(*parse_decimal("1.75")));
    CHECK(hvtest::error_of([] { round_half_up_mean({Value::text("x")}); }) == Errc::invalid_argument);
  }

  TEST_CASE("max and min skip nulls") {
    std::vector<Value> v{Value::integer(190), Value(), Value::integer(150)};
    CHECK(aggregate(Aggregate::monthly_max, v) == Value::integer(190));
    CHECK(aggregate(Aggregate::monthly_min, v) == Value::integer(150));
    CHECK(aggregate(Aggregate::monthly_max, {Value()}).is_null());
  }

  TEST_CASE("local index lookup and range never return nulls") {
    LocalIndex idx("Vital", "Date");
    idx.insert(date(2023, 10, 1), 1);
    idx.insert(date(2023, 10, 10), 2);
    idx.insert(Value(), 3);
    idx.insert(date(2023, 11, 5), 4);
    CHECK(idx.lookup(date(2023, 10, 1)) == std::set<Handle>{1});
    CHECK(idx.lookup(Value()).empty());
    CHECK(idx.range(std::nullopt, std::nullopt) == std::set<Handle>{1, 2, 4});
    CHECK(idx.range(date(2023, 10, 2), date(2023, 11, 30)) == std::set<Handle>{2, 4});
    CHECK(idx.handle_count() == 4);
    idx.erase(date(2023, 10, 1), 1);
    CHECK(idx.lookup(date(2023, 10, 1)).empty());
  }

  TEST_CASE("index set follows rows and remaps handles") {
    IndexSet set;
    maintain_indexes(set, {{"Vital", 10, row({{"Date", date(2023, 1, 1)}})}}, {{"Vital", "Date"}});
    CHECK_FALSE(set.ensure("Vital", "Date"));
    set.add_row("Other", 11, row({{"Date", date(2023, 1, 1)}}));
    CHECK(set.find("Vital", "Date")->lookup(date(2023, 1, 1)) == std::set<Handle>{10});
    set.remap([](Handle h) { return h + 100; });
    CHECK(set.find("Vital", "Date")->lookup(date(2023, 1, 1)) == std::set<Handle>{110});
    set.remove_row("Vital", 110, row({{"Date", date(2023, 1, 1)}}));
    CHECK(set.find("Vital", "Date")->handle_count() == 0);
  }

  TEST_CASE("ingest enrichment recomputes the whole month") {
    auto reg = paper_registry();
    policy::PolicyEngine pe;
    policy::StoragePolicy p;
    p.base_table = "Vital";
    p.derived_tables = {{"Monthly_Avg_Vitals", Aggregate::monthly_avg, {"Heart Rate", "Cholesterol"}},
                        {"Monthly_High_Cholesterol", Aggregate::monthly_max, {"Cholesterol"}}};
    pe.add_storage_policy(p);
    ingest::MetadataTagSet incoming{"d", {{"Date", date(2023, 11, 24), std::nullopt},
                                          {"Heart Rate", Value::integer(90), std::nullopt},
                                          {"Cholesterol", Value::integer(220), std::nullopt}}};
    auto tags = reg.make_schema_tags(incoming);
    REQUIRE(tags.size() == 3);
    int fetches = 0;
    auto out = apply_ingest_enrichment(tags, reg, pe.enrichment_policies(), [&](const std::string& base, Month m) {
      ++fetches;
      CHECK(base == "Vital");
      CHECK(m == Month::from_ym(2023, 11));
      return std::vector<std::vector<Binding>>{
          row({{"Date", date(2023, 11, 5)}, {"Heart Rate", Value::integer(100)}, {"Cholesterol", Value::integer(200)}})};
    });
    CHECK(fetches == 1);
    REQUIRE(out.size() == 3);
    CHECK(out[0].table_name == "Vital");
    CHECK(out[1].find("Heart Rate")->value == Value::integer(95));
    CHECK(out[1].find("Cholesterol")->value == Value::integer(210));
    CHECK(out[1].find("Heart Rate")->provenance == Provenance::computed_aggregate);
    CHECK(out[2].find("Cholesterol")->value == Value::integer(220));
    CHECK(out[2].find("Date")->value == Value::month(Month::from_ym(2023, 11)));

    // No ingest-time policy: derived tags are dropped.
    auto bare = apply_ingest_enrichment(tags, reg, {}, [](const std::string&, Month) {
      return std::vector<std::vector<Binding>>{};
    });
    CHECK(bare.size() == 1);
  }

  TEST_CASE("same-day extrapolation picks the nearest time") {
    std::vector<RowRef> target{
        {1, row({{"Date", date(2023, 11, 24)}, {"Time", hm(10, 0)}, {"Heart Rate", Value()}, {"Cholesterol", Value::integer(5)}})},
        {2, row({{"Date", date(2023, 11, 25)}, {"Time", hm(10, 0)}, {"Heart Rate", Value()}})}};
    std::vector<RowRef> source{
        {7, row({{"Date", date(2023, 11, 24)}, {"Time", hm(8, 0)}, {"Heart Rate", Value::integer(70)}, {"Cholesterol", Value::integer(9)}})},
        {8, row({{"Date", date(2023, 11, 24)}, {"Time", hm(11, 0)}, {"Heart Rate", Value::integer(90)}})},
        {9, row({{"Date", date(2023, 11, 24)}, {"Heart Rate", Value::integer(60)}})}};
    auto fills = extrapolate_at_query(target, source, {"Heart Rate", "Cholesterol"});
    REQUIRE(fills.size() == 1);
    CHECK(fills[0].source_handle == 8);
    CHECK(target[0].cells[2].value == Value::integer(90));
    CHECK(target[0].cells[2].provenance == Provenance::extrapolated);
    CHECK(target[0].cells[3].value == Value::integer(5));
    CHECK(target[1].cells[2].value.is_null());
  }

  TEST_CASE("extrapolation ties go to the earlier source then lower handle") {
    std::vector<RowRef> target{{1, row({{"Date", date(2023, 1, 1)}, {"Time", hm(10, 0)}, {"Weight", Value()}})}};
    std::vector<RowRef> source{
        {5, row({{"Date", date(2023, 1, 1)}, {"Time", hm(11, 0)}, {"Weight", Value::integer(2)}})},
        {6, row({{"Date", date(2023, 1, 1)}, {"Time", hm(9, 0)}, {"Weight", Value::integer(1)}})}};
    auto fills = extrapolate_at_query(target, source, {"Weight"});
    REQUIRE(fills.size() == 1);
    CHECK(fills[0].source_handle == 6);

    std::vector<RowRef> untimed{{1, row({{"Date", date(2023, 1, 1)}, {"Weight", Value()}})}};
    std::vector<RowRef> same{{4, row({{"Date", date(2023, 1, 1)}, {"Weight", Value::integer(3)}})},
                             {3, row({{"Date", date(2023, 1, 1)}, {"Weight", Value::integer(4)}})}};
    CHECK(extrapolate_at_query(untimed, same, {"Weight"})[0].source_handle == 3);
  }

  TEST_CASE("blocked cells stay null") {
    std::vector<RowRef> target{{1, row({{"Date", date(2023, 1, 1)}, {"Weight", Value()}})}};
    std::vector<RowRef> source{{2, row({{"Date", date(2023, 1, 1)}, {"Weight", Value::integer(1)}})}};
    auto fills = extrapolate_at_query(target, source, {"Weight"},
                                      [](Handle h, const std::string& c) { return h == 1 && c == "Weight"; });
    CHECK(fills.empty());
    CHECK(target[0].cells[1].value.is_null());
  }
}
