#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "healthvault/errors.hpp"
#include "healthvault/policy_engine.hpp"

using namespace healthvault;
using namespace healthvault::policy;

namespace {

QueryShape avg_vitals() {
  return make_shape(Aggregate::monthly_avg, "Vital", {"Heart Rate", "Cholesterol"});
}
QueryShape max_chol() { return make_shape(Aggregate::monthly_max, "Vital", {"Cholesterol"}); }

std::set<std::string> derived_names(const std::vector<StoragePolicy>& ps) {
  std::set<std::string> out;
  for (const auto& p : ps) {
    for (const auto& d : p.derived_tables) out.insert(d.name);
  }
  return out;
}

}  // namespace

TEST_SUITE("policy_engine") {
  TEST_CASE("record_query counts per shape") {
    PolicyEngine pe;
    CHECK(pe.record_query(max_chol()) == 1);
    pe.record_query(max_chol());
    CHECK(pe.record_query(max_chol()) == 3);
    CHECK(pe.record_query(avg_vitals()) == 1);
    CHECK(pe.frequency(max_chol()) == 3);
  }

  TEST_CASE("learned policies reproduce the two derived tables") {
    PolicyEngine pe(3);
    for (int i = 0; i < 3; ++i) {
      pe.record_query(avg_vitals());
      pe.record_query(max_chol());
    }
    auto ps = pe.learned_policies();
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].base_table == "Vital");
    CHECK(ps[0].origin == Origin::learned);
    CHECK(derived_names(ps) == std::set<std::string>{"Monthly_Avg_Vitals", "Monthly_High_Cholesterol"});
    CHECK(ps[0].index_specs == std::vector<IndexSpec>{{"Vital", "Date"}});
    auto enrich = pe.enrichment_policies();
    CHECK(enrich.size() == 2);
    for (const auto& e : enrich) {
      CHECK(e.timing == Timing::ingest_time);
      CHECK(e.rule == Rule::aggregate_fill);
      CHECK(e.source_table == "Vital");
    }
  }

  TEST_CASE("threshold edges") {
    PolicyEngine pe(3);
    pe.record_query(max_chol());
    pe.record_query(max_chol());
    CHECK(pe.learned_policies().empty());
    pe.record_query(max_chol());
    CHECK(pe.learned_policies().size() == 1);
    CHECK_THROWS_AS(pe.set_threshold(0), Error);
  }

  TEST_CASE("learning is monotone in observations") {
    std::mt19937 rng(7);
    std::vector<QueryShape> shapes = {
        avg_vitals(), max_chol(), make_shape(Aggregate::monthly_min, "Vital", {"Heart Rate"}),
        make_shape(Aggregate::monthly_max, "Visit_Details", {"Weight"})};
    PolicyEngine pe(4);
    std::set<std::string> seen;
    for (int i = 0; i < 200; ++i) {
      pe.record_query(shapes[rng() % shapes.size()]);
      auto now = derived_names(pe.learned_policies());
      for (const auto& n : seen) CHECK(now.contains(n));
      seen = now;
    }
  }

  TEST_CASE("pairing invariant: one ingest_time policy per derived table") {
    PolicyEngine pe(1);
    pe.record_query(avg_vitals());
    pe.record_query(max_chol());
    pe.record_query(make_shape(Aggregate::monthly_min, "Visit_Details", {"Weight"}));
    auto enrich = pe.enrichment_policies();
    for (const auto& sp : pe.storage_policies()) {
      for (const auto& d : sp.derived_tables) {
        int n = 0;
        for (const auto& e : enrich) n += e.timing == Timing::ingest_time && e.target_table == d.name;
        CHECK(n == 1);
      }
    }
  }

  TEST_CASE("derived table naming") {
    CHECK(derived_table_name(avg_vitals()) == "Monthly_Avg_Vitals");
    CHECK(derived_table_name(max_chol()) == "Monthly_High_Cholesterol");
    CHECK(derived_table_name(make_shape(Aggregate::monthly_min, "Vital", {"Heart Rate"})) ==
          "Monthly_Low_Heart_Rate");
  }

  TEST_CASE("sharing lookup is case-insensitive with an allowlist default") {
    PolicyEngine pe;
    pe.apply(PolicyFile::parse(ingest::read_file(hvtest::config_dir() / "policies.conf")));
    auto hit = pe.lookup_sharing("disc herniation");
    CHECK_FALSE(hit.needs_user_input);
    std::set<std::string> cats;
    for (const auto& i : hit.policy.included) cats.insert(i.category());
    CHECK(cats == std::set<std::string>{"table:Medications", "table:Physical_Therapy_Plans",
                                        "object:MRI", "object:X-ray"});
    CHECK(pe.lookup_sharing("Disc Herniation").policy == hit.policy);
    auto miss = pe.lookup_sharing("migraine");
    CHECK(miss.needs_user_input);
    CHECK(miss.policy.empty());
  }

  TEST_CASE("sharing history is append-only and the latest version wins") {
    PolicyEngine pe;
    pe.add_sharing_policy(SharingPolicy{"OCD", {{ItemKind::table, "Diagnoses"}}, 1});
    pe.add_sharing_policy(SharingPolicy{"ocd", {{ItemKind::table, "Diagnoses"}}, 0});
    CHECK(pe.sharing_history().size() == 1);
    pe.add_sharing_policy(
        SharingPolicy{"ocd", {{ItemKind::table, "Diagnoses"}, {ItemKind::table, "Medications"}}, 0});
    CHECK(pe.sharing_history().size() == 2);
    CHECK(pe.lookup_sharing("OCD").policy.version == 2);
    CHECK(pe.lookup_sharing("OCD").policy.included.size() == 2);
  }

  TEST_CASE("policy file grammar") {
    auto f = PolicyFile::parse(
        "storage: base=Vital; aggregate=monthly_max; columns=Cholesterol\n"
        "index: table=Vital; column=Date\n"
        "enrichment: timing=process_time; source=Vital; target=Visit_Details\n"
        "sharing: condition=Disc Herniation; version=2; include=object:MRI, keyword:Medication\n");
    REQUIRE(f.storage.size() == 1);
    CHECK(f.storage[0].derived_tables[0].name == "Monthly_High_Cholesterol");
    CHECK(f.storage[0].index_specs.size() == 1);
    CHECK(f.enrichment[0].rule == Rule::same_day_extrapolation);
    CHECK(f.sharing[0].condition_label == "disc herniation");
    CHECK(f.sharing[0].version == 2);
    CHECK(f.sharing[0].included[1].kind == ItemKind::keyword);
    CHECK_THROWS_AS(PolicyFile::parse("sharing: condition=x; include=disk:MRI\n"), Error);
    CHECK_THROWS_AS(PolicyFile::parse("storage: base=Vital; aggregate=median; columns=HR\n"), Error);
    CHECK_THROWS_AS(PolicyFile::parse("retention: days=3\n"), Error);
    auto round = PolicyFile::parse(serialize_sharing(f.sharing[0]));
    CHECK(round.sharing[0] == f.sharing[0]);
  }

  TEST_CASE("dormancy advisory flags without deleting") {
    PolicyEngine pe;
    Timestamp t0{std::chrono::seconds{1'700'000'000}};
    pe.note_table_use("Monthly_Avg_Vitals", t0);
    pe.note_table_use("Monthly_High_Cholesterol", t0 + std::chrono::hours(24 * 40));
    auto dormant = pe.dormant_tables({"Monthly_Avg_Vitals", "Monthly_High_Cholesterol"},
                                     t0 + std::chrono::hours(24 * 45), std::chrono::hours(24 * 30));
    CHECK(dormant == std::vector<std::string>{"Monthly_Avg_Vitals"});
  }
}
