#include <fstream>

#include "doctest.h"
#include "vault_fixtures.hpp"

using namespace healthvault;
using hvtest::cell;
using query::StepKind;

namespace {

std::size_t row_count(Vault& v, const std::string& table) {
  return v.store().scan_all(v.state().keys.table_id(table)).size();
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_SUITE("vault") {
  TEST_CASE("vitals sample upload fills the derived tables") {
    hvtest::TempDir dir;
    Vault v(hvtest::vault_config(dir.path()));
    auto report = v.upload({hvtest::vitals_sample_doc()});
    REQUIRE(report.ingested() == 1);
    CHECK(report.documents[0].rows_added == 4);
    CHECK(report.documents[0].derived_rows_updated == 4);
    CHECK(row_count(v, "Vital") == 4);
    CHECK(row_count(v, "Monthly_Avg_Vitals") == 2);
    CHECK(row_count(v, "Monthly_High_Cholesterol") == 2);

    auto max = v.query("what was my maximum cholesterol in November 2023");
    REQUIRE(max.result.rows.size() == 1);
    CHECK(cell(max.result.rows[0], "Cholesterol").value == Value::integer(220));
    CHECK(max.result.plan.has(StepKind::store_point_scan, "Monthly_High_Cholesterol"));
    CHECK_FALSE(max.result.plan.has(StepKind::store_range_scan, "Vital"));
    CHECK_FALSE(max.result.plan.has(StepKind::store_full_scan, "Vital"));

    auto avg = v.query("average heart rate in October 2023");
    CHECK(cell(avg.result.rows[0], "Heart Rate").value == Value::integer(85));
    CHECK(avg.result.plan.has(StepKind::store_point_scan, "Monthly_Avg_Vitals"));

    auto grouped = v.query("monthly average heart rate and cholesterol");
    REQUIRE(grouped.result.rows.size() == 2);
    CHECK(cell(grouped.result.rows[1], "Cholesterol").value == Value::integer(210));
  }

  TEST_CASE("later uploads recompute the month") {
    hvtest::TempDir dir;
    Vault v(hvtest::vault_config(dir.path()));
    v.upload({hvtest::doc("a", ingest::DocumentFormat::tabular,
                          "Date,Heart Rate,Cholesterol\n11/5/23,100,200\n")});
    v.upload({hvtest::doc("b", ingest::DocumentFormat::tabular,
                          "Date,Heart Rate,Cholesterol\n11/24/23,90,220\n")});
    CHECK(row_count(v, "Monthly_Avg_Vitals") == 1);
    auto r = v.query("average heart rate and cholesterol in November 2023");
    CHECK(cell(r.result.rows[0], "Heart Rate").value == Value::integer(95));
    CHECK(cell(r.result.rows[0], "Cholesterol").value == Value::integer(210));
  }

  TEST_CASE("per-document errors do not abort the batch") {
    hvtest::TempDir dir;
    Vault v(hvtest::vault_config(dir.path()));
    CHECK(v.upload({}).documents.empty());
    auto report = v.upload({hvtest::doc("ok1", ingest::DocumentFormat::tabular, "Date,Heart Rate\n1/1/23,60\n"),
                            hvtest::doc("bad", ingest::DocumentFormat::tabular, "Date,Heart Rate\n1/2/23\n"),
                            hvtest::doc("ok2", ingest::DocumentFormat::keyvalue_text, "Date: 1/3/23\nHeart Rate: 61\n")});
    CHECK(report.ingested() == 2);
    REQUIRE(report.failed() == 1);
    CHECK(report.documents[1].error_code == "MalformedTabular");
    auto dup = v.upload({hvtest::doc("ok1", ingest::DocumentFormat::tabular, "Date,Heart Rate\n1/1/23,60\n")});
    CHECK(dup.documents[0].error_code == "DuplicateDocument");
    CHECK(v.state().documents.size() == 2);
  }

  TEST_CASE("process-time extrapolation and confirmation") {
    hvtest::TempDir dir;
    Vault v(hvtest::vault_config(dir.path()));
    REQUIRE(v.upload(hvtest::visit_docs(true)).ingested() == 2);
    auto r = v.query("show Visit_Details on 11/24/23");
    REQUIRE(r.result.rows.size() == 1);
    CHECK(cell(r.result.rows[0], "Heart Rate").value == Value::integer(90));
    CHECK(cell(r.result.rows[0], "Heart Rate").provenance == Provenance::extrapolated);
    CHECK(cell(r.result.rows[0], "Cholesterol").value == Value::integer(220));
    CHECK(cell(r.result.rows[0], "Weight").provenance == Provenance::source);
    CHECK(r.result.plan.has(StepKind::enrich, "Visit_Details"));
    REQUIRE(r.proposals.size() == 2);
    CHECK(v.pending().size() == 2);

    // A repeated query refreshes, not duplicates, proposals.
    v.query("show Visit_Details on 11/24/23");
    CHECK(v.pending().size() == 2);

    auto accepted = v.confirm(r.proposals[0].id, true);
    CHECK(accepted.status == ProposalStatus::accepted);
    auto rejected = v.confirm(r.proposals[1].id, false);
    CHECK(rejected.status == ProposalStatus::rejected);
    CHECK(v.pending().empty());
    CHECK(hvtest::error_of([&] { v.confirm(r.proposals[0].id, false); }) == Errc::already_decided);
    CHECK(hvtest::error_of([&] { v.confirm("p999", true); }) == Errc::unknown_proposal);

    auto after = v.query("show Visit_Details on 11/24/23");
    const auto& row = after.result.rows[0];
    const std::string& acc_col = accepted.target.column;
    const std::string& rej_col = rejected.target.column;
    CHECK(cell(row, acc_col).provenance == Provenance::extrapolated);
    CHECK_FALSE(cell(row, acc_col).value.is_null());
    CHECK(cell(row, rej_col).value.is_null());
    CHECK(after.proposals.empty());
    CHECK(after.result.extrapolations.empty());
    auto text = v.report_text(after.report_id);
    CHECK(text.find('*') != std::string::npos);
  }

  TEST_CASE("no same-day source leaves nulls") {
    hvtest::TempDir dir;
    Vault v(hvtest::vault_config(dir.path()));
    v.upload(hvtest::visit_docs(false));
    auto r = v.query("show Visit_Details on 11/24/23");
    REQUIRE(r.result.rows.size() == 1);
    CHECK(cell(r.result.rows[0], "Heart Rate").value.is_null());
    CHECK(cell(r.result.rows[0], "Heart Rate").provenance == Provenance::source);
    CHECK(r.proposals.empty());
  }

  TEST_CASE("sharing releases only allowlisted categories") {
    hvtest::TempDir dir;
    Vault v(hvtest::vault_config(dir.path()));
    REQUIRE(v.upload(hvtest::sharing_docs()).ingested() == 6);
    auto s = v.share("Disc Herniation");
    CHECK_FALSE(s.result.needs_user_input);
    std::map<std::string, int> by_category;
    for (const auto& row : s.result.rows) {
      ++by_category[row.category];
      CHECK(to_lower(cell(row, "Condition").value.str()) == "disc herniation");
    }
    CHECK(by_category["table:Medications"] == 2);
    CHECK(by_category["table:Physical_Therapy_Plans"] == 1);
    CHECK(by_category["object:MRI"] == 1);
    CHECK(by_category["object:X-ray"] == 1);
    CHECK(by_category.size() == 4);
    CHECK(s.result.manifest.size() == 5);

    auto ocd = v.share("ocd");
    for (const auto& row : ocd.result.rows) CHECK(cell(row, "Condition").value.str() == "ocd");
    CHECK(ocd.result.rows.size() == 2);

    auto unknown = v.share("migraine");
    CHECK(unknown.result.needs_user_input);
    CHECK(unknown.result.rows.empty());
    v.define_sharing("Migraine", {{policy::ItemKind::table, "Medications"}});
    auto defined = v.share("migraine");
    CHECK_FALSE(defined.result.needs_user_input);
    CHECK(defined.result.rows.empty());

    auto records = v.query("retrieve records on to disc herniation");
    CHECK(records.result.rows.size() == 5);
  }

  TEST_CASE("state and store survive a restart") {
    hvtest::TempDir dir;
    std::string store = "local:" + (dir.path() / "store").string();
    {
      Vault v(hvtest::vault_config(dir.path() / "vault", store));
      v.upload({hvtest::vitals_sample_doc()});
      v.upload(hvtest::visit_docs(true));
      v.query("show Visit_Details on 11/24/23");
    }
    Vault v(hvtest::vault_config(dir.path() / "vault", store));
    CHECK(v.state().documents.size() == 3);
    CHECK(v.pending().size() == 2);
    auto r = v.query("what was my maximum cholesterol in November 2023");
    CHECK(cell(r.result.rows[0], "Cholesterol").value == Value::integer(220));
    CHECK(line_count(v.journal_path()) >= 5);
    CHECK(v.report(r.report_id)["kind"] == "aggregate");
    CHECK(hvtest::error_of([&] { v.report("../x"); }) == Errc::unknown_object);
  }

  TEST_CASE("journal grows by one entry per query and stays local") {
    hvtest::TempDir dir;
    hvtest::LoopbackVault lv(hvtest::vault_config(dir.path()));
    lv->upload({hvtest::vitals_sample_doc()});
    auto before = line_count(lv->journal_path());
    lv->query("max cholesterol in 2023-11");
    lv->query("show Vital");
    CHECK_THROWS_AS(lv->query("foo bar"), Error);
    CHECK(line_count(lv->journal_path()) == before + 3);
    std::string journal = ingest::read_file(lv->journal_path());
    for (const auto& e : lv->store().dump_log()) {
      CHECK(e.body.find("show Vital") == std::string::npos);
    }
    CHECK(journal.find("show Vital") != std::string::npos);
  }

  TEST_CASE("store outage during commit is recovered") {
    hvtest::TempDir dir;
    hvtest::LoopbackVault lv(hvtest::vault_config(dir.path()));
    lv->upload({hvtest::doc("a", ingest::DocumentFormat::tabular, "Date,Heart Rate,Cholesterol\n11/5/23,100,200\n")});
    // Deliver the commit, then lose the connection before the reply.
    lv.transport->set_hook([&](std::string_view req) {
      if (!req.empty() && static_cast<store::MessageKind>(req[0]) == store::MessageKind::commit_batch) {
        lv.engine->handle(std::string(req));
        throw Error(Errc::store_unavailable, "connection reset");
      }
    });
    auto r = lv->upload({hvtest::doc("b", ingest::DocumentFormat::tabular,
                                     "Date,Heart Rate,Cholesterol\n11/24/23,90,220\n")});
    CHECK(r.documents[0].error_code == "StoreUnavailable");
    CHECK(std::filesystem::exists(lv->pending_path()));
    lv.transport->set_hook({});
    auto q = lv->query("average cholesterol in November 2023");
    CHECK(cell(q.result.rows[0], "Cholesterol").value == Value::integer(210));
    CHECK(lv->state().documents.contains("b"));
    CHECK_FALSE(std::filesystem::exists(lv->pending_path()));

    lv.transport->set_available(false);
    auto down = lv->upload({hvtest::doc("c", ingest::DocumentFormat::tabular, "Date,Heart Rate\n12/1/23,70\n")});
    CHECK(down.documents[0].error_code == "StoreUnavailable");
    lv.transport->set_available(true);
    CHECK_FALSE(lv->state().documents.contains("c"));
    CHECK(lv->upload({hvtest::doc("c", ingest::DocumentFormat::tabular, "Date,Heart Rate\n12/1/23,70\n")}).ingested() == 1);
  }

  TEST_CASE("simulated crashes leave each document all or nothing") {
    for (auto stage : kPipelineStages) {
      CAPTURE(stage);
      hvtest::TempDir dir;
      std::string store = "local:" + (dir.path() / "store").string();
      auto cfg = hvtest::vault_config(dir.path() / "vault", store);
      {
        Vault v(cfg);
        v.upload({hvtest::doc("a", ingest::DocumentFormat::tabular, "Date,Heart Rate,Cholesterol\n11/5/23,100,200\n")});
        v.set_fault_hook([&](std::string_view s) {
          if (s == stage) throw SimulatedCrash{std::string(s)};
        });
        bool crashed = false;
        try {
          v.upload({hvtest::doc("b", ingest::DocumentFormat::tabular, "Date,Heart Rate,Cholesterol\n11/24/23,90,220\n")});
        } catch (const SimulatedCrash&) {
          crashed = true;
        }
        CHECK(crashed);
      }
      Vault v(cfg);
      bool present = v.state().documents.contains("b");
      CHECK(present == (std::string_view(stage) == "put.committed"));
      CHECK(row_count(v, "Vital") == (present ? 2u : 1u));
      auto r = v.query("max cholesterol in November 2023");
      CHECK(cell(r.result.rows[0], "Cholesterol").value == Value::integer(present ? 220 : 200));
      if (!present) {
        CHECK(v.upload({hvtest::doc("b", ingest::DocumentFormat::tabular,
                                    "Date,Heart Rate,Cholesterol\n11/24/23,90,220\n")}).ingested() == 1);
      }
      CHECK(row_count(v, "Vital") == 2);
      CHECK(row_count(v, "Monthly_High_Cholesterol") == 1);
    }
  }

  TEST_CASE("order dictionary re-spacing rewrites committed rows") {
    hvtest::TempDir dir;
    auto cfg = hvtest::vault_config(dir.path());
    cfg.ope_code_bits = 6;
    Vault v(cfg);
    std::string csv = "Date,Heart Rate,Cholesterol\n";
    for (int i = 0; i < 30; ++i) {
      csv += "2023-10-" + std::string(i + 1 < 10 ? "0" : "") + std::to_string(i + 1) + "," +
             std::to_string(60 + (i * 7) % 40) + "," + std::to_string(150 + i) + "\n";
    }
    v.upload({hvtest::doc("a", ingest::DocumentFormat::tabular, csv)});
    for (int i = 0; i < 10; ++i) {
      v.upload({hvtest::doc("b" + std::to_string(i), ingest::DocumentFormat::keyvalue_text,
                            "Date: 2023-11-" + std::to_string(10 + i) + "\nHeart Rate: " + std::to_string(61 + i * 4) +
                                "\nCholesterol: " + std::to_string(149 - i) + "\n")});
    }
    CHECK(v.state().keys.find_ope("Vital", "Heart Rate")->generation() > 0);
    auto r = v.query(R"(select "Vital" where "Heart Rate" between 60 and 70)");
    std::size_t expected = 0;
    for (int i = 0; i < 30; ++i) expected += (60 + (i * 7) % 40) <= 70;
    for (int i = 0; i < 10; ++i) expected += (61 + i * 4) <= 70;
    CHECK(r.result.rows.size() == expected);
    auto low = v.query("min cholesterol from 2023-10-01 to 2023-11-30");
    CHECK(cell(low.result.rows[0], "Cholesterol").value == Value::integer(140));
  }

  TEST_CASE("learned policies materialize with backfill") {
    hvtest::TempDir dir;
    Vault v(hvtest::vault_config(dir.path()));
    v.upload({hvtest::vitals_sample_doc()});
    CHECK(v.state().registry.find("Monthly_Low_Cholesterol") == nullptr);
    v.query("min cholesterol in October 2023");
    v.query("min cholesterol in November 2023");
    auto third = v.query("lowest cholesterol in 2023");
    CHECK(cell(third.result.rows[0], "Cholesterol").value == Value::integer(150));
    REQUIRE(third.materialized.size() == 1);
    const auto& name = third.materialized[0];
    CHECK(row_count(v, name) == 2);
    auto served = v.query("min cholesterol in November 2023");
    CHECK(cell(served.result.rows[0], "Cholesterol").value == Value::integer(200));
    CHECK(served.result.plan.has(StepKind::store_point_scan, name));
    v.upload({hvtest::doc("more", ingest::DocumentFormat::tabular, "Date,Heart Rate,Cholesterol\n11/30/23,70,120\n")});
    CHECK(cell(v.query("min cholesterol in November 2023").result.rows[0], "Cholesterol").value ==
          Value::integer(120));
    CHECK(v.learn().empty());
  }
}
