#include "doctest.h"
#include "fixtures.hpp"
#include "healthvault/errors.hpp"

using namespace healthvault;
using namespace healthvault::ingest;
using hvtest::doc;

using hvtest::error_of;

TEST_SUITE("ingest_parser") {
  TEST_CASE("tabular row becomes typed tags") {
    auto dict = hvtest::dictionary();
    auto sets = parse_record(
        doc("d1", DocumentFormat::tabular, "Date,Heart Rate,Cholesterol\n11/24/23,90,220\n"), dict);
    REQUIRE(sets.size() == 1);
    const auto& tags = sets[0].tags;
    REQUIRE(tags.size() == 3);
    CHECK(tags[0].keyword == "Date");
    CHECK(tags[0].value == Value::date(Date::from_ymd(2023, 11, 24)));
    CHECK(tags[1].keyword == "Heart Rate");
    CHECK(tags[1].value == Value::integer(90));
    CHECK(tags[2].keyword == "Cholesterol");
    CHECK(tags[2].value == Value::integer(220));
  }

  TEST_CASE("free text falls back to one Description tag") {
    auto dict = hvtest::dictionary();
    auto sets = parse_record(
        doc("d2", DocumentFormat::keyvalue_text, "patient reports mild dizziness"), dict);
    REQUIRE(sets.size() == 1);
    REQUIRE(sets[0].tags.size() == 1);
    CHECK(sets[0].tags[0].keyword == "Description");
    CHECK(sets[0].tags[0].value.as_text() == "patient reports mild dizziness");
  }

  TEST_CASE("key-value lines mix reserved keys and free text") {
    auto dict = hvtest::dictionary();
    auto sets = parse_record(doc("d3", DocumentFormat::keyvalue_text,
                                 "Date: 11/24/23\nheart rate: 90\nfeeling tired\nHR note: none\n"),
                             dict);
    const auto& s = sets[0];
    REQUIRE(s.find("Date"));
    CHECK(s.find("Heart Rate")->value == Value::integer(90));
    REQUIRE(s.find("Description"));
    CHECK(s.find("Description")->value.as_text() == "feeling tired\nHR note: none");
  }

  TEST_CASE("keyword matching ignores case and spacing") {
    auto dict = hvtest::dictionary();
    for (std::string header : {"heart rate", "Heart Rate", "HEART RATE", "heart-rate"}) {
      auto sets = parse_record(doc("x", DocumentFormat::tabular, header + "\n70\n"), dict);
      CHECK(sets[0].tags[0].keyword == "Heart Rate");
    }
    CHECK(normalize_keyword("Heart  Rate") == normalize_keyword("HEART-RATE"));
  }

  TEST_CASE("row fidelity: N data rows give N tag sets") {
    auto dict = hvtest::dictionary();
    auto sets = parse_record(doc("d4", DocumentFormat::tabular,
                                 "Date,Heart Rate,Cholesterol\n10/1/23,90,190\n10/10/23,80,150\n"
                                 "11/5/23,100,200\n11/24/23,90,220\n"),
                             dict);
    CHECK(sets.size() == 4);
    for (const auto& s : sets) CHECK(s.tags.size() == 3);
  }

  TEST_CASE("quoted cells, empty cells and unknown headers") {
    auto dict = hvtest::dictionary();
    auto sets = parse_record(doc("d5", DocumentFormat::tabular,
                                 "Date,Facility,Shoe Size\n2023-11-24,\"Orthopedic, North\",\n"),
                             dict);
    const auto& s = sets[0];
    CHECK(s.find("Facility")->value.as_text() == "Orthopedic, North");
    CHECK(s.find("Shoe Size")->value.is_null());
  }

  TEST_CASE("errors") {
    auto dict = hvtest::dictionary();
    CHECK(error_of([&] { parse_record(doc("e", DocumentFormat::tabular, ""), dict); }) ==
          Errc::empty_document);
    CHECK(error_of([&] { parse_record(doc("e", DocumentFormat::tabular, "Date,HR\n"), dict); }) ==
          Errc::empty_document);
    CHECK(error_of([&] {
            parse_record(doc("e", DocumentFormat::tabular, "Date,Heart Rate\n11/24/23\n"), dict);
          }) == Errc::malformed_tabular);
    CHECK(error_of([&] {
            parse_record(doc("e", DocumentFormat::tabular, "Date,Heart Rate\n11/24/23,fast\n"),
                         dict);
          }) == Errc::malformed_value);
    CHECK(error_of([&] {
            parse_record(doc("e", DocumentFormat::keyvalue_text, "Heart Rate: 90\nheart rate: 91\n"), dict);
          }) == Errc::malformed_value);
  }

  TEST_CASE("parse_record is deterministic") {
    auto dict = hvtest::dictionary();
    auto d = doc("d", DocumentFormat::keyvalue_text, "Date: 10/10/23\nCholesterol: 150\nok\n");
    CHECK(parse_record(d, dict) == parse_record(d, dict));
  }

  TEST_CASE("timeseries samples carry observed_at") {
    auto dict = hvtest::dictionary();
    auto sets = parse_timeseries(
        doc("t1", DocumentFormat::timeseries,
            "timestamp,resting-heart-rate\n2023-11-24T08:00:00Z,58\n2023-11-24T09:00:00Z,61\n"),
        dict);
    REQUIRE(sets.size() == 2);
    CHECK(sets[0].tags[0].keyword == "resting-heart-rate");
    CHECK(sets[0].tags[0].value == Value::integer(58));
    REQUIRE(sets[1].tags[0].observed_at);
    CHECK(TimeOfDay::of(*sets[1].tags[0].observed_at).seconds == 9 * 3600);

    auto one = parse_timeseries(
        doc("t2", DocumentFormat::timeseries, "timestamp,steps\n2023-11-24T08:00:00Z,100\n"), dict);
    CHECK(one.size() == 1);

    CHECK(error_of([&] {
            parse_timeseries(doc("t3", DocumentFormat::timeseries, "resting-heart-rate\n58\n"),
                             dict);
          }) == Errc::missing_timestamp_column);
    CHECK(error_of([&] {
            parse_timeseries(doc("t4", DocumentFormat::timeseries, "timestamp,hr\n,58\n"), dict);
          }) == Errc::missing_timestamp_column);
  }

  TEST_CASE("objects: class, sidecar date and fallbacks") {
    auto dict = hvtest::dictionary();
    auto xray = doc("x1", DocumentFormat::opaque_binary, std::string("\x89PNG\0data", 9));
    xray.object_class = "X-ray";
    xray.sidecar = "Date: 11/24/23";
    auto tags = ingest_object(xray, dict);
    CHECK(tags.find("ObjectClass")->value.as_text() == "X-ray");
    CHECK(tags.find("Date")->value == Value::date(Date::from_ymd(2023, 11, 24)));

    auto mri = doc("m1", DocumentFormat::opaque_binary, "bytes");
    mri.object_class = "MRI";
    auto mt = ingest_object(mri, dict);
    CHECK(mt.find("ObjectClass")->value.as_text() == "MRI");
    CHECK(mt.find("Date")->value == Value::date(Date::from_timestamp(mri.upload_time)));

    auto unknown = doc("u1", DocumentFormat::opaque_binary, "bytes");
    CHECK(ingest_object(unknown, dict).find("ObjectClass")->value.as_text() == "Unclassified");

    CHECK(error_of([&] { ingest_object(doc("z", DocumentFormat::opaque_binary, ""), dict); }) ==
          Errc::empty_document);
  }

  TEST_CASE("condition option attaches a casefolded Condition tag") {
    auto dict = hvtest::dictionary();
    auto d = doc("c1", DocumentFormat::keyvalue_text, "Date: 11/24/23\nMedication: ibuprofen\n");
    d.condition = "Disc Herniation";
    auto sets = parse_document(d, dict);
    CHECK(sets[0].find("Condition")->value.as_text() == "disc herniation");
  }

  TEST_CASE("manifest grammar") {
    auto entries = parse_manifest(
        "# comment\n"
        "vitals.csv | tabular | Northside Clinic\n"
        "scan.bin | opaque_binary | Imaging Center | class=MRI | sidecar=scan.txt | id=mri-1\n");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].format == DocumentFormat::tabular);
    CHECK(entries[0].source_label == "Northside Clinic");
    CHECK(entries[1].object_class == "MRI");
    CHECK(entries[1].sidecar_path == "scan.txt");
    CHECK(entries[1].doc_id == "mri-1");
    CHECK(error_of([] { parse_manifest("a.pdf | pdf | Clinic\n"); }) == Errc::unknown_format);
    CHECK(error_of([] { parse_manifest("a.csv | tabular\n"); }) == Errc::invalid_argument);
    CHECK(parse_manifest("").empty());
  }

  TEST_CASE("dictionary round trips through its config form") {
    auto dict = KeywordDictionary::load(hvtest::config_dir() / "keywords.conf");
    auto again = KeywordDictionary::parse(dict.serialize());
    CHECK(again.serialize() == dict.serialize());
    CHECK(dict.lookup("cholesterol")->vital);
    CHECK(dict.lookup("Condition")->casefold);
  }
}
