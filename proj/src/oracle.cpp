#include "healthvault/oracle.hpp"

#include <random>

namespace healthvault::reference {

namespace {

const std::vector<std::string> kDoctors = {"Patel", "Kim", "Lee", "Garcia", "Okafor"};
const std::vector<std::string> kFacilities = {"Riverside", "Lakeside", "Mercy"};
const std::vector<std::string> kConditions = {"Disc Herniation", "disc herniation", "OCD", "ocd", "Migraine",
                                              "asthma"};
const std::vector<std::string> kMedications = {"Ibuprofen", "Gabapentin", "Fluoxetine", "Sumatriptan",
                                               "Albuterol"};
const std::vector<std::string> kTherapies = {"Lumbar stabilization", "Exposure therapy", "Core strength",
                                             "Breathing drills"};
const std::vector<std::string> kMonths = {"January", "February", "March",     "April",   "May",      "June",
                                          "July",    "August",   "September", "October", "November", "December"};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
  }

  // Days of 2023 only, so same-day matches across tables are common.
  Date day() { return Date{Date::from_ymd(2023, 1, 1).days + uniform(0, 364)}; }
  std::string iso(Date d) { return d.iso(); }
  std::string us(Date d) {
    return std::to_string(d.month()) + "/" + std::to_string(d.day()) + "/" + std::to_string(d.year() % 100);
  }
  std::string date_text(Date d) { return chance(0.5) ? iso(d) : us(d); }
  std::string time_text() {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:%02d", uniform(6, 21), uniform(0, 3) * 15);
    return buf;
  }
  std::string weight() { return std::to_string(uniform(55, 110)) + "." + std::to_string(uniform(0, 9)); }
  std::string bytes(std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) out += static_cast<char>(uniform(0, 255));
    return out;
  }
  std::string month_phrase() { return pick(kMonths) + " 2023"; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<ingest::RawDocument> random_corpus(std::uint64_t seed, std::size_t rows) {
  Gen g(seed);
  std::vector<ingest::RawDocument> docs;
  auto add = [&](ingest::DocumentFormat fmt, std::string content) {
    ingest::RawDocument d;
    d.doc_id = "doc" + std::to_string(docs.size());
    d.declared_format = fmt;
    d.content = std::move(content);
    d.source_label = "generated";
    docs.push_back(std::move(d));
  };
  auto blank_or = [&](double p_blank, const std::string& v) { return g.chance(p_blank) ? std::string() : v; };

  std::size_t produced = 0;
  while (produced < rows) {
    std::size_t n = std::min<std::size_t>(rows - produced, static_cast<std::size_t>(g.uniform(1, 25)));
    int kind = g.uniform(0, 99);
    std::string csv;
    if (kind < 40) {
      if (n == 1 && g.chance(0.5)) {
        Date d = g.day();
        add(ingest::DocumentFormat::keyvalue_text, "Date: " + g.date_text(d) + "\nTime: " + g.time_text() +
                                                       "\nHeart Rate: " + std::to_string(g.uniform(50, 130)) +
                                                       "\nCholesterol: " + std::to_string(g.uniform(120, 260)) +
                                                       "\n");
        produced += n;
        continue;
      }
      csv = "Date,Time,Heart Rate,Cholesterol\n";
      for (std::size_t i = 0; i < n; ++i) {
        csv += g.date_text(g.day()) + "," + blank_or(0.2, g.time_text()) + "," +
               std::to_string(g.uniform(50, 130)) + "," + blank_or(0.1, std::to_string(g.uniform(120, 260))) + "\n";
      }
    } else if (kind < 55) {
      csv = "Date,Time,Facility,Doctor,Weight,Heart Rate\n";
      for (std::size_t i = 0; i < n; ++i) {
        csv += g.date_text(g.day()) + "," + blank_or(0.2, g.time_text()) + "," + g.pick(kFacilities) + "," +
               g.pick(kDoctors) + "," + g.weight() + "," + blank_or(0.6, std::to_string(g.uniform(50, 130))) +
               "\n";
      }
    } else if (kind < 70) {
      csv = "Date,Medication,Dosage,Condition\n";
      for (std::size_t i = 0; i < n; ++i) {
        csv += g.date_text(g.day()) + "," + g.pick(kMedications) + "," + std::to_string(g.uniform(1, 8) * 50) +
               "mg," + g.pick(kConditions) + "\n";
      }
    } else if (kind < 80) {
      csv = "Date,Therapy,Condition\n";
      for (std::size_t i = 0; i < n; ++i) {
        csv += g.date_text(g.day()) + "," + g.pick(kTherapies) + "," + g.pick(kConditions) + "\n";
      }
    } else if (kind < 90) {
      csv = "Date,Diagnosis,Condition,Doctor\n";
      for (std::size_t i = 0; i < n; ++i) {
        const auto& c = g.pick(kConditions);
        csv += g.date_text(g.day()) + "," + c + " confirmed," + c + "," + g.pick(kDoctors) + "\n";
      }
    } else {
      csv = "Date,Description\n";
      for (std::size_t i = 0; i < n; ++i) {
        csv += g.date_text(g.day()) + ",note " + std::to_string(g.uniform(0, 99999)) + "\n";
      }
    }
    add(ingest::DocumentFormat::tabular, std::move(csv));
    produced += n;
    if (g.chance(0.25)) {
      ingest::RawDocument obj;
      obj.doc_id = "doc" + std::to_string(docs.size());
      obj.declared_format = ingest::DocumentFormat::opaque_binary;
      obj.object_class = g.chance(0.5) ? "MRI" : "X-ray";
      obj.content = g.bytes(static_cast<std::size_t>(g.uniform(8, 64)));
      if (g.chance(0.5)) {
        obj.condition = g.pick(kConditions);
      } else {
        obj.sidecar = "Date: " + g.iso(g.day()) + "\nCondition: " + g.pick(kConditions);
      }
      docs.push_back(std::move(obj));
    }
  }
  return docs;
}

std::vector<std::string> random_queries(std::uint64_t seed, std::size_t n) {
  Gen g(seed);
  const std::vector<std::string> fns = {"max", "min", "average"};
  const std::vector<std::string> cols = {"heart rate", "cholesterol", "HR", "chol"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    Date a = g.day();
    Date b = g.day();
    if (b < a) std::swap(a, b);
    switch (g.uniform(0, 15)) {
      case 0: out.push_back("select \"Vital\" where \"Date\" = " + g.iso(a)); break;
      case 1: out.push_back("records from Dr. " + g.pick(kDoctors)); break;
      case 2: out.push_back("records from clinic " + g.pick(kFacilities)); break;
      case 3: out.push_back("show Visit_Details on " + g.us(a)); break;
      case 4: {
        int lo = g.uniform(50, 120);
        out.push_back("select \"Vital\" where \"Heart Rate\" between " + std::to_string(lo) + " and " +
                      std::to_string(lo + g.uniform(0, 20)));
        break;
      }
      case 5: out.push_back("records between " + g.iso(a) + " and " + g.iso(b)); break;
      case 6:
        out.push_back("select \"Vital\" where \"Cholesterol\" >= " + std::to_string(g.uniform(120, 260)) +
                      " and \"Date\" < " + g.iso(b));
        break;
      case 7: out.push_back(g.pick(fns) + " " + g.pick(cols) + " in " + g.month_phrase()); break;
      case 8: out.push_back("what was my " + g.pick(fns) + " " + g.pick(cols) + " in 2023"); break;
      case 9: out.push_back(g.pick(fns) + " " + g.pick(cols) + " from " + g.iso(a) + " to " + g.iso(b)); break;
      case 10: out.push_back("monthly " + g.pick(fns) + " heart rate and cholesterol"); break;
      case 11: out.push_back("average weight in " + g.month_phrase()); break;
      case 12: out.push_back("share " + g.pick(kConditions)); break;
      case 13: out.push_back("records about " + g.pick(kConditions)); break;
      case 14: out.push_back("select \"Medications\" where \"Condition\" = '" + g.pick(kConditions) + "'"); break;
      default: out.push_back("aggregate max(\"Weight\") from \"Visit_Details\" by month"); break;
    }
  }
  return out;
}

DiffReport diff(Vault& vault, const ReferenceEngine& ref, const std::vector<std::string>& queries) {
  DiffReport report;
  for (const auto& q : queries) {
    std::vector<std::string> got;
    std::vector<std::string> want;
    try {
      got = canonical(vault.query(q).result);
    } catch (const Error& e) {
      got = {"error:" + std::string(errc_name(e.code()))};
    }
    try {
      want = canonical(ref.run(q));
    } catch (const Error& e) {
      want = {"error:" + std::string(errc_name(e.code()))};
    }
    ++report.queries;
    report.rows_compared += want.size();
    if (got != want) report.mismatches.push_back({q, std::move(got), std::move(want)});
  }
  return report;
}

std::vector<LeakHit> audit_leakage(const std::vector<store::LogEntry>& log,
                                   const std::vector<std::string>& sentinels) {
  auto hex = [](std::string_view bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (unsigned char c : bytes) {
      out += kDigits[c >> 4];
      out += kDigits[c & 15];
    }
    return out;
  };
  std::vector<LeakHit> hits;
  for (std::size_t i = 0; i < log.size(); ++i) {
    for (const auto& s : sentinels) {
      if (s.empty()) continue;
      if (log[i].body.find(s) != std::string::npos || log[i].body.find(hex(s)) != std::string::npos) {
        hits.push_back({i, s});
      }
    }
  }
  return hits;
}

}  // namespace healthvault::reference
