#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "healthvault/vault.hpp"

namespace hvtest {

inline healthvault::VaultConfig vault_config(const std::filesystem::path& data,
                                             std::string store = "memory:") {
  healthvault::VaultConfig cfg;
  cfg.data_dir = data;
  cfg.config_dir = config_dir();
  cfg.store = std::move(store);
  return cfg;
}

// A vault over an in-process store whose transport the test can switch off.
struct LoopbackVault {
  std::shared_ptr<healthvault::store::StoreEngine> engine =
      std::make_shared<healthvault::store::StoreEngine>(healthvault::store::EngineOptions{});
  std::shared_ptr<healthvault::store::LoopbackTransport> transport =
      std::make_shared<healthvault::store::LoopbackTransport>(engine);
  std::unique_ptr<healthvault::Vault> vault;

  explicit LoopbackVault(healthvault::VaultConfig cfg)
      : vault(std::make_unique<healthvault::Vault>(std::move(cfg), transport)) {}
  healthvault::Vault* operator->() { return vault.get(); }
};

inline healthvault::ingest::RawDocument vitals_sample_doc(std::string id = "vitals_sample") {
  return doc(std::move(id), healthvault::ingest::DocumentFormat::tabular,
             "Date,Heart Rate,Cholesterol\n10/1/23,90,190\n10/10/23,80,150\n11/5/23,100,200\n"
             "11/24/23,90,220\n");
}

// Visit on 11/24/23 at 10:00 without vitals, plus a same-day Vital reading.
inline std::vector<healthvault::ingest::RawDocument> visit_docs(bool with_vital) {
  using healthvault::ingest::DocumentFormat;
  std::vector<healthvault::ingest::RawDocument> docs;
  docs.push_back(doc("visit", DocumentFormat::tabular,
                     "Date,Time,Facility,Doctor,Weight\n11/24/23,10:00,Riverside Clinic,Dr Lee,80.5\n"));
  if (with_vital) {
    docs.push_back(doc("vital", DocumentFormat::tabular,
                       "Date,Time,Heart Rate,Cholesterol\n11/24/23,09:30,90,220\n11/23/23,10:00,70,180\n"));
  } else {
    docs.push_back(doc("vital", DocumentFormat::tabular,
                       "Date,Time,Heart Rate,Cholesterol\n11/23/23,10:00,70,180\n"));
  }
  return docs;
}

// Disc herniation and OCD records across tables and objects.
inline std::vector<healthvault::ingest::RawDocument> sharing_docs() {
  using healthvault::ingest::DocumentFormat;
  std::vector<healthvault::ingest::RawDocument> docs;
  docs.push_back(doc("meds", DocumentFormat::tabular,
                     "Date,Medication,Dosage,Condition\n"
                     "2023-09-01,Ibuprofen,400mg,Disc Herniation\n"
                     "2023-09-02,Fluoxetine,20mg,OCD\n"
                     "2023-09-10,Gabapentin,300mg,disc herniation\n"));
  docs.push_back(doc("pt", DocumentFormat::tabular,
                     "Date,Therapy,Condition\n2023-09-05,Lumbar stabilization,disc herniation\n"
                     "2023-09-06,Exposure therapy,ocd\n"));
  docs.push_back(doc("dx", DocumentFormat::tabular,
                     "Date,Diagnosis,Condition,Doctor\n2023-08-30,L4-L5 herniation,disc herniation,Dr Patel\n"
                     "2023-08-31,Obsessive compulsive disorder,ocd,Dr Kim\n"));
  auto mri = doc("mri", DocumentFormat::opaque_binary, std::string("MRI\0lumbar", 10));
  mri.object_class = "MRI";
  mri.condition = "Disc Herniation";
  docs.push_back(mri);
  auto xray = doc("xray", DocumentFormat::opaque_binary, "XRAYspine");
  xray.object_class = "X-ray";
  xray.sidecar = "Date: 2023-09-03\nCondition: disc herniation";
  docs.push_back(xray);
  auto scan = doc("ocd-scan", DocumentFormat::opaque_binary, "MRIbrain");
  scan.object_class = "MRI";
  scan.condition = "OCD";
  docs.push_back(scan);
  return docs;
}

inline const healthvault::Binding& cell(const healthvault::query::ResultRow& row, std::string_view col) {
  const auto* b = healthvault::find_binding(row.cells, col);
  REQUIRE(b != nullptr);
  return *b;
}

}  // namespace hvtest
