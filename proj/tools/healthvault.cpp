// Operator CLI for a local vault. Verbs mirror the HTTP endpoints.
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <unistd.h>

#include "CLI11.hpp"
#include "healthvault/http_api.hpp"
#include "healthvault/oracle.hpp"
#include "healthvault/reference_engine.hpp"
#include "healthvault/vault.hpp"

using namespace healthvault;
using nlohmann::json;

namespace {

HttpApi* g_api = nullptr;

void on_signal(int) {
  if (g_api != nullptr) g_api->stop();
}

std::string hex(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out += kDigits[c >> 4];
    out += kDigits[c & 15];
  }
  return out;
}

std::string unhex(std::string_view text) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::invalid_argument, "bad hex digit");
  };
  if (text.size() % 2 != 0) throw Error(Errc::invalid_argument, "odd hex length");
  std::string out;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    out += static_cast<char>(nibble(text[i]) * 16 + nibble(text[i + 1]));
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::invalid_argument, "cannot read " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

void print_outcome(const QueryOutcome& o, bool as_json) {
  if (as_json) {
    std::cout << outcome_to_json(o).dump(2) << "\n";
    return;
  }
  std::cout << result_to_text(o.result);
  for (const auto& p : o.proposals) {
    std::cout << "proposal " << p.id << ": " << p.target.table << "." << p.target.column << " = "
              << p.value.str() << " (from " << p.source_table << ")\n";
  }
  for (const auto& t : o.materialized) std::cout << "materialized " << t << "\n";
  std::cout << "report " << o.report_id << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Encrypted personal health record vault"};
  app.require_subcommand(1);
  std::string data_dir = "vault-data";
  std::string config_dir = "config";
  std::string store;
  std::uint64_t threshold = 3;
  bool as_json = false;
  app.add_option("--data", data_dir, "Vault state directory")->capture_default_str();
  app.add_option("--config", config_dir, "Keyword, synonym, table and policy files")->capture_default_str();
  app.add_option("--store", store, "memory: | local:<dir> | tcp:<host>:<port> (default local:<data>/store)");
  app.add_option("--learn-threshold", threshold, "Queries before a learned derived table")->capture_default_str();
  app.add_flag("--json", as_json, "Print JSON instead of text");

  auto open_vault = [&] {
    VaultConfig cfg;
    cfg.data_dir = data_dir;
    cfg.config_dir = config_dir;
    cfg.store = store.empty() ? "local:" + (std::filesystem::path(data_dir) / "store").string() : store;
    cfg.learn_threshold = threshold;
    return std::make_unique<Vault>(cfg);
  };

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string token;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--token", token, "Bearer token (or HEALTHVAULT_TOKEN)");

  auto* upload = app.add_subcommand("upload", "Ingest the documents listed in a manifest");
  std::string manifest;
  upload->add_option("manifest", manifest, "Lines of <path> | <format> | <label> [| key=value ...]")
      ->required()
      ->check(CLI::ExistingFile);

  auto* query = app.add_subcommand("query", "Run a plain-language or structured query");
  std::string text;
  query->add_option("text", text)->required();

  auto* share = app.add_subcommand("share", "Release records for a condition");
  std::string condition;
  share->add_option("condition", condition)->required();

  auto* pending = app.add_subcommand("pending", "List pending extrapolation proposals");

  auto* confirm = app.add_subcommand("confirm", "Accept or reject a proposal");
  std::string proposal;
  bool accept = false;
  bool reject = false;
  confirm->add_option("id", proposal)->required();
  auto* acc = confirm->add_flag("--accept", accept);
  auto* rej = confirm->add_flag("--reject", reject);
  acc->excludes(rej);

  auto* report = app.add_subcommand("report", "Print a stored query report");
  std::string report_id;
  bool report_text = false;
  report->add_option("id", report_id)->required();
  report->add_flag("--text", report_text, "Tabular text form");

  auto* learn = app.add_subcommand("learn", "Materialize derived tables demanded by policies");

  auto* dump = app.add_subcommand("dump-log", "Dump the store's observation log as JSON lines");
  std::string dump_out;
  dump->add_option("--out", dump_out, "Write to a file instead of stdout");

  auto* audit = app.add_subcommand("audit-leakage", "Scan a store log for sentinel plaintexts");
  std::string sentinels_path;
  std::string log_path;
  audit->add_option("--sentinels", sentinels_path, "One sentinel per line")->required()->check(CLI::ExistingFile);
  audit->add_option("--log", log_path, "A dump-log file (default: the live store)");

  auto* oracle = app.add_subcommand("oracle-diff", "Compare the vault against the plaintext reference engine");
  std::uint64_t seed = 1;
  std::size_t rows = 1000;
  std::size_t nqueries = 200;
  std::string oracle_manifest;
  std::string query_file;
  oracle->add_option("--seed", seed)->capture_default_str();
  oracle->add_option("--rows", rows)->capture_default_str();
  oracle->add_option("--queries", nqueries)->capture_default_str();
  oracle->add_option("--manifest", oracle_manifest, "Use these documents instead of a random corpus");
  oracle->add_option("--query-file", query_file, "Use these queries, one per line");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      if (token.empty()) {
        if (const char* env = std::getenv("HEALTHVAULT_TOKEN")) token = env;
      }
      if (token.empty()) {
        std::cerr << "serve needs --token or HEALTHVAULT_TOKEN\n";
        return 2;
      }
      auto vault = open_vault();
      HttpApi api(*vault, token);
      int bound = api.bind(host, port);
      g_api = &api;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ":" << bound << "\n";
      api.serve();
      g_api = nullptr;
      return 0;
    }
    if (*upload) {
      auto r = open_vault()->upload_manifest(manifest);
      if (as_json) {
        std::cout << ingest_report_to_json(r).dump(2) << "\n";
      } else {
        for (const auto& d : r.documents) {
          if (d.ok) {
            std::cout << d.doc_id << ": " << d.rows_added << " rows, " << d.derived_rows_updated
                      << " derived rows, " << d.objects_added << " objects\n";
          } else {
            std::cout << d.doc_id << ": " << d.error_code << ": " << d.message << "\n";
          }
        }
        std::cout << r.ingested() << " ingested, " << r.failed() << " failed\n";
      }
      return r.failed() == 0 ? 0 : 1;
    }
    if (*query) {
      print_outcome(open_vault()->query(text), as_json);
      return 0;
    }
    if (*share) {
      print_outcome(open_vault()->share(condition), as_json);
      return 0;
    }
    if (*pending) {
      json list = json::array();
      for (const auto& p : open_vault()->pending()) list.push_back(proposal_to_json(p));
      std::cout << list.dump(2) << "\n";
      return 0;
    }
    if (*confirm) {
      if (!accept && !reject) {
        std::cerr << "confirm needs --accept or --reject\n";
        return 2;
      }
      std::cout << proposal_to_json(open_vault()->confirm(proposal, accept)).dump(2) << "\n";
      return 0;
    }
    if (*report) {
      auto vault = open_vault();
      if (report_text) {
        std::cout << vault->report_text(report_id);
      } else {
        std::cout << vault->report(report_id).dump(2) << "\n";
      }
      return 0;
    }
    if (*learn) {
      for (const auto& t : open_vault()->learn()) std::cout << t << "\n";
      return 0;
    }
    if (*dump) {
      std::ofstream file;
      if (!dump_out.empty()) file.open(dump_out);
      std::ostream& out = dump_out.empty() ? std::cout : file;
      for (const auto& e : open_vault()->store().dump_log()) {
        out << json{{"ts", e.timestamp_ms}, {"kind", static_cast<int>(e.kind)}, {"body_hex", hex(e.body)}}.dump()
            << "\n";
      }
      return 0;
    }
    if (*audit) {
      std::vector<store::LogEntry> log;
      if (log_path.empty()) {
        log = open_vault()->store().dump_log();
      } else {
        for (const auto& line : read_lines(log_path)) {
          auto j = json::parse(line);
          log.push_back({static_cast<store::MessageKind>(j.at("kind").get<int>()), j.at("ts").get<std::uint64_t>(),
                         unhex(j.at("body_hex").get<std::string>())});
        }
      }
      auto sentinels = read_lines(sentinels_path);
      auto hits = reference::audit_leakage(log, sentinels);
      for (const auto& h : hits) std::cout << "entry " << h.entry << " contains " << h.sentinel << "\n";
      std::cout << log.size() << " log entries, " << sentinels.size() << " sentinels, " << hits.size()
                << " matches\n";
      return hits.empty() ? 0 : 1;
    }
    if (*oracle) {
      auto scratch = std::filesystem::temp_directory_path() /
                     ("healthvault-oracle-" + std::to_string(::getpid()));
      std::filesystem::remove_all(scratch);
      VaultConfig cfg;
      cfg.data_dir = scratch;
      cfg.config_dir = config_dir;
      cfg.learn_threshold = threshold;
      Vault vault(cfg);
      reference::ReferenceEngine ref(config_dir);
      std::vector<ingest::RawDocument> docs;
      if (oracle_manifest.empty()) {
        docs = reference::random_corpus(seed, rows);
      } else {
        docs = ingest::load_manifest(oracle_manifest, Timestamp{});
      }
      auto up = vault.upload(docs);
      std::size_t ref_failed = 0;
      for (const auto& d : docs) {
        try {
          ref.ingest(d);
        } catch (const Error&) {
          ++ref_failed;
        }
      }
      auto queries = query_file.empty() ? reference::random_queries(seed + 1, nqueries) : read_lines(query_file);
      auto r = reference::diff(vault, ref, queries);
      std::filesystem::remove_all(scratch);
      for (const auto& m : r.mismatches) {
        std::cout << "MISMATCH " << m.query << "\n  vault:\n";
        for (const auto& l : m.vault) std::cout << "    " << l << "\n";
        std::cout << "  reference:\n";
        for (const auto& l : m.reference) std::cout << "    " << l << "\n";
      }
      std::cout << docs.size() << " documents (" << up.failed() << " vault / " << ref_failed
                << " reference rejected), " << r.queries << " queries, " << r.rows_compared << " rows compared, "
                << r.mismatches.size() << " mismatches\n";
      return r.mismatches.empty() && up.failed() == ref_failed ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << errc_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
