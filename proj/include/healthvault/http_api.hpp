#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "healthvault/vault.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace healthvault {

// JSON service over a vault. Every request needs "Authorization: Bearer <token>".
//   POST /upload        {"documents": [document...]}  -> ingestion report
//   POST /query         {"text": "..."}               -> query outcome
//   POST /share         {"condition": "..."}          -> query outcome with manifest
//   GET  /pending                                      -> {"pending": [proposal...]}
//   POST /confirm/{id}  {"decision": "accept"|"reject"} -> proposal
//   GET  /report/{id}[?format=text]                    -> stored report
// A document is {"doc_id", "format", "content" | "content_base64",
// "source_label"?, "sidecar"?, "object_class"?, "condition"?}.
class HttpApi {
 public:
  HttpApi(Vault& vault, std::string token);
  ~HttpApi();
  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  // Port 0 binds any free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void serve();
  void stop();

 private:
  Vault& vault_;
  std::string token_;
  std::unique_ptr<httplib::Server> server_;
};

nlohmann::json outcome_to_json(const QueryOutcome& o);
ingest::RawDocument document_from_json(const nlohmann::json& j);
// HTTP status for a vault error code.
int http_status(Errc code);

}  // namespace healthvault
