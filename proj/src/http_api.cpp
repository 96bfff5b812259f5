#include "healthvault/http_api.hpp"

#include <sodium.h>

#include <chrono>

#include "httplib.h"

namespace healthvault {

using nlohmann::json;

namespace {

std::string decode_base64(const std::string& text) {
  std::string out(text.size(), '\0');
  std::size_t len = 0;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(),
                        " \r\n", &len, nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw Error(Errc::invalid_argument, "content_base64 is not valid base64");
  }
  out.resize(len);
  return out;
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

}  // namespace

int http_status(Errc code) {
  switch (code) {
    case Errc::unknown_proposal:
    case Errc::unknown_object:
    case Errc::unknown_table:
    case Errc::unknown_row:
      return 404;
    case Errc::already_decided:
    case Errc::duplicate_document:
      return 409;
    case Errc::store_unavailable:
      return 503;
    case Errc::corrupt_state:
    case Errc::protocol_error:
    case Errc::scheme_mismatch:
    case Errc::wrong_scheme:
    case Errc::decrypt_auth_failure:
    case Errc::domain_overflow:
      return 500;
    default:
      return 400;
  }
}

json outcome_to_json(const QueryOutcome& o) {
  json proposals = json::array();
  for (const auto& p : o.proposals) proposals.push_back(proposal_to_json(p));
  return {{"result", result_to_json(o.result)},
          {"report_id", o.report_id},
          {"proposals", proposals},
          {"materialized", o.materialized}};
}

ingest::RawDocument document_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::invalid_argument, "a document must be a JSON object");
  ingest::RawDocument d;
  d.doc_id = j.value("doc_id", "");
  if (d.doc_id.empty()) throw Error(Errc::invalid_argument, "document without doc_id");
  auto fmt = ingest::parse_format(j.value("format", "keyvalue_text"));
  if (!fmt) throw Error(Errc::unknown_format, "unknown format for " + d.doc_id);
  d.declared_format = *fmt;
  if (auto b64 = optional_string(j, "content_base64")) {
    d.content = decode_base64(*b64);
  } else {
    d.content = j.value("content", "");
  }
  d.source_label = j.value("source_label", "api");
  d.sidecar = optional_string(j, "sidecar");
  d.object_class = optional_string(j, "object_class");
  d.condition = optional_string(j, "condition");
  auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  d.upload_time = Timestamp{now.time_since_epoch()};
  return d;
}

HttpApi::HttpApi(Vault& vault, std::string token)
    : vault_(vault), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
  if (sodium_init() < 0) throw Error(Errc::invalid_argument, "libsodium failed to initialize");
  auto& s = *server_;
  s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Authorization") != "Bearer " + token_) {
      send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), errc_name(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "InvalidArgument", std::string("bad JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  });

  s.Post("/upload", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    std::vector<ingest::RawDocument> docs;
    for (const auto& d : body.at("documents")) docs.push_back(document_from_json(d));
    send_json(res, 200, ingest_report_to_json(vault_.upload(docs)));
  });
  s.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    send_json(res, 200, outcome_to_json(vault_.query(body.at("text").get<std::string>())));
  });
  s.Post("/share", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    send_json(res, 200, outcome_to_json(vault_.share(body.at("condition").get<std::string>())));
  });
  s.Get("/pending", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& p : vault_.pending()) list.push_back(proposal_to_json(p));
    send_json(res, 200, {{"pending", list}});
  });
  s.Post(R"(/confirm/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body.empty() ? "{}" : req.body);
    std::string decision = body.value("decision", "");
    if (decision != "accept" && decision != "reject") {
      throw Error(Errc::invalid_argument, "decision must be accept or reject");
    }
    send_json(res, 200, proposal_to_json(vault_.confirm(req.matches[1], decision == "accept")));
  });
  s.Get(R"(/report/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
    if (req.get_param_value("format") == "text") {
      res.set_content(vault_.report_text(req.matches[1]), "text/plain");
      return;
    }
    send_json(res, 200, vault_.report(req.matches[1]));
  });
}

HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) throw Error(Errc::invalid_argument, "cannot bind " + host);
  return port;
}

void HttpApi::serve() { server_->listen_after_bind(); }

void HttpApi::stop() {
  if (server_) server_->stop();
}

}  // namespace healthvault
