#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace healthvault {

enum class Errc {
  empty_document,
  malformed_tabular,
  malformed_value,
  missing_timestamp_column,
  unknown_format,
  duplicate_document,
  schema_conflict,
  wrong_scheme,
  decrypt_auth_failure,
  domain_overflow,
  unknown_table,
  unknown_row,
  scheme_mismatch,
  inverted_range,
  unknown_object,
  store_unavailable,
  protocol_error,
  unrecognized_query,
  unknown_proposal,
  already_decided,
  invalid_argument,
  corrupt_state,
};

std::string_view errc_name(Errc code);

// All user-facing failures carry a stable code so the API and CLI can map
// them without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace healthvault
