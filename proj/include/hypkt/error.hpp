#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hypkt {

enum class Errc {
  shape_mismatch,
  domain_error,
  invalid_argument,
  not_found,
  parse_error,
  io_error,
  transport_error,
  divergence,
};

std::string_view to_string(Errc code);

// Structured error carried by every failing operation. `what()` is a single
// line of the form "<code>: <message>" so the CLI can print it verbatim.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::string detail = {});

  Errc code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  // Auxiliary payload, e.g. the raw LLM response that failed to parse.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string message_;
  std::string detail_;
};

}  // namespace hypkt
