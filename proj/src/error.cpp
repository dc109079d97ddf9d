#include "hypkt/error.hpp"

namespace hypkt {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::domain_error: return "domain_error";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::not_found: return "not_found";
    case Errc::parse_error: return "parse_error";
    case Errc::io_error: return "io_error";
    case Errc::transport_error: return "transport_error";
    case Errc::divergence: return "divergence";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& message, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      message_(message),
      detail_(std::move(detail)) {}

}  // namespace hypkt
