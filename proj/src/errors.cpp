#include "rvp/errors.hpp"

namespace rvp {

const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidDensity: return "InvalidDensity";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::EmptySupport: return "EmptySupport";
    case ErrorKind::NoSelfConsistentState: return "NoSelfConsistentState";
    case ErrorKind::SupportOverflow: return "SupportOverflow";
    case ErrorKind::InvalidPotential: return "InvalidPotential";
    case ErrorKind::PreconditionError: return "PreconditionError";
    case ErrorKind::IllConditionedBasis: return "IllConditionedBasis";
    case ErrorKind::IntegrationBlowup: return "IntegrationBlowup";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& msg)
    : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace rvp
