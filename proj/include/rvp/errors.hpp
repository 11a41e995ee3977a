#pragma once
#include <stdexcept>
#include <string>

namespace rvp {

enum class ErrorKind {
  InvalidDensity,
  DomainError,
  EmptySupport,
  NoSelfConsistentState,
  SupportOverflow,
  InvalidPotential,
  PreconditionError,
  IllConditionedBasis,
  IntegrationBlowup,
  Unsupported,
  SchemaError,
};

const char* to_string(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& msg);

}  // namespace rvp
