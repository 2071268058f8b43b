#pragma once

#include <stdexcept>
#include <string>

namespace liftsim {

/// Bad arguments: arity or dimension mismatch, malformed problem.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model document does not follow the schema. `path` is a JSON pointer.
class SchemaError : public InputError {
 public:
  SchemaError(std::string path, const std::string& what)
      : InputError(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A modelling assumption is violated; `assumption` names it.
class AssumptionError : public InputError {
 public:
  AssumptionError(std::string assumption, const std::string& what)
      : InputError(assumption + ": " + what),
        assumption_(std::move(assumption)) {}
  const std::string& assumption() const { return assumption_; }

 private:
  std::string assumption_;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnboundedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver claimed feasibility but the re-check of the certificate failed.
class NumericalCertificateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace liftsim
