#pragma once

#include <stdexcept>
#include <string>

namespace kto {

/// Coarse failure categories. The CLI maps them onto exit codes.
enum class ErrorClass { config, input, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

/// Malformed or incompatible input data (shape, domain kind, empty sets).
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(ErrorClass::input, what) {}
};

/// Bad configuration: unknown feature map, out-of-range hyperparameter.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::config, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorClass::numerical, what) {}
};

/// A Gram matrix that has to be inverted is numerically singular.
class SingularityError : public NumericalError {
 public:
  SingularityError(std::string matrix, const std::string& what)
      : NumericalError(what), matrix_(std::move(matrix)) {}
  const std::string& matrix() const noexcept { return matrix_; }

 private:
  std::string matrix_;
};

inline const char* to_string(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::config: return "config";
    case ErrorClass::input: return "input";
    case ErrorClass::numerical: return "numerical";
  }
  return "unknown";
}

}  // namespace kto
