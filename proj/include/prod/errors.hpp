#pragma once

#include <stdexcept>
#include <string>

namespace prod {

// Error taxonomy shared by every module. All carry a human-readable message
// naming the offending field, line, or id.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& msg) : std::runtime_error("argument error: " + msg) {}
};

struct UnsupportedError : std::runtime_error {
  explicit UnsupportedError(const std::string& msg) : std::runtime_error("unsupported operation: " + msg) {}
};

struct GridError : std::runtime_error {
  explicit GridError(const std::string& msg) : std::runtime_error("grid error: " + msg) {}
};

struct AlignmentError : std::runtime_error {
  explicit AlignmentError(const std::string& msg) : std::runtime_error("alignment error: " + msg) {}
};

struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& msg) : std::runtime_error("protocol error: " + msg) {}
};

struct PreconditionError : std::runtime_error {
  explicit PreconditionError(const std::string& msg) : std::runtime_error("precondition error: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error("numerical error: " + msg) {}
};

}  // namespace prod
