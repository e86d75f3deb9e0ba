#pragma once

#include <stdexcept>
#include <string>

namespace lanerl {

// Error taxonomy shared by all modules. Each type names the contract it
// reports a violation of; all carry a human-readable message.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct EmptyBufferError : std::runtime_error {
  explicit EmptyBufferError(const std::string& msg) : std::runtime_error("empty buffer: " + msg) {}
};

struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error("schema error: " + msg) {}
};

struct MissingDataError : std::runtime_error {
  explicit MissingDataError(const std::string& msg) : std::runtime_error("missing data: " + msg) {}
};

struct EndpointError : std::runtime_error {
  explicit EndpointError(const std::string& msg) : std::runtime_error("endpoint error: " + msg) {}
};

}  // namespace lanerl
