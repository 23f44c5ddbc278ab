#pragma once

#include <stdexcept>
#include <string>

namespace pdi {

// Bad configuration values (budgets, rates, scales, CLI flags).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-range input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing columns, axes or LLM variants.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// A group that cannot be estimated: no records, or no labeled records.
class EmptyGroupError : public std::runtime_error {
 public:
  EmptyGroupError(std::string group, const std::string& what)
      : std::runtime_error(what), group_(std::move(group)) {}
  const std::string& group() const { return group_; }

 private:
  std::string group_;
};

}  // namespace pdi
