#pragma once

#include <stdexcept>
#include <string>

namespace gpfl {

// Shape/dimension mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Category id or index out of range.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Vector with (near-)zero norm fed to an angle-based operation.
struct DegenerateVectorError : std::domain_error {
  using std::domain_error::domain_error;
};

// Empty input where at least one element is required (empty batch/shard/...).
struct EmptyInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API contract violated (e.g. conditional inputs requested from an
// unfrozen embedding table).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PartitionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AggregationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gpfl
