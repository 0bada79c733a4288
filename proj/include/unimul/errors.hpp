#pragma once

#include <stdexcept>
#include <string>

namespace unimul {

// Invalid combination of shapes, partitions, replication factors or limits.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Tile, replica or element index outside its valid range.
class IndexError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

// A rank touched storage it does not own.
class OwnershipError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Caller-side precondition violated (dimension mismatch, containment, ...).
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// API misuse such as waiting twice on the same transfer.
class UsageError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

} // namespace unimul
