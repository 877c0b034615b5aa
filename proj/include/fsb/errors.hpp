#pragma once

#include <stdexcept>
#include <string>

namespace fsb {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: non-scalar loss, freed graph, empty class, ...
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EpisodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedMethodError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace fsb
