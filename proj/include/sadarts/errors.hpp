#pragma once

#include <stdexcept>
#include <string>

namespace sadarts {

/// Shapes of operands do not conform for the requested primitive.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Unknown operation name requested from the op catalog.
class CatalogError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Key not present in a lookup table (benchmark rows, recipes).
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Config or report schema violation.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Stored artifact content does not match its manifest.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A search produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sadarts
