#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace star {

/// Raised for arguments outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when input data cannot support the requested estimate
/// (constant response, wrong dimensions, values outside the support).
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A truncated-normal cell carries no representable probability mass.
class DegenerateTruncation : public std::runtime_error {
 public:
  DegenerateTruncation(std::size_t row, const std::string& what)
      : std::runtime_error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// The (weighted) design matrix is rank deficient.
class SingularDesign : public std::runtime_error {
 public:
  SingularDesign(std::vector<std::size_t> dependent, const std::string& what)
      : std::runtime_error(what), dependent_(std::move(dependent)) {}
  const std::vector<std::size_t>& dependent_columns() const noexcept { return dependent_; }

 private:
  std::vector<std::size_t> dependent_;
};

/// Numerical failure inside an optimizer (moment inconsistency, sigma collapse,
/// negative likelihood-ratio statistic).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace star
