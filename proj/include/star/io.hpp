#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "star/em.hpp"

namespace star {

/// How one input column maps onto design columns. Categorical columns become
/// one dummy per non-baseline level; levels[0] (first seen) is the baseline.
struct ColumnEncoding {
  std::string name;
  bool categorical = false;
  std::vector<std::string> levels;
};

struct DesignEncoding {
  std::vector<ColumnEncoding> columns;

  /// "(Intercept)" followed by numeric names and "name=level" dummies.
  std::vector<std::string> design_names() const;
};

inline const std::string kInterceptName = "(Intercept)";

struct Dataset {
  std::vector<int> y;  // empty when the file has no response column
  Matrix X;            // intercept in column 0
  std::vector<std::string> names;
  Vector weights;  // empty: unit weights
  std::string response;
  std::optional<std::string> weight_column;
  DesignEncoding encoding;
  int y_max = 0;  // the --y-max value, or the largest response
};

/// RFC 4180 rows (quoted fields, doubled quotes, CRLF, embedded newlines).
std::vector<std::vector<std::string>> parse_csv(std::istream& in);

/// Reads a CSV with a header. Non-response, non-weight columns form the
/// design in file order, with categorical (non-numeric) columns one-hot
/// encoded against their first-seen level. Errors name the data row (1-based).
Dataset read_csv(const std::string& path, const std::string& response,
                 const std::optional<std::string>& weight_column = std::nullopt,
                 const std::optional<int>& y_max = std::nullopt);
Dataset read_csv(std::istream& in, const std::string& response,
                 const std::optional<std::string>& weight_column = std::nullopt,
                 const std::optional<int>& y_max = std::nullopt);

/// Reads a CSV against a stored encoding. The response is optional unless
/// `require_response`; missing or unexpected columns are reported by name.
Dataset read_csv_encoded(std::istream& in, const DesignEncoding& encoding, const std::string& response,
                         const std::optional<std::string>& weight_column, bool require_response);

/// Canonical form: response, design columns without the intercept, weights.
void write_csv(const Dataset& data, std::ostream& out);

/// Shortest decimal that round-trips the double exactly.
std::string format_double(double v);

struct FitMetadata {
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::size_t n = 0;
  int n_params = 0;
  bool converged = false;
  int n_iter = 0;
  std::uint64_t seed = 0;
  double tol = 1e-10;
  int max_iter = 500;
  std::optional<double> lambda;  // selected Box-Cox exponent
};

struct ModelDocument {
  static constexpr int kSchema = 1;
  StarModel model;  // weights are not stored
  std::vector<std::string> coef_names;
  std::string response;
  std::optional<std::string> weight_column;
  DesignEncoding encoding;
  FitMetadata fit;
};

std::string to_json_string(const ModelDocument& doc);
/// Throws DataError on malformed documents or an unknown schema version.
ModelDocument parse_model(const std::string& text);

ModelDocument make_document(const FitResult& fit, const Dataset& data, std::uint64_t seed, const EmConfig& config);

}  // namespace star
