#include "star/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "star/error.hpp"

namespace star {

using nlohmann::json;

std::vector<std::string> DesignEncoding::design_names() const {
  std::vector<std::string> names = {kInterceptName};
  for (const auto& c : columns) {
    if (!c.categorical) {
      names.push_back(c.name);
      continue;
    }
    for (std::size_t k = 1; k < c.levels.size(); ++k) names.push_back(c.name + "=" + c.levels[k]);
  }
  return names;
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  char c;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_row();
    } else if (c == '\n') {
      end_row();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw DataError("CSV ends inside a quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

namespace {

std::optional<double> parse_number(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  const std::string t = s.substr(b, e - b + 1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool is_blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return k;
    }
    return std::nullopt;
  }
};

Table load_table(std::istream& in) {
  auto rows = parse_csv(in);
  if (rows.empty()) throw DataError("CSV has no header row");
  Table t;
  t.header = std::move(rows.front());
  std::set<std::string> seen;
  for (const auto& h : t.header) {
    if (!seen.insert(h).second) throw DataError("duplicate column name '" + h + "'");
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != t.header.size()) {
      throw DataError("row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) + " fields, expected " +
                      std::to_string(t.header.size()));
    }
    for (std::size_t k = 0; k < rows[r].size(); ++k) {
      if (is_blank(rows[r][k])) {
        throw DataError("row " + std::to_string(r) + " has a missing value in column '" + t.header[k] + "'");
      }
    }
    t.rows.push_back(std::move(rows[r]));
  }
  if (t.rows.empty()) throw DataError("CSV has no data rows");
  return t;
}

std::vector<int> parse_response(const Table& t, std::size_t col, const std::optional<int>& y_max) {
  std::vector<int> y(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto v = parse_number(t.rows[r][col]);
    if (!v || *v < 0.0 || *v != std::floor(*v) || *v > 2e9) {
      throw DataError("row " + std::to_string(r + 1) + ": response '" + t.rows[r][col] +
                      "' is not a non-negative integer");
    }
    y[r] = static_cast<int>(*v);
    if (y_max && y[r] > *y_max) {
      throw DataError("row " + std::to_string(r + 1) + ": response " + std::to_string(y[r]) + " exceeds y_max " +
                      std::to_string(*y_max));
    }
  }
  return y;
}

Vector parse_weights(const Table& t, std::size_t col) {
  Vector w(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto v = parse_number(t.rows[r][col]);
    if (!v || !(*v > 0.0)) throw DataError("row " + std::to_string(r + 1) + ": weight must be a positive number");
    w[static_cast<Eigen::Index>(r)] = *v;
  }
  return w;
}

Matrix build_design(const Table& t, const DesignEncoding& enc) {
  const auto names = enc.design_names();
  Matrix X(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(names.size()));
  X.col(0).setOnes();
  Eigen::Index out = 1;
  for (const auto& c : enc.columns) {
    const std::size_t col = *t.find(c.name);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const std::string& cell = t.rows[r][col];
      if (!c.categorical) {
        const auto v = parse_number(cell);
        if (!v) throw DataError("row " + std::to_string(r + 1) + ": column '" + c.name + "' value '" + cell + "' is not numeric");
        X(row, out) = *v;
        continue;
      }
      std::size_t level = c.levels.size();
      for (std::size_t k = 0; k < c.levels.size(); ++k) {
        if (c.levels[k] == cell) level = k;
      }
      if (level == c.levels.size()) {
        throw DataError("row " + std::to_string(r + 1) + ": column '" + c.name + "' has unseen level '" + cell + "'");
      }
      for (std::size_t k = 1; k < c.levels.size(); ++k) {
        X(row, out + static_cast<Eigen::Index>(k) - 1) = level == k ? 1.0 : 0.0;
      }
    }
    out += c.categorical ? static_cast<Eigen::Index>(c.levels.size()) - 1 : 1;
  }
  return X;
}

Dataset finish(const Table& t, DesignEncoding enc, const std::string& response, std::optional<std::size_t> response_col,
               const std::optional<std::string>& weight_column, const std::optional<int>& y_max) {
  Dataset d;
  d.response = response;
  d.weight_column = weight_column;
  if (response_col) {
    d.y = parse_response(t, *response_col, y_max);
    d.y_max = y_max ? *y_max : *std::max_element(d.y.begin(), d.y.end());
  } else if (y_max) {
    d.y_max = *y_max;
  }
  if (weight_column) d.weights = parse_weights(t, *t.find(*weight_column));
  d.X = build_design(t, enc);
  d.names = enc.design_names();
  d.encoding = std::move(enc);
  return d;
}

}  // namespace

Dataset read_csv(std::istream& in, const std::string& response, const std::optional<std::string>& weight_column,
                 const std::optional<int>& y_max) {
  const Table t = load_table(in);
  const auto response_col = t.find(response);
  if (!response_col) throw DataError("response column '" + response + "' not found");
  std::optional<std::size_t> weight_col;
  if (weight_column) {
    weight_col = t.find(*weight_column);
    if (!weight_col) throw DataError("weight column '" + *weight_column + "' not found");
    if (*weight_col == *response_col) throw DataError("weight column cannot be the response");
  }
  DesignEncoding enc;
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    if (k == *response_col || (weight_col && k == *weight_col)) continue;
    ColumnEncoding c;
    c.name = t.header[k];
    for (const auto& row : t.rows) {
      if (!parse_number(row[k])) c.categorical = true;
    }
    if (c.categorical) {
      for (const auto& row : t.rows) {
        if (std::find(c.levels.begin(), c.levels.end(), row[k]) == c.levels.end()) c.levels.push_back(row[k]);
      }
    }
    enc.columns.push_back(std::move(c));
  }
  return finish(t, std::move(enc), response, response_col, weight_column, y_max);
}

Dataset read_csv(const std::string& path, const std::string& response, const std::optional<std::string>& weight_column,
                 const std::optional<int>& y_max) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, response, weight_column, y_max);
}

Dataset read_csv_encoded(std::istream& in, const DesignEncoding& encoding, const std::string& response,
                         const std::optional<std::string>& weight_column, bool require_response) {
  const Table t = load_table(in);
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  for (const auto& c : encoding.columns) {
    if (!t.find(c.name)) missing.push_back(c.name);
  }
  const auto response_col = t.find(response);
  if (require_response && !response_col) missing.push_back(response);
  if (weight_column && !t.find(*weight_column)) missing.push_back(*weight_column);
  for (const auto& h : t.header) {
    const bool known = h == response || (weight_column && h == *weight_column) ||
                       std::any_of(encoding.columns.begin(), encoding.columns.end(),
                                   [&](const ColumnEncoding& c) { return c.name == h; });
    if (!known) extra.push_back(h);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "data columns do not match the model:";
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? " " : ", ") + x;
      return s;
    };
    if (!missing.empty()) msg += " missing" + list(missing) + ";";
    if (!extra.empty()) msg += " unexpected" + list(extra) + ";";
    msg.pop_back();
    throw DataError(msg);
  }
  return finish(t, encoding, response, response_col, weight_column, std::nullopt);
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_csv(const Dataset& data, std::ostream& out) {
  const bool has_y = !data.y.empty();
  const bool has_w = data.weights.size() > 0;
  std::vector<std::string> header;
  if (has_y) header.push_back(data.response);
  for (std::size_t k = 1; k < data.names.size(); ++k) header.push_back(data.names[k]);
  if (has_w) header.push_back(data.weight_column.value_or("weight"));
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << quote_field(header[k]);
  out << "\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    bool first = true;
    auto put = [&](const std::string& s) {
      out << (first ? "" : ",") << s;
      first = false;
    };
    if (has_y) put(std::to_string(data.y[static_cast<std::size_t>(i)]));
    for (Eigen::Index k = 1; k < data.X.cols(); ++k) put(format_double(data.X(i, k)));
    if (has_w) put(format_double(data.weights[i]));
    out << "\n";
  }
}

namespace {

json optional_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j, double inf) { return j.is_null() ? inf : j.get<double>(); }

json transform_json(const Transformation& g) {
  json t = {{"kind", to_string(g.kind())},
            {"lambda", g.lambda()},
            {"mu_z", g.mu_z()},
            {"sigma_z", g.sigma_z()},
            {"support_lower", g.support_lower()},
            {"support_upper", optional_number(g.support_upper())},
            {"parameter_count", g.parameter_count()}};
  if (g.spline()) {
    t["knots"] = {{"t", g.spline()->knot_x()}, {"z", g.spline()->knot_y()}, {"tangent", g.spline()->tangents()}};
  }
  return t;
}

Transformation transform_from_json(const json& t) {
  std::optional<MonotoneSpline> spline;
  if (t.contains("knots")) {
    const auto& k = t.at("knots");
    spline = MonotoneSpline::from_parts(k.at("t").get<std::vector<double>>(), k.at("z").get<std::vector<double>>(),
                                        k.at("tangent").get<std::vector<double>>());
  }
  return Transformation::from_parts(transform_kind_from_string(t.at("kind").get<std::string>()),
                                    t.at("lambda").get<double>(), t.at("mu_z").get<double>(),
                                    t.at("sigma_z").get<double>(), std::move(spline),
                                    t.at("support_lower").get<double>(), number_or_inf(t.at("support_upper"), kInf),
                                    t.at("parameter_count").get<int>());
}

json scheme_json(const RoundingScheme& s) {
  json j = {{"y_max", s.y_max() ? json(*s.y_max()) : json(nullptr)},
            {"censored_at", s.censored_at() ? json(*s.censored_at()) : json(nullptr)}};
  if (!s.custom_breakpoints().empty()) j["breakpoints"] = s.custom_breakpoints();
  return j;
}

RoundingScheme scheme_from_json(const json& j) {
  if (j.contains("breakpoints")) return RoundingScheme::with_breakpoints(j.at("breakpoints").get<std::vector<double>>());
  if (!j.at("censored_at").is_null()) return RoundingScheme::censored(j.at("censored_at").get<int>());
  if (!j.at("y_max").is_null()) return RoundingScheme::bounded(j.at("y_max").get<int>());
  return RoundingScheme::unbounded();
}

}  // namespace

std::string to_json_string(const ModelDocument& doc) {
  json coef = json::array();
  for (Eigen::Index k = 0; k < doc.model.theta.size(); ++k) {
    coef.push_back({{"name", doc.coef_names.at(static_cast<std::size_t>(k))}, {"value", doc.model.theta[k]}});
  }
  json columns = json::array();
  for (const auto& c : doc.encoding.columns) {
    json col = {{"name", c.name}, {"type", c.categorical ? "categorical" : "numeric"}};
    if (c.categorical) col["levels"] = c.levels;
    columns.push_back(col);
  }
  const auto& f = doc.fit;
  json fit = {{"loglik", f.loglik},     {"aic", f.aic},         {"bic", f.bic},
              {"n", f.n},               {"n_params", f.n_params}, {"converged", f.converged},
              {"n_iter", f.n_iter},     {"seed", f.seed},       {"tol", f.tol},
              {"max_iter", f.max_iter}, {"lambda", f.lambda ? json(*f.lambda) : json(nullptr)}};
  json j = {{"schema", ModelDocument::kSchema},
            {"transform", transform_json(doc.model.transform)},
            {"scheme", scheme_json(doc.model.scheme)},
            {"coef", coef},
            {"sigma", doc.model.sigma},
            {"design",
             {{"response", doc.response},
              {"weights", doc.weight_column ? json(*doc.weight_column) : json(nullptr)},
              {"columns", columns}}},
            {"fit", fit}};
  return j.dump(2) + "\n";
}

ModelDocument parse_model(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("schema").get<int>() != ModelDocument::kSchema) {
      throw DataError("unsupported model schema " + j.at("schema").dump());
    }
    ModelDocument doc;
    doc.model.transform = transform_from_json(j.at("transform"));
    doc.model.scheme = scheme_from_json(j.at("scheme"));
    const auto& coef = j.at("coef");
    doc.model.theta.resize(static_cast<Eigen::Index>(coef.size()));
    for (std::size_t k = 0; k < coef.size(); ++k) {
      doc.coef_names.push_back(coef[k].at("name").get<std::string>());
      doc.model.theta[static_cast<Eigen::Index>(k)] = coef[k].at("value").get<double>();
    }
    doc.model.sigma = j.at("sigma").get<double>();
    doc.model.validate();
    const auto& design = j.at("design");
    doc.response = design.at("response").get<std::string>();
    if (!design.at("weights").is_null()) doc.weight_column = design.at("weights").get<std::string>();
    for (const auto& c : design.at("columns")) {
      ColumnEncoding col;
      col.name = c.at("name").get<std::string>();
      col.categorical = c.at("type").get<std::string>() == "categorical";
      if (col.categorical) col.levels = c.at("levels").get<std::vector<std::string>>();
      doc.encoding.columns.push_back(std::move(col));
    }
    if (doc.encoding.design_names() != doc.coef_names) {
      throw DataError("model coefficients do not match its design encoding");
    }
    const auto& f = j.at("fit");
    doc.fit.loglik = f.at("loglik").get<double>();
    doc.fit.aic = f.at("aic").get<double>();
    doc.fit.bic = f.at("bic").get<double>();
    doc.fit.n = f.at("n").get<std::size_t>();
    doc.fit.n_params = f.at("n_params").get<int>();
    doc.fit.converged = f.at("converged").get<bool>();
    doc.fit.n_iter = f.at("n_iter").get<int>();
    doc.fit.seed = f.at("seed").get<std::uint64_t>();
    doc.fit.tol = f.at("tol").get<double>();
    doc.fit.max_iter = f.at("max_iter").get<int>();
    if (!f.at("lambda").is_null()) doc.fit.lambda = f.at("lambda").get<double>();
    return doc;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  } catch (const DomainError& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
}

ModelDocument make_document(const FitResult& fit, const Dataset& data, std::uint64_t seed, const EmConfig& config) {
  ModelDocument doc;
  doc.model = fit.model;
  doc.model.weights = Vector();
  doc.coef_names = data.names;
  doc.response = data.response;
  doc.weight_column = data.weight_column;
  doc.encoding = data.encoding;
  doc.fit.loglik = fit.loglik;
  doc.fit.aic = fit.aic;
  doc.fit.bic = fit.bic;
  doc.fit.n = fit.n_obs;
  doc.fit.n_params = fit.n_params;
  doc.fit.converged = fit.converged;
  doc.fit.n_iter = fit.n_iter;
  doc.fit.seed = seed;
  doc.fit.tol = config.tol;
  doc.fit.max_iter = config.max_iter;
  doc.fit.lambda = fit.selected_lambda;
  return doc;
}

}  // namespace star
