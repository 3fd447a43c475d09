#include "fd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fd/errors.hpp"
#include "fd/rng.hpp"

namespace fd {

namespace {

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& mat) {
  return mat.allFinite();
}

bool is_binary_column(const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  return true;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  // column-major

  int col(const std::string& name) const {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    throw Error(ErrorCode::MissingColumn, "column '" + name + "' not in CSV");
  }
};

CsvTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadArgument, "cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::BadArgument, "empty CSV '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_line(line);
  table.columns.resize(table.header.size());
  size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size())
      throw Error(ErrorCode::DimensionMismatch,
                  "row " + std::to_string(row + 2) + " of '" + path + "' has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(table.header.size()));
    for (size_t j = 0; j < fields.size(); ++j) {
      char* end = nullptr;
      double v = std::strtod(fields[j].c_str(), &end);
      if (end == fields[j].c_str())
        throw Error(ErrorCode::NonFiniteValue,
                    "non-numeric field '" + fields[j] + "' in column '" +
                        table.header[j] + "'");
      table.columns[j].push_back(v);
    }
    ++row;
  }
  return table;
}

}  // namespace

Dataset Dataset::make(Eigen::MatrixXd x, Eigen::VectorXd a, Eigen::MatrixXd m,
                      Eigen::VectorXd y, std::optional<MediatorKind> forced_kind) {
  const Eigen::Index n = y.size();
  if (a.size() != n || x.rows() != n || m.rows() != n)
    throw Error(ErrorCode::RowMismatch, "x/a/m/y row counts disagree");
  if (x.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "need >= 1 covariate");
  if (m.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "need >= 1 mediator");
  if (n < 1) throw Error(ErrorCode::DimensionMismatch, "empty dataset");
  if (!all_finite(x) || !all_finite(m) || !a.allFinite() || !y.allFinite())
    throw Error(ErrorCode::NonFiniteValue, "dataset contains NaN or Inf");
  if (!is_binary_column(a))
    throw Error(ErrorCode::NonBinaryTreatment, "treatment must be coded 0/1");

  Dataset out;
  out.x = std::move(x);
  out.a = std::move(a);
  out.m = std::move(m);
  out.y = std::move(y);
  if (forced_kind) {
    if (*forced_kind != MediatorKind::Multivariate && out.m.cols() != 1)
      throw Error(ErrorCode::DimensionMismatch,
                  "univariate mediator kind with multiple mediator columns");
    if (*forced_kind == MediatorKind::Binary && !is_binary_column(out.m.col(0)))
      throw Error(ErrorCode::UnsupportedKind,
                  "binary mediator kind forced but values outside {0,1}");
    out.mediator_kind = *forced_kind;
  } else if (out.m.cols() > 1) {
    out.mediator_kind = MediatorKind::Multivariate;
  } else if (is_binary_column(out.m.col(0))) {
    out.mediator_kind = MediatorKind::Binary;
  } else {
    out.mediator_kind = MediatorKind::Continuous;
  }
  return out;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  CsvTable table = read_table(path);
  const int n = table.columns.empty() ? 0
                                      : static_cast<int>(table.columns[0].size());
  if (n == 0) throw Error(ErrorCode::BadArgument, "no data rows in '" + path + "'");

  auto pull_vec = [&](const std::string& name) {
    const auto& c = table.columns[table.col(name)];
    return Eigen::Map<const Eigen::VectorXd>(c.data(), n).eval();
  };
  auto pull_mat = [&](const std::vector<std::string>& names) {
    Eigen::MatrixXd mat(n, static_cast<int>(names.size()));
    for (size_t j = 0; j < names.size(); ++j)
      mat.col(static_cast<int>(j)) = pull_vec(names[j]);
    return mat;
  };

  if (schema.m.empty() || schema.x.empty())
    throw Error(ErrorCode::BadArgument, "schema needs mediator and covariate names");
  return Dataset::make(pull_mat(schema.x), pull_vec(schema.a), pull_mat(schema.m),
                       pull_vec(schema.y), schema.forced_kind);
}

void write_csv(const std::string& path, const Dataset& data,
               const CsvSchema& schema) {
  if (static_cast<int>(schema.m.size()) != data.d() ||
      static_cast<int>(schema.x.size()) != data.p())
    throw Error(ErrorCode::DimensionMismatch, "schema names do not match dataset");
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::BadArgument, "cannot write '" + path + "'");
  out << schema.y << ',' << schema.a;
  for (const auto& name : schema.m) out << ',' << name;
  for (const auto& name : schema.x) out << ',' << name;
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (int i = 0; i < data.n(); ++i) {
    put(data.y[i]);
    out << ',';
    put(data.a[i]);
    for (int j = 0; j < data.d(); ++j) {
      out << ',';
      put(data.m(i, j));
    }
    for (int j = 0; j < data.p(); ++j) {
      out << ',';
      put(data.x(i, j));
    }
    out << '\n';
  }
}

std::vector<double> load_csv_column(const std::string& path,
                                    const std::string& column) {
  CsvTable table = read_table(path);
  return table.columns[table.col(column)];
}

std::vector<int> split_folds(int n, int k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorCode::BadArgument, "fold count must be >= 1");
  if (k > n)
    throw Error(ErrorCode::TooManyFolds,
                std::to_string(k) + " folds for " + std::to_string(n) + " rows");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  // Fisher-Yates driven by the counter-based stream: same seed, same folds.
  rng::Stream s{seed, 0xF01Du};
  for (int i = n - 1; i > 0; --i) {
    const double u = rng::u01(s, static_cast<std::uint64_t>(i));
    const int j = std::min(i, static_cast<int>(u * (i + 1)));
    std::swap(order[i], order[j]);
  }
  std::vector<int> fold(n);
  for (int i = 0; i < n; ++i) fold[order[i]] = (i % k) + 1;
  return fold;
}

}  // namespace fd
