#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fd {

enum class MediatorKind { Binary, Continuous, Multivariate };

// One observed sample (X, A, M, Y). Treat as immutable after construction;
// nothing in the library mutates a Dataset in place.
struct Dataset {
  Eigen::MatrixXd x;  // n x p covariates
  Eigen::VectorXd a;  // n, binary treatment coded 0/1
  Eigen::MatrixXd m;  // n x d mediator(s)
  Eigen::VectorXd y;  // n outcome
  MediatorKind mediator_kind = MediatorKind::Continuous;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(x.cols()); }
  int d() const { return static_cast<int>(m.cols()); }

  // Validates shapes, finiteness, binary treatment, and that mediator_kind is
  // consistent with the columns. Throws fd::Error on violation.
  static Dataset make(Eigen::MatrixXd x, Eigen::VectorXd a, Eigen::MatrixXd m,
                      Eigen::VectorXd y,
                      std::optional<MediatorKind> forced_kind = std::nullopt);
};

// Column naming for CSV I/O. Mediator kind is inferred (single column with
// values in {0,1} reads as Binary) unless forced via `forced_kind`.
struct CsvSchema {
  std::string y = "y";
  std::string a = "a";
  std::vector<std::string> m = {"m"};
  std::vector<std::string> x = {"x"};
  std::optional<MediatorKind> forced_kind;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes y, a, mediator columns, covariate columns with round-trip precision.
void write_csv(const std::string& path, const Dataset& data,
               const CsvSchema& schema);

// Reads one numeric column (used for plugged density ratios).
std::vector<double> load_csv_column(const std::string& path,
                                    const std::string& column);

// Deterministic fold labels in {1..k}, sizes differing by at most one,
// shuffled by a counter-based stream of `seed`.
std::vector<int> split_folds(int n, int k, std::uint64_t seed);

}  // namespace fd
