#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "sysrisk/types.hpp"

namespace sysrisk {

constexpr double kInf = std::numeric_limits<double>::infinity();

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Affine expression over problem columns: sum of coeff * x[col] + offset.
struct LinearExpr {
  std::vector<std::pair<int, double>> terms;
  double offset = 0.0;

  void add(int col, double coeff) {
    if (coeff != 0.0) terms.emplace_back(col, coeff);
  }
};

/// Incremental builder for a block of rows  lo <= C x <= hi.
class RowBlockBuilder {
 public:
  explicit RowBlockBuilder(int cols) : cols_(cols) {}

  int begin_row(double lo, double hi) {
    lo_.push_back(lo);
    hi_.push_back(hi);
    return static_cast<int>(lo_.size()) - 1;
  }

  void coeff(int row, int col, double value) {
    if (value != 0.0) triplets_.emplace_back(row, col, value);
  }

  /// Adds expr to the given row, folding the offset into both bounds.
  void add_expr(int row, const LinearExpr& expr, double scale = 1.0) {
    for (const auto& [col, c] : expr.terms) coeff(row, col, scale * c);
    if (expr.offset != 0.0) {
      if (lo_[row] > -kInf) lo_[row] -= scale * expr.offset;
      if (hi_[row] < kInf) hi_[row] -= scale * expr.offset;
    }
  }

  int rows() const { return static_cast<int>(lo_.size()); }
  int cols() const { return cols_; }

  SparseMatrix matrix() const {
    SparseMatrix A(rows(), cols_);
    A.setFromTriplets(triplets_.begin(), triplets_.end());
    return A;
  }

  VectorXd lower() const {
    return Eigen::Map<const VectorXd>(lo_.data(), static_cast<long>(lo_.size()));
  }
  VectorXd upper() const {
    return Eigen::Map<const VectorXd>(hi_.data(), static_cast<long>(hi_.size()));
  }

 private:
  int cols_;
  std::vector<Triplet> triplets_;
  std::vector<double> lo_, hi_;
};

/// Convex quadratic program
///   minimize    0.5 x' P x + q' x
///   subject to  lower <= A x <= upper,
/// with P symmetric positive semidefinite. Equality rows have
/// lower == upper; variable bounds are rows of an identity block.
struct QpProblem {
  SparseMatrix P;
  VectorXd q;
  SparseMatrix A;
  VectorXd lower;
  VectorXd upper;

  int vars() const { return static_cast<int>(q.size()); }
  int rows() const { return static_cast<int>(lower.size()); }
  void validate() const;
};

enum class QpStatus {
  Solved,
  MaxIterations,
  PrimalInfeasible,
  DualInfeasible,
};

const char* to_string(QpStatus status);

struct QpSettings {
  double rho = 0.1;            // base step for inequality rows
  double rho_eq_scale = 1e3;   // equality rows use rho * rho_eq_scale
  double sigma = 1e-6;         // primal regularization
  double alpha = 1.6;          // over-relaxation
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  double eps_infeas = 1e-9;    // certificate tolerance
  int max_iterations = 200000;
  int check_interval = 25;
  bool scale = true;           // Ruiz equilibration, computed once at setup
  int scaling_passes = 10;
  bool polish = true;
  double polish_delta = 1e-7;
  int polish_refine_steps = 3;
};

struct QpResult {
  QpStatus status = QpStatus::MaxIterations;
  VectorXd x;           // primal solution
  VectorXd y;           // row multipliers (y_i > 0 pushes at upper bound)
  VectorXd z;           // A x at the solution
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = kInf;
  double dual_residual = kInf;
  bool polished = false;

  bool solved() const { return status == QpStatus::Solved; }
};

/// Operator-splitting QP solver with over-relaxation, one-time scaling and
/// an active-set polish step for high-accuracy termination. The KKT system
/// is factorized once at setup and reused across solves; only the linear
/// cost changes between solves, which is what the decomposition loop needs.
/// Fully deterministic: identical inputs give identical iterates.
class QpSolver {
 public:
  explicit QpSolver(QpProblem problem, QpSettings settings = QpSettings());
  ~QpSolver();
  QpSolver(QpSolver&&) noexcept;
  QpSolver& operator=(QpSolver&&) noexcept;

  void update_linear_cost(const VectorXd& q);
  void warm_start(const VectorXd& x, const VectorXd& y);

  QpResult solve();

  const QpProblem& problem() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper.
QpResult solve_convex_qp(const QpProblem& problem,
                         const QpSettings& settings = QpSettings());

}  // namespace sysrisk
