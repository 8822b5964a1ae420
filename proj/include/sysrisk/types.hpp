#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sysrisk {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown on malformed inputs (dimension mismatches, parameters out of range).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine cannot deliver its contract
/// (infeasible subproblem, iteration limit, ...).
class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

constexpr double kProbTol = 1e-12;

/// Probability vector over a finite scenario set: entries >= 0, sum == 1.
struct ProbabilityVector {
  VectorXd p;

  ProbabilityVector() = default;
  explicit ProbabilityVector(VectorXd probs) : p(std::move(probs)) { validate(); }

  static ProbabilityVector uniform(int n) {
    require(n >= 1, "probability vector needs at least one atom");
    return ProbabilityVector(VectorXd::Constant(n, 1.0 / n));
  }

  int size() const { return static_cast<int>(p.size()); }
  double operator[](int s) const { return p[s]; }

  void validate() const {
    require(p.size() >= 1, "probability vector is empty");
    require((p.array() >= 0.0).all(), "probability entries must be nonnegative");
    require(std::abs(p.sum() - 1.0) <= kProbTol,
            "probability entries must sum to one");
  }
};

/// Scalar random loss on a finite probability space: value per scenario.
struct DiscreteRandomVariable {
  VectorXd values;
  ProbabilityVector prob;

  DiscreteRandomVariable() = default;
  DiscreteRandomVariable(VectorXd vals, ProbabilityVector probs)
      : values(std::move(vals)), prob(std::move(probs)) {
    validate();
  }

  int scenarios() const { return static_cast<int>(values.size()); }

  double expectation() const { return prob.p.dot(values); }

  void validate() const {
    require(values.size() == prob.p.size(),
            "value count does not match probability count");
    require(values.allFinite(), "random variable has non-finite values");
  }
};

/// Random vector of m component losses over N common scenarios.
/// Row i holds the loss of component i across scenarios.
struct RandomVector {
  MatrixXd values;  // m x N
  ProbabilityVector prob;

  RandomVector() = default;
  RandomVector(MatrixXd vals, ProbabilityVector probs)
      : values(std::move(vals)), prob(std::move(probs)) {
    validate();
  }

  int components() const { return static_cast<int>(values.rows()); }
  int scenarios() const { return static_cast<int>(values.cols()); }

  DiscreteRandomVariable component(int i) const {
    return DiscreteRandomVariable(values.row(i).transpose(), prob);
  }

  void validate() const {
    require(values.cols() == prob.p.size(),
            "scenario count does not match probability count");
    require(values.rows() >= 1, "random vector has no components");
    require(values.allFinite(), "random vector has non-finite values");
  }
};

/// Seedable generator with a fixed algorithm (mt19937_64) and a fixed
/// bits-to-double mapping, so streams are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw in [0, 1) using the top 53 bits of one 64-bit output.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in {0, ..., n-1} (n small; modulo bias negligible
  /// and irrelevant for reproducibility).
  int uniform_int(int n) {
    return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sysrisk
