#include "sysrisk/qp.hpp"

#include <algorithm>
#include <cmath>

namespace sysrisk {

namespace {

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Max absolute entry per column of a sparse matrix.
VectorXd col_inf_norms(const SparseMatrix& M) {
  VectorXd n = VectorXd::Zero(M.cols());
  for (int k = 0; k < M.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(M, k); it; ++it)
      n[it.col()] = std::max(n[it.col()], std::abs(it.value()));
  return n;
}

VectorXd row_inf_norms(const SparseMatrix& M) {
  VectorXd n = VectorXd::Zero(M.rows());
  for (int k = 0; k < M.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(M, k); it; ++it)
      n[it.row()] = std::max(n[it.row()], std::abs(it.value()));
  return n;
}

SparseMatrix diag_scale(const VectorXd& left, const SparseMatrix& M,
                        const VectorXd& right) {
  return left.asDiagonal() * M * right.asDiagonal();
}

}  // namespace

void QpProblem::validate() const {
  require(P.rows() == P.cols(), "quadratic term is not square");
  require(P.rows() == q.size(), "linear cost size mismatch");
  require(A.cols() == q.size(), "constraint matrix column mismatch");
  require(A.rows() == lower.size() && A.rows() == upper.size(),
          "constraint bound size mismatch");
  for (int i = 0; i < lower.size(); ++i)
    require(lower[i] <= upper[i], "constraint row with lower > upper");
}

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Solved: return "solved";
    case QpStatus::MaxIterations: return "max_iterations";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
    case QpStatus::DualInfeasible: return "dual_infeasible";
  }
  return "unknown";
}

struct QpSolver::Impl {
  QpProblem orig;
  QpSettings cfg;
  int n = 0, k = 0;

  // Scaled data.
  SparseMatrix Ps, As;
  VectorXd qs, ls, us;
  VectorXd D, E;     // variable / row scalings
  double cost_scale = 1.0;

  VectorXd rho_vec, rho_inv;

  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper> kkt;
  bool factorized = false;

  // Iterates (scaled space).
  VectorXd x, z, y;

  Impl(QpProblem problem, QpSettings settings)
      : orig(std::move(problem)), cfg(settings) {
    orig.validate();
    n = orig.vars();
    k = orig.rows();
    setup();
  }

  void setup() {
    Ps = orig.P;
    As = orig.A;
    qs = orig.q;
    ls = orig.lower;
    us = orig.upper;
    D = VectorXd::Ones(n);
    E = VectorXd::Ones(k);
    cost_scale = 1.0;
    if (cfg.scale) equilibrate();

    rho_vec.resize(k);
    for (int i = 0; i < k; ++i) {
      const bool eq = std::isfinite(ls[i]) && std::isfinite(us[i]) &&
                      us[i] - ls[i] < 1e-14;
      rho_vec[i] = eq ? cfg.rho * cfg.rho_eq_scale : cfg.rho;
    }
    rho_inv = rho_vec.cwiseInverse();

    factorize(cfg.sigma);

    x = VectorXd::Zero(n);
    z = VectorXd::Zero(k);
    y = VectorXd::Zero(k);
  }

  void equilibrate() {
    for (int pass = 0; pass < cfg.scaling_passes; ++pass) {
      VectorXd cp = col_inf_norms(Ps);
      VectorXd ca = col_inf_norms(As);
      VectorXd dx(n);
      for (int j = 0; j < n; ++j) {
        double m = std::max(cp[j], ca[j]);
        dx[j] = (m > 1e-12) ? 1.0 / std::sqrt(m) : 1.0;
      }
      VectorXd ra = row_inf_norms(As);
      VectorXd de(k);
      for (int i = 0; i < k; ++i)
        de[i] = (ra[i] > 1e-12) ? 1.0 / std::sqrt(ra[i]) : 1.0;

      Ps = diag_scale(dx, Ps, dx);
      As = diag_scale(de, As, dx);
      qs = dx.asDiagonal() * qs;
      D = D.cwiseProduct(dx);
      E = E.cwiseProduct(de);

      // Cost normalization.
      VectorXd pc = col_inf_norms(Ps);
      double mean_pc = (n > 0) ? pc.sum() / n : 0.0;
      double g = std::max(mean_pc, inf_norm(qs));
      g = (g > 1e-12) ? 1.0 / g : 1.0;
      Ps *= g;
      qs *= g;
      cost_scale *= g;
    }
    for (int i = 0; i < k; ++i) {
      if (std::isfinite(ls[i])) ls[i] *= E[i];
      if (std::isfinite(us[i])) us[i] *= E[i];
    }
  }

  void factorize(double sigma) {
    std::vector<Triplet> trip;
    trip.reserve(Ps.nonZeros() + As.nonZeros() + n + k);
    for (int c = 0; c < Ps.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(Ps, c); it; ++it)
        if (it.row() <= it.col()) trip.emplace_back(it.row(), it.col(), it.value());
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, sigma);
    for (int c = 0; c < As.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(As, c); it; ++it)
        trip.emplace_back(it.col(), n + it.row(), it.value());  // A^T block
    for (int i = 0; i < k; ++i) trip.emplace_back(n + i, n + i, -rho_inv[i]);

    SparseMatrix K(n + k, n + k);
    K.setFromTriplets(trip.begin(), trip.end());
    kkt.compute(K);
    if (kkt.info() != Eigen::Success)
      throw SolveError("KKT factorization failed");
    factorized = true;
  }

  // --- unscaled quantities for termination checks ---

  VectorXd unscaled_x() const { return D.cwiseProduct(x); }
  VectorXd unscaled_z() const { return z.cwiseQuotient(E); }
  VectorXd unscaled_y() const { return E.cwiseProduct(y) / cost_scale; }

  struct Residuals {
    double prim, dual, eps_prim, eps_dual;
    bool ok(double, double) const { return prim <= eps_prim && dual <= eps_dual; }
  };

  Residuals residuals(const VectorXd& xu, const VectorXd& zu,
                      const VectorXd& yu) const {
    VectorXd Ax = orig.A * xu;
    VectorXd Px = orig.P.selfadjointView<Eigen::Upper>() * xu;
    VectorXd Aty = orig.A.transpose() * yu;
    Residuals r;
    r.prim = inf_norm(Ax - zu);
    r.dual = inf_norm(Px + orig.q + Aty);
    r.eps_prim = cfg.eps_abs + cfg.eps_rel * std::max(inf_norm(Ax), inf_norm(zu));
    r.eps_dual = cfg.eps_abs +
                 cfg.eps_rel * std::max({inf_norm(Px), inf_norm(Aty),
                                         inf_norm(orig.q)});
    return r;
  }

  bool primal_infeasibility(const VectorXd& dy_scaled) const {
    VectorXd dy = E.cwiseProduct(dy_scaled) / cost_scale;
    double ndy = inf_norm(dy);
    if (ndy < 1e-14) return false;
    if (inf_norm(orig.A.transpose() * dy) > cfg.eps_infeas * ndy) return false;
    double support = 0.0;
    for (int i = 0; i < k; ++i) {
      if (dy[i] > 0) {
        if (!std::isfinite(orig.upper[i])) return false;
        support += orig.upper[i] * dy[i];
      } else if (dy[i] < 0) {
        if (!std::isfinite(orig.lower[i])) return false;
        support += orig.lower[i] * dy[i];
      }
    }
    return support < -cfg.eps_infeas * ndy;
  }

  bool dual_infeasibility(const VectorXd& dx_scaled) const {
    VectorXd dx = D.cwiseProduct(dx_scaled);
    double ndx = inf_norm(dx);
    if (ndx < 1e-14) return false;
    if (inf_norm(orig.P.selfadjointView<Eigen::Upper>() * dx) >
        cfg.eps_infeas * ndx)
      return false;
    if (orig.q.dot(dx) > -cfg.eps_infeas * ndx) return false;
    VectorXd Adx = orig.A * dx;
    for (int i = 0; i < k; ++i) {
      const bool lo = std::isfinite(orig.lower[i]);
      const bool hi = std::isfinite(orig.upper[i]);
      double tol = cfg.eps_infeas * ndx;
      if (lo && hi) {
        if (std::abs(Adx[i]) > tol) return false;
      } else if (hi) {
        if (Adx[i] > tol) return false;
      } else if (lo) {
        if (Adx[i] < -tol) return false;
      }
    }
    return true;
  }

  // Active-set polish: guess the active rows from primal proximity, solve
  // the reduced KKT, then refine the guess a few rounds by adding rows the
  // candidate violates and dropping rows whose multiplier sign is wrong.
  // The full KKT check decides acceptance; failures just resume the main
  // iteration. Deterministic throughout.
  struct ActiveGuess {
    std::vector<int> side;  // per row: 0 inactive, 1 lower/equality, 2 upper
  };

  bool solve_reduced(const ActiveGuess& guess, VectorXd& xp,
                     VectorXd& yp) const {
    std::vector<int> act;
    for (int i = 0; i < k; ++i)
      if (guess.side[i] != 0) act.push_back(i);
    const int na = static_cast<int>(act.size());

    std::vector<Triplet> trip;
    for (int c = 0; c < orig.P.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(orig.P, c); it; ++it)
        if (it.row() <= it.col()) trip.emplace_back(it.row(), it.col(), it.value());
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, cfg.polish_delta);
    Eigen::SparseMatrix<double, Eigen::RowMajor> Ar(orig.A);
    VectorXd b(na);
    for (int s = 0; s < na; ++s) {
      const int i = act[s];
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, i);
           it; ++it)
        trip.emplace_back(it.col(), n + s, it.value());
      b[s] = guess.side[i] == 1 ? orig.lower[i] : orig.upper[i];
    }
    for (int s = 0; s < na; ++s)
      trip.emplace_back(n + s, n + s, -cfg.polish_delta);

    SparseMatrix K(n + na, n + na);
    K.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper> fact;
    fact.compute(K);
    if (fact.info() != Eigen::Success) return false;

    VectorXd rhs(n + na);
    rhs.head(n) = -orig.q;
    rhs.tail(na) = b;
    VectorXd sol = fact.solve(rhs);

    auto apply_exact = [&](const VectorXd& v) {
      VectorXd out(n + na);
      out.head(n) = orig.P.selfadjointView<Eigen::Upper>() * v.head(n);
      VectorXd xa = v.head(n);
      VectorXd lam = v.tail(na);
      VectorXd atl = VectorXd::Zero(n);
      for (int s = 0; s < na; ++s) {
        const int i = act[s];
        double dot = 0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, i);
             it; ++it) {
          dot += it.value() * xa[it.col()];
          atl[it.col()] += it.value() * lam[s];
        }
        out[n + s] = dot;
      }
      out.head(n) += atl;
      return out;
    };
    for (int step = 0; step < cfg.polish_refine_steps; ++step) {
      VectorXd resid = rhs - apply_exact(sol);
      sol += fact.solve(resid);
    }
    xp = sol.head(n);
    yp = VectorXd::Zero(k);
    for (int s = 0; s < na; ++s) yp[act[s]] = sol[n + s];
    return true;
  }

  bool is_equality_row(int i) const {
    return std::isfinite(orig.lower[i]) && std::isfinite(orig.upper[i]) &&
           orig.upper[i] - orig.lower[i] < 1e-14;
  }

  bool polish(QpResult& res, double prim_res) const {
    ActiveGuess guess;
    guess.side.assign(k, 0);
    VectorXd zu = unscaled_z();
    for (int i = 0; i < k; ++i) {
      if (is_equality_row(i)) {
        guess.side[i] = 1;
        continue;
      }
      const double lo_b = orig.lower[i], up_b = orig.upper[i];
      const double tol_lo = 10.0 * prim_res + 1e-7 * (1.0 + std::abs(lo_b));
      const double tol_up = 10.0 * prim_res + 1e-7 * (1.0 + std::abs(up_b));
      const bool near_lo = std::isfinite(lo_b) && zu[i] - lo_b <= tol_lo;
      const bool near_up = std::isfinite(up_b) && up_b - zu[i] <= tol_up;
      if (near_lo && near_up)
        guess.side[i] = (zu[i] - lo_b <= up_b - zu[i]) ? 1 : 2;
      else if (near_lo)
        guess.side[i] = 1;
      else if (near_up)
        guess.side[i] = 2;
    }

    const int max_rounds = 12;
    for (int round = 0; round < max_rounds; ++round) {
      VectorXd xp, yp;
      if (!solve_reduced(guess, xp, yp)) return false;

      // Clip wrong-signed inequality multipliers and drop those rows.
      bool changed = false;
      for (int i = 0; i < k; ++i) {
        if (guess.side[i] == 0 || is_equality_row(i)) continue;
        const double wrong =
            guess.side[i] == 1 ? std::max(0.0, yp[i]) : std::max(0.0, -yp[i]);
        if (wrong > 1e-10 * (1.0 + std::abs(yp[i]))) {
          guess.side[i] = 0;
          changed = true;
        }
      }
      // Add rows the candidate violates.
      VectorXd Ax = orig.A * xp;
      for (int i = 0; i < k; ++i) {
        if (guess.side[i] != 0) continue;
        const double tol = 1e-9 * (1.0 + std::abs(Ax[i]));
        if (std::isfinite(orig.lower[i]) && Ax[i] < orig.lower[i] - tol) {
          guess.side[i] = 1;
          changed = true;
        } else if (std::isfinite(orig.upper[i]) && Ax[i] > orig.upper[i] + tol) {
          guess.side[i] = 2;
          changed = true;
        }
      }
      if (!changed) {
        for (int i = 0; i < k; ++i) {
          if (is_equality_row(i)) continue;
          if (guess.side[i] == 1 && yp[i] > 0) yp[i] = 0;
          if (guess.side[i] == 2 && yp[i] < 0) yp[i] = 0;
        }
        VectorXd zp(k);
        for (int i = 0; i < k; ++i)
          zp[i] = std::min(std::max(Ax[i], orig.lower[i]), orig.upper[i]);
        Residuals r = residuals(xp, zp, yp);
        if (!(r.prim <= r.eps_prim && r.dual <= r.eps_dual)) return false;
        res.x = xp;
        res.y = yp;
        res.z = zp;
        res.primal_residual = r.prim;
        res.dual_residual = r.dual;
        res.polished = true;
        return true;
      }
    }
    return false;
  }

  QpResult run() {
    QpResult res;
    VectorXd xt(n), zt(k), rhs(n + k), sol(n + k);
    VectorXd x_prev(n), y_prev(k);
    double loose = 1e-3;  // polish trigger, tightened on failed attempts

    int it = 0;
    for (it = 1; it <= cfg.max_iterations; ++it) {
      x_prev = x;
      y_prev = y;

      rhs.head(n) = cfg.sigma * x - qs;
      rhs.tail(k) = z - rho_inv.cwiseProduct(y);
      sol = kkt.solve(rhs);
      xt = sol.head(n);
      zt = z + rho_inv.cwiseProduct(sol.tail(k) - y);

      x = cfg.alpha * xt + (1.0 - cfg.alpha) * x;
      VectorXd z_nom = cfg.alpha * zt + (1.0 - cfg.alpha) * z +
                       rho_inv.cwiseProduct(y);
      for (int i = 0; i < k; ++i)
        z[i] = std::min(std::max(z_nom[i], ls[i]), us[i]);
      y = rho_vec.cwiseProduct(z_nom - z);

      if (it % cfg.check_interval == 0 || it == cfg.max_iterations) {
        VectorXd xu = unscaled_x(), zu = unscaled_z(), yu = unscaled_y();
        Residuals r = residuals(xu, zu, yu);
        res.iterations = it;
        res.primal_residual = r.prim;
        res.dual_residual = r.dual;
        if (r.prim <= r.eps_prim && r.dual <= r.eps_dual) {
          res.x = xu;
          res.z = zu;
          res.y = yu;
          res.status = QpStatus::Solved;
          finish(res);
          return res;
        }
        const bool near = r.prim <= std::max(r.eps_prim, loose) &&
                          r.dual <= std::max(r.eps_dual, loose);
        if (cfg.polish && (near || it % 5000 == 0)) {
          if (polish(res, r.prim)) {
            res.status = QpStatus::Solved;
            finish(res);
            return res;
          }
          if (near) loose = std::max(loose * 0.1, cfg.eps_abs);
        }
        if (primal_infeasibility(y - y_prev)) {
          res.status = QpStatus::PrimalInfeasible;
          res.x = xu;
          res.z = zu;
          res.y = yu;
          return res;
        }
        if (dual_infeasibility(x - x_prev)) {
          res.status = QpStatus::DualInfeasible;
          res.x = xu;
          res.z = zu;
          res.y = yu;
          return res;
        }
      }
    }
    res.status = QpStatus::MaxIterations;
    res.x = unscaled_x();
    res.z = unscaled_z();
    res.y = unscaled_y();
    res.iterations = cfg.max_iterations;
    finish(res);
    return res;
  }

  void finish(QpResult& res) const {
    res.objective =
        0.5 * res.x.dot(orig.P.selfadjointView<Eigen::Upper>() * res.x) +
        orig.q.dot(res.x);
  }
};

QpSolver::QpSolver(QpProblem problem, QpSettings settings)
    : impl_(std::make_unique<Impl>(std::move(problem), settings)) {}

QpSolver::~QpSolver() = default;
QpSolver::QpSolver(QpSolver&&) noexcept = default;
QpSolver& QpSolver::operator=(QpSolver&&) noexcept = default;

void QpSolver::update_linear_cost(const VectorXd& q) {
  require(q.size() == impl_->n, "cost size mismatch");
  impl_->orig.q = q;
  impl_->qs = impl_->cost_scale * impl_->D.cwiseProduct(q);
}

void QpSolver::warm_start(const VectorXd& x, const VectorXd& y) {
  require(x.size() == impl_->n && y.size() == impl_->k,
          "warm start size mismatch");
  impl_->x = impl_->D.cwiseInverse().cwiseProduct(x);
  impl_->y = impl_->cost_scale * y.cwiseQuotient(impl_->E);
  impl_->z = impl_->As * impl_->x;
  for (int i = 0; i < impl_->k; ++i)
    impl_->z[i] = std::min(std::max(impl_->z[i], impl_->ls[i]), impl_->us[i]);
}

QpResult QpSolver::solve() { return impl_->run(); }

const QpProblem& QpSolver::problem() const { return impl_->orig; }

QpResult solve_convex_qp(const QpProblem& problem, const QpSettings& settings) {
  QpSolver solver(problem, settings);
  return solver.solve();
}

}  // namespace sysrisk
