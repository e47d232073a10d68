#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpi {

/// Inequality-form linear program: maximize objective'x subject to
/// constraint_matrix * x <= constraint_rhs. Variables are free; sign
/// restrictions, when wanted, are ordinary constraint rows.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd constraint_matrix;
  Eigen::VectorXd constraint_rhs;
  int num_vars = 0;

  void validate() const {
    if (num_vars <= 0) throw std::invalid_argument("LinearProgram: num_vars must be positive");
    if (objective.size() != num_vars)
      throw std::invalid_argument("LinearProgram: objective length mismatch");
    if (constraint_matrix.cols() != num_vars)
      throw std::invalid_argument("LinearProgram: constraint matrix column mismatch");
    if (constraint_matrix.rows() != constraint_rhs.size())
      throw std::invalid_argument("LinearProgram: rhs length mismatch");
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;   // meaningful only when status == Optimal
  double value = 0.0;  // objective'x at the returned vertex
};

namespace detail {

/// Dense two-phase simplex over a row-reduced tableau. Free variables are
/// split as x = u - v with u, v >= 0; Bland's entering/leaving rule keeps
/// pivoting deterministic and cycle-free. Column order (and therefore the
/// canonical vertex returned for degenerate optima): u_0..u_{n-1},
/// v_0..v_{n-1}, slacks, artificials.
class SimplexTableau {
 public:
  static constexpr double kEps = 1e-9;

  SimplexTableau(const LinearProgram& lp) : n_(lp.num_vars), m_(static_cast<int>(lp.constraint_matrix.rows())) {
    cols_ = 2 * n_ + m_;  // structural split + slacks; artificials appended below
    rows_.assign(m_, {});
    basis_.assign(m_, -1);
    int num_art = 0;
    for (int i = 0; i < m_; ++i)
      if (lp.constraint_rhs(i) < 0.0) ++num_art;
    total_cols_ = cols_ + num_art;
    first_art_ = cols_;

    int art = 0;
    for (int i = 0; i < m_; ++i) {
      Row& row = rows_[i];
      row.coef.assign(total_cols_, 0.0);
      double sign = lp.constraint_rhs(i) < 0.0 ? -1.0 : 1.0;
      for (int j = 0; j < n_; ++j) {
        row.coef[j] = sign * lp.constraint_matrix(i, j);
        row.coef[n_ + j] = -sign * lp.constraint_matrix(i, j);
      }
      row.coef[2 * n_ + i] = sign;  // slack
      row.rhs = sign * lp.constraint_rhs(i);
      if (sign < 0.0) {
        row.coef[first_art_ + art] = 1.0;
        basis_[i] = first_art_ + art;
        ++art;
      } else {
        basis_[i] = 2 * n_ + i;
      }
    }
  }

  /// Runs both phases. Returns the status; on Optimal, fills x (length n).
  LpStatus solve(Eigen::VectorXd& x) {
    if (first_art_ < total_cols_) {
      // Phase 1: maximize minus the sum of artificials.
      obj_.assign(total_cols_, 0.0);
      for (int j = first_art_; j < total_cols_; ++j) obj_[j] = 1.0;
      obj_rhs_ = 0.0;
      price_out_basis();
      run();
      if (obj_rhs_ < -kEps) return LpStatus::Infeasible;
      evict_artificials();
    }

    // Phase 2 on the original objective; artificial columns never re-enter.
    obj_.assign(total_cols_, 0.0);
    for (int j = 0; j < n_; ++j) {
      obj_[j] = -c_(j);
      obj_[n_ + j] = c_(j);
    }
    obj_rhs_ = 0.0;
    price_out_basis();
    if (!run()) return LpStatus::Unbounded;

    x = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_)
        x(basis_[i]) += rows_[i].rhs;
      else if (basis_[i] < 2 * n_)
        x(basis_[i] - n_) -= rows_[i].rhs;
    }
    return LpStatus::Optimal;
  }

  void set_objective(const Eigen::VectorXd& c) { c_ref_ = &c; }

 private:
  struct Row {
    std::vector<double> coef;
    double rhs = 0.0;
  };

  double c_(int j) const { return (*c_ref_)(j); }

  void price_out_basis() {
    for (int i = 0; i < m_; ++i) {
      double w = obj_[basis_[i]];
      if (w == 0.0) continue;
      const Row& row = rows_[i];
      for (int j = 0; j < total_cols_; ++j) obj_[j] -= w * row.coef[j];
      obj_rhs_ -= w * row.rhs;
    }
  }

  void pivot(int pr, int pc) {
    Row& prow = rows_[pr];
    double inv = 1.0 / prow.coef[pc];
    for (double& v : prow.coef) v *= inv;
    prow.rhs *= inv;
    prow.coef[pc] = 1.0;  // kill roundoff on the pivot itself
    for (int i = 0; i < m_; ++i) {
      if (i == pr) continue;
      Row& row = rows_[i];
      double f = row.coef[pc];
      if (f == 0.0) continue;
      for (int j = 0; j < total_cols_; ++j) row.coef[j] -= f * prow.coef[j];
      row.coef[pc] = 0.0;
      row.rhs -= f * prow.rhs;
      if (row.rhs > -kEps && row.rhs < 0.0) row.rhs = 0.0;
    }
    double f = obj_[pc];
    if (f != 0.0) {
      for (int j = 0; j < total_cols_; ++j) obj_[j] -= f * prow.coef[j];
      obj_[pc] = 0.0;
      obj_rhs_ -= f * prow.rhs;
    }
    basis_[pr] = pc;
  }

  /// Bland pivoting loop. Returns false when the entering column proves the
  /// problem unbounded.
  bool run() {
    for (int iter = 0; iter < kMaxPivots; ++iter) {
      int enter = -1;
      for (int j = 0; j < first_art_; ++j) {
        if (obj_[j] < -kEps) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;  // optimal

      int leave = -1;
      double best_ratio = 0.0;
      for (int i = 0; i < m_; ++i) {
        double a = rows_[i].coef[enter];
        if (a <= kEps) continue;
        double ratio = rows_[i].rhs / a;
        if (leave < 0 || ratio < best_ratio - 1e-12 ||
            (std::abs(ratio - best_ratio) <= 1e-12 && basis_[i] < basis_[leave])) {
          leave = i;
          best_ratio = ratio;
        }
      }
      if (leave < 0) return false;  // column unbounded above
      pivot(leave, enter);
    }
    throw std::runtime_error("simplex_solve: pivot limit exceeded (numerical failure)");
  }

  /// After phase 1, no artificial may stay basic: pivot each one out on any
  /// usable column, or drop its row as redundant when none exists.
  void evict_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < first_art_) continue;
      int pc = -1;
      for (int j = 0; j < first_art_; ++j)
        if (std::abs(rows_[i].coef[j]) > 1e-7) {
          pc = j;
          break;
        }
      if (pc >= 0) {
        pivot(i, pc);
      } else {
        rows_.erase(rows_.begin() + i);
        basis_.erase(basis_.begin() + i);
        --m_;
        --i;
      }
    }
  }

  static constexpr int kMaxPivots = 200000;

  int n_ = 0;
  int m_ = 0;
  int cols_ = 0;
  int total_cols_ = 0;
  int first_art_ = 0;
  std::vector<Row> rows_;
  std::vector<int> basis_;
  std::vector<double> obj_;
  double obj_rhs_ = 0.0;
  const Eigen::VectorXd* c_ref_ = nullptr;
};

}  // namespace detail

/// Solves an inequality-form LP with a dense two-phase simplex (Bland's
/// rule). Infeasible and unbounded are ordinary results. The returned vertex
/// is deterministic, so degenerate ties always resolve the same way.
inline LpSolution simplex_solve(const LinearProgram& lp) {
  lp.validate();
  detail::SimplexTableau tableau(lp);
  tableau.set_objective(lp.objective);
  LpSolution sol;
  sol.status = tableau.solve(sol.x);
  if (sol.status == LpStatus::Optimal) sol.value = lp.objective.dot(sol.x);
  return sol;
}

}  // namespace rpi
