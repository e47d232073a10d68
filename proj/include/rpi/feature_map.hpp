#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "rpi/mdp.hpp"

namespace rpi {

/// Linear function class over state-action pairs: estimates are Phi * w with
/// Phi of shape (S*A) x d. Rows follow the library's row-major (s, a) order.
struct FeatureMap {
  enum class Kind { Tabular, Custom };

  Kind kind = Kind::Tabular;
  int num_features = 0;
  Eigen::MatrixXd features;  // (S*A) x d

  /// Identity features: one indicator per state-action pair.
  static FeatureMap tabular(int num_states, int num_actions) {
    FeatureMap fm;
    fm.kind = Kind::Tabular;
    fm.num_features = num_states * num_actions;
    fm.features = Eigen::MatrixXd::Identity(fm.num_features, fm.num_features);
    return fm;
  }

  /// Arbitrary feature matrix. Must have full column rank; checked with
  /// complete-pivot elimination at threshold 1e-10.
  static FeatureMap custom(Eigen::MatrixXd phi) {
    if (phi.rows() <= 0 || phi.cols() <= 0)
      throw std::invalid_argument("FeatureMap: empty feature matrix");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(phi);
    lu.setThreshold(1e-10);
    if (lu.rank() < phi.cols())
      throw std::invalid_argument("FeatureMap: feature matrix is column-rank deficient");
    FeatureMap fm;
    fm.kind = Kind::Custom;
    fm.num_features = static_cast<int>(phi.cols());
    fm.features = std::move(phi);
    return fm;
  }

  void require_shape(const TabularMDP& mdp, const char* who) const {
    if (features.rows() != mdp.sa_size())
      throw std::invalid_argument(std::string(who) + ": FeatureMap row count mismatch");
  }

  /// Evaluates Phi * w as a QFunction over the given shape.
  QFunction apply(const Eigen::VectorXd& w, int num_states, int num_actions) const {
    if (w.size() != num_features)
      throw std::invalid_argument("FeatureMap: weight length mismatch");
    Eigen::VectorXd f = features * w;
    QFunction q(num_states, num_actions);
    for (int i = 0; i < f.size(); ++i) q.values[i] = f(i);
    return q;
  }
};

}  // namespace rpi
