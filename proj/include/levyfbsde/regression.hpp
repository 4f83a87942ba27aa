#pragma once

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace levyfbsde {

struct BasisSpec {
  enum class Kind { Polynomial, LocalPartition };

  Kind kind = Kind::Polynomial;
  int degree = 4;
  int cells = 8;
  // Features are clipped to these empirical quantiles at fit time.
  double guard_lo_quantile = 0.001;
  double guard_hi_quantile = 0.999;

  static BasisSpec polynomial(int degree);
  static BasisSpec local_partition(int cells);

  int dimension() const { return kind == Kind::Polynomial ? degree + 1 : cells; }
  std::string describe() const;
};

// Clipping and standardization fixed at fit time.
struct FeatureMap {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  double center = 0.0;
  double scale = 1.0;
  std::vector<double> edges;  // LocalPartition cell boundaries

  double clip(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
};

class CondExpEstimator {
 public:
  CondExpEstimator() = default;
  CondExpEstimator(BasisSpec basis, FeatureMap map, Eigen::VectorXd coefficients,
                   Eigen::Index sample_size = 0, double condition = 1.0);

  double operator()(double x) const;
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  const BasisSpec& basis() const { return basis_; }
  const FeatureMap& feature_map() const { return map_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  // Monomial coefficients in the raw feature (Polynomial basis only).
  Eigen::VectorXd polynomial_coefficients() const;
  Eigen::Index sample_size() const { return sample_size_; }
  double condition() const { return condition_; }

  CondExpEstimator scaled(double c) const;

 private:
  BasisSpec basis_;
  FeatureMap map_;
  Eigen::VectorXd coef_ = Eigen::VectorXd::Zero(1);
  Eigen::Index sample_size_ = 0;
  double condition_ = 1.0;
};

// Design matrix of one cross-section, factored once and reused for many targets.
class Projector {
 public:
  Projector(const Eigen::Ref<const Eigen::VectorXd>& features, const BasisSpec& basis,
            int threads = 1);

  CondExpEstimator fit(const Eigen::Ref<const Eigen::VectorXd>& targets) const;
  // In-sample values of an estimator fitted by this projector.
  Eigen::VectorXd fitted(const CondExpEstimator& est) const;

  const Eigen::MatrixXd& design() const { return design_; }
  const FeatureMap& feature_map() const { return map_; }
  double condition() const { return condition_; }
  Eigen::Index rank() const { return rank_; }

 private:
  BasisSpec basis_;
  FeatureMap map_;
  Eigen::MatrixXd design_;  // M x dim
  Eigen::MatrixXd pinv_;    // pseudo-inverse of the Gram matrix
  double condition_ = 1.0;
  Eigen::Index rank_ = 0;
  int threads_ = 1;
};

CondExpEstimator fit(const Eigen::Ref<const Eigen::VectorXd>& features,
                     const Eigen::Ref<const Eigen::VectorXd>& targets, const BasisSpec& basis);
Eigen::VectorXd predict(const CondExpEstimator& est, const Eigen::Ref<const Eigen::VectorXd>& x);

// Sample quantile with the lower index for p < 1/2 and the upper index otherwise,
// so that tiny samples are never clipped.
double guard_quantile(std::vector<double> values, double p);

}  // namespace levyfbsde
