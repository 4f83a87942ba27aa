#include "levyfbsde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "levyfbsde/parallel.hpp"

namespace levyfbsde {

namespace {

constexpr double kRankTol = 1e-12;

void basis_row(const BasisSpec& basis, const FeatureMap& map, double x, double* row) {
  const double c = map.clip(x);
  if (basis.kind == BasisSpec::Kind::Polynomial) {
    const double z = (c - map.center) / map.scale;
    double p = 1.0;
    for (int k = 0; k <= basis.degree; ++k) {
      row[k] = p;
      p *= z;
    }
  } else {
    std::fill(row, row + basis.cells, 0.0);
    const auto cell = std::upper_bound(map.edges.begin(), map.edges.end(), c) - map.edges.begin();
    row[cell] = 1.0;
  }
}

double evaluate(const BasisSpec& basis, const FeatureMap& map, const Eigen::VectorXd& coef,
                double x) {
  const double c = map.clip(x);
  if (basis.kind == BasisSpec::Kind::Polynomial) {
    const double z = (c - map.center) / map.scale;
    double acc = 0.0;
    for (int k = basis.degree; k >= 0; --k) acc = acc * z + coef[k];
    return acc;
  }
  const auto cell = std::upper_bound(map.edges.begin(), map.edges.end(), c) - map.edges.begin();
  return coef[cell];
}

void check_finite(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
  if (!v.allFinite())
    throw std::invalid_argument(std::string("regression: non-finite ") + what);
}

}  // namespace

BasisSpec BasisSpec::polynomial(int degree) {
  BasisSpec b;
  b.kind = Kind::Polynomial;
  b.degree = degree;
  return b;
}

BasisSpec BasisSpec::local_partition(int cells) {
  BasisSpec b;
  b.kind = Kind::LocalPartition;
  b.cells = cells;
  return b;
}

std::string BasisSpec::describe() const {
  std::ostringstream os;
  if (kind == Kind::Polynomial)
    os << "polynomial(" << degree << ")";
  else
    os << "local_partition(" << cells << ")";
  return os.str();
}

double guard_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("guard_quantile: empty sample");
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto k = static_cast<std::size_t>(p < 0.5 ? std::floor(pos) : std::ceil(pos));
  std::nth_element(values.begin(), values.begin() + k, values.end());
  return values[k];
}

CondExpEstimator::CondExpEstimator(BasisSpec basis, FeatureMap map, Eigen::VectorXd coefficients,
                                   Eigen::Index sample_size, double condition)
    : basis_(basis),
      map_(std::move(map)),
      coef_(std::move(coefficients)),
      sample_size_(sample_size),
      condition_(condition) {
  if (coef_.size() != basis_.dimension())
    throw std::invalid_argument("CondExpEstimator: coefficient count does not match the basis");
}

double CondExpEstimator::operator()(double x) const { return evaluate(basis_, map_, coef_, x); }

Eigen::VectorXd CondExpEstimator::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = (*this)(x[i]);
  return out;
}

Eigen::VectorXd CondExpEstimator::polynomial_coefficients() const {
  if (basis_.kind != BasisSpec::Kind::Polynomial)
    throw std::logic_error("polynomial_coefficients: basis is not polynomial");
  const int d = basis_.degree;
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(d + 1);
  // sum_k c_k ((x - m)/s)^k expanded in powers of x
  for (int k = 0; k <= d; ++k) {
    const double ck = coef_[k] / std::pow(map_.scale, k);
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
      raw[j] += ck * binom * std::pow(-map_.center, k - j);
      binom = binom * (k - j) / (j + 1);
    }
  }
  return raw;
}

CondExpEstimator CondExpEstimator::scaled(double c) const {
  return CondExpEstimator(basis_, map_, coef_ * c, sample_size_, condition_);
}

Projector::Projector(const Eigen::Ref<const Eigen::VectorXd>& features, const BasisSpec& basis,
                     int threads)
    : basis_(basis), threads_(threads) {
  const Eigen::Index M = features.size();
  const int dim = basis.dimension();
  if (dim < 1) throw std::invalid_argument("regression: basis dimension must be positive");
  if (M < 2 * dim)
    throw std::invalid_argument("regression: " + std::to_string(M) +
                                " samples are fewer than twice the basis dimension " +
                                std::to_string(dim));
  check_finite(features, "features");

  std::vector<double> v(features.data(), features.data() + M);
  map_.lo = guard_quantile(v, basis.guard_lo_quantile);
  map_.hi = guard_quantile(v, basis.guard_hi_quantile);
  double mean = 0.0;
  for (double x : v) mean += map_.clip(x);
  mean /= static_cast<double>(M);
  double var = 0.0;
  for (double x : v) var += (map_.clip(x) - mean) * (map_.clip(x) - mean);
  var /= static_cast<double>(M);
  map_.center = mean;
  map_.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  if (basis.kind == BasisSpec::Kind::LocalPartition) {
    for (double& x : v) x = map_.clip(x);
    for (int j = 1; j < basis.cells; ++j) {
      const double p = static_cast<double>(j) / basis.cells;
      const auto k = static_cast<std::size_t>(std::floor(p * static_cast<double>(M - 1)));
      std::nth_element(v.begin(), v.begin() + k, v.end());
      map_.edges.push_back(v[k]);
    }
  }

  design_.resize(M, dim);
  std::vector<double> row(dim);
  for (Eigen::Index p = 0; p < M; ++p) {
    basis_row(basis, map_, features[p], row.data());
    for (int k = 0; k < dim; ++k) design_(p, k) = row[k];
  }

  const std::int64_t nb = block_count(M);
  std::vector<Eigen::MatrixXd> partial(nb);
  parallel_blocks(M, threads, [&](std::int64_t b, std::int64_t s, std::int64_t e) {
    const auto blk = design_.middleRows(s, e - s);
    partial[b] = blk.transpose() * blk;
  });
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& g : partial) gram += g;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = std::max(ev.maxCoeff(), 0.0);
  const double cut = top * kRankTol;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(dim);
  for (int k = 0; k < dim; ++k)
    if (ev[k] > cut && ev[k] > 0.0) {
      inv[k] = 1.0 / ev[k];
      ++rank_;
    }
  pinv_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  const double bottom = ev.minCoeff();
  condition_ = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
}

CondExpEstimator Projector::fit(const Eigen::Ref<const Eigen::VectorXd>& targets) const {
  const Eigen::Index M = design_.rows();
  if (targets.size() != M)
    throw std::invalid_argument("regression: feature and target lengths differ");
  check_finite(targets, "targets");
  const std::int64_t nb = block_count(M);
  std::vector<Eigen::VectorXd> partial(nb);
  parallel_blocks(M, threads_, [&](std::int64_t b, std::int64_t s, std::int64_t e) {
    partial[b] = design_.middleRows(s, e - s).transpose() * targets.segment(s, e - s);
  });
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(design_.cols());
  for (const auto& r : partial) rhs += r;
  return CondExpEstimator(basis_, map_, pinv_ * rhs, M, condition_);
}

Eigen::VectorXd Projector::fitted(const CondExpEstimator& est) const {
  return design_ * est.coefficients();
}

CondExpEstimator fit(const Eigen::Ref<const Eigen::VectorXd>& features,
                     const Eigen::Ref<const Eigen::VectorXd>& targets, const BasisSpec& basis) {
  if (features.size() != targets.size())
    throw std::invalid_argument("regression: feature and target lengths differ");
  return Projector(features, basis).fit(targets);
}

Eigen::VectorXd predict(const CondExpEstimator& est, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return est.predict(x);
}

}  // namespace levyfbsde
