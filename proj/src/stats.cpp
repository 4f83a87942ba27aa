#include "levyfbsde/stats.hpp"

#include <cmath>
#include <stdexcept>

#include "levyfbsde/rng.hpp"

namespace levyfbsde {

Bootstrap::Bootstrap(Eigen::Index paths, std::uint64_t seed, int resamples,
                     Eigen::Index max_groups)
    : paths_(paths), groups_(std::min(paths, max_groups)) {
  if (paths < 2) throw std::invalid_argument("bootstrap: need at least two paths");
  if (resamples < 2) throw std::invalid_argument("bootstrap: need at least two resamples");
  const CounterStream stream(seed, StreamTag::Bootstrap);
  counts_ = Eigen::MatrixXd::Zero(resamples, groups_);
  for (int r = 0; r < resamples; ++r)
    for (Eigen::Index j = 0; j < groups_; ++j) {
      const double u = stream.uniform(static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(j));
      const auto g = std::min<Eigen::Index>(groups_ - 1, static_cast<Eigen::Index>(u * groups_));
      counts_(r, g) += 1.0;
    }
  sizes_.resize(groups_);
  for (Eigen::Index g = 0; g < groups_; ++g)
    sizes_[g] = static_cast<double>(group_end(g) - group_begin(g));
}

Eigen::MatrixXd Bootstrap::group_sums(const Eigen::Ref<const Eigen::MatrixXd>& per_path) const {
  if (per_path.rows() != paths_) throw std::invalid_argument("bootstrap: row count mismatch");
  Eigen::MatrixXd s(groups_, per_path.cols());
  for (Eigen::Index g = 0; g < groups_; ++g)
    s.row(g) = per_path.middleRows(group_begin(g), group_end(g) - group_begin(g)).colwise().sum();
  return s;
}

Eigen::MatrixXd Bootstrap::resampled_means(const Eigen::Ref<const Eigen::MatrixXd>& sums) const {
  Eigen::MatrixXd m = counts_ * sums;
  const Eigen::VectorXd n = counts_ * sizes_;
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= n[r];
  return m;
}

Estimate Bootstrap::functional(const Eigen::Ref<const Eigen::MatrixXd>& sums,
                               const std::function<double(const Eigen::VectorXd&)>& stat) const {
  const Eigen::VectorXd point = sums.colwise().sum().transpose() / static_cast<double>(paths_);
  const Eigen::MatrixXd rs = resampled_means(sums);
  Eigen::VectorXd vals(rs.rows());
  for (Eigen::Index r = 0; r < rs.rows(); ++r) vals[r] = stat(rs.row(r).transpose());
  return {stat(point), sample_sd(vals)};
}

Estimate Bootstrap::mean(const Eigen::Ref<const Eigen::VectorXd>& per_path) const {
  return functional(group_sums(per_path), [](const Eigen::VectorXd& m) { return m[0]; });
}

double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = v.mean();
  return std::sqrt((v.array() - mu).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace levyfbsde
