#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

namespace levyfbsde {

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// Nonparametric bootstrap over contiguous groups of i.i.d. paths. With M <= 1000
// each group is a single path; beyond that paths are pooled into 1000 groups so
// that sup-type functionals over many nodes stay cheap to resample.
class Bootstrap {
 public:
  Bootstrap(Eigen::Index paths, std::uint64_t seed, int resamples = 200,
            Eigen::Index max_groups = 1000);

  Eigen::Index paths() const { return paths_; }
  Eigen::Index groups() const { return groups_; }
  int resamples() const { return static_cast<int>(counts_.rows()); }
  Eigen::Index group_begin(Eigen::Index g) const { return g * paths_ / groups_; }
  Eigen::Index group_end(Eigen::Index g) const { return (g + 1) * paths_ / groups_; }

  // G x K sums of per-path rows.
  Eigen::MatrixXd group_sums(const Eigen::Ref<const Eigen::MatrixXd>& per_path) const;
  // R x K resampled column means from group sums.
  Eigen::MatrixXd resampled_means(const Eigen::Ref<const Eigen::MatrixXd>& sums) const;

  Estimate mean(const Eigen::Ref<const Eigen::VectorXd>& per_path) const;
  // Statistic of the column means; SE is the spread over resamples.
  Estimate functional(const Eigen::Ref<const Eigen::MatrixXd>& sums,
                      const std::function<double(const Eigen::VectorXd&)>& stat) const;

 private:
  Eigen::Index paths_;
  Eigen::Index groups_;
  Eigen::MatrixXd counts_;  // R x G
  Eigen::VectorXd sizes_;   // G
};

double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace levyfbsde
