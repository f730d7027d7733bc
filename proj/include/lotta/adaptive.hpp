#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lotta/random.hpp"

namespace lotta {

struct BlockStats {
  std::string name;
  long attempts = 0;
  long accepted = 0;

  double rate() const { return attempts > 0 ? static_cast<double>(accepted) / attempts : 0.0; }
};

/// Gaussian random-walk proposal for one block.
///
/// While adapting, the log scale follows a Robbins-Monro recursion towards
/// the target acceptance rate and, for multi-dimensional blocks, the shape
/// switches to the running empirical covariance once enough iterations
/// have been seen. Calling `update` with `adapting == false` only counts.
class AdaptiveProposal {
 public:
  AdaptiveProposal(std::string name, std::vector<double> initial_scales, double target = 0.3);

  std::size_t dim() const { return static_cast<std::size_t>(initial_.size()); }
  void propose(const Eigen::VectorXd& current, Eigen::VectorXd& out, Rng& rng) const;
  void update(const Eigen::VectorXd& state_after, bool accepted, bool adapting);

  /// Current marginal step size of coordinate i (diagonal shape only).
  double scale(std::size_t i) const;
  double log_scale() const { return log_scale_; }
  void set_log_scale(double v) { log_scale_ = v; }
  bool using_covariance() const { return use_cov_; }
  const BlockStats& stats() const { return stats_; }

 private:
  void refresh_factor();

  Eigen::VectorXd initial_;
  double target_;
  double log_scale_ = 0.0;
  long adapt_iter_ = 0;
  bool use_cov_ = false;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
  Eigen::MatrixXd factor_;
  BlockStats stats_;
};

}  // namespace lotta
