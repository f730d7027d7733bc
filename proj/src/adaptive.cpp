#include "lotta/adaptive.hpp"

#include <algorithm>
#include <cmath>

namespace lotta {

namespace {

constexpr long kCovarianceStart = 200;
constexpr long kRefreshEvery = 50;

}  // namespace

AdaptiveProposal::AdaptiveProposal(std::string name, std::vector<double> initial_scales,
                                   double target)
    : initial_(Eigen::Map<const Eigen::VectorXd>(initial_scales.data(),
                                                 static_cast<Eigen::Index>(initial_scales.size()))),
      target_(target),
      mean_(Eigen::VectorXd::Zero(initial_.size())),
      m2_(Eigen::MatrixXd::Zero(initial_.size(), initial_.size())) {
  stats_.name = std::move(name);
}

double AdaptiveProposal::scale(std::size_t i) const {
  return std::exp(log_scale_) * initial_[static_cast<Eigen::Index>(i)];
}

void AdaptiveProposal::propose(const Eigen::VectorXd& current, Eigen::VectorXd& out,
                               Rng& rng) const {
  const auto d = initial_.size();
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
  const double s = std::exp(log_scale_);
  if (use_cov_)
    out = current + s * (factor_ * z);
  else
    out = current + s * initial_.cwiseProduct(z);
}

void AdaptiveProposal::update(const Eigen::VectorXd& state_after, bool accepted,
                              bool adapting) {
  ++stats_.attempts;
  if (accepted) ++stats_.accepted;
  if (!adapting) return;

  ++adapt_iter_;
  const double gain = std::pow(static_cast<double>(adapt_iter_) + 1.0, -0.6);
  log_scale_ += gain * ((accepted ? 1.0 : 0.0) - target_);
  log_scale_ = std::clamp(log_scale_, -30.0, 10.0);

  // Welford update of the running mean and scatter matrix.
  const double n = static_cast<double>(adapt_iter_);
  const Eigen::VectorXd delta = state_after - mean_;
  mean_ += delta / n;
  m2_ += delta * (state_after - mean_).transpose();

  if (initial_.size() > 1 && adapt_iter_ >= kCovarianceStart &&
      adapt_iter_ % kRefreshEvery == 0)
    refresh_factor();
}

void AdaptiveProposal::refresh_factor() {
  const auto d = initial_.size();
  const double n = static_cast<double>(adapt_iter_);
  Eigen::MatrixXd cov = m2_ / (n - 1.0);
  cov *= 2.38 * 2.38 / static_cast<double>(d);
  for (Eigen::Index i = 0; i < d; ++i) cov(i, i) += 1e-6 * initial_[i] * initial_[i];
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return;
  factor_ = llt.matrixL();
  if (!use_cov_) {
    use_cov_ = true;
    log_scale_ = 0.0;
  }
}

}  // namespace lotta
