#include "cdrec/adam.hpp"

#include <cmath>

namespace cdrec {

namespace {

inline void adam_update(const AdamConfig& cfg, double bc1, double bc2, double& p, double& m, double& v,
                        double g) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
  const double m_hat = m / bc1;
  const double v_hat = v / bc2;
  p -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
}

}  // namespace

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) adam_update(cfg_, bc1, bc2, params[k], m_[k], v_[k], grad[k]);
}

void RowAdam::update_row(Matrix& params, std::size_t row, std::span<const double> grad) {
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto p = params.row(row);
  auto m = m_.row(row);
  auto v = v_.row(row);
  for (std::size_t k = 0; k < p.size(); ++k) adam_update(cfg_, bc1, bc2, p[k], m[k], v[k], grad[k]);
}

}  // namespace cdrec
