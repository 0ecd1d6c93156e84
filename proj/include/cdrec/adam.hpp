#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdrec/linalg.hpp"

namespace cdrec {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n_params, AdamConfig cfg) : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad);
  long steps() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

// Lazy Adam over the rows of an embedding matrix: only rows that received a
// gradient in the current step move, and their moments are the only ones
// updated. Bias correction uses the global step count.
class RowAdam {
 public:
  RowAdam(std::size_t rows, std::size_t cols, AdamConfig cfg) : cfg_(cfg), m_(rows, cols), v_(rows, cols) {}

  void begin_step() { ++t_; }
  void update_row(Matrix& params, std::size_t row, std::span<const double> grad);

 private:
  AdamConfig cfg_;
  Matrix m_;
  Matrix v_;
  long t_ = 0;
};

}  // namespace cdrec
