#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "cdrec/embedding.hpp"
#include "cdrec/linalg.hpp"
#include "cdrec/scenario.hpp"

namespace cdrec {

// Two-layer mapping R^K -> R^K: y = proj(W2 tanh(W1 x + b1) + b2) with a hidden
// width of 2K. Parameters live in one flat vector laid out as W1 (row-major,
// 2K x K), b1, W2 (row-major, K x 2K), b2. The unit-ball projection on the
// output can be switched off for inner-product target spaces.
class MappingNetwork {
 public:
  MappingNetwork() = default;
  explicit MappingNetwork(std::size_t dim, bool project_output = true);

  // Glorot-uniform weights, zero biases.
  static MappingNetwork glorot(std::size_t dim, std::uint64_t seed, bool project_output = true);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t hidden() const noexcept { return 2 * dim_; }
  bool projects_output() const noexcept { return project_output_; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  static std::size_t param_count(std::size_t dim) { return 4 * dim * dim + 3 * dim; }

  double& w1(std::size_t r, std::size_t c) { return params_[r * dim_ + c]; }
  double w1(std::size_t r, std::size_t c) const { return params_[r * dim_ + c]; }
  double& b1(std::size_t r) { return params_[w1_size() + r]; }
  double b1(std::size_t r) const { return params_[w1_size() + r]; }
  double& w2(std::size_t r, std::size_t c) { return params_[w2_offset() + r * hidden() + c]; }
  double w2(std::size_t r, std::size_t c) const { return params_[w2_offset() + r * hidden() + c]; }
  double& b2(std::size_t r) { return params_[b2_offset() + r]; }
  double b2(std::size_t r) const { return params_[b2_offset() + r]; }

  std::size_t w1_size() const noexcept { return hidden() * dim_; }
  std::size_t w2_offset() const noexcept { return w1_size() + hidden(); }
  std::size_t b2_offset() const noexcept { return w2_offset() + dim_ * hidden(); }

  friend bool operator==(const MappingNetwork&, const MappingNetwork&) = default;

 private:
  std::size_t dim_ = 0;
  bool project_output_ = true;
  std::vector<double> params_;
};

// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardCache {
  Vec input;
  Vec hidden;     // tanh activations
  Vec pre_output; // before projection
  Vec output;
  double pre_norm = 0.0;
};

Vec mlp_forward(const MappingNetwork& net, std::span<const double> x);
ForwardCache mlp_forward_cached(const MappingNetwork& net, std::span<const double> x);

// Accumulates dLoss/dparams into grad given dLoss/doutput.
void mlp_backward(const MappingNetwork& net, const ForwardCache& cache, std::span<const double> grad_output,
                  std::span<double> grad);

// ---- losses --------------------------------------------------------------------

// Sum over pairs of ||f(source) - target||^2.
double supervised_loss(const MappingNetwork& net, std::span<const std::pair<Vec, Vec>> pairs);

// [m + d(f(v_pos), u_t) - d(f(v_neg), u_t)]_+
double unsupervised_triplet_loss(const MappingNetwork& net, std::span<const double> v_pos,
                                 std::span<const double> v_neg, std::span<const double> u_target,
                                 double margin);

double total_mapping_loss(double supervised, double unsupervised, double lambda);

// One overlapping user in a batch. pos_item/neg_item are empty when the
// batch carries no unsupervised triplet for this user.
struct MappingSample {
  std::span<const double> source_user;
  std::span<const double> target_user;
  std::span<const double> pos_item;
  std::span<const double> neg_item;
};

struct BatchLoss {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double total = 0.0;
};

// Loss of a batch, sum(supervised) + lambda * sum(triplet). When grad is
// non-empty the gradient with respect to the parameters is added to it.
BatchLoss mapping_batch_loss(const MappingNetwork& net, std::span<const MappingSample> batch, double lambda,
                             double margin, std::span<double> grad = {});

// ---- training ------------------------------------------------------------------

enum class MappingMode { SupervisedOnly, SemiSupervised };

struct MapTrainConfig {
  double lambda = 0.5;
  double margin = 1.0;
  double learning_rate = 0.001;
  int max_epochs = 500;
  int patience = 30;
  int eval_every = 1;
  std::size_t batch_size = 32;
  MappingMode mode = MappingMode::SemiSupervised;
  bool project_output = true;
  std::uint64_t seed = 0;

  // Lambda actually applied: zero in supervised-only mode.
  double effective_lambda() const { return mode == MappingMode::SupervisedOnly ? 0.0 : lambda; }
  void validate() const;
};

using MapValidationHook = std::function<double(const MappingNetwork&)>;

struct MapTrainingTrace {
  std::vector<double> epoch_loss;        // mean total loss per overlapping user
  std::vector<double> epoch_supervised;  // mean supervised term per overlapping user
  std::vector<double> validation_score;
  int best_epoch = 0;
};

// Trains on the scenario's train_overlap_users. Only those users' target
// vectors are read.
MappingNetwork train_mapping(const EmbeddingSpace& source, const EmbeddingSpace& target,
                             const CrossDomainScenario& scenario, const MapTrainConfig& cfg,
                             const MapValidationHook& hook = {}, MapTrainingTrace* trace = nullptr);

// Header "K <dim>" (followed by " project 0" when the output projection is
// off), then the rows of W1, b1, W2, b2 with 9 significant digits.
void write_mapping(std::ostream& out, const MappingNetwork& net);
MappingNetwork read_mapping(std::istream& in);

}  // namespace cdrec
