#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cdrec/interactions.hpp"
#include "cdrec/linalg.hpp"

namespace cdrec {

enum class SpaceKind { Metric, InnerProduct };

const char* to_string(SpaceKind kind);
SpaceKind parse_space_kind(const std::string& s);

// Tolerance on the unit-ball invariant.
inline constexpr double kUnitBallSlack = 1e-6;

// User and item vectors of one domain. Rows line up with the InteractionSet
// the space was trained on. For metric spaces smaller distance means stronger
// preference; for inner-product spaces larger dot product does.
struct EmbeddingSpace {
  Matrix users;
  Matrix items;
  SpaceKind kind = SpaceKind::Metric;

  std::size_t dim() const noexcept { return users.cols(); }

  // Higher is better under either kind.
  double affinity(std::span<const double> user_vec, std::size_t item) const;
};

// ---- elementary operations -------------------------------------------------

// Squared Euclidean distance.
double distance(std::span<const double> u, std::span<const double> v);

// x / max(1, ||x||).
Vec project_unit_ball(std::span<const double> x);
void project_unit_ball_inplace(std::span<double> x);

double cml_triplet_loss(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg, double margin);
double bpr_triplet_loss(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg);

// Gradients of one triplet loss with respect to its three arguments. The
// returned value is the loss; gradients are accumulated (+=) into the outputs.
struct TripletGrad {
  std::span<double> user;
  std::span<double> pos;
  std::span<double> neg;
};
double cml_triplet_grad(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg, double margin, const TripletGrad& out);
double bpr_triplet_grad(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg, const TripletGrad& out);

// ---- training ----------------------------------------------------------------

struct EmbedTrainConfig {
  std::size_t dim = 50;
  double margin = 1.0;          // metric only
  double learning_rate = 0.001;
  double l2_reg = 0.001;        // inner-product only
  int max_epochs = 500;
  int patience = 30;            // epochs without validation improvement
  int eval_every = 1;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 0;

  void validate() const;
};

// Called every `eval_every` epochs with the current space; higher is better.
// The trainer keeps the best-scoring snapshot and stops after `patience`
// epochs without improvement.
using EmbedValidationHook = std::function<double(const EmbeddingSpace&)>;

struct TrainingTrace {
  std::vector<double> epoch_loss;        // mean loss per positive
  std::vector<double> validation_score;  // one entry per hook call
  int best_epoch = 0;                    // 1-based; 0 when no hook was given
};

EmbeddingSpace init_embedding_space(std::size_t n_users, std::size_t n_items, std::size_t dim,
                                    SpaceKind kind, std::uint64_t seed);

EmbeddingSpace train_embeddings(const InteractionSet& data, const EmbedTrainConfig& cfg, SpaceKind kind,
                                const EmbedValidationHook& hook = {}, TrainingTrace* trace = nullptr);

// ---- persistence ---------------------------------------------------------------

// Header "K <dim> users <n> items <m> kind <metric|inner>", then "U <id> f1..fK"
// and "V <id> f1..fK" lines with 9 significant digits.
void write_embeddings(std::ostream& out, const EmbeddingSpace& space, const InteractionSet& ids);

// Same layout with kind "inferred": one U line per inferred user and the
// target item vectors as V lines.
void write_inferred(std::ostream& out, std::span<const std::string> user_ids, const Matrix& user_vectors,
                    const EmbeddingSpace& target, const InteractionSet& target_ids);

// Reads a space written by write_embeddings, matching rows to `ids`.
EmbeddingSpace read_embeddings(std::istream& in, const InteractionSet& ids);

}  // namespace cdrec
