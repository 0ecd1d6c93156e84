#include "cdrec/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cdrec/adam.hpp"
#include "cdrec/error.hpp"
#include "cdrec/rng.hpp"

namespace cdrec {

namespace {

void check_dims(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
}

// -log(sigmoid(x)) without overflow.
double neg_log_sigmoid(double x) {
  return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void write_row(std::ostream& out, char tag, const std::string& id, std::span<const double> row) {
  out << tag << ' ' << id;
  char buf[32];
  for (double x : row) {
    std::snprintf(buf, sizeof buf, " %.9g", x);
    out << buf;
  }
  out << '\n';
}

// Tracks which rows of a gradient buffer were written during a batch.
struct SparseGrad {
  Matrix grad;
  std::vector<char> touched;
  std::vector<std::size_t> rows;

  SparseGrad(std::size_t n, std::size_t k) : grad(n, k), touched(n, 0) {}

  std::span<double> at(std::size_t r) {
    if (!touched[r]) {
      touched[r] = 1;
      rows.push_back(r);
    }
    return grad.row(r);
  }

  template <typename F>
  void drain(F&& apply) {
    for (std::size_t r : rows) {
      apply(r, std::span<const double>(grad.row(r)));
      auto g = grad.row(r);
      std::fill(g.begin(), g.end(), 0.0);
      touched[r] = 0;
    }
    rows.clear();
  }
};

}  // namespace

const char* to_string(SpaceKind kind) { return kind == SpaceKind::Metric ? "metric" : "inner"; }

SpaceKind parse_space_kind(const std::string& s) {
  if (s == "metric") return SpaceKind::Metric;
  if (s == "inner" || s == "inner-product") return SpaceKind::InnerProduct;
  throw ConfigError("unknown space kind '" + s + "'");
}

double EmbeddingSpace::affinity(std::span<const double> user_vec, std::size_t item) const {
  const auto v = items.row(item);
  return kind == SpaceKind::Metric ? -squared_distance_unchecked(user_vec, v) : dot(user_vec, v);
}

double distance(std::span<const double> u, std::span<const double> v) {
  check_dims(u, v);
  return squared_distance_unchecked(u, v);
}

void project_unit_ball_inplace(std::span<double> x) {
  for (double c : x)
    if (!std::isfinite(c)) throw NonFiniteInput();
  const double n = norm(x);
  if (n > 1.0)
    for (double& c : x) c /= n;
}

Vec project_unit_ball(std::span<const double> x) {
  Vec out(x.begin(), x.end());
  project_unit_ball_inplace(out);
  return out;
}

double cml_triplet_loss(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg, double margin) {
  check_dims(u, v_pos);
  check_dims(u, v_neg);
  return std::max(0.0, margin + squared_distance_unchecked(u, v_pos) - squared_distance_unchecked(u, v_neg));
}

double bpr_triplet_loss(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg) {
  check_dims(u, v_pos);
  check_dims(u, v_neg);
  return neg_log_sigmoid(dot(u, v_pos) - dot(u, v_neg));
}

double cml_triplet_grad(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg, double margin, const TripletGrad& out) {
  const double loss = cml_triplet_loss(u, v_pos, v_neg, margin);
  if (loss <= 0.0) return 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    out.user[k] += 2.0 * (v_neg[k] - v_pos[k]);
    out.pos[k] += -2.0 * (u[k] - v_pos[k]);
    out.neg[k] += 2.0 * (u[k] - v_neg[k]);
  }
  return loss;
}

double bpr_triplet_grad(std::span<const double> u, std::span<const double> v_pos,
                        std::span<const double> v_neg, const TripletGrad& out) {
  check_dims(u, v_pos);
  check_dims(u, v_neg);
  const double x = dot(u, v_pos) - dot(u, v_neg);
  const double s = sigmoid(-x);  // -d/dx of -log sigmoid(x)
  for (std::size_t k = 0; k < u.size(); ++k) {
    out.user[k] += -s * (v_pos[k] - v_neg[k]);
    out.pos[k] += -s * u[k];
    out.neg[k] += s * u[k];
  }
  return neg_log_sigmoid(x);
}

void EmbedTrainConfig::validate() const {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (l2_reg < 0.0) throw ConfigError("regularizer must be non-negative");
  if (max_epochs < 1) throw ConfigError("epoch budget must be at least 1");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
}

EmbeddingSpace init_embedding_space(std::size_t n_users, std::size_t n_items, std::size_t dim,
                                    SpaceKind kind, std::uint64_t seed) {
  EmbeddingSpace space{Matrix(n_users, dim), Matrix(n_items, dim), kind};
  Rng rng = Rng::derive(seed, 1);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& x : space.users.data()) x = rng.uniform(-bound, bound);
  for (double& x : space.items.data()) x = rng.uniform(-bound, bound);
  if (kind == SpaceKind::Metric) {
    for (std::size_t r = 0; r < n_users; ++r) project_unit_ball_inplace(space.users.row(r));
    for (std::size_t r = 0; r < n_items; ++r) project_unit_ball_inplace(space.items.row(r));
  }
  return space;
}

EmbeddingSpace train_embeddings(const InteractionSet& data, const EmbedTrainConfig& cfg, SpaceKind kind,
                                const EmbedValidationHook& hook, TrainingTrace* trace) {
  cfg.validate();
  if (data.empty()) throw EmptyDataset();

  const std::size_t n_users = data.num_users();
  const std::size_t n_items = data.num_items();
  const std::size_t dim = cfg.dim;
  EmbeddingSpace space = init_embedding_space(n_users, n_items, dim, kind, cfg.seed);

  const AdamConfig adam{cfg.learning_rate};
  RowAdam user_opt(n_users, dim, adam);
  RowAdam item_opt(n_items, dim, adam);
  SparseGrad user_grad(n_users, dim);
  SparseGrad item_grad(n_items, dim);

  const auto positives = data.pairs();
  std::vector<std::size_t> order(positives.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  Rng rng = Rng::derive(cfg.seed, 2);

  TrainingTrace local;
  TrainingTrace& tr = trace ? *trace : local;
  tr = {};
  EmbeddingSpace best;
  double best_score = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t k = start; k < stop; ++k) {
        const auto [u, j] = positives[order[k]];
        if (data.items_of(u).size() >= n_items) continue;
        ItemIndex neg;
        do {
          neg = static_cast<ItemIndex>(rng.below(n_items));
        } while (data.contains(u, neg));

        const auto uv = space.users.row(u);
        const auto pv = space.items.row(j);
        const auto nv = space.items.row(neg);
        TripletGrad g{user_grad.at(u), item_grad.at(j), item_grad.at(neg)};
        if (kind == SpaceKind::Metric) {
          total += cml_triplet_grad(uv, pv, nv, cfg.margin, g);
        } else {
          total += bpr_triplet_grad(uv, pv, nv, g);
          if (cfg.l2_reg > 0.0) {
            total += cfg.l2_reg * (squared_norm(uv) + squared_norm(pv) + squared_norm(nv));
            for (std::size_t d = 0; d < dim; ++d) {
              g.user[d] += 2.0 * cfg.l2_reg * uv[d];
              g.pos[d] += 2.0 * cfg.l2_reg * pv[d];
              g.neg[d] += 2.0 * cfg.l2_reg * nv[d];
            }
          }
        }
      }
      user_opt.begin_step();
      item_opt.begin_step();
      const bool metric = kind == SpaceKind::Metric;
      user_grad.drain([&](std::size_t r, std::span<const double> g) {
        user_opt.update_row(space.users, r, g);
        if (metric) project_unit_ball_inplace(space.users.row(r));
      });
      item_grad.drain([&](std::size_t r, std::span<const double> g) {
        item_opt.update_row(space.items, r, g);
        if (metric) project_unit_ball_inplace(space.items.row(r));
      });
    }
    const double mean_loss = total / static_cast<double>(positives.size());
    if (!std::isfinite(mean_loss)) throw NonFiniteLoss(epoch);
    tr.epoch_loss.push_back(mean_loss);

    if (hook && epoch % cfg.eval_every == 0) {
      const double score = hook(space);
      tr.validation_score.push_back(score);
      if (score > best_score) {
        best_score = score;
        best = space;
        tr.best_epoch = epoch;
        since_best = 0;
      } else {
        since_best += cfg.eval_every;
        if (since_best >= cfg.patience) break;
      }
    }
  }
  return hook && tr.best_epoch > 0 ? best : space;
}

void write_embeddings(std::ostream& out, const EmbeddingSpace& space, const InteractionSet& ids) {
  if (space.users.rows() != ids.num_users() || space.items.rows() != ids.num_items())
    throw IndexMismatch("embedding rows do not match the interaction set");
  out << "K " << space.dim() << " users " << space.users.rows() << " items " << space.items.rows() << " kind "
      << to_string(space.kind) << '\n';
  for (std::size_t u = 0; u < space.users.rows(); ++u)
    write_row(out, 'U', ids.user_id(static_cast<UserIndex>(u)), space.users.row(u));
  for (std::size_t i = 0; i < space.items.rows(); ++i)
    write_row(out, 'V', ids.item_id(static_cast<ItemIndex>(i)), space.items.row(i));
}

void write_inferred(std::ostream& out, std::span<const std::string> user_ids, const Matrix& user_vectors,
                    const EmbeddingSpace& target, const InteractionSet& target_ids) {
  if (user_vectors.rows() != user_ids.size()) throw IndexMismatch("one inferred vector per user expected");
  out << "K " << target.dim() << " users " << user_ids.size() << " items " << target.items.rows()
      << " kind inferred\n";
  for (std::size_t u = 0; u < user_ids.size(); ++u) write_row(out, 'U', user_ids[u], user_vectors.row(u));
  for (std::size_t i = 0; i < target.items.rows(); ++i)
    write_row(out, 'V', target_ids.item_id(static_cast<ItemIndex>(i)), target.items.row(i));
}

EmbeddingSpace read_embeddings(std::istream& in, const InteractionSet& ids) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("embedding file is empty");
  std::istringstream header(line);
  std::string k_tag, users_tag, items_tag, kind_tag, kind;
  std::size_t dim = 0, n_users = 0, n_items = 0;
  if (!(header >> k_tag >> dim >> users_tag >> n_users >> items_tag >> n_items >> kind_tag >> kind) ||
      k_tag != "K" || users_tag != "users" || items_tag != "items" || kind_tag != "kind" || dim == 0)
    throw DataError("bad embedding header");
  if (n_users != ids.num_users() || n_items != ids.num_items())
    throw IndexMismatch("embedding file does not match the interaction set");

  EmbeddingSpace space{Matrix(n_users, dim), Matrix(n_items, dim), parse_space_kind(kind)};
  std::vector<char> seen_u(n_users, 0), seen_v(n_items, 0);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string tag, id;
    row >> tag >> id;
    std::span<double> dst;
    if (tag == "U") {
      auto u = ids.find_user(id);
      if (!u) throw DataError("unknown user '" + id + "' in embedding file");
      dst = space.users.row(*u);
      seen_u[*u] = 1;
    } else if (tag == "V") {
      auto i = ids.find_item(id);
      if (!i) throw DataError("unknown item '" + id + "' in embedding file");
      dst = space.items.row(*i);
      seen_v[*i] = 1;
    } else {
      throw MalformedLine(line_no);
    }
    for (double& x : dst)
      if (!(row >> x)) throw MalformedLine(line_no);
  }
  for (char s : seen_u)
    if (!s) throw DataError("embedding file is missing user rows");
  for (char s : seen_v)
    if (!s) throw DataError("embedding file is missing item rows");
  return space;
}

}  // namespace cdrec
