#include "cdrec/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "cdrec/adam.hpp"
#include "cdrec/error.hpp"
#include "cdrec/rng.hpp"

namespace cdrec {

MappingNetwork::MappingNetwork(std::size_t dim, bool project_output)
    : dim_(dim), project_output_(project_output), params_(param_count(dim), 0.0) {}

MappingNetwork MappingNetwork::glorot(std::size_t dim, std::uint64_t seed, bool project_output) {
  MappingNetwork net(dim, project_output);
  Rng rng = Rng::derive(seed, 1);
  const double bound = std::sqrt(6.0 / static_cast<double>(dim + 2 * dim));
  for (std::size_t r = 0; r < net.hidden(); ++r)
    for (std::size_t c = 0; c < dim; ++c) net.w1(r, c) = rng.uniform(-bound, bound);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < net.hidden(); ++c) net.w2(r, c) = rng.uniform(-bound, bound);
  return net;
}

ForwardCache mlp_forward_cached(const MappingNetwork& net, std::span<const double> x) {
  const std::size_t k = net.dim();
  const std::size_t h = net.hidden();
  if (x.size() != k) throw DimensionMismatch(k, x.size());
  ForwardCache c;
  c.input.assign(x.begin(), x.end());
  c.hidden.resize(h);
  for (std::size_t r = 0; r < h; ++r) {
    double z = net.b1(r);
    for (std::size_t j = 0; j < k; ++j) z += net.w1(r, j) * x[j];
    c.hidden[r] = std::tanh(z);
  }
  c.pre_output.resize(k);
  for (std::size_t r = 0; r < k; ++r) {
    double z = net.b2(r);
    for (std::size_t j = 0; j < h; ++j) z += net.w2(r, j) * c.hidden[j];
    c.pre_output[r] = z;
  }
  c.pre_norm = norm(c.pre_output);
  c.output = c.pre_output;
  if (net.projects_output() && c.pre_norm > 1.0)
    for (double& y : c.output) y /= c.pre_norm;
  return c;
}

Vec mlp_forward(const MappingNetwork& net, std::span<const double> x) {
  return mlp_forward_cached(net, x).output;
}

void mlp_backward(const MappingNetwork& net, const ForwardCache& c, std::span<const double> grad_output,
                  std::span<double> grad) {
  const std::size_t k = net.dim();
  const std::size_t h = net.hidden();

  // Through y = z / ||z|| when the projection is active: dz = (g - y (y.g)) / ||z||.
  Vec gz(grad_output.begin(), grad_output.end());
  if (net.projects_output() && c.pre_norm > 1.0) {
    const double yg = dot(c.output, grad_output);
    for (std::size_t r = 0; r < k; ++r) gz[r] = (grad_output[r] - c.output[r] * yg) / c.pre_norm;
  }

  Vec gh(h, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    grad[net.b2_offset() + r] += gz[r];
    for (std::size_t j = 0; j < h; ++j) {
      grad[net.w2_offset() + r * h + j] += gz[r] * c.hidden[j];
      gh[j] += net.w2(r, j) * gz[r];
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    const double gpre = gh[r] * (1.0 - c.hidden[r] * c.hidden[r]);
    grad[net.w1_size() + r] += gpre;
    for (std::size_t j = 0; j < k; ++j) grad[r * k + j] += gpre * c.input[j];
  }
}

double supervised_loss(const MappingNetwork& net, std::span<const std::pair<Vec, Vec>> pairs) {
  if (pairs.empty()) throw EmptyBatch();
  double loss = 0.0;
  for (const auto& [src, tgt] : pairs) loss += distance(mlp_forward(net, src), tgt);
  return loss;
}

double unsupervised_triplet_loss(const MappingNetwork& net, std::span<const double> v_pos,
                                 std::span<const double> v_neg, std::span<const double> u_target,
                                 double margin) {
  const Vec fp = mlp_forward(net, v_pos);
  const Vec fn = mlp_forward(net, v_neg);
  return std::max(0.0, margin + distance(fp, u_target) - distance(fn, u_target));
}

double total_mapping_loss(double supervised, double unsupervised, double lambda) {
  return supervised + lambda * unsupervised;
}

BatchLoss mapping_batch_loss(const MappingNetwork& net, std::span<const MappingSample> batch, double lambda,
                             double margin, std::span<double> grad) {
  if (batch.empty()) throw EmptyBatch();
  const bool want_grad = !grad.empty();
  const std::size_t k = net.dim();
  BatchLoss out;
  Vec g(k);
  for (const auto& s : batch) {
    if (s.target_user.size() != k) throw DimensionMismatch(k, s.target_user.size());
    const auto fu = mlp_forward_cached(net, s.source_user);
    out.supervised += squared_distance_unchecked(fu.output, s.target_user);
    if (want_grad) {
      for (std::size_t d = 0; d < k; ++d) g[d] = 2.0 * (fu.output[d] - s.target_user[d]);
      mlp_backward(net, fu, g, grad);
    }
    if (s.pos_item.empty()) continue;

    const auto fp = mlp_forward_cached(net, s.pos_item);
    const auto fn = mlp_forward_cached(net, s.neg_item);
    const double hinge = margin + squared_distance_unchecked(fp.output, s.target_user) -
                         squared_distance_unchecked(fn.output, s.target_user);
    if (hinge <= 0.0) continue;
    out.unsupervised += hinge;
    if (want_grad) {
      for (std::size_t d = 0; d < k; ++d) g[d] = lambda * 2.0 * (fp.output[d] - s.target_user[d]);
      mlp_backward(net, fp, g, grad);
      for (std::size_t d = 0; d < k; ++d) g[d] = -lambda * 2.0 * (fn.output[d] - s.target_user[d]);
      mlp_backward(net, fn, g, grad);
    }
  }
  out.total = total_mapping_loss(out.supervised, out.unsupervised, lambda);
  return out;
}

void MapTrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (!(margin > 0.0)) throw ConfigError("mapping margin must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("mapping learning rate must be positive");
  if (max_epochs < 1) throw ConfigError("mapping epoch budget must be at least 1");
  if (batch_size == 0) throw ConfigError("mapping batch size must be positive");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
}

MappingNetwork train_mapping(const EmbeddingSpace& source, const EmbeddingSpace& target,
                             const CrossDomainScenario& scenario, const MapTrainConfig& cfg,
                             const MapValidationHook& hook, MapTrainingTrace* trace) {
  cfg.validate();
  if (source.dim() != target.dim()) throw DimensionMismatch(source.dim(), target.dim());
  const InteractionSet& src = scenario.source;
  if (source.users.rows() != src.num_users() || source.items.rows() != src.num_items())
    throw IndexMismatch("source space does not match the scenario's source domain");
  if (target.users.rows() != scenario.target.num_users())
    throw IndexMismatch("target space does not match the scenario's target domain");

  struct Anchor {
    UserIndex source_user;
    UserIndex target_user;
  };
  std::vector<Anchor> anchors;
  for (const auto& id : scenario.train_overlap_users) {
    auto su = src.find_user(id);
    auto tu = scenario.target.find_user(id);
    if (!su || !tu) throw IndexMismatch("overlapping user '" + id + "' missing from a domain");
    anchors.push_back({*su, *tu});
  }
  if (anchors.empty()) throw NoOverlapUsers();

  const std::size_t k = source.dim();
  const double lambda = cfg.effective_lambda();
  // With lambda = 0 the triplet term is skipped entirely, so no random draws
  // are spent on it and the run matches supervised-only training exactly.
  const bool semi = lambda > 0.0;
  const std::size_t n_items = src.num_items();

  MappingNetwork net = MappingNetwork::glorot(k, cfg.seed, cfg.project_output);
  Adam opt(net.params().size(), AdamConfig{cfg.learning_rate});
  std::vector<double> grad(net.params().size());
  Rng rng = Rng::derive(cfg.seed, 2);
  std::vector<std::size_t> order(anchors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  MapTrainingTrace local;
  MapTrainingTrace& tr = trace ? *trace : local;
  tr = {};
  MappingNetwork best;
  double best_score = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<MappingSample> batch;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double total = 0.0;
    double sup = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t p = start; p < stop; ++p) {
        const Anchor& a = anchors[order[p]];
        MappingSample s{source.users.row(a.source_user), target.users.row(a.target_user), {}, {}};
        const auto liked = src.items_of(a.source_user);
        if (semi && !liked.empty() && liked.size() < n_items) {
          const ItemIndex j = liked[rng.below(liked.size())];
          ItemIndex neg;
          do {
            neg = static_cast<ItemIndex>(rng.below(n_items));
          } while (src.contains(a.source_user, neg));
          s.pos_item = source.items.row(j);
          s.neg_item = source.items.row(neg);
        }
        batch.push_back(s);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      const BatchLoss loss = mapping_batch_loss(net, batch, lambda, cfg.margin, grad);
      total += loss.total;
      sup += loss.supervised;
      opt.step(net.params(), grad);
    }
    const double n = static_cast<double>(anchors.size());
    bool finite = std::isfinite(total);
    for (double p : net.params()) finite = finite && std::isfinite(p);
    if (!finite) throw NonFiniteLoss(epoch);
    tr.epoch_loss.push_back(total / n);
    tr.epoch_supervised.push_back(sup / n);

    if (hook && epoch % cfg.eval_every == 0) {
      const double score = hook(net);
      tr.validation_score.push_back(score);
      if (score > best_score) {
        best_score = score;
        best = net;
        tr.best_epoch = epoch;
        since_best = 0;
      } else {
        since_best += cfg.eval_every;
        if (since_best >= cfg.patience) break;
      }
    }
  }
  return hook && tr.best_epoch > 0 ? best : net;
}

void write_mapping(std::ostream& out, const MappingNetwork& net) {
  out << "K " << net.dim();
  if (!net.projects_output()) out << " project 0";
  out << '\n';
  char buf[32];
  auto emit = [&](std::size_t offset, std::size_t count) {
    for (std::size_t c = 0; c < count; ++c) {
      std::snprintf(buf, sizeof buf, c == 0 ? "%.9g" : " %.9g", net.params()[offset + c]);
      out << buf;
    }
    out << '\n';
  };
  const std::size_t k = net.dim();
  const std::size_t h = net.hidden();
  for (std::size_t r = 0; r < h; ++r) emit(r * k, k);
  emit(net.w1_size(), h);
  for (std::size_t r = 0; r < k; ++r) emit(net.w2_offset() + r * h, h);
  emit(net.b2_offset(), k);
}

MappingNetwork read_mapping(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("mapping file is empty");
  std::istringstream header(line);
  std::string tag;
  std::size_t dim = 0;
  if (!(header >> tag >> dim) || tag != "K" || dim == 0) throw DataError("bad mapping header");
  bool project = true;
  std::string key;
  int value = 1;
  if (header >> key >> value) {
    if (key != "project") throw DataError("bad mapping header");
    project = value != 0;
  }
  MappingNetwork net(dim, project);
  const std::size_t k = dim;
  const std::size_t h = net.hidden();
  std::size_t line_no = 1;
  auto read_line = [&](std::size_t offset, std::size_t count) {
    ++line_no;
    if (!std::getline(in, line)) throw DataError("mapping file is truncated");
    std::istringstream row(line);
    for (std::size_t c = 0; c < count; ++c)
      if (!(row >> net.params()[offset + c])) throw MalformedLine(line_no);
  };
  for (std::size_t r = 0; r < h; ++r) read_line(r * k, k);
  read_line(net.w1_size(), h);
  for (std::size_t r = 0; r < k; ++r) read_line(net.w2_offset() + r * h, h);
  read_line(net.b2_offset(), k);
  return net;
}

}  // namespace cdrec
