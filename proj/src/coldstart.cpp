#include "cdrec/coldstart.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "cdrec/error.hpp"

namespace cdrec {

namespace {

template <typename Score, typename Better>
std::vector<ItemIndex> top_by(std::span<const ItemIndex> candidates, std::size_t n, Score score, Better better) {
  std::vector<std::pair<double, ItemIndex>> scored;
  scored.reserve(candidates.size());
  for (ItemIndex i : candidates) scored.emplace_back(score(i), i);
  auto cmp = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return better(a.first, b.first);
    return a.second < b.second;
  };
  n = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), cmp);
  std::vector<ItemIndex> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(scored[k].second);
  return out;
}

}  // namespace

AggregatedVectors initial_aggregate(const EmbeddingSpace& space) { return {0, space.users, space.items}; }

AggregatedVectors aggregate_step(const AggregatedVectors& prev, const InteractionSet& graph) {
  if (prev.users.rows() != graph.num_users() || prev.items.rows() != graph.num_items())
    throw IndexMismatch("aggregated vectors do not match the interaction graph");
  const std::size_t k = prev.users.cols();
  AggregatedVectors next{prev.hop + 1, prev.users, prev.items};

  for (ItemIndex j = 0; j < graph.num_items(); ++j) {
    const auto nbrs = graph.users_of(j);
    if (nbrs.empty()) continue;
    auto out = next.items.row(j);
    for (UserIndex u : nbrs) {
      const auto src = prev.users.row(u);
      for (std::size_t d = 0; d < k; ++d) out[d] += src[d];
    }
    const double denom = static_cast<double>(nbrs.size() + 1);
    for (double& x : out) x /= denom;
  }
  for (UserIndex u = 0; u < graph.num_users(); ++u) {
    const auto nbrs = graph.items_of(u);
    if (nbrs.empty()) continue;
    auto out = next.users.row(u);
    for (ItemIndex j : nbrs) {
      const auto src = prev.items.row(j);
      for (std::size_t d = 0; d < k; ++d) out[d] += src[d];
    }
    const double denom = static_cast<double>(nbrs.size() + 1);
    for (double& x : out) x /= denom;
  }
  return next;
}

AggregatedVectors aggregate(const EmbeddingSpace& space, const InteractionSet& graph, std::size_t hops) {
  AggregatedVectors agg = initial_aggregate(space);
  for (std::size_t h = 0; h < hops; ++h) agg = aggregate_step(agg, graph);
  return agg;
}

Vec multi_hop_user(const EmbeddingSpace& space, const InteractionSet& graph, std::string_view user,
                   std::size_t hops) {
  const auto u = graph.find_user(user);
  if (!u) throw UnknownUser(std::string(user));
  const AggregatedVectors agg = aggregate(space, graph, hops);
  const auto row = agg.users.row(*u);
  return Vec(row.begin(), row.end());
}

Vec infer_cold_start(const MappingNetwork& net, std::span<const double> aggregated) {
  return mlp_forward(net, aggregated);
}

std::vector<ItemIndex> recommend_topn(const EmbeddingSpace& target, std::span<const double> query,
                                      std::span<const ItemIndex> candidates, std::size_t n) {
  if (candidates.empty()) throw EmptyCandidates();
  if (query.size() != target.dim()) throw DimensionMismatch(target.dim(), query.size());
  if (n > candidates.size()) throw ConfigError("N exceeds the number of candidates");
  if (target.kind == SpaceKind::Metric) {
    return top_by(
        candidates, n, [&](ItemIndex i) { return squared_distance_unchecked(query, target.items.row(i)); },
        std::less<double>());
  }
  return top_by(
      candidates, n, [&](ItemIndex i) { return dot(query, target.items.row(i)); }, std::greater<double>());
}

std::vector<ItemIndex> itempop_rank(const InteractionSet& target, std::span<const ItemIndex> candidates,
                                    std::size_t n) {
  if (candidates.empty()) throw EmptyCandidates();
  return top_by(
      candidates, n,
      [&](ItemIndex i) { return i < target.num_items() ? static_cast<double>(target.users_of(i).size()) : 0.0; },
      std::greater<double>());
}

}  // namespace cdrec
