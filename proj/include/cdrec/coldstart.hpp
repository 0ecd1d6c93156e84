#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cdrec/embedding.hpp"
#include "cdrec/interactions.hpp"
#include "cdrec/mapping.hpp"

namespace cdrec {

// Source-space vectors after `hop` rounds of neighbour averaging.
struct AggregatedVectors {
  std::size_t hop = 0;
  Matrix users;
  Matrix items;
};

AggregatedVectors initial_aggregate(const EmbeddingSpace& space);

// One synchronous round: every entity becomes the mean of itself and its
// neighbours, all read from the previous hop. Entities without neighbours
// keep their vector.
AggregatedVectors aggregate_step(const AggregatedVectors& prev, const InteractionSet& graph);

AggregatedVectors aggregate(const EmbeddingSpace& space, const InteractionSet& graph, std::size_t hops);

Vec multi_hop_user(const EmbeddingSpace& space, const InteractionSet& graph, std::string_view user,
                   std::size_t hops);

// Target-space estimate for a cold-start user from its aggregated source vector.
Vec infer_cold_start(const MappingNetwork& net, std::span<const double> aggregated);

// Best N candidates for the query: ascending squared distance in metric
// spaces, descending dot product in inner-product spaces; ties go to the
// smaller item index.
std::vector<ItemIndex> recommend_topn(const EmbeddingSpace& target, std::span<const double> query,
                                      std::span<const ItemIndex> candidates, std::size_t n);

// Candidates by descending training interaction count, ties by item index.
// N larger than the candidate list returns all of them.
std::vector<ItemIndex> itempop_rank(const InteractionSet& target, std::span<const ItemIndex> candidates,
                                    std::size_t n);

}  // namespace cdrec
