#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdrec/interactions.hpp"
#include "cdrec/rng.hpp"

namespace cdrec {

struct SplitSeedConfig {
  std::uint64_t seed = 0;
  double test_fraction = 0.5;  // of the filtered overlapping users
  double phi = 1.0;            // of the non-test overlapping users, in (0, 1]
};

struct FilterThresholds {
  std::size_t min_overlap_interactions = 10;  // per domain
  std::size_t min_other_interactions = 20;    // non-overlapping users and all items
};

// One cold-start user. Item indices refer to the scenario's target item space;
// `history` is the user's full target history (test and validation items
// included), used only to exclude items from negative sampling.
struct TestCase {
  UserIndex source_user = 0;
  ItemIndex test_item = 0;
  ItemIndex valid_item = 0;
  std::vector<ItemIndex> history;
};

struct CrossDomainScenario {
  InteractionSet source;
  // Training interactions only. The item space is the full filtered target
  // catalogue, so held-out items keep an index even when nobody else bought them.
  InteractionSet target;
  std::vector<std::string> overlap_users;        // natural order
  std::vector<std::string> train_overlap_users;  // natural order
  std::vector<TestCase> test_cases;              // natural order of user id
  SplitSeedConfig split;
  FilterThresholds filter;

  const std::string& test_user_id(const TestCase& tc) const { return source.user_id(tc.source_user); }
  std::vector<std::string> test_user_ids() const;
};

// Iteratively removes overlapping users below the per-domain threshold and
// non-overlapping users and items below the other threshold, until nothing
// changes. Users removed by the overlap rule leave both domains.
void filter_domains(InteractionSet& source, InteractionSet& target, const FilterThresholds& filter);

CrossDomainScenario build_scenario(const InteractionSet& source, const InteractionSet& target,
                                   const FilterThresholds& filter, const SplitSeedConfig& cfg);

// Source and target training interactions over U^s ∪ U^t. Source items come
// first with ids "s/<id>"; target item j sits at index |I^s| + j as "t/<id>".
InteractionSet build_unified(const CrossDomainScenario& scenario);

// n distinct items drawn uniformly from target items minus the user's target
// interactions (if the user is known to `target`) minus `exclude`.
std::vector<ItemIndex> sample_negatives(const InteractionSet& target, std::string_view user,
                                        std::span<const ItemIndex> exclude, std::size_t n, Rng& rng);

// Directory layout: source.tsv, target_train.tsv, overlap.txt, test.tsv, meta,
// plus train_overlap.txt, test_history.tsv and target_items.txt.
void save_scenario(const CrossDomainScenario& scenario, const std::filesystem::path& dir);
CrossDomainScenario load_scenario(const std::filesystem::path& dir);

}  // namespace cdrec
