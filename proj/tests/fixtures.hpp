#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cdrec/eval.hpp"
#include "cdrec/interactions.hpp"
#include "cdrec/rng.hpp"
#include "cdrec/scenario.hpp"

namespace cdrec::testing {

using NamedPairs = std::vector<std::pair<std::string, std::string>>;

inline InteractionSet domain(const NamedPairs& pairs) { return InteractionSet::from_pairs(pairs); }

// Every user in [first, first + n) takes `per_user` random distinct items out
// of `n_items`. Ids are "<prefix><k>".
inline void add_random_users(NamedPairs& pairs, const std::string& user_prefix, int first, int n,
                             const std::string& item_prefix, int n_items, int per_user, Rng& rng) {
  for (int u = first; u < first + n; ++u) {
    std::vector<int> items(static_cast<std::size_t>(n_items));
    for (int i = 0; i < n_items; ++i) items[static_cast<std::size_t>(i)] = i;
    rng.shuffle(std::span(items));
    for (int k = 0; k < per_user; ++k)
      pairs.emplace_back(user_prefix + std::to_string(u), item_prefix + std::to_string(items[static_cast<std::size_t>(k)]));
  }
}

// Small random cross-domain scenario with thresholds switched off.
inline CrossDomainScenario toy_scenario(std::uint64_t seed, int n_overlap = 20, double phi = 1.0,
                                        int per_user = 5) {
  Rng rng(seed);
  NamedPairs src, tgt;
  add_random_users(src, "u", 0, n_overlap, "s", 30, per_user, rng);
  add_random_users(tgt, "u", 0, n_overlap, "t", 25, per_user, rng);
  add_random_users(src, "a", 0, 10, "s", 30, per_user, rng);
  add_random_users(tgt, "b", 0, 10, "t", 25, per_user, rng);
  return build_scenario(domain(src), domain(tgt), FilterThresholds{1, 1}, SplitSeedConfig{seed, 0.5, phi});
}

// Scenario with `n_users` cold-start users over a target catalogue large
// enough for 999 negatives.
inline CrossDomainScenario wide_scenario(int n_users, std::uint64_t seed) {
  Rng rng(seed);
  NamedPairs src, tgt;
  add_random_users(src, "u", 0, 2 * n_users, "s", 50, 3, rng);
  add_random_users(tgt, "u", 0, 2 * n_users, "t", 1100, 4, rng);
  // A target-only user touching every item keeps the catalogue through filtering.
  for (int i = 0; i < 1100; ++i) tgt.emplace_back("filler", "t" + std::to_string(i));
  return build_scenario(domain(src), domain(tgt), FilterThresholds{1, 1}, SplitSeedConfig{seed, 0.5, 1.0});
}

// Puts the test item at position p (ties never happen).
inline Scorer fixed_position(std::function<std::size_t(const TestCase&)> p) {
  return {[p](const TestCase& tc, std::span<const ItemIndex> items) {
            std::vector<double> s(items.size());
            const double target = static_cast<double>(p(tc));
            double next = 1.0;
            for (std::size_t k = 0; k < items.size(); ++k) {
              if (items[k] == tc.test_item) {
                s[k] = target;
              } else {
                if (next == target) next += 1.0;
                s[k] = next;
                next += 1.0;
              }
            }
            return s;
          },
          false};
}

}  // namespace cdrec::testing
