#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cdrec/scenario.hpp"

namespace cdrec {

struct EvalConfig {
  std::vector<std::size_t> cutoffs{10, 20};
  int repeats = 5;
  std::size_t negatives = 999;
  std::uint64_t seed = 0;
  // Score N@N and M@N as zero beyond the cutoff. Off reproduces the
  // uncut formulas (H@N is always cut).
  bool apply_cutoff = true;
  unsigned threads = 1;

  void validate() const;
};

// Which held-out item plays the positive. Validation runs share every line of
// code with test runs.
enum class HeldOutItem { Test, Validation };

// Scores for the candidates of one cold-start user, aligned with the span.
struct Scorer {
  std::function<std::vector<double>(const TestCase&, std::span<const ItemIndex>)> score;
  bool higher_is_better = true;
};

// 1-based position of the test item: one plus the candidates scored strictly
// better, plus equally scored candidates with a smaller item index.
std::size_t rank_of_test_item(std::span<const ItemIndex> items, std::span<const double> scores,
                              ItemIndex test_item, bool higher_is_better);

int hit_at(std::size_t position, std::size_t cutoff);
double ndcg_at(std::size_t position, std::size_t cutoff, bool apply_cutoff = true);
double mrr_at(std::size_t position, std::size_t cutoff, bool apply_cutoff = true);

struct RankingMetrics {
  double hit = 0.0;
  double ndcg = 0.0;
  double mrr = 0.0;
};

struct EvalReport {
  std::vector<std::size_t> cutoffs;
  std::vector<std::vector<RankingMetrics>> per_repeat;  // [repeat][cutoff]
  std::vector<RankingMetrics> mean;                     // [cutoff]
  std::vector<std::vector<std::size_t>> positions;      // [repeat][test case]

  const RankingMetrics& mean_at(std::size_t cutoff) const;
};

EvalReport evaluate(const Scorer& scorer, const CrossDomainScenario& scenario, const EvalConfig& cfg,
                    HeldOutItem positive = HeldOutItem::Test);

// Rows "method phi repeat metric N value"; the averaged block uses repeat "mean".
void write_report_tsv(std::ostream& out, const std::string& method, double phi, const EvalReport& report,
                      bool header = true);
std::string format_report_table(const std::string& method, double phi, const EvalReport& report);

}  // namespace cdrec
