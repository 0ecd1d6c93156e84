#include "cdrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>
#include <sstream>
#include <thread>

#include "cdrec/error.hpp"

namespace cdrec {

void EvalConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (negatives < 1) throw ConfigError("negatives must be at least 1");
  if (cutoffs.empty()) throw ConfigError("at least one cutoff is required");
  for (std::size_t n : cutoffs)
    if (n == 0) throw ConfigError("cutoffs must be positive");
}

std::size_t rank_of_test_item(std::span<const ItemIndex> items, std::span<const double> scores,
                              ItemIndex test_item, bool higher_is_better) {
  if (items.size() != scores.size()) throw IndexMismatch("scores do not align with candidates");
  const auto it = std::find(items.begin(), items.end(), test_item);
  if (it == items.end()) throw MissingTestItem();
  const double own = scores[static_cast<std::size_t>(it - items.begin())];
  std::size_t ahead = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k] == test_item) continue;
    const double s = scores[k];
    const bool better = higher_is_better ? s > own : s < own;
    if (better || (s == own && items[k] < test_item)) ++ahead;
  }
  return ahead + 1;
}

int hit_at(std::size_t position, std::size_t cutoff) { return position <= cutoff ? 1 : 0; }

double ndcg_at(std::size_t position, std::size_t cutoff, bool apply_cutoff) {
  if (apply_cutoff && position > cutoff) return 0.0;
  return std::log(2.0) / std::log(static_cast<double>(position) + 1.0);
}

double mrr_at(std::size_t position, std::size_t cutoff, bool apply_cutoff) {
  if (apply_cutoff && position > cutoff) return 0.0;
  return 1.0 / static_cast<double>(position);
}

const RankingMetrics& EvalReport::mean_at(std::size_t cutoff) const {
  for (std::size_t c = 0; c < cutoffs.size(); ++c)
    if (cutoffs[c] == cutoff) return mean[c];
  throw ConfigError("cutoff " + std::to_string(cutoff) + " was not evaluated");
}

EvalReport evaluate(const Scorer& scorer, const CrossDomainScenario& scenario, const EvalConfig& cfg,
                    HeldOutItem positive) {
  cfg.validate();
  const auto& cases = scenario.test_cases;
  if (cases.empty()) throw DegenerateScenario("no test users");

  EvalReport report;
  report.cutoffs = cfg.cutoffs;
  const auto n_cut = cfg.cutoffs.size();

  for (int r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t repeat_seed = cfg.seed + static_cast<std::uint64_t>(r);
    std::vector<std::size_t> pos(cases.size(), 0);

    auto run_range = [&](std::size_t lo, std::size_t hi) {
      std::vector<ItemIndex> candidates;
      for (std::size_t t = lo; t < hi; ++t) {
        const TestCase& tc = cases[t];
        const ItemIndex item = positive == HeldOutItem::Test ? tc.test_item : tc.valid_item;
        Rng rng = Rng::derive(repeat_seed, t);
        const auto negs = sample_negatives(scenario.target, scenario.test_user_id(tc), tc.history,
                                           cfg.negatives, rng);
        candidates.assign(1, item);
        candidates.insert(candidates.end(), negs.begin(), negs.end());
        std::vector<double> scores;
        try {
          scores = scorer.score(tc, candidates);
        } catch (const Error&) {
          throw;
        } catch (const std::exception& e) {
          throw ScorerFailure(scenario.test_user_id(tc), e.what());
        }
        if (scores.size() != candidates.size())
          throw ScorerFailure(scenario.test_user_id(tc), "wrong number of scores");
        for (double s : scores)
          if (std::isnan(s)) throw ScorerFailure(scenario.test_user_id(tc), "NaN score");
        pos[t] = rank_of_test_item(candidates, scores, item, scorer.higher_is_better);
      }
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cases.size())));
    if (workers == 1) {
      run_range(0, cases.size());
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(workers);
      const std::size_t chunk = (cases.size() + workers - 1) / workers;
      for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = std::min(cases.size(), w * chunk);
        const std::size_t hi = std::min(cases.size(), lo + chunk);
        pool.emplace_back([&, w, lo, hi] {
          try {
            run_range(lo, hi);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }

    std::vector<RankingMetrics> metrics(n_cut);
    for (std::size_t c = 0; c < n_cut; ++c) {
      const std::size_t n = cfg.cutoffs[c];
      for (std::size_t p : pos) {
        metrics[c].hit += hit_at(p, n);
        metrics[c].ndcg += ndcg_at(p, n, cfg.apply_cutoff);
        metrics[c].mrr += mrr_at(p, n, cfg.apply_cutoff);
      }
      const double users = static_cast<double>(pos.size());
      metrics[c].hit /= users;
      metrics[c].ndcg /= users;
      metrics[c].mrr /= users;
    }
    report.per_repeat.push_back(std::move(metrics));
    report.positions.push_back(std::move(pos));
  }

  report.mean.assign(n_cut, {});
  for (const auto& rep : report.per_repeat) {
    for (std::size_t c = 0; c < n_cut; ++c) {
      report.mean[c].hit += rep[c].hit;
      report.mean[c].ndcg += rep[c].ndcg;
      report.mean[c].mrr += rep[c].mrr;
    }
  }
  const double reps = static_cast<double>(cfg.repeats);
  for (auto& m : report.mean) {
    m.hit /= reps;
    m.ndcg /= reps;
    m.mrr /= reps;
  }
  return report;
}

namespace {

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void emit_rows(std::ostream& out, const std::string& method, const std::string& phi, const std::string& repeat,
               const std::vector<std::size_t>& cutoffs, const std::vector<RankingMetrics>& values) {
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    const auto n = std::to_string(cutoffs[c]);
    out << method << '\t' << phi << '\t' << repeat << "\tHR\t" << n << '\t' << fixed(values[c].hit, 6) << '\n';
    out << method << '\t' << phi << '\t' << repeat << "\tNDCG\t" << n << '\t' << fixed(values[c].ndcg, 6) << '\n';
    out << method << '\t' << phi << '\t' << repeat << "\tMRR\t" << n << '\t' << fixed(values[c].mrr, 6) << '\n';
  }
}

}  // namespace

void write_report_tsv(std::ostream& out, const std::string& method, double phi, const EvalReport& report,
                      bool header) {
  if (header) out << "method\tphi\trepeat\tmetric\tN\tvalue\n";
  const std::string phi_s = fixed(phi, 4);
  for (std::size_t r = 0; r < report.per_repeat.size(); ++r)
    emit_rows(out, method, phi_s, std::to_string(r + 1), report.cutoffs, report.per_repeat[r]);
  emit_rows(out, method, phi_s, "mean", report.cutoffs, report.mean);
}

std::string format_report_table(const std::string& method, double phi, const EvalReport& report) {
  std::ostringstream out;
  out << method << "  (phi = " << fixed(phi, 2) << ", " << report.per_repeat.size() << " repeats)\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "  %6s  %8s  %8s  %8s\n", "N", "H@N", "N@N", "M@N");
  out << buf;
  for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
    std::snprintf(buf, sizeof buf, "  %6zu  %8.4f  %8.4f  %8.4f\n", report.cutoffs[c], report.mean[c].hit,
                  report.mean[c].ndcg, report.mean[c].mrr);
    out << buf;
  }
  return out.str();
}

}  // namespace cdrec
