// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion ids as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cdrec/coldstart.hpp"
#include "cdrec/error.hpp"
#include "cdrec/experiment.hpp"
#include "fixtures.hpp"

using namespace cdrec;
using namespace cdrec::testing;
namespace fs = std::filesystem;

namespace {

// ---- tolerances and budgets ----------------------------------------------------

constexpr double kExactTol = 1e-9;       // analytic examples, absolute
constexpr double kGradRelTol = 1e-4;     // finite differences, relative
constexpr double kGradStep = 1e-6;       // central difference step
constexpr double kBoundaryGap = 1e-3;    // distance kept from hinge and projection kinks
constexpr int kGradPoints = 100;         // per loss
constexpr double kOracleTol = 1e-12;     // multi-hop vs recursion
constexpr int kOracleInstances = 500;
constexpr double kSigmas = 3.0;
constexpr std::size_t kMinRandomUsers = 200;
constexpr int kBenchmarkSeeds = 5;
constexpr double kBudget1 = 5, kBudget2 = 30, kBudget3 = 60, kBudget4 = 30, kBudget6 = 20 * 60;

// ---- bookkeeping ---------------------------------------------------------------------

struct Checks {
  int passed = 0;
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (ok) ++passed;
    else failures.push_back(what);
  }
  void near(double got, double want, const std::string& what, double tol = kExactTol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << ": got " << got << ", want " << want;
    expect(std::abs(got - want) <= tol, msg.str());
  }
  template <class E, class F>
  void throws(F&& f, const std::string& what, const std::function<bool(const E&)>& extra = {}) {
    try {
      f();
    } catch (const E& e) {
      expect(!extra || extra(e), what);
      return;
    } catch (...) {
    }
    expect(false, what + ": expected exception not raised");
  }
  bool ok() const { return failures.empty(); }
  std::string summary() const {
    std::ostringstream s;
    s << passed << "/" << passed + failures.size() << " checks";
    for (std::size_t k = 0; k < std::min<std::size_t>(failures.size(), 5); ++k) s << "\n    failed: " << failures[k];
    return s.str();
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const std::string& id, const std::string& title, const Outcome& o, double secs, double budget) {
  const bool in_budget = budget <= 0 || secs < budget;
  std::printf("criterion %-3s %s  %s  (%.1f s", id.c_str(), o.pass && in_budget ? "PASS" : "FAIL", title.c_str(), secs);
  if (budget > 0) std::printf(", budget %.0f s", budget);
  std::printf(")\n");
  if (!o.detail.empty()) std::printf("    %s\n", o.detail.c_str());
  std::fflush(stdout);
}

Vec random_vec(Rng& rng, std::size_t k, double lo, double hi) {
  Vec v(k);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Vec concat(std::initializer_list<const Vec*> parts) {
  Vec out;
  for (const Vec* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

double relative_error(const Vec& a, const Vec& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

EmbeddingSpace space_of(const std::vector<Vec>& users, const std::vector<Vec>& items, SpaceKind kind) {
  const std::size_t k = users.empty() ? items.front().size() : users.front().size();
  EmbeddingSpace s{Matrix(users.size(), k), Matrix(items.size(), k), kind};
  for (std::size_t r = 0; r < users.size(); ++r) std::copy(users[r].begin(), users[r].end(), s.users.row(r).begin());
  for (std::size_t r = 0; r < items.size(); ++r) std::copy(items[r].begin(), items[r].end(), s.items.row(r).begin());
  return s;
}

ExperimentConfig benchmark_config() {
  ExperimentConfig cfg;
  apply_settings(cfg, read_key_values(CDREC_BENCHMARK_CFG));
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- criterion 1: analytic examples ---------------------------------------------

void data_examples(Checks& c) {
  {
    std::istringstream in("u1\ti1\nu1\ti2\nu2\ti1\n");
    const auto s = parse_interactions(in);
    c.expect(s.num_users() == 2 && s.num_items() == 2 && s.num_interactions() == 3, "parse: 2 users, 2 items, 3 pairs");
  }
  {
    std::istringstream in("u1\ti1\nu1\ti1\n");
    c.expect(parse_interactions(in).num_interactions() == 1, "parse: duplicate kept once");
  }
  c.throws<EmptyDataset>([] {
    std::istringstream in("");
    parse_interactions(in);
  }, "parse: empty file");

  // Filtering.
  NamedPairs src, tgt;
  for (int u = 0; u < 25; ++u)
    for (int i = 0; i < 25; ++i) {
      src.emplace_back("u" + std::to_string(u), "s" + std::to_string(i));
      tgt.emplace_back("u" + std::to_string(u), "t" + std::to_string(i));
    }
  for (int i = 0; i < 9; ++i) src.emplace_back("nine", "s" + std::to_string(i));
  for (int i = 0; i < 12; ++i) tgt.emplace_back("nine", "t" + std::to_string(i));
  for (int i = 0; i < 19; ++i) src.emplace_back("n19", "s" + std::to_string(i));
  const auto sc = build_scenario(domain(src), domain(tgt), FilterThresholds{}, SplitSeedConfig{});
  c.expect(std::find(sc.overlap_users.begin(), sc.overlap_users.end(), "nine") == sc.overlap_users.end(),
           "filter: 9 source interactions leaves the overlap set");
  c.expect(!sc.source.find_user("n19"), "filter: non-overlapping user with 19 interactions removed");

  {
    Rng rng(3);
    NamedPairs s2, t2;
    add_random_users(s2, "u", 0, 200, "s", 40, 3, rng);
    add_random_users(t2, "u", 0, 200, "t", 40, 3, rng);
    const auto split = build_scenario(domain(s2), domain(t2), FilterThresholds{1, 1}, SplitSeedConfig{9, 0.5, 0.10});
    c.expect(split.test_cases.size() == 100 && split.train_overlap_users.size() == 10, "split: 100 test, 10 mapping users");
  }
  {
    NamedPairs s3, t3;
    for (const char* u : {"a", "b", "c"})
      for (int i = 0; i < 10; ++i) s3.emplace_back(u, std::to_string(i));
    for (const char* u : {"a", "b", "d", "e"})
      for (int i = 0; i < 7; ++i) t3.emplace_back(u, std::to_string(i));
    const auto u = build_unified(build_scenario(domain(s3), domain(t3), FilterThresholds{1, 1}, SplitSeedConfig{1, 0.5, 1.0}));
    c.expect(u.num_users() == 5, "unified: 5 users");
    c.expect(u.num_items() == 17, "unified: 17 items");
  }
  {
    const auto target = domain({{"u", "1"}, {"v", "2"}, {"v", "3"}, {"v", "4"}, {"v", "5"}});
    Rng a(42), b(42);
    const auto negs = sample_negatives(target, "u", {}, 3, a);
    std::set<std::string> ids;
    for (ItemIndex i : negs) ids.insert(target.item_id(i));
    c.expect(ids.size() == 3 && !ids.count("1"), "negatives: 3 distinct from {2,3,4,5}");
    c.expect(sample_negatives(target, "u", {}, 3, b) == negs, "negatives: same seed, same sample");
    NamedPairs big;
    for (int i = 0; i < 501; ++i) big.emplace_back("v", std::to_string(i));
    big.emplace_back("u", "0");
    const auto pool = domain(big);
    c.throws<InsufficientCandidates>([&] {
      Rng r(0);
      sample_negatives(pool, "u", {}, 999, r);
    }, "negatives: pool of 500", [](const InsufficientCandidates& e) { return e.pool_size() == 500; });
  }
}

void embed_examples(Checks& c) {
  c.near(distance(Vec{0, 0}, Vec{3, 4}), 25.0, "distance (0,0)-(3,4)");
  c.near(distance(Vec{0.3, -0.7}, Vec{0.3, -0.7}), 0.0, "distance x-x");
  c.near(distance(Vec{1, 0, 0}, Vec{0, 1, 0}), 2.0, "distance e1-e2");
  const Vec p = project_unit_ball(Vec{3, 4});
  c.near(p[0], 0.6, "project (3,4) x");
  c.near(p[1], 0.8, "project (3,4) y");
  c.expect(project_unit_ball(Vec{0.3, 0.4}) == Vec{0.3, 0.4}, "project inside unchanged");
  c.expect(project_unit_ball(Vec{0, 0}) == Vec{0, 0}, "project zero");

  // Squared distances picked through 1-d coordinates.
  const Vec o{0.0};
  auto at = [](double d) { return Vec{std::sqrt(d)}; };
  c.near(cml_triplet_loss(o, at(0.2), at(0.5), 1.0), 0.7, "cml 1+0.2-0.5");
  c.near(cml_triplet_loss(o, at(0.0), at(2.0), 1.0), 0.0, "cml clamp");
  c.near(cml_triplet_loss(o, at(0.3), at(0.3), 0.5), 0.5, "cml margin only");
  c.near(bpr_triplet_loss(Vec{1.0}, Vec{0.0}, Vec{0.0}), std::log(2.0), "bpr margin 0");

  Rng rng(1);
  NamedPairs pairs;
  add_random_users(pairs, "u", 0, 4, "i", 6, 3, rng);
  EmbedTrainConfig cfg;
  cfg.dim = 2;
  cfg.max_epochs = 50;
  cfg.learning_rate = 0.01;
  cfg.seed = 5;
  const auto data = domain(pairs);
  const auto a = train_embeddings(data, cfg, SpaceKind::Metric);
  bool inside = true;
  for (std::size_t r = 0; r < a.users.rows(); ++r) inside &= norm(a.users.row(r)) <= 1.0 + kUnitBallSlack;
  for (std::size_t r = 0; r < a.items.rows(); ++r) inside &= norm(a.items.row(r)) <= 1.0 + kUnitBallSlack;
  c.expect(inside, "trained K=2 metric rows in the unit ball");
  const auto b = train_embeddings(data, cfg, SpaceKind::Metric);
  c.expect(a.users == b.users && a.items == b.items, "training deterministic");
}

void mapping_examples(Checks& c) {
  const Vec x{0.4, -0.9};
  const auto zero_out = mlp_forward(MappingNetwork(2), x);
  c.expect(zero_out == Vec{0, 0}, "all-zero network gives zero");
  auto constant = [](double bx, double by) {
    MappingNetwork n(2);
    for (std::size_t r = 0; r < n.hidden(); ++r) n.w1(r, 0) = 0.5;
    n.b2(0) = bx;
    n.b2(1) = by;
    return n;
  };
  const Vec half = mlp_forward(constant(0.3, 0.4), x);
  c.near(half[0], 0.3, "constant network ||b2||=0.5 x");
  c.near(half[1], 0.4, "constant network ||b2||=0.5 y");
  const Vec two = mlp_forward(constant(1.2, 1.6), x);
  c.near(two[0], 0.6, "constant network ||b2||=2 x");
  c.near(two[1], 0.8, "constant network ||b2||=2 y");

  const MappingNetwork zero(2);
  const std::vector<std::pair<Vec, Vec>> perfect{{Vec{0.5, 0.1}, Vec{0, 0}}};
  c.near(supervised_loss(zero, perfect), 0.0, "supervised perfect fit");
  const std::vector<std::pair<Vec, Vec>> one{{Vec{0.5, 0.1}, Vec{1, 0}}};
  c.near(supervised_loss(zero, one), 1.0, "supervised single pair");
  const std::vector<std::pair<Vec, Vec>> two_pairs{{Vec{0.5, 0.1}, Vec{1, 0}}, {Vec{0.2, 0.2}, Vec{0, 2}}};
  c.near(supervised_loss(zero, two_pairs), 5.0, "supervised 1 + 4");

  // With W1 = W2 = identity on the first coordinate and x = (atanh(a), 0),
  // the network outputs (a, 0).
  MappingNetwork pass(2);
  pass.w1(0, 0) = 1.0;
  pass.w2(0, 0) = 1.0;
  auto input = [](double a) { return Vec{std::atanh(a), 0.0}; };
  const Vec origin{0.0, 0.0};
  c.near(unsupervised_triplet_loss(pass, input(std::sqrt(0.1)), input(std::sqrt(0.4)), origin, 1.0), 0.7,
         "triplet 1 + 0.1 - 0.4");
  c.near(unsupervised_triplet_loss(pass, input(0.5), input(-0.5), Vec{0.5, 0.0}, 1.0), 0.0, "triplet clamp");
  c.near(unsupervised_triplet_loss(pass, input(0.3), input(-0.3), origin, 1.0), 1.0, "triplet margin only");
  c.near(unsupervised_triplet_loss(zero, Vec{0.1, 0}, Vec{0.9, 0}, Vec{0.5, 0.5}, 1.0), 1.0, "zero network margin only");
  c.near(total_mapping_loss(2, 4, 0.5), 4.0, "total 2 + 0.5*4");
  c.expect(total_mapping_loss(2, 4, 0.0) == 2.0, "total lambda 0");
  c.expect(total_mapping_loss(2, 0, 0.7) == 2.0, "total L_U 0");

  const auto sc = toy_scenario(1, 20, 1.0);
  const auto s = init_embedding_space(sc.source.num_users(), sc.source.num_items(), 4, SpaceKind::Metric, 2);
  const auto t = init_embedding_space(sc.target.num_users(), sc.target.num_items(), 4, SpaceKind::Metric, 3);
  MapTrainConfig sup;
  sup.max_epochs = 20;
  sup.mode = MappingMode::SupervisedOnly;
  MapTrainConfig semi = sup;
  semi.mode = MappingMode::SemiSupervised;
  semi.lambda = 0;
  const auto net = train_mapping(s, t, sc, sup);
  c.expect(net == train_mapping(s, t, sc, semi), "supervised-only equals lambda 0");
  bool bounded = true;
  for (const auto& id : sc.overlap_users) bounded &= norm(mlp_forward(net, s.users.row(*sc.source.find_user(id)))) <= 1 + 1e-6;
  c.expect(bounded, "mapped overlap users in the unit ball");
}

void coldstart_examples(Checks& c) {
  {
    const auto g = domain({{"u", "a"}, {"u", "b"}});
    const auto s = space_of({{1, 0}}, {{0, 1}, {0, -1}}, SpaceKind::Metric);
    const Vec u1 = multi_hop_user(s, g, "u", 1);
    c.near(u1[0], 1.0 / 3, "user hop x");
    c.near(u1[1], 0.0, "user hop y");
    c.expect(multi_hop_user(s, g, "u", 0) == Vec{1, 0}, "H=0 raw vector");
  }
  {
    const NamedPairs pairs{{"u", "a"}};
    const std::vector<std::string> users{"alone"};
    const auto g = InteractionSet::from_pairs(pairs, users);
    const auto s = space_of({{0.2, 0.3}, {0.9, 0.1}}, {{0.5, 0.5}}, SpaceKind::Metric);
    c.expect(multi_hop_user(s, g, "alone", 2) == Vec{0.2, 0.3}, "no neighbours unchanged");
  }
  {
    const auto g = domain({{"x", "v"}, {"y", "v"}, {"z", "v"}});
    const auto s = space_of({{1, 0}, {0, 1}, {-1, 0}}, {{0, 0}}, SpaceKind::Metric);
    const auto agg = aggregate(s, g, 1);
    c.near(agg.items(0, 0), 0.0, "item hop x");
    c.near(agg.items(0, 1), 0.25, "item hop y");
  }
  {
    const auto g = domain({{"u", "a"}, {"u", "b"}, {"u", "c"}});
    const auto s = space_of({{0.6, 0.1}}, {{0.2, -0.4}, {0.2, -0.4}, {0.2, -0.4}}, SpaceKind::Metric);
    const Vec h1 = multi_hop_user(s, g, "u", 1);
    c.near(h1[0], (0.6 + 3 * 0.2) / 4, "closed form x");
    c.near(h1[1], (0.1 - 3 * 0.4) / 4, "closed form y");
  }
  c.expect(infer_cold_start(MappingNetwork(2), Vec{0.3, 0.1}) == Vec{0, 0}, "zero network infers zero");
  const auto net = MappingNetwork::glorot(2, 4);
  c.expect(infer_cold_start(net, Vec{0.3, 0.1}) == mlp_forward(net, Vec{0.3, 0.1}), "naive inference is the forward pass");

  {
    const auto s = space_of({}, {{std::sqrt(0.1), 0}, {std::sqrt(0.3), 0}, {0, std::sqrt(0.2)}}, SpaceKind::Metric);
    c.expect(recommend_topn(s, Vec{0, 0}, std::vector<ItemIndex>{0, 1, 2}, 3) == std::vector<ItemIndex>{0, 2, 1},
             "top-N metric [A, C, B]");
    const auto ip = space_of({}, {{0.9}, {0.1}}, SpaceKind::InnerProduct);
    c.expect(recommend_topn(ip, Vec{1}, std::vector<ItemIndex>{0, 1}, 2) == std::vector<ItemIndex>{0, 1},
             "top-N inner [A, B]");
    const auto tied = space_of({}, std::vector<Vec>(8, Vec{0.5}), SpaceKind::InnerProduct);
    c.expect(recommend_topn(tied, Vec{1}, std::vector<ItemIndex>{7, 3}, 2) == std::vector<ItemIndex>{3, 7},
             "top-N tie 3 before 7");
  }
  {
    NamedPairs pairs;
    for (int u = 0; u < 5; ++u) pairs.emplace_back("u" + std::to_string(u), "A");
    for (int u = 0; u < 2; ++u) pairs.emplace_back("u" + std::to_string(u), "B");
    for (int u = 0; u < 7; ++u) pairs.emplace_back("u" + std::to_string(u), "C");
    const std::vector<std::string> extra{"Z"};
    const auto g = InteractionSet::from_pairs(pairs, {}, extra);
    const auto r = itempop_rank(g, std::vector<ItemIndex>{0, 1, 2}, 3);
    c.expect(g.item_id(r[0]) == "C" && g.item_id(r[1]) == "A" && g.item_id(r[2]) == "B", "ITEMPOP [C, A, B]");
    const auto flat = domain({{"u", "x"}, {"u", "y"}, {"u", "z"}});
    c.expect(itempop_rank(flat, std::vector<ItemIndex>{2, 0, 1}, 3) == std::vector<ItemIndex>{0, 1, 2},
             "ITEMPOP equal counts by id");
    const auto all = itempop_rank(g, std::vector<ItemIndex>{3, 0, 1, 2}, 4);
    c.expect(g.item_id(all.back()) == "Z", "ITEMPOP unseen item last");
  }
}

void eval_examples(Checks& c) {
  std::vector<ItemIndex> items(1000);
  std::vector<double> scores(1000);
  for (std::size_t k = 0; k < 1000; ++k) {
    items[k] = static_cast<ItemIndex>(k);
    scores[k] = static_cast<double>(k);
  }
  c.expect(rank_of_test_item(items, scores, 999, true) == 1, "rank unique best");
  c.expect(rank_of_test_item(items, scores, 0, true) == 1000, "rank all better");
  c.expect(rank_of_test_item(std::vector<ItemIndex>{4, 2, 9}, std::vector<double>{1, 1, 0}, 4, true) == 2, "rank tie");
  c.expect(hit_at(1, 10) == 1 && hit_at(10, 10) == 1 && hit_at(11, 10) == 0, "hit 1/10/11");
  c.near(ndcg_at(1, 10), 1.0, "ndcg p=1");
  c.near(ndcg_at(3, 10), 0.5, "ndcg p=3");
  c.near(ndcg_at(15, 10), 0.0, "ndcg cutoff");
  c.near(mrr_at(1, 10), 1.0, "mrr p=1");
  c.near(mrr_at(4, 10), 0.25, "mrr p=4");
  c.near(mrr_at(11, 10), 0.0, "mrr cutoff");

  {
    const auto sc = wide_scenario(1, 1);
    const auto r = evaluate(fixed_position([](const TestCase&) { return 1; }), sc, EvalConfig{});
    bool all_one = true;
    for (const auto& rep : r.per_repeat) all_one &= rep[0].hit == 1 && rep[0].ndcg == 1 && rep[0].mrr == 1;
    c.expect(all_one && sc.test_cases.size() == 1, "evaluate: always top gives 1.0");
  }
  {
    const auto sc = wide_scenario(2, 2);
    const ItemIndex first = sc.test_cases.at(0).test_item;
    const auto r = evaluate(fixed_position([&](const TestCase& tc) { return tc.test_item == first ? 1u : 3u; }), sc,
                            EvalConfig{});
    c.near(r.mean_at(10).mrr, (1 + 1.0 / 3) / 2, "evaluate: M@10 of p=1,3");
    c.near(r.mean_at(10).ndcg, 0.75, "evaluate: N@10 of p=1,3");
  }
}

void cli_examples(Checks& c) {
  std::istringstream in(
      "synthetic=true\nsynth.users=300\nsynth.source_items=200\nsynth.target_items=200\nsynth.k_true=4\n"
      "synth.overlap=0.5\nsynth.density=0.03\nfilter.min_overlap=2\nfilter.min_other=2\nembed.dim=8\n"
      "embed.epochs=5\nmap.epochs=5\neval.negatives=50\neval.repeats=1\n");
  ExperimentConfig base;
  apply_settings(base, parse_key_values(in));
  ExperimentConfig sscdr = base, emcdr = base;
  sscdr.method = Method::Sscdr;
  sscdr.map.lambda = 0;
  emcdr.method = Method::EmcdrCml;
  c.expect(run_experiment(sscdr).mapping == run_experiment(emcdr).mapping, "SSCDR lambda 0 equals EMCDR-CML");

  ExperimentConfig pop = base;
  pop.method = Method::ItemPop;
  pop.out_dir = fs::temp_directory_path() / "cdrec_acceptance_itempop";
  fs::remove_all(pop.out_dir);
  const auto r = run_experiment(pop);
  c.expect(!r.report.mean.empty() && fs::exists(pop.out_dir / "report.tsv") && !fs::exists(pop.out_dir / "source.emb") &&
               !fs::exists(pop.out_dir / "mapping.txt"),
           "ITEMPOP report without training");
  fs::remove_all(pop.out_dir);

  SyntheticParams sp;
  sp.n_users = 1000;
  sp.n_source_items = 1000;
  sp.n_target_items = 2000;
  sp.overlap_fraction = 1.0;
  sp.density = 0.002;
  const auto d = generate_synthetic(sp);
  c.expect(d.source.user_ids() == d.target.user_ids() && d.source.num_users() == 1000, "overlap 1.0: all users shared");
  c.expect(d.target.num_interactions() == 4000, "density 0.002 on 1000x2000: 4000 interactions");
  const auto e = generate_synthetic(sp);
  c.expect(e.source.pairs() == d.source.pairs() && e.target.pairs() == d.target.pairs(), "generator deterministic");
}

Outcome criterion1() {
  Checks c;
  data_examples(c);
  embed_examples(c);
  mapping_examples(c);
  coldstart_examples(c);
  eval_examples(c);
  cli_examples(c);
  return {c.ok(), c.summary()};
}

// ---- criterion 2: gradients -------------------------------------------------------

template <class Loss>
Vec numeric_gradient(Loss loss, Vec x) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + kGradStep;
    const double up = loss(x);
    x[i] = x0 - kGradStep;
    const double down = loss(x);
    x[i] = x0;
    g[i] = (up - down) / (2 * kGradStep);
  }
  return g;
}

Outcome criterion2() {
  Rng rng(2024);
  const std::size_t k = 8;
  std::ostringstream detail;
  bool pass = true;

  for (bool metric : {true, false}) {
    int points = 0, bad = 0;
    double worst = 0;
    while (points < kGradPoints) {
      const Vec u = random_vec(rng, k, -0.5, 0.5), p = random_vec(rng, k, -0.5, 0.5), n = random_vec(rng, k, -0.5, 0.5);
      auto split_loss = [&](const Vec& x) {
        const std::span<const double> all(x);
        const auto a = all.subspan(0, k), b = all.subspan(k, k), c = all.subspan(2 * k, k);
        return metric ? cml_triplet_loss(a, b, c, 1.0) : bpr_triplet_loss(a, b, c);
      };
      const Vec x = concat({&u, &p, &n});
      if (metric && split_loss(x) < kBoundaryGap) continue;  // hinge kink or flat region
      Vec gu(k, 0), gp(k, 0), gn(k, 0);
      if (metric) cml_triplet_grad(u, p, n, 1.0, {gu, gp, gn});
      else bpr_triplet_grad(u, p, n, {gu, gp, gn});
      const double err = relative_error(concat({&gu, &gp, &gn}), numeric_gradient(split_loss, x));
      worst = std::max(worst, err);
      bad += err >= kGradRelTol;
      ++points;
    }
    pass &= bad == 0;
    detail << (metric ? "CML" : "BPR") << ": " << points << " points, max rel err " << worst << "; ";
  }

  // Full semi-supervised mapping loss with output projection and hinge.
  const std::size_t km = 4, batch = 4;
  int points = 0, bad = 0, projected = 0, hinged = 0;
  double worst = 0;
  while (points < kGradPoints) {
    auto net = MappingNetwork::glorot(km, rng.next(), true);
    const double gain = rng.uniform(0.5, 4.0);  // spreads outputs across both sides of the ball
    for (auto& w : net.params()) w *= gain;
    for (std::size_t r = 0; r < km; ++r) net.b2(r) = rng.uniform(-0.5, 0.5);

    std::vector<Vec> store;
    for (std::size_t i = 0; i < 4 * batch; ++i) store.push_back(random_vec(rng, km, -1, 1));
    std::vector<MappingSample> samples;
    bool boundary = false, any_projected = false, any_hinged = false;
    for (std::size_t b = 0; b < batch; ++b) {
      MappingSample s{store[4 * b], store[4 * b + 1], store[4 * b + 2], store[4 * b + 3]};
      for (auto in : {s.source_user, s.pos_item, s.neg_item}) {
        const double pre = mlp_forward_cached(net, in).pre_norm;
        boundary |= std::abs(pre - 1.0) < kBoundaryGap;
        any_projected |= pre > 1.0;
      }
      const double arg = 1.0 + distance(mlp_forward(net, s.pos_item), s.target_user) -
                         distance(mlp_forward(net, s.neg_item), s.target_user);
      boundary |= std::abs(arg) < kBoundaryGap;
      any_hinged |= arg > 0;
      samples.push_back(s);
    }
    if (boundary) continue;
    projected += any_projected;
    hinged += any_hinged;

    Vec grad(net.params().size(), 0.0);
    mapping_batch_loss(net, samples, 0.5, 1.0, grad);
    const Vec params(net.params().begin(), net.params().end());
    const Vec numeric = numeric_gradient(
        [&](const Vec& theta) {
          MappingNetwork probe = net;
          std::copy(theta.begin(), theta.end(), probe.params().begin());
          return mapping_batch_loss(probe, samples, 0.5, 1.0).total;
        },
        params);
    const double err = relative_error(grad, numeric);
    worst = std::max(worst, err);
    bad += err >= kGradRelTol;
    ++points;
  }
  pass &= bad == 0;
  // Both kinks must actually be exercised.
  pass &= projected > kGradPoints / 4 && hinged > kGradPoints / 4;
  detail << "mapping: " << points << " points (" << projected << " with projection active, " << hinged
         << " with active hinge), max rel err " << worst;
  return {pass, detail.str()};
}

// ---- criterion 3: reduction -----------------------------------------------------------

Outcome criterion3() {
  int identical = 0;
  const int scenarios = 10;
  for (int i = 0; i < scenarios; ++i) {
    const auto seed = static_cast<std::uint64_t>(100 + i);
    const auto sc = toy_scenario(seed, 20 + 2 * i, 0.5 + 0.05 * i);
    const auto s = init_embedding_space(sc.source.num_users(), sc.source.num_items(), 6, SpaceKind::Metric, seed);
    const auto t = init_embedding_space(sc.target.num_users(), sc.target.num_items(), 6, SpaceKind::Metric, seed + 1);
    MapTrainConfig emcdr;
    emcdr.mode = MappingMode::SupervisedOnly;
    emcdr.lambda = 0.8;  // ignored in this mode
    emcdr.max_epochs = 50;
    emcdr.batch_size = 8;
    emcdr.seed = seed;
    MapTrainConfig sscdr = emcdr;
    sscdr.mode = MappingMode::SemiSupervised;
    sscdr.lambda = 0.0;
    const auto a = train_mapping(s, t, sc, emcdr);
    const auto b = train_mapping(s, t, sc, sscdr);
    identical += std::memcmp(a.params().data(), b.params().data(), a.params().size_bytes()) == 0 &&
                 a.params().size() == b.params().size();
  }
  return {identical == scenarios, std::to_string(identical) + "/" + std::to_string(scenarios) + " bit-identical"};
}

// ---- criterion 4: oracles -------------------------------------------------------------

Vec oracle_user(const EmbeddingSpace& s, const InteractionSet& g, std::size_t u, std::size_t h);

Vec oracle_item(const EmbeddingSpace& s, const InteractionSet& g, std::size_t i, std::size_t h) {
  auto row = s.items.row(i);
  if (h == 0) return Vec(row.begin(), row.end());
  Vec acc = oracle_item(s, g, i, h - 1);
  for (UserIndex u : g.users_of(static_cast<ItemIndex>(i))) {
    const Vec nb = oracle_user(s, g, u, h - 1);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += nb[c];
  }
  for (auto& x : acc) x /= static_cast<double>(g.users_of(static_cast<ItemIndex>(i)).size() + 1);
  return acc;
}

Vec oracle_user(const EmbeddingSpace& s, const InteractionSet& g, std::size_t u, std::size_t h) {
  auto row = s.users.row(u);
  if (h == 0) return Vec(row.begin(), row.end());
  Vec acc = oracle_user(s, g, u, h - 1);
  for (ItemIndex i : g.items_of(static_cast<UserIndex>(u))) {
    const Vec nb = oracle_item(s, g, i, h - 1);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += nb[c];
  }
  for (auto& x : acc) x /= static_cast<double>(g.items_of(static_cast<UserIndex>(u)).size() + 1);
  return acc;
}

Outcome criterion4() {
  Rng rng(77);
  Checks c;

  double worst = 0;
  for (int inst = 0; inst < kOracleInstances; ++inst) {
    const int n_entities = 2 + static_cast<int>(rng.below(5));  // 2..6
    const int n_users = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_entities - 1)));
    const int n_items = n_entities - n_users;
    NamedPairs pairs;
    for (int u = 0; u < n_users; ++u)
      for (int i = 0; i < n_items; ++i)
        if (rng.uniform() < 0.5) pairs.emplace_back("u" + std::to_string(u), "i" + std::to_string(i));
    std::vector<std::string> users, items;
    for (int u = 0; u < n_users; ++u) users.push_back("u" + std::to_string(u));
    for (int i = 0; i < n_items; ++i) items.push_back("i" + std::to_string(i));
    const auto g = InteractionSet::from_pairs(pairs, users, items);
    const auto s = init_embedding_space(g.num_users(), g.num_items(), 3, SpaceKind::Metric, rng.next());
    for (std::size_t h = 0; h <= 4; ++h) {
      for (std::size_t u = 0; u < g.num_users(); ++u) {
        const Vec fast = multi_hop_user(s, g, g.user_id(static_cast<UserIndex>(u)), h);
        const Vec slow = oracle_user(s, g, u, h);
        for (std::size_t d = 0; d < 3; ++d) worst = std::max(worst, std::abs(fast[d] - slow[d]));
      }
    }
  }
  c.expect(worst <= kOracleTol, "multi-hop max abs error " + std::to_string(worst));

  int topn_ok = 0, rank_ok = 0;
  for (int inst = 0; inst < kOracleInstances; ++inst) {
    const std::size_t m = 2 + rng.below(60);
    const SpaceKind kind = inst % 2 ? SpaceKind::Metric : SpaceKind::InnerProduct;
    EmbeddingSpace s{Matrix(0, 3), Matrix(m, 3), kind};
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t d = 0; d < 3; ++d) s.items(r, d) = std::round(rng.uniform(-2, 2) * 2) / 2;  // frequent ties
    const Vec q{std::round(rng.uniform(-2, 2)), std::round(rng.uniform(-2, 2)), std::round(rng.uniform(-2, 2))};
    std::vector<ItemIndex> cands(m);
    std::iota(cands.begin(), cands.end(), 0);
    rng.shuffle(std::span(cands));
    cands.resize(1 + rng.below(m));

    auto sorted = cands;
    std::sort(sorted.begin(), sorted.end(), [&](ItemIndex a, ItemIndex b) {
      const double sa = s.affinity(q, a), sb = s.affinity(q, b);
      return sa != sb ? sa > sb : a < b;
    });
    const std::size_t n = 1 + rng.below(cands.size());
    topn_ok += recommend_topn(s, q, cands, n) == std::vector<ItemIndex>(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n));

    const ItemIndex test = cands[rng.below(cands.size())];
    std::vector<double> scores;
    for (ItemIndex i : cands) scores.push_back(kind == SpaceKind::Metric ? distance(q, s.items.row(i)) : s.affinity(q, i));
    const std::size_t expected = static_cast<std::size_t>(std::find(sorted.begin(), sorted.end(), test) - sorted.begin()) + 1;
    rank_ok += rank_of_test_item(cands, scores, test, kind != SpaceKind::Metric) == expected;
  }
  c.expect(topn_ok == kOracleInstances, "top-N " + std::to_string(topn_ok) + "/" + std::to_string(kOracleInstances));
  c.expect(rank_ok == kOracleInstances, "rank " + std::to_string(rank_ok) + "/" + std::to_string(kOracleInstances));

  int pop_ok = 0;
  const int pop_instances = 100;
  for (int inst = 0; inst < pop_instances; ++inst) {
    NamedPairs pairs;
    add_random_users(pairs, "u", 0, 5 + static_cast<int>(rng.below(40)), "i", 3 + static_cast<int>(rng.below(30)), 3, rng);
    const auto g = domain(pairs);
    std::map<std::string, std::size_t> counts;
    for (const auto& [u, i] : pairs) ++counts[i];
    std::vector<ItemIndex> all(g.num_items());
    std::iota(all.begin(), all.end(), 0);
    auto expected = all;
    std::sort(expected.begin(), expected.end(), [&](ItemIndex a, ItemIndex b) {
      const auto ca = counts[g.item_id(a)], cb = counts[g.item_id(b)];
      return ca != cb ? ca > cb : a < b;
    });
    const std::size_t n = 1 + rng.below(all.size());
    expected.resize(n);
    rng.shuffle(std::span(all));
    pop_ok += itempop_rank(g, all, n) == expected;
  }
  c.expect(pop_ok == pop_instances, "ITEMPOP " + std::to_string(pop_ok) + "/" + std::to_string(pop_instances));

  std::ostringstream d;
  d << "multi-hop max err " << worst << ", top-N " << topn_ok << "/" << kOracleInstances << ", rank " << rank_ok
    << "/" << kOracleInstances << ", ITEMPOP " << pop_ok << "/" << pop_instances;
  if (!c.ok()) d << "\n    " << c.summary();
  return {c.ok(), d.str()};
}

// ---- criterion 5: random scorer ------------------------------------------------------

Outcome criterion5() {
  ExperimentConfig cfg = benchmark_config();
  cfg.seed = 0;
  const auto sc = prepare_scenario(cfg, nullptr);
  Rng noise(55);
  Scorer random{[&](const TestCase&, std::span<const ItemIndex> items) {
                  std::vector<double> s(items.size());
                  for (auto& x : s) x = noise.uniform();
                  return s;
                },
                true};
  EvalConfig ec = test_eval_config(cfg);
  ec.threads = 1;  // the scorer shares one generator
  const auto r = evaluate(random, sc, ec);
  const double p = 10.0 / static_cast<double>(ec.negatives + 1);
  const double n = static_cast<double>(sc.test_cases.size()) * ec.repeats;
  const double sigma = std::sqrt(p * (1 - p) / n);
  const double h = r.mean_at(10).hit;
  std::ostringstream d;
  d << sc.test_cases.size() << " test users x " << ec.repeats << " repeats, H@10 = " << h << ", bounds ["
    << p - kSigmas * sigma << ", " << p + kSigmas * sigma << "]";
  return {sc.test_cases.size() >= kMinRandomUsers && std::abs(h - p) <= kSigmas * sigma, d.str()};
}

// ---- criterion 6: directional replication -------------------------------------------------

struct BenchmarkResults {
  // method -> per-seed H@10
  std::map<Method, std::vector<double>> low_phi, full_phi;
};

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

BenchmarkResults run_benchmark() {
  BenchmarkResults out;
  const ExperimentConfig base = benchmark_config();
  const std::vector<Method> low{Method::EmcdrCml, Method::SscdrNaive, Method::Sscdr};
  for (int seed = 0; seed < kBenchmarkSeeds; ++seed) {
    for (double phi : {0.05, 1.0}) {
      auto& table = phi < 1 ? out.low_phi : out.full_phi;
      const auto methods = phi < 1 ? std::span<const Method>(low) : all_methods();
      for (Method m : methods) {
        ExperimentConfig cfg = base;
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.phi = phi;
        cfg.method = m;
        table[m].push_back(run_experiment(cfg).report.mean_at(10).hit);
        std::printf("    seed %d phi %.2f %-12s H@10 %.4f\n", seed, phi, method_name(m), table[m].back());
        std::fflush(stdout);
      }
    }
  }
  return out;
}

// ---- criterion 7: determinism through the CLI ------------------------------------

Outcome criterion7() {
  const fs::path dir = fs::temp_directory_path() / "cdrec_acceptance_determinism";
  fs::remove_all(dir);
  auto cli = [&](const std::string& args) {
    const std::string cmd = std::string(CDREC_BIN) + " " + args + " > /dev/null";
    return std::system(cmd.c_str());
  };
  if (cli("run --config " + std::string(CDREC_BENCHMARK_CFG) + " --method SSCDR --seed 11 --out " + (dir / "first").string()) != 0)
    return {false, "initial run failed"};
  const std::string manifest = (dir / "first" / "manifest").string();
  if (cli("run --config " + manifest + " --out " + (dir / "a").string()) != 0 ||
      cli("run --config " + manifest + " --out " + (dir / "b").string()) != 0)
    return {false, "replay from manifest failed"};
  const std::string a = slurp(dir / "a" / "report.tsv"), b = slurp(dir / "b" / "report.tsv"),
                    first = slurp(dir / "first" / "report.tsv");
  const bool same = !a.empty() && a == b && a == first;
  fs::remove_all(dir);
  return {same, same ? "report.tsv byte-identical across the original run and two manifest replays"
                     : "report.tsv differs between runs"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const std::string& id) { return only.empty() || only.count(id) > 0; };
  bool all_pass = true;

  auto timed = [&](const std::string& id, const std::string& title, double budget, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    report(id, title, o, secs, budget);
    all_pass &= o.pass && (budget <= 0 || secs < budget);
  };

  timed("1", "analytic examples", kBudget1, criterion1);
  timed("2", "gradient fidelity", kBudget2, criterion2);
  timed("3", "lambda-zero reduction", kBudget3, criterion3);
  timed("4", "oracle equivalence", kBudget4, criterion4);
  timed("5", "random scorer sanity", 0, criterion5);

  if (wanted("6")) {
    const auto t0 = std::chrono::steady_clock::now();
    BenchmarkResults b;
    std::string error;
    try {
      b = run_benchmark();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = seconds_since(t0);
    const bool in_budget = secs < kBudget6;
    if (!error.empty()) {
      report("6", "directional replication", {false, "exception: " + error}, secs, kBudget6);
      all_pass = false;
    } else {
      const auto& ss = b.low_phi[Method::Sscdr];
      const auto& em = b.low_phi[Method::EmcdrCml];
      const auto& nv = b.low_phi[Method::SscdrNaive];
      int wins = 0;
      for (std::size_t s = 0; s < ss.size(); ++s) wins += ss[s] > em[s];
      char buf[256];

      const bool a_ok = wins * 2 > kBenchmarkSeeds && mean_of(ss) > mean_of(em);
      std::snprintf(buf, sizeof buf, "SSCDR %.4f vs EMCDR-CML %.4f, SSCDR ahead on %d/%d seeds", mean_of(ss), mean_of(em),
                    wins, kBenchmarkSeeds);
      report("6a", "SSCDR beats EMCDR-CML at phi=5%", {a_ok, buf}, secs, 0);

      const bool b_ok = mean_of(ss) >= mean_of(nv);
      std::snprintf(buf, sizeof buf, "SSCDR %.4f vs SSCDR-naive %.4f", mean_of(ss), mean_of(nv));
      report("6b", "multi-hop inference helps at phi=5%", {b_ok, buf}, secs, 0);

      bool c_ok = true;
      std::ostringstream d;
      const double pop = mean_of(b.full_phi[Method::ItemPop]);
      d << "ITEMPOP " << pop;
      for (Method m : all_methods()) {
        if (m == Method::ItemPop) continue;
        const double h = mean_of(b.full_phi[m]);
        c_ok &= h > pop;
        d << ", " << method_name(m) << " " << h;
      }
      report("6c", "personalized methods beat ITEMPOP at phi=100%", {c_ok, d.str()}, secs, 0);
      report("6", "directional replication (6a-6c)", {a_ok && b_ok && c_ok, ""}, secs, kBudget6);
      all_pass &= a_ok && b_ok && c_ok && in_budget;
    }
  }

  timed("7", "determinism of run via manifest", 0, criterion7);

  std::printf("acceptance: %s\n", all_pass ? "ALL PASS" : "FAILURES");
  return all_pass ? 0 : 1;
}
