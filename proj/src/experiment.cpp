#include "cdrec/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "cdrec/coldstart.hpp"
#include "cdrec/error.hpp"
#include "cdrec/rng.hpp"

namespace cdrec {

namespace fs = std::filesystem;

// ---- synthetic -------------------------------------------------------------------

namespace {

Matrix sphere_points(std::size_t n, std::size_t k, Rng& rng) {
  Matrix m(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = m.row(r);
    double len = 0.0;
    while (len < 1e-12) {
      for (double& x : row) x = rng.normal();
      len = norm(row);
    }
    for (double& x : row) x /= len;
  }
  return m;
}

std::size_t per_user_count(double density, std::size_t n_items, const char* domain) {
  const auto c = static_cast<std::size_t>(std::llround(density * static_cast<double>(n_items)));
  if (c < 2)
    throw InfeasibleDensity(std::string(domain) + " users would get fewer than two interactions");
  if (c >= n_items) throw InfeasibleDensity(std::string(domain) + " users would interact with every item");
  return c;
}

void nearest_items(std::span<const double> z, const Matrix& items, std::size_t count,
                   std::vector<std::pair<double, std::size_t>>& scratch, std::vector<std::size_t>& out) {
  scratch.clear();
  for (std::size_t j = 0; j < items.rows(); ++j)
    scratch.emplace_back(squared_distance_unchecked(z, items.row(j)), j);
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(count), scratch.end());
  out.clear();
  for (std::size_t k = 0; k < count; ++k) out.push_back(scratch[k].second);
}

}  // namespace

DomainPair generate_synthetic(const SyntheticParams& p) {
  if (p.n_users == 0 || p.n_source_items == 0 || p.n_target_items == 0 || p.k_true == 0)
    throw ConfigError("synthetic counts must be positive");
  if (!(p.overlap_fraction > 0.0 && p.overlap_fraction <= 1.0))
    throw ConfigError("overlap fraction must lie in (0, 1]");
  if (!(p.density > 0.0 && p.density < 1.0)) throw InfeasibleDensity("density must lie in (0, 1)");
  const std::size_t c_src = per_user_count(p.density, p.n_source_items, "source");
  const std::size_t c_tgt = per_user_count(p.density, p.n_target_items, "target");

  Rng rng(p.seed);
  const Matrix users = sphere_points(p.n_users, p.k_true, rng);
  const Matrix src_items = sphere_points(p.n_source_items, p.k_true, rng);
  const Matrix tgt_items = sphere_points(p.n_target_items, p.k_true, rng);

  std::vector<std::size_t> roles(p.n_users);
  for (std::size_t u = 0; u < p.n_users; ++u) roles[u] = u;
  rng.shuffle(std::span(roles));
  const auto n_overlap = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(p.overlap_fraction * static_cast<double>(p.n_users))));
  const std::size_t n_source_only = (p.n_users - n_overlap) / 2;
  // roles[0, n_overlap) both domains, then source-only, then target-only.
  std::vector<char> in_source(p.n_users, 0), in_target(p.n_users, 0);
  for (std::size_t k = 0; k < p.n_users; ++k) {
    const std::size_t u = roles[k];
    if (k < n_overlap) {
      in_source[u] = in_target[u] = 1;
    } else if (k < n_overlap + n_source_only) {
      in_source[u] = 1;
    } else {
      in_target[u] = 1;
    }
  }

  std::vector<std::pair<std::string, std::string>> src_pairs, tgt_pairs;
  std::vector<std::pair<double, std::size_t>> scratch;
  std::vector<std::size_t> picked;
  for (std::size_t u = 0; u < p.n_users; ++u) {
    const std::string uid = std::to_string(u);
    if (in_source[u]) {
      nearest_items(users.row(u), src_items, c_src, scratch, picked);
      for (std::size_t j : picked) src_pairs.emplace_back(uid, std::to_string(j));
    }
    if (in_target[u]) {
      nearest_items(users.row(u), tgt_items, c_tgt, scratch, picked);
      for (std::size_t j : picked) tgt_pairs.emplace_back(uid, std::to_string(j));
    }
  }
  return {InteractionSet::from_pairs(src_pairs), InteractionSet::from_pairs(tgt_pairs)};
}

// ---- methods -----------------------------------------------------------------------

namespace {

constexpr std::array<Method, 7> kMethods{Method::ItemPop,  Method::Bpr,        Method::Cml,  Method::EmcdrBpr,
                                         Method::EmcdrCml, Method::SscdrNaive, Method::Sscdr};

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::ItemPop: return "ITEMPOP";
    case Method::Bpr: return "BPR";
    case Method::Cml: return "CML";
    case Method::EmcdrBpr: return "EMCDR-BPR";
    case Method::EmcdrCml: return "EMCDR-CML";
    case Method::SscdrNaive: return "SSCDR-naive";
    case Method::Sscdr: return "SSCDR";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Method m : kMethods) {
    std::string candidate = method_name(m);
    std::transform(candidate.begin(), candidate.end(), candidate.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    if (candidate == upper) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

std::span<const Method> all_methods() { return kMethods; }

// ---- configuration -------------------------------------------------------------

void ExperimentConfig::validate() const {
  const int sources = (!scenario_dir.empty() ? 1 : 0) + (!source_path.empty() || !target_path.empty() ? 1 : 0) +
                      (synthetic ? 1 : 0);
  if (sources != 1)
    throw ConfigError("exactly one data source is required: scenario, source+target, or synthetic");
  if (!source_path.empty() != !target_path.empty())
    throw ConfigError("source and target logs must be given together");
  if (!(phi > 0.0 && phi <= 1.0)) throw ConfigError("phi must lie in (0, 1]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  embed.validate();
  map.validate();
  eval.validate();
  if (method == Method::Sscdr && hops == 0) throw ConfigError("SSCDR needs at least one hop (use SSCDR-naive)");
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("config line " + std::to_string(line_no) + " is not key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_key_values(in);
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(x))
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  const auto x = to_uint(key, v);
  if (x > 1'000'000'000ULL) throw ConfigError("'" + key + "' is out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_cutoffs(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(to_uint(key, part));
  if (out.empty()) throw ConfigError("'" + key + "' expects a comma-separated list");
  return out;
}

std::string show(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string show(bool b) { return b ? "true" : "false"; }

}  // namespace

void apply_settings(ExperimentConfig& cfg, const KeyValues& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "seed") cfg.seed = to_uint(key, v);
    else if (key == "method") cfg.method = parse_method(v);
    else if (key == "phi") cfg.phi = to_double(key, v);
    else if (key == "hops") cfg.hops = to_uint(key, v);
    else if (key == "lambda") cfg.map.lambda = to_double(key, v);
    else if (key == "test_fraction") cfg.test_fraction = to_double(key, v);
    else if (key == "out") cfg.out_dir = v;
    else if (key == "scenario") cfg.scenario_dir = v;
    else if (key == "source") cfg.source_path = v;
    else if (key == "target") cfg.target_path = v;
    else if (key == "synthetic") cfg.synthetic = to_bool(key, v);
    else if (key == "synth.users") cfg.synth.n_users = to_uint(key, v);
    else if (key == "synth.source_items") cfg.synth.n_source_items = to_uint(key, v);
    else if (key == "synth.target_items") cfg.synth.n_target_items = to_uint(key, v);
    else if (key == "synth.k_true") cfg.synth.k_true = to_uint(key, v);
    else if (key == "synth.overlap") cfg.synth.overlap_fraction = to_double(key, v);
    else if (key == "synth.density") cfg.synth.density = to_double(key, v);
    else if (key == "filter.min_overlap") cfg.filter.min_overlap_interactions = to_uint(key, v);
    else if (key == "filter.min_other") cfg.filter.min_other_interactions = to_uint(key, v);
    else if (key == "embed.dim") cfg.embed.dim = to_uint(key, v);
    else if (key == "embed.margin") cfg.embed.margin = to_double(key, v);
    else if (key == "embed.lr") cfg.embed.learning_rate = to_double(key, v);
    else if (key == "embed.reg") cfg.embed.l2_reg = to_double(key, v);
    else if (key == "embed.epochs") cfg.embed.max_epochs = to_int(key, v);
    else if (key == "embed.patience") cfg.embed.patience = to_int(key, v);
    else if (key == "embed.eval_every") cfg.embed.eval_every = to_int(key, v);
    else if (key == "embed.batch") cfg.embed.batch_size = to_uint(key, v);
    else if (key == "map.margin") cfg.map.margin = to_double(key, v);
    else if (key == "map.lr") cfg.map.learning_rate = to_double(key, v);
    else if (key == "map.epochs") cfg.map.max_epochs = to_int(key, v);
    else if (key == "map.patience") cfg.map.patience = to_int(key, v);
    else if (key == "map.eval_every") cfg.map.eval_every = to_int(key, v);
    else if (key == "map.batch") cfg.map.batch_size = to_uint(key, v);
    else if (key == "eval.cutoffs") cfg.eval.cutoffs = to_cutoffs(key, v);
    else if (key == "eval.repeats") cfg.eval.repeats = to_int(key, v);
    else if (key == "eval.negatives") cfg.eval.negatives = to_uint(key, v);
    else if (key == "eval.apply_cutoff") cfg.eval.apply_cutoff = to_bool(key, v);
    else if (key == "eval.threads") cfg.eval.threads = static_cast<unsigned>(to_uint(key, v));
    else if (key == "early_stopping") cfg.early_stopping = to_bool(key, v);
    else if (key.starts_with("input.")) cfg.expected_inputs[key.substr(6)] = v;
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& c) {
  std::string cutoffs;
  for (std::size_t n : c.eval.cutoffs) cutoffs += (cutoffs.empty() ? "" : ",") + std::to_string(n);
  std::vector<std::pair<std::string, std::string>> out{
      {"seed", std::to_string(c.seed)},
      {"method", method_name(c.method)},
      {"phi", show(c.phi)},
      {"hops", std::to_string(c.hops)},
      {"lambda", show(c.map.lambda)},
      {"test_fraction", show(c.test_fraction)},
  };
  if (!c.scenario_dir.empty()) out.emplace_back("scenario", c.scenario_dir.string());
  if (!c.source_path.empty()) out.emplace_back("source", c.source_path.string());
  if (!c.target_path.empty()) out.emplace_back("target", c.target_path.string());
  out.emplace_back("synthetic", show(c.synthetic));
  if (c.synthetic) {
    out.emplace_back("synth.users", std::to_string(c.synth.n_users));
    out.emplace_back("synth.source_items", std::to_string(c.synth.n_source_items));
    out.emplace_back("synth.target_items", std::to_string(c.synth.n_target_items));
    out.emplace_back("synth.k_true", std::to_string(c.synth.k_true));
    out.emplace_back("synth.overlap", show(c.synth.overlap_fraction));
    out.emplace_back("synth.density", show(c.synth.density));
  }
  const std::vector<std::pair<std::string, std::string>> rest{
      {"filter.min_overlap", std::to_string(c.filter.min_overlap_interactions)},
      {"filter.min_other", std::to_string(c.filter.min_other_interactions)},
      {"embed.dim", std::to_string(c.embed.dim)},
      {"embed.margin", show(c.embed.margin)},
      {"embed.lr", show(c.embed.learning_rate)},
      {"embed.reg", show(c.embed.l2_reg)},
      {"embed.epochs", std::to_string(c.embed.max_epochs)},
      {"embed.patience", std::to_string(c.embed.patience)},
      {"embed.eval_every", std::to_string(c.embed.eval_every)},
      {"embed.batch", std::to_string(c.embed.batch_size)},
      {"map.margin", show(c.map.margin)},
      {"map.lr", show(c.map.learning_rate)},
      {"map.epochs", std::to_string(c.map.max_epochs)},
      {"map.patience", std::to_string(c.map.patience)},
      {"map.eval_every", std::to_string(c.map.eval_every)},
      {"map.batch", std::to_string(c.map.batch_size)},
      {"eval.cutoffs", cutoffs},
      {"eval.repeats", std::to_string(c.eval.repeats)},
      {"eval.negatives", std::to_string(c.eval.negatives)},
      {"eval.apply_cutoff", show(c.eval.apply_cutoff)},
      {"eval.threads", std::to_string(c.eval.threads)},
      {"early_stopping", show(c.early_stopping)},
  };
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) { return Rng::mix(Rng::mix(seed) ^ stage); }

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw std::runtime_error("SHA-1 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

// ---- scorers -------------------------------------------------------------------------

Scorer itempop_scorer(const CrossDomainScenario& sc) {
  return {[&sc](const TestCase&, std::span<const ItemIndex> candidates) {
            std::vector<double> scores;
            scores.reserve(candidates.size());
            for (ItemIndex i : candidates) scores.push_back(static_cast<double>(sc.target.users_of(i).size()));
            return scores;
          },
          true};
}

Scorer unified_scorer(const CrossDomainScenario& sc, const InteractionSet& unified, const EmbeddingSpace& space) {
  const auto offset = static_cast<ItemIndex>(sc.source.num_items());
  return {[&sc, &unified, &space, offset](const TestCase& tc, std::span<const ItemIndex> candidates) {
            const auto u = unified.find_user(sc.test_user_id(tc));
            if (!u) throw UnknownUser(sc.test_user_id(tc));
            const auto q = space.users.row(*u);
            std::vector<double> scores;
            scores.reserve(candidates.size());
            for (ItemIndex i : candidates) scores.push_back(space.affinity(q, offset + i));
            return scores;
          },
          true};
}

Matrix infer_test_users(const CrossDomainScenario& sc, const EmbeddingSpace& source, const MappingNetwork& net,
                        std::size_t hops) {
  Matrix out(sc.test_cases.size(), net.dim());
  const Matrix users = hops == 0 ? source.users : aggregate(source, sc.source, hops).users;
  for (std::size_t t = 0; t < sc.test_cases.size(); ++t) {
    const Vec v = infer_cold_start(net, users.row(sc.test_cases[t].source_user));
    std::copy(v.begin(), v.end(), out.row(t).begin());
  }
  return out;
}

Scorer mapped_scorer(const CrossDomainScenario& sc, const EmbeddingSpace& source, const EmbeddingSpace& target,
                     const MappingNetwork& net, std::size_t hops) {
  auto inferred = std::make_shared<const Matrix>(infer_test_users(sc, source, net, hops));
  auto slot = std::make_shared<std::unordered_map<UserIndex, std::size_t>>();
  for (std::size_t t = 0; t < sc.test_cases.size(); ++t) slot->emplace(sc.test_cases[t].source_user, t);
  return {[&target, inferred, slot](const TestCase& tc, std::span<const ItemIndex> candidates) {
            const auto q = inferred->row(slot->at(tc.source_user));
            std::vector<double> scores;
            scores.reserve(candidates.size());
            for (ItemIndex i : candidates) scores.push_back(target.affinity(q, i));
            return scores;
          },
          true};
}

// ---- running ---------------------------------------------------------------------

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << content)) throw DataError("cannot write " + p.string());
}

std::string tsv_of(const InteractionSet& s) {
  std::ostringstream ss;
  s.write_tsv(ss);
  return ss.str();
}

EvalConfig validation_eval(const ExperimentConfig& cfg) {
  EvalConfig v = cfg.eval;
  v.repeats = 1;
  v.cutoffs = {10};
  v.seed = stage_seed(cfg.seed, 401);
  return v;
}

}  // namespace

EvalConfig test_eval_config(const ExperimentConfig& cfg) {
  EvalConfig e = cfg.eval;
  e.seed = stage_seed(cfg.seed, 402);
  return e;
}

CrossDomainScenario prepare_scenario(const ExperimentConfig& cfg, std::map<std::string, std::string>* inputs) {
  auto record = [&](const std::string& name, const std::string& content) {
    if (inputs) (*inputs)[name] = git_blob_sha1(content);
  };
  if (!cfg.scenario_dir.empty()) {
    for (const char* f : {"source.tsv", "target_train.tsv", "target_items.txt", "overlap.txt",
                          "train_overlap.txt", "test.tsv", "test_history.tsv"})
      record(std::string("scenario/") + f, slurp(cfg.scenario_dir / f));
    return load_scenario(cfg.scenario_dir);
  }
  SplitSeedConfig split{stage_seed(cfg.seed, 1), cfg.test_fraction, cfg.phi};
  if (cfg.synthetic) {
    SyntheticParams sp = cfg.synth;
    sp.seed = stage_seed(cfg.seed, 2);
    const DomainPair data = generate_synthetic(sp);
    record("synthetic/source.tsv", tsv_of(data.source));
    record("synthetic/target.tsv", tsv_of(data.target));
    return build_scenario(data.source, data.target, cfg.filter, split);
  }
  const std::string src = slurp(cfg.source_path);
  const std::string tgt = slurp(cfg.target_path);
  record("source", src);
  record("target", tgt);
  std::istringstream s_in(src), t_in(tgt);
  const InteractionSet source = parse_interactions(s_in);
  const InteractionSet target = parse_interactions(t_in);
  return build_scenario(source, target, cfg.filter, split);
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const bool persist = !cfg.out_dir.empty();
  const fs::path out = cfg.out_dir;
  if (persist) {
    fs::create_directories(out);
    write_file(out / "INCOMPLETE", "run started; artifacts in this directory may be partial\n");
  }

  RunResult result;
  std::map<std::string, std::string> inputs;
  result.scenario = prepare_scenario(cfg, &inputs);
  for (const auto& [name, expected] : cfg.expected_inputs) {
    auto it = inputs.find(name);
    if (it == inputs.end() || it->second != expected)
      throw DataError("input '" + name + "' does not match the manifest hash");
  }
  const CrossDomainScenario& sc = result.scenario;
  if (persist) {
    save_scenario(sc, out / "scenario");
    result.artifacts.push_back(out / "scenario");
  }

  const EvalConfig val_cfg = validation_eval(cfg);
  const EvalConfig test_cfg = test_eval_config(cfg);
  auto save_space = [&](const char* name, const EmbeddingSpace& space, const InteractionSet& ids) {
    if (!persist) return;
    std::ofstream f(out / name, std::ios::binary);
    write_embeddings(f, space, ids);
    result.artifacts.push_back(out / name);
  };

  const Method m = cfg.method;
  switch (m) {
    case Method::ItemPop:
      result.report = evaluate(itempop_scorer(sc), sc, test_cfg);
      break;

    case Method::Bpr:
    case Method::Cml: {
      const InteractionSet unified = build_unified(sc);
      EmbedTrainConfig ec = cfg.embed;
      ec.seed = stage_seed(cfg.seed, 103);
      EmbedValidationHook hook;
      if (cfg.early_stopping) {
        hook = [&](const EmbeddingSpace& space) {
          return evaluate(unified_scorer(sc, unified, space), sc, val_cfg, HeldOutItem::Validation).mean[0].hit;
        };
      }
      const auto kind = m == Method::Bpr ? SpaceKind::InnerProduct : SpaceKind::Metric;
      const EmbeddingSpace space = train_embeddings(unified, ec, kind, hook);
      save_space("unified.emb", space, unified);
      result.report = evaluate(unified_scorer(sc, unified, space), sc, test_cfg);
      break;
    }

    case Method::EmcdrBpr:
    case Method::EmcdrCml:
    case Method::SscdrNaive:
    case Method::Sscdr: {
      const auto kind = m == Method::EmcdrBpr ? SpaceKind::InnerProduct : SpaceKind::Metric;
      EmbedTrainConfig ec = cfg.embed;
      ec.seed = stage_seed(cfg.seed, 101);
      const EmbeddingSpace source = train_embeddings(sc.source, ec, kind);
      ec.seed = stage_seed(cfg.seed, 102);
      const EmbeddingSpace target = train_embeddings(sc.target, ec, kind);
      save_space("source.emb", source, sc.source);
      save_space("target.emb", target, sc.target);

      MapTrainConfig mc = cfg.map;
      mc.seed = stage_seed(cfg.seed, 201);
      mc.mode = (m == Method::EmcdrBpr || m == Method::EmcdrCml) ? MappingMode::SupervisedOnly
                                                                  : MappingMode::SemiSupervised;
      mc.project_output = kind == SpaceKind::Metric;
      MapValidationHook hook;
      if (cfg.early_stopping) {
        // Naive inference for validation keeps the mapping independent of H.
        hook = [&](const MappingNetwork& net) {
          return evaluate(mapped_scorer(sc, source, target, net, 0), sc, val_cfg, HeldOutItem::Validation)
              .mean[0]
              .hit;
        };
      }
      result.mapping = train_mapping(source, target, sc, mc, hook);
      const std::size_t hops = m == Method::Sscdr ? cfg.hops : 0;
      if (persist) {
        std::ofstream f(out / "mapping.txt", std::ios::binary);
        write_mapping(f, result.mapping);
        result.artifacts.push_back(out / "mapping.txt");
        std::ofstream g(out / "inferred.emb", std::ios::binary);
        const auto ids = sc.test_user_ids();
        write_inferred(g, ids, infer_test_users(sc, source, result.mapping, hops), target, sc.target);
        result.artifacts.push_back(out / "inferred.emb");
      }
      result.report = evaluate(mapped_scorer(sc, source, target, result.mapping, hops), sc, test_cfg);
      break;
    }
  }

  if (persist) {
    {
      std::ofstream f(out / "report.tsv", std::ios::binary);
      write_report_tsv(f, method_name(m), cfg.phi, result.report);
    }
    result.artifacts.push_back(out / "report.tsv");
    std::ostringstream manifest;
    manifest << "# cdrec run manifest; pass back with --config to reproduce\n";
    for (const auto& [k, v] : config_echo(cfg)) manifest << k << '=' << v << '\n';
    for (const auto& [name, hash] : inputs) manifest << "input." << name << '=' << hash << '\n';
    write_file(out / "manifest", manifest.str());
    result.artifacts.push_back(out / "manifest");
    fs::remove(out / "INCOMPLETE");
  }
  return result;
}

}  // namespace cdrec
