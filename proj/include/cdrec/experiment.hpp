#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdrec/embedding.hpp"
#include "cdrec/eval.hpp"
#include "cdrec/interactions.hpp"
#include "cdrec/mapping.hpp"
#include "cdrec/scenario.hpp"

namespace cdrec {

// ---- synthetic data ------------------------------------------------------------

struct SyntheticParams {
  std::size_t n_users = 2000;
  std::size_t n_source_items = 1500;
  std::size_t n_target_items = 1500;
  std::size_t k_true = 8;
  double overlap_fraction = 0.3;
  double density = 0.004;
  std::uint64_t seed = 0;
};

struct DomainPair {
  InteractionSet source;
  InteractionSet target;
};

// Users and items get latent positions on the unit sphere; every user of a
// domain takes the round(density * |items|) items nearest to it. A fraction
// of the users appears in both domains with the same position; the rest is
// split evenly between source-only and target-only users.
DomainPair generate_synthetic(const SyntheticParams& params);

// ---- methods -------------------------------------------------------------------

enum class Method { ItemPop, Bpr, Cml, EmcdrBpr, EmcdrCml, SscdrNaive, Sscdr };

const char* method_name(Method m);
Method parse_method(const std::string& name);
std::span<const Method> all_methods();

// ---- configuration -------------------------------------------------------------

struct ExperimentConfig {
  // Data source: a saved scenario directory, a pair of TSV logs, or the
  // synthetic generator. Exactly one must be set.
  std::filesystem::path scenario_dir;
  std::filesystem::path source_path;
  std::filesystem::path target_path;
  bool synthetic = false;
  SyntheticParams synth;

  FilterThresholds filter;
  double phi = 1.0;
  double test_fraction = 0.5;

  Method method = Method::Sscdr;
  EmbedTrainConfig embed;
  MapTrainConfig map;
  std::size_t hops = 2;  // SSCDR only
  EvalConfig eval;
  bool early_stopping = true;  // validation-item hooks for BPR/CML and the mapping

  std::filesystem::path out_dir;
  std::uint64_t seed = 0;

  // Input content hashes recorded in a manifest; checked when present.
  std::map<std::string, std::string> expected_inputs;

  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

// Flat "key=value" text; blank lines and '#' comments skipped.
KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);

// Unknown keys and unparsable values raise ConfigError.
void apply_settings(ExperimentConfig& cfg, const KeyValues& kv);

// Every setting of the config, in a fixed key order.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg);

// Seed for one pipeline stage, derived from the global seed.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage);

// Git blob id (SHA-1 over "blob <size>\0" + content), lowercase hex.
std::string git_blob_sha1(std::string_view content);

// ---- running -------------------------------------------------------------------

struct RunResult {
  EvalReport report;
  CrossDomainScenario scenario;
  std::vector<std::filesystem::path> artifacts;
  MappingNetwork mapping;  // empty for methods without a mapping
};

// Runs one method end to end and persists scenario, embeddings, mapping,
// inferred vectors, report.tsv and a manifest under cfg.out_dir (when set).
// An INCOMPLETE marker stays behind if the run fails part way.
RunResult run_experiment(const ExperimentConfig& cfg);

// Loads or builds the scenario named by the config; hashes of the inputs are
// added to `inputs`.
CrossDomainScenario prepare_scenario(const ExperimentConfig& cfg, std::map<std::string, std::string>* inputs);

// Evaluation settings of the final test run, seeded from the global seed.
EvalConfig test_eval_config(const ExperimentConfig& cfg);

// Building blocks shared by run_experiment, the CLI subcommands and tests.
Scorer itempop_scorer(const CrossDomainScenario& scenario);
Scorer unified_scorer(const CrossDomainScenario& scenario, const InteractionSet& unified,
                      const EmbeddingSpace& space);
Scorer mapped_scorer(const CrossDomainScenario& scenario, const EmbeddingSpace& source,
                     const EmbeddingSpace& target, const MappingNetwork& net, std::size_t hops);

// Inferred target-space vectors for every test user, in test-case order.
Matrix infer_test_users(const CrossDomainScenario& scenario, const EmbeddingSpace& source,
                        const MappingNetwork& net, std::size_t hops);

}  // namespace cdrec
