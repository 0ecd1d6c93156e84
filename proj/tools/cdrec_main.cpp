// cdrec command-line front end.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cdrec/coldstart.hpp"
#include "cdrec/embedding.hpp"
#include "cdrec/error.hpp"
#include "cdrec/eval.hpp"
#include "cdrec/experiment.hpp"
#include "cdrec/mapping.hpp"
#include "cdrec/scenario.hpp"

namespace fs = std::filesystem;
using namespace cdrec;

namespace {

// Flags shared by every subcommand; set values override the config file.
struct CommonFlags {
  std::string config;
  std::optional<std::string> method;
  std::optional<double> phi;
  std::optional<std::size_t> hops;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App* app, bool out_required = true) {
    app->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--method", method, "ITEMPOP, BPR, CML, EMCDR-BPR, EMCDR-CML, SSCDR-naive or SSCDR");
    app->add_option("--phi", phi, "fraction of non-test overlapping users used for the mapping");
    app->add_option("--hops", hops, "neighbourhood hops for SSCDR inference");
    app->add_option("--lambda", lambda, "weight of the unsupervised mapping loss");
    app->add_option("--seed", seed, "global seed");
    auto* o = app->add_option("--out", out, "output path");
    if (out_required) o->required();
  }

  ExperimentConfig resolve() const {
    KeyValues kv;
    if (!config.empty()) kv = read_key_values(config);
    if (method) kv["method"] = *method;
    if (phi) kv["phi"] = std::to_string(*phi);
    if (hops) kv["hops"] = std::to_string(*hops);
    if (lambda) kv["lambda"] = std::to_string(*lambda);
    if (seed) kv["seed"] = std::to_string(*seed);
    if (!out.empty()) kv["out"] = out;
    ExperimentConfig cfg;
    apply_settings(cfg, kv);
    return cfg;
  }
};

std::ofstream open_output(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

EmbeddingSpace load_space(const fs::path& p, const InteractionSet& ids) {
  auto in = open_input(p);
  return read_embeddings(in, ids);
}

MappingNetwork load_mapping(const fs::path& p) {
  auto in = open_input(p);
  return read_mapping(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain recommendation for cold-start users"};
  app.require_subcommand(1);

  // gen-synth
  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic source/target pair as TSV");
  gen_flags.attach(gen);

  // build-scenario
  CommonFlags build_flags;
  std::string build_source, build_target;
  auto* build = app.add_subcommand("build-scenario", "filter two domains and split cold-start users");
  build_flags.attach(build);
  build->add_option("--source", build_source, "source-domain TSV")->check(CLI::ExistingFile);
  build->add_option("--target", build_target, "target-domain TSV")->check(CLI::ExistingFile);

  // train-embed
  CommonFlags embed_flags;
  std::string embed_scenario, embed_domain = "source", embed_kind = "metric";
  auto* embed = app.add_subcommand("train-embed", "train one embedding space of a scenario");
  embed_flags.attach(embed);
  embed->add_option("--scenario", embed_scenario, "scenario directory")->required()->check(CLI::ExistingDirectory);
  embed->add_option("--domain", embed_domain, "source, target or unified")
      ->check(CLI::IsMember({"source", "target", "unified"}));
  embed->add_option("--kind", embed_kind, "metric or inner")->check(CLI::IsMember({"metric", "inner"}));

  // train-map
  CommonFlags map_flags;
  std::string map_scenario, map_source_emb, map_target_emb;
  auto* map = app.add_subcommand("train-map", "train the cross-domain mapping");
  map_flags.attach(map);
  map->add_option("--scenario", map_scenario, "scenario directory")->required()->check(CLI::ExistingDirectory);
  map->add_option("--source-emb", map_source_emb, "source embedding file")->required()->check(CLI::ExistingFile);
  map->add_option("--target-emb", map_target_emb, "target embedding file")->required()->check(CLI::ExistingFile);

  // eval
  CommonFlags eval_flags;
  std::string eval_scenario, eval_source_emb, eval_target_emb, eval_unified_emb, eval_mapping;
  auto* ev = app.add_subcommand("eval", "leave-one-out evaluation of trained artifacts");
  eval_flags.attach(ev, false);
  ev->add_option("--scenario", eval_scenario, "scenario directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--source-emb", eval_source_emb, "source embedding file")->check(CLI::ExistingFile);
  ev->add_option("--target-emb", eval_target_emb, "target embedding file")->check(CLI::ExistingFile);
  ev->add_option("--unified-emb", eval_unified_emb, "unified embedding file (BPR, CML)")->check(CLI::ExistingFile);
  ev->add_option("--mapping", eval_mapping, "mapping file")->check(CLI::ExistingFile);

  // run
  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "end-to-end experiment for one method");
  run_flags.attach(run);

  // export-vectors
  CommonFlags export_flags;
  std::string export_scenario, export_source_emb, export_target_emb, export_mapping;
  auto* exp = app.add_subcommand("export-vectors", "write inferred cold-start vectors for plotting");
  export_flags.attach(exp);
  exp->add_option("--scenario", export_scenario, "scenario directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--source-emb", export_source_emb, "source embedding file")->required()->check(CLI::ExistingFile);
  exp->add_option("--target-emb", export_target_emb, "target embedding file")->required()->check(CLI::ExistingFile);
  exp->add_option("--mapping", export_mapping, "mapping file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      ExperimentConfig cfg = gen_flags.resolve();
      SyntheticParams sp = cfg.synth;
      sp.seed = stage_seed(cfg.seed, 2);  // same data as `run` with synthetic=true
      const DomainPair data = generate_synthetic(sp);
      const fs::path dir = gen_flags.out;
      auto s = open_output(dir / "source.tsv");
      data.source.write_tsv(s);
      auto t = open_output(dir / "target.tsv");
      data.target.write_tsv(t);
      std::cout << "source: " << data.source.num_users() << " users, " << data.source.num_items() << " items, "
                << data.source.num_interactions() << " interactions\n"
                << "target: " << data.target.num_users() << " users, " << data.target.num_items() << " items, "
                << data.target.num_interactions() << " interactions\n";
    } else if (*build) {
      ExperimentConfig cfg = build_flags.resolve();
      if (!build_source.empty() || !build_target.empty()) {
        // Explicit logs replace whatever data source the config names.
        cfg.synthetic = false;
        cfg.scenario_dir.clear();
        cfg.source_path = build_source;
        cfg.target_path = build_target;
      }
      cfg.out_dir.clear();
      cfg.validate();
      const CrossDomainScenario sc = prepare_scenario(cfg, nullptr);
      save_scenario(sc, build_flags.out);
      std::cout << "overlapping users: " << sc.overlap_users.size() << ", test users: " << sc.test_cases.size()
                << ", mapping users: " << sc.train_overlap_users.size() << '\n';
    } else if (*embed) {
      ExperimentConfig cfg = embed_flags.resolve();
      const CrossDomainScenario sc = load_scenario(embed_scenario);
      EmbedTrainConfig ec = cfg.embed;
      const auto kind = parse_space_kind(embed_kind);
      if (embed_domain == "unified") {
        const InteractionSet unified = build_unified(sc);
        ec.seed = stage_seed(cfg.seed, 103);
        const EmbeddingSpace space = train_embeddings(unified, ec, kind);
        auto out = open_output(embed_flags.out);
        write_embeddings(out, space, unified);
      } else {
        const InteractionSet& data = embed_domain == "source" ? sc.source : sc.target;
        ec.seed = stage_seed(cfg.seed, embed_domain == "source" ? 101 : 102);
        const EmbeddingSpace space = train_embeddings(data, ec, kind);
        auto out = open_output(embed_flags.out);
        write_embeddings(out, space, data);
      }
    } else if (*map) {
      ExperimentConfig cfg = map_flags.resolve();
      const CrossDomainScenario sc = load_scenario(map_scenario);
      const EmbeddingSpace source = load_space(map_source_emb, sc.source);
      const EmbeddingSpace target = load_space(map_target_emb, sc.target);
      MapTrainConfig mc = cfg.map;
      mc.seed = stage_seed(cfg.seed, 201);
      mc.mode = (cfg.method == Method::EmcdrBpr || cfg.method == Method::EmcdrCml) ? MappingMode::SupervisedOnly
                                                                                     : MappingMode::SemiSupervised;
      mc.project_output = target.kind == SpaceKind::Metric;
      const MappingNetwork net = train_mapping(source, target, sc, mc);
      auto out = open_output(map_flags.out);
      write_mapping(out, net);
    } else if (*ev) {
      ExperimentConfig cfg = eval_flags.resolve();
      const CrossDomainScenario sc = load_scenario(eval_scenario);
      const EvalConfig ec = test_eval_config(cfg);
      EvalReport report;
      switch (cfg.method) {
        case Method::ItemPop:
          report = evaluate(itempop_scorer(sc), sc, ec);
          break;
        case Method::Bpr:
        case Method::Cml: {
          if (eval_unified_emb.empty()) throw ConfigError("--unified-emb is required for " +
                                                          std::string(method_name(cfg.method)));
          const InteractionSet unified = build_unified(sc);
          const EmbeddingSpace space = load_space(eval_unified_emb, unified);
          report = evaluate(unified_scorer(sc, unified, space), sc, ec);
          break;
        }
        default: {
          if (eval_source_emb.empty() || eval_target_emb.empty() || eval_mapping.empty())
            throw ConfigError("--source-emb, --target-emb and --mapping are required for mapping methods");
          const EmbeddingSpace source = load_space(eval_source_emb, sc.source);
          const EmbeddingSpace target = load_space(eval_target_emb, sc.target);
          const MappingNetwork net = load_mapping(eval_mapping);
          const std::size_t hops = cfg.method == Method::Sscdr ? cfg.hops : 0;
          report = evaluate(mapped_scorer(sc, source, target, net, hops), sc, ec);
        }
      }
      if (!eval_flags.out.empty()) {
        auto out = open_output(fs::path(eval_flags.out) / "report.tsv");
        write_report_tsv(out, method_name(cfg.method), sc.split.phi, report);
      }
      std::cout << format_report_table(method_name(cfg.method), sc.split.phi, report);
    } else if (*run) {
      const ExperimentConfig cfg = run_flags.resolve();
      const RunResult result = run_experiment(cfg);
      std::cout << format_report_table(method_name(cfg.method), cfg.phi, result.report);
    } else if (*exp) {
      ExperimentConfig cfg = export_flags.resolve();
      const CrossDomainScenario sc = load_scenario(export_scenario);
      const EmbeddingSpace source = load_space(export_source_emb, sc.source);
      const EmbeddingSpace target = load_space(export_target_emb, sc.target);
      const MappingNetwork net = load_mapping(export_mapping);
      const std::size_t hops = cfg.method == Method::Sscdr ? cfg.hops : 0;
      auto out = open_output(export_flags.out);
      const auto ids = sc.test_user_ids();
      write_inferred(out, ids, infer_test_users(sc, source, net, hops), target, sc.target);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
