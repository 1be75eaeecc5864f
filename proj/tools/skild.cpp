// skild: discovery, fine-tuning, coverage, graph-inference audits and reports.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skild/cli.hpp"

namespace {

using namespace skild;
namespace fs = std::filesystem;

struct RunFlags {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string method = "skild";
  int episodes = 0;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_episodes) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", f.seeds, "seed(s); overrides the config's seed list");
  cmd->add_option("--out", f.out, "output root; overrides the config's out");
  cmd->add_option("--method", f.method, "skild | no_graph | no_diversity | vanilla");
  if (with_episodes) cmd->add_option("--episodes", f.episodes, "rollout episodes; overrides coverage.episodes");
}

struct Resolved {
  ExperimentConfig cfg;
  Method method;
  fs::path out;
};

Resolved resolve(const RunFlags& f) {
  Resolved r{load_experiment(f.config), parse_method(f.method), {}};
  if (!f.seeds.empty()) r.cfg.seeds = f.seeds;
  if (!f.out.empty()) r.cfg.out = f.out;
  r.out = r.cfg.out;
  return r;
}

/// One cell per seed on the SKILD_THREADS pool; summaries print in seed order.
template <class Fn>
void over_seeds(const Resolved& r, Fn fn) {
  std::vector<std::string> lines(r.cfg.seeds.size());
  cli::run_cells(r.cfg.seeds.size(), cli::thread_cap(), [&](std::size_t i) { lines[i] = fn(r.cfg.seeds[i]); });
  for (const auto& l : lines) std::cout << l << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"skild: skill discovery from local dependencies on factored gridworlds"};
  app.require_subcommand(1);

  RunFlags disc, fine, cov;
  auto* c_disc = app.add_subcommand("discover", "run skill discovery for each seed");
  add_run_flags(c_disc, disc, false);
  auto* c_fine = app.add_subcommand("finetune", "learn the configured task over frozen skills (or flat for vanilla)");
  add_run_flags(c_fine, fine, false);
  auto* c_cov = app.add_subcommand("coverage", "roll out random skills and record induced graphs");
  add_run_flags(c_cov, cov, true);

  std::string log_path, infer_env, infer_config, infer_model, infer_out;
  auto* c_infer = app.add_subcommand("infer-graphs", "infer per-transition graphs from a JSON-lines log");
  c_infer->add_option("log", log_path, "transition log (JSON lines)")->required();
  c_infer->add_option("--env", infer_env, "environment of the log");
  c_infer->add_option("--config", infer_config, "experiment config (env and pcmi settings)");
  c_infer->add_option("--model", infer_model, "dynamics checkpoint; default fits the log itself");
  c_infer->add_option("--out", infer_out, "CSV path; default <log>.graphs.csv");

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* c_report = app.add_subcommand("report", "aggregate run directories into mean/sd tables");
  c_report->add_option("dirs", report_dirs, "run directories or roots")->required();
  c_report->add_option("--out", report_out, "report directory")->required();

  std::string describe_env, describe_config;
  auto* c_desc = app.add_subcommand("describe", "print an environment schema and its inducible graphs");
  c_desc->add_option("--env", describe_env, "environment name");
  c_desc->add_option("--config", describe_config, "experiment config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*c_disc) {
    const auto r = resolve(disc);
    over_seeds(r, [&](std::uint64_t s) { return cli::discover_one(r.cfg, r.method, s, r.out); });
  } else if (*c_fine) {
    const auto r = resolve(fine);
    over_seeds(r, [&](std::uint64_t s) { return cli::finetune_one(r.cfg, r.method, s, r.out); });
  } else if (*c_cov) {
    const auto r = resolve(cov);
    const int episodes = cov.episodes > 0 ? cov.episodes : r.cfg.coverage.episodes;
    over_seeds(r, [&](std::uint64_t s) { return cli::coverage_one(r.cfg, r.method, s, r.out, episodes); });
  } else if (*c_infer) {
    PcmiConfig pcmi;
    std::string env = infer_env;
    if (!infer_config.empty()) {
      const auto cfg = load_experiment(infer_config);
      pcmi = cfg.discovery.pcmi;
      if (env.empty()) env = cfg.env;
    }
    std::optional<MaskedCountModel> model;
    if (!infer_model.empty()) {
      std::string model_env;
      model = io::load_dynamics(infer_model, &model_env);
      if (env.empty()) env = model_env;
      if (env != model_env) throw ConfigError("model is for env " + model_env + ", log env is " + env);
      pcmi.alpha = model->alpha();
    }
    if (env.empty()) throw ConfigError("infer-graphs needs --env, --config or --model");
    const auto log = io::read_transition_log(log_path, make_env(env)->schema().n());
    std::string csv;
    const auto sum = cli::infer_graphs(env, log, pcmi, model ? &*model : nullptr, csv);
    const fs::path out = infer_out.empty() ? fs::path(log_path + ".graphs.csv") : fs::path(infer_out);
    io::write_atomic(out, csv);
    if (sum.labeled == 0) {
      std::cout << "transitions " << sum.transitions << ", no oracle labels -> " << out.string() << "\n";
    } else {
      std::printf("transitions %zu, labeled %zu, edge precision %.4f, edge recall %.4f -> %s\n", sum.transitions,
                  sum.labeled, sum.precision(), sum.recall(), out.string().c_str());
    }
  } else if (*c_report) {
    std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
    std::cout << cli::report(dirs, report_out);
  } else if (*c_desc) {
    std::string env = describe_env;
    if (env.empty() && !describe_config.empty()) env = load_experiment(describe_config).env;
    if (env.empty()) {
      for (const auto& name : env_names()) std::cout << cli::describe(name) << "\n";
    } else {
      std::cout << cli::describe(env);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const skild::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const skild::LoadError& e) {
    std::cerr << "missing or unreadable artifact: " << e.what() << "\n";
    return 2;
  } catch (const skild::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
