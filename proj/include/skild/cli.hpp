#pragma once

// Subcommand implementations behind tools/skild: each takes resolved inputs,
// writes artifacts under the run directory, and returns a one-line summary.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "skild/config.hpp"
#include "skild/io.hpp"

namespace skild::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path run_dir(const fs::path& out, Method method, std::uint64_t seed) {
  return out / to_string(method) / ("seed_" + std::to_string(seed));
}

/// Worker count from SKILD_THREADS (default 1).
inline std::size_t thread_cap() {
  const char* v = std::getenv("SKILD_THREADS");
  if (!v || !*v) return 1;
  try {
    const long n = std::stol(v);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError(std::string("SKILD_THREADS must be a positive integer, got '") + v + "'");
  }
}

/// Runs fn(0..n-1) on up to `threads` workers. Results are per index, so the
/// outcome does not depend on scheduling. The lowest-index failure rethrows.
template <class Fn>
void run_cells(std::size_t n, std::size_t threads, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline json run_config_json(const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
  json j = to_json(cfg);
  j["method"] = to_string(method);
  j["seed"] = seed;
  j["code_version"] = io::kCodeVersion;
  return j;
}

inline void write_run_config(const fs::path& dir, const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
  io::write_atomic(dir / "config.json", run_config_json(cfg, method, seed).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// discover

inline std::string discover_one(const ExperimentConfig& cfg, Method method, std::uint64_t seed, const fs::path& out) {
  if (method == Method::Vanilla) throw ConfigError("vanilla has no discovery phase");
  const auto dir = run_dir(out, method, seed);
  fs::create_directories(dir);
  write_run_config(dir, cfg, method, seed);
  const auto dcfg = cfg.discovery_for(seed, method);
  const auto env = make_env(cfg.env);

  std::ofstream log;
  auto log_tmp = dir / "transitions.jsonl.tmp";
  TransitionSink sink;
  if (cfg.log_transitions) {
    log.open(log_tmp, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + log_tmp.string());
    sink = [&](const FactoredState& s, ActionId a, const StepOutcome& o, const std::optional<Skill>& z) {
      log << io::transition_line(s, a, o, z);
    };
  }
  std::uint64_t last_ckpt = 0;
  IntervalSink on_interval;
  if (cfg.checkpoint_interval > 0) {
    on_interval = [&](const DiscoveryResult& partial) {
      if (partial.steps - last_ckpt < cfg.checkpoint_interval) return;
      last_ckpt = partial.steps;
      io::save_skills(dir / "skills.ckpt", SkillArtifacts::from(partial));
    };
  }

  const auto res = discover(dcfg, sink, on_interval);
  if (cfg.log_transitions) {
    log.close();
    fs::rename(log_tmp, dir / "transitions.jsonl");
  }
  const auto art = SkillArtifacts::from(res);
  io::save_skills(dir / "skills.ckpt", art);
  io::save_dynamics(dir / "dynamics.ckpt", cfg.env, res.model);
  io::write_atomic(dir / "history.json", io::history_json(env->schema(), res.history).dump(2) + "\n");
  io::write_atomic(dir / "metrics.csv", metrics_csv(res.metrics));

  std::ostringstream msg;
  msg << to_string(method) << " seed " << seed << ": " << res.steps << " steps, " << res.history.graphs().size()
      << " graphs, " << res.history.rows().size() << " rows -> " << dir.string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// finetune

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "step,success\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%llu,%.6f\n", static_cast<unsigned long long>(p.step), p.success);
    out += buf;
  }
  return out;
}

inline SkillArtifacts load_artifacts(const fs::path& dir, const std::string& env) {
  const auto path = dir / "skills.ckpt";
  if (!fs::exists(path)) throw LoadError("missing skill artifact " + path.string() + " (run discover first)");
  auto art = io::load_skills(path);
  if (art.env != env) throw LoadError("artifact " + path.string() + " is for env " + art.env + ", not " + env);
  return art;
}

inline std::string finetune_one(const ExperimentConfig& cfg, Method method, std::uint64_t seed, const fs::path& out) {
  const auto dir = run_dir(out, method, seed);
  const auto fcfg = cfg.finetune_for(seed, method);
  FinetuneResult res;
  if (method == Method::Vanilla) {
    fs::create_directories(dir);
    write_run_config(dir, cfg, method, seed);
    res = finetune(fcfg, nullptr);
  } else {
    const auto art = load_artifacts(dir, cfg.env);
    res = finetune(fcfg, &art);
  }
  io::write_atomic(dir / ("curve_" + fcfg.task + ".csv"), curve_csv(res.curve));
  const json summary{{"task", fcfg.task},
                     {"method", to_string(method)},
                     {"seed", seed},
                     {"total_steps", res.steps},
                     {"selections", res.selections},
                     {"final_success", res.final_success}};
  io::write_atomic(dir / ("finetune_" + fcfg.task + ".json"), summary.dump(2) + "\n");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", res.final_success);
  return to_string(method) + " seed " + std::to_string(seed) + " " + fcfg.task + ": final success " + buf;
}

// ---------------------------------------------------------------------------
// coverage

struct CoverageLine {
  std::string label;
  bool inducible = false;
  double fraction = 0;
};

/// Inducible rows first (schema order), then any other induced non-trivial
/// rows in key order.
inline std::vector<CoverageLine> coverage_lines(const Environment& env, const CoverageReport& rep) {
  const auto& schema = env.schema();
  std::vector<CoverageLine> out;
  std::set<RowKey> listed;
  for (const auto& ind : schema.inducible) {
    out.push_back({ind.label, true, rep.row_fraction(ind.row)});
    listed.insert(ind.row);
  }
  for (const auto& [r, c] : rep.row_episodes)
    if (!listed.count(r) && !r.trivial()) out.push_back({schema.row_label(r), false, rep.row_fraction(r)});
  return out;
}

inline std::string coverage_csv(const std::vector<CoverageLine>& lines) {
  std::string out = "graph_label,inducible,fraction\n";
  char buf[64];
  for (const auto& l : lines) {
    std::snprintf(buf, sizeof buf, ",%d,%.6f\n", l.inducible ? 1 : 0, l.fraction);
    out += "\"" + l.label + "\"" + buf;
  }
  return out;
}

inline std::string coverage_one(const ExperimentConfig& cfg, Method method, std::uint64_t seed, const fs::path& out,
                                int episodes) {
  if (method == Method::Vanilla) throw ConfigError("coverage needs skill artifacts; vanilla has none");
  const auto dir = run_dir(out, method, seed);
  const auto art = load_artifacts(dir, cfg.env);
  RngStream rng(seed, StreamTag::Coverage);
  const auto rep = rollout_coverage(art, episodes, rng, cfg.coverage.skill_horizon, cfg.coverage.episode_horizon);
  const auto env = make_env(cfg.env);
  const auto lines = coverage_lines(*env, rep);
  io::write_atomic(dir / "coverage.csv", coverage_csv(lines));
  int hit = 0, total = 0;
  for (const auto& l : lines)
    if (l.inducible) {
      ++total;
      hit += l.fraction > 0;
    }
  return to_string(method) + " seed " + std::to_string(seed) + ": " + std::to_string(hit) + "/" +
         std::to_string(total) + " inducible graphs induced over " + std::to_string(episodes) + " episodes";
}

// ---------------------------------------------------------------------------
// infer-graphs

struct InferSummary {
  std::size_t transitions = 0;
  std::size_t labeled = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  [[nodiscard]] double precision() const { return tp + fp ? static_cast<double>(tp) / (tp + fp) : 1.0; }
  [[nodiscard]] double recall() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 1.0; }
};

/// Fits a model on the log (or uses `model` when given), then infers every
/// transition's graph; edge precision and recall are pooled over all cells.
inline InferSummary infer_graphs(const std::string& env_name, const std::vector<io::LoggedTransition>& log,
                                 const PcmiConfig& pcmi, const MaskedCountModel* model, std::string& csv) {
  const auto env = make_env(env_name);
  const auto& schema = env->schema();
  MaskedCountModel fitted(schema, pcmi.alpha);
  if (!model) {
    for (const auto& t : log) fitted.update(t.s, t.a, t.s_next);
    model = &fitted;
  }
  InferSummary sum;
  csv = "transition_index,inferred_key,oracle_key,hamming\n";
  for (std::size_t k = 0; k < log.size(); ++k) {
    const auto& t = log[k];
    const GraphKey inferred = graph_encode(model->infer_graph(t.s, t.a, t.s_next, pcmi));
    ++sum.transitions;
    std::string oracle_hex;
    int hamming = -1;
    if (t.oracle) {
      ++sum.labeled;
      oracle_hex = t.oracle->hex();
      const auto gi = graph_decode(inferred), go = graph_decode(*t.oracle);
      hamming = 0;
      for (std::size_t i = 0; i < schema.n(); ++i)
        for (std::size_t j = 0; j <= schema.n(); ++j) {
          const bool a = gi.edge(i, j), b = go.edge(i, j);
          hamming += a != b;
          sum.tp += a && b;
          sum.fp += a && !b;
          sum.fn += !a && b;
        }
    }
    csv += std::to_string(k) + "," + inferred.hex() + "," + oracle_hex + "," + std::to_string(hamming) + "\n";
  }
  return sum;
}

// ---------------------------------------------------------------------------
// report

struct MeanSd {
  double mean = 0, sd = 0;
  std::size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

/// Splits one CSV line, honoring double quotes.
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

inline std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::istringstream in(io::read_file(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split_csv(line));
  return rows;
}

/// Directories holding a config.json, searched recursively; sorted.
inline std::vector<fs::path> find_run_dirs(const std::vector<fs::path>& roots) {
  std::set<fs::path> dirs;
  for (const auto& root : roots) {
    if (!fs::is_directory(root)) throw LoadError("run directory " + root.string() + " does not exist");
    if (fs::exists(root / "config.json")) dirs.insert(root);
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() == "config.json") dirs.insert(e.path().parent_path());
  }
  return {dirs.begin(), dirs.end()};
}

inline std::string fmt6(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

/// Aggregates seeds into mean/sd tables. Outputs depend only on file
/// contents, so re-running on the same inputs is byte-identical.
inline std::string report(const std::vector<fs::path>& roots, const fs::path& out) {
  const auto dirs = find_run_dirs(roots);
  if (dirs.empty()) throw LoadError("no run directories (config.json) under the given paths");

  // (method, label) -> fractions; label order from first appearance.
  std::map<std::string, std::vector<std::string>> label_order;
  std::map<std::pair<std::string, std::string>, std::vector<double>> cov;
  // (task, method) -> step -> seed -> success
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, std::map<std::uint64_t, double>>> curves;

  for (const auto& dir : dirs) {
    const auto cfg = json::parse(io::read_file(dir / "config.json"));
    const std::string method = cfg.value("method", "skild");
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
    if (fs::exists(dir / "coverage.csv")) {
      for (const auto& row : read_csv_rows(dir / "coverage.csv")) {
        if (row.size() < 3) throw LoadError("malformed coverage.csv in " + dir.string());
        auto& order = label_order[method];
        if (std::find(order.begin(), order.end(), row[0]) == order.end()) order.push_back(row[0]);
        cov[{method, row[0]}].push_back(std::stod(row[2]));
      }
    }
    std::vector<fs::path> curve_files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("curve_", 0) == 0 && e.path().extension() == ".csv") curve_files.push_back(e.path());
    }
    std::sort(curve_files.begin(), curve_files.end());
    for (const auto& f : curve_files) {
      const auto stem = f.stem().string();
      const std::string task = stem.substr(6);
      for (const auto& row : read_csv_rows(f)) {
        if (row.size() < 2) throw LoadError("malformed " + f.string());
        curves[{task, method}][std::stoull(row[0])][seed] = std::stod(row[1]);
      }
    }
  }

  fs::create_directories(out);
  std::ostringstream summary;
  summary << "runs: " << dirs.size() << "\n";

  if (!cov.empty()) {
    std::string csv = "method,graph_label,fraction_mean,fraction_sd,seeds\n";
    summary << "\ncoverage (fraction of episodes, mean +- sd over seeds)\n";
    for (const auto& [method, labels] : label_order) {
      summary << "  [" << method << "]\n";
      for (const auto& label : labels) {
        const auto m = mean_sd(cov.at({method, label}));
        csv += method + ",\"" + label + "\"," + fmt6(m.mean) + "," + fmt6(m.sd) + "," + std::to_string(m.n) + "\n";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f +- %.3f", m.mean, m.sd);
        summary << "    " << label << ": " << buf << "\n";
      }
    }
    io::write_atomic(out / "coverage_summary.csv", csv);
  }

  if (!curves.empty()) {
    summary << "\nfinal success (mean +- sd over seeds)\n";
    auto values = [](const std::map<std::uint64_t, double>& by_seed) {
      std::vector<double> v;
      for (const auto& [sd, x] : by_seed) v.push_back(x);
      return v;
    };
    for (const auto& [key, by_step] : curves) {
      const auto& [task, method] = key;
      std::set<std::uint64_t> seeds;
      for (const auto& [step, by_seed] : by_step)
        for (const auto& [sd, x] : by_seed) seeds.insert(sd);
      std::string csv = "step,success_mean,success_sd,seeds";
      for (auto sd : seeds) csv += ",seed_" + std::to_string(sd);
      csv += "\n";
      for (const auto& [step, by_seed] : by_step) {
        const auto m = mean_sd(values(by_seed));
        csv += std::to_string(step) + "," + fmt6(m.mean) + "," + fmt6(m.sd) + "," + std::to_string(m.n);
        for (auto sd : seeds) {
          const auto it = by_seed.find(sd);
          csv += "," + (it == by_seed.end() ? std::string() : fmt6(it->second));
        }
        csv += "\n";
      }
      io::write_atomic(out / ("curve_" + task + "_" + method + ".csv"), csv);
      const auto last = mean_sd(values(by_step.rbegin()->second));
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3f +- %.3f", last.mean, last.sd);
      summary << "  " << task << " / " << method << ": " << buf << " (step " << by_step.rbegin()->first << ")\n";
    }
  }
  io::write_atomic(out / "summary.txt", summary.str());
  return summary.str();
}

// ---------------------------------------------------------------------------
// describe

inline std::string describe(const std::string& env_name) {
  const auto env = make_env(env_name);
  const auto& s = env->schema();
  std::ostringstream o;
  o << "env " << s.name << " (" << s.width << "x" << s.height << ")\n";
  o << "factors:\n";
  for (std::size_t i = 0; i < s.factors.size(); ++i) {
    o << "  " << i << " " << s.factors[i].name << " (";
    for (std::size_t k = 0; k < s.factors[i].components.size(); ++k)
      o << (k ? ", " : "") << s.factors[i].components[k].name << ":" << s.factors[i].components[k].cardinality;
    o << ")\n";
  }
  o << "actions:";
  for (std::size_t a = 0; a < s.actions.size(); ++a) o << " " << a << "=" << s.actions[a];
  o << "\ntasks:";
  for (const auto& t : s.tasks) o << " " << t;
  o << "\ndefault dependency source: " << to_string(default_source(s.name)) << "\n";
  o << "inducible graphs:\n";
  for (const auto& r : s.inducible) o << "  " << r.label << "  [" << r.row.hex() << "]  " << r.meaning << "\n";
  return o.str();
}

}  // namespace skild::cli
