#include "varscale/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "varscale/checkpoint.hpp"
#include "varscale/config.hpp"
#include "varscale/error.hpp"
#include "varscale/metrics_log.hpp"
#include "varscale/oracles/gradcheck.hpp"
#include "varscale/trainer.hpp"

namespace varscale::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> parse_overrides(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t.rfind("--", 0) != 0 || t.size() <= 2)
      throw ConfigError(t, "unexpected argument '" + t + "'");
    const std::string body = t.substr(2);
    if (body.find('=') != std::string::npos) {
      out.push_back(body);
    } else if (i + 1 < tokens.size() && tokens[i + 1].rfind("--", 0) != 0) {
      out.push_back(body + "=" + tokens[++i]);
    } else {
      throw ConfigError(body, "option '--" + body + "' needs a value");
    }
  }
  return out;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

const std::uint64_t* env_seed(std::uint64_t& storage) {
  const char* v = std::getenv("VARSCALE_SEED");
  if (v == nullptr || *v == '\0') return nullptr;
  try {
    std::size_t pos = 0;
    storage = std::stoull(v, &pos);
    if (pos != std::string(v).size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw ConfigError("VARSCALE_SEED", "VARSCALE_SEED must be a non-negative integer");
  }
  return &storage;
}

void write_json(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << doc.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& text, const std::string& field) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(field, "'" + item + "' in " + field + " is not a number");
    }
  }
  return values;
}

// Summary of the scaling a trained model uses at test time.
double final_mu(const ModelState& model, const MetaTestResult& test) {
  switch (model.method) {
    case Method::pn: return 1.0;
    case Method::svs:
    case Method::dsvs: return model.posterior.mu.mean();
    case Method::davs: {
      double s = 0.0;
      for (const auto& mu : test.task_scaling) s += mu.mean();
      return test.task_scaling.empty() ? 0.0 : s / static_cast<double>(test.task_scaling.size());
    }
  }
  return 0.0;
}

struct RunOutcome {
  TrainingState state;
  MetaTestResult test;
};

RunOutcome train_and_test(TrainingState state, const SyntheticDomain& domain) {
  Trainer trainer(std::move(state), domain);
  trainer.run();
  const auto& s = trainer.state();
  MetaTestResult test = meta_test(selected_model(s), domain, Partition::test,
                                  s.config.test_episode, s.config.test_episodes, s.config.seed);
  return {s, std::move(test)};
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::string resume;
};

int cmd_train(const TrainArgs& args, const std::vector<std::string>& extras, std::ostream& out) {
  json doc = json::object();
  if (!args.config.empty() && !args.manifest.empty())
    throw ConfigError("config", "use either --config or --manifest, not both");
  if (!args.config.empty()) doc = load_json_file(args.config);
  if (!args.manifest.empty()) {
    const json m = load_json_file(args.manifest);
    if (!m.contains("config")) throw ConfigError("manifest", "manifest has no 'config' section");
    doc = m["config"];
  }
  const auto overrides = parse_overrides(extras);
  apply_overrides(doc, overrides);
  if (!args.out.empty()) doc["log"]["dir"] = args.out;

  std::uint64_t seed_storage = 0;
  TrainingState state;
  bool resumed = false;
  if (!args.resume.empty()) {
    state = load_checkpoint(args.resume);
    // Only the budget and the output directory may change on resume.
    try {
      if (doc.contains("budget") && doc["budget"].contains("episodes"))
        state.config.episodes = doc["budget"]["episodes"].get<int>();
      if (doc.contains("log") && doc["log"].contains("dir"))
        state.config.output_dir = doc["log"]["dir"].get<std::string>();
    } catch (const json::exception&) {
      throw ConfigError("budget.episodes", "budget.episodes / log.dir have the wrong type");
    }
    state.config.validate();
    resumed = true;
  } else {
    const TrainConfig cfg = config_from_json(doc, env_seed(seed_storage));
    state = initial_state(cfg);
  }
  TrainConfig& cfg = state.config;
  if (cfg.output_dir.empty())
    cfg.output_dir = "runs/" + std::string(to_string(cfg.method)) + "_seed" +
                     std::to_string(cfg.seed);
  fs::create_directories(cfg.output_dir);

  const std::string manifest_path = cfg.output_dir + "/manifest.json";
  json manifest = {{"format_version", kManifestVersion},
                   {"command", "train"},
                   {"config", to_json(cfg)},
                   {"seed", cfg.seed},
                   {"resumed_from", args.resume},
                   {"artifacts",
                    {{"metrics", cfg.output_dir + "/metrics.csv"},
                     {"mu", cfg.output_dir + "/mu.csv"},
                     {"checkpoint", cfg.output_dir + "/final.ckpt"},
                     {"manifest", manifest_path}}},
                   {"started_at", utc_now()},
                   {"status", "running"}};
  write_json(manifest, manifest_path);

  const SyntheticDomain domain = make_domain(cfg.domain, cfg.seed);
  const std::string out_dir = cfg.output_dir;
  try {
    const RunOutcome res = train_and_test(std::move(state), domain);
    manifest["finished_at"] = utc_now();
    manifest["status"] = "ok";
    manifest["result"] = {{"steps", res.state.step},
                          {"best_val_acc", res.state.best_val_acc},
                          {"best_step", res.state.best_step},
                          {"test_acc", res.test.mean},
                          {"test_ci95", res.test.ci95},
                          {"test_episodes", res.test.accuracies.size()},
                          {"final_mu", final_mu(res.state.model, res.test)}};
    write_json(manifest, manifest_path);
    out << "method " << to_string(res.state.config.method) << (resumed ? " (resumed)" : "")
        << ", seed " << res.state.config.seed << ", " << res.state.step << " episodes\n"
        << "test accuracy " << std::fixed << std::setprecision(4) << res.test.mean << " +- "
        << res.test.ci95 << " (" << res.test.accuracies.size() << " episodes)\n"
        << "artifacts in " << res.state.config.output_dir << '\n';
  } catch (const NumericError& e) {
    manifest["finished_at"] = utc_now();
    manifest["status"] = "diverged";
    manifest["error"] = e.what();
    manifest["artifacts"]["last_good"] = out_dir + "/last_good.ckpt";
    write_json(manifest, manifest_path);
    throw;
  }
  return kOk;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> checkpoints;
  int episodes = 0;
  std::optional<std::uint64_t> seed;
  std::string partition = "test";
  std::string model = "best";
  std::string alpha_dump;
  std::string manifest;
};

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  if (args.model != "best" && args.model != "final")
    throw ConfigError("model", "--model must be best or final");
  Partition partition = Partition::test;
  if (args.partition == "val") partition = Partition::val;
  else if (args.partition == "train") partition = Partition::train;
  else if (args.partition != "test")
    throw ConfigError("partition", "--partition must be train, val or test");

  std::uint64_t seed_storage = 0;
  const std::uint64_t* fallback = args.seed ? nullptr : env_seed(seed_storage);

  json runs = json::array();
  std::vector<double> means;
  out << std::fixed << std::setprecision(4);
  for (const auto& path : args.checkpoints) {
    const TrainingState state = load_checkpoint(path);
    const TrainConfig& cfg = state.config;
    const SyntheticDomain domain = make_domain(cfg.domain, cfg.seed);
    const std::uint64_t seed = args.seed ? *args.seed : fallback ? *fallback : cfg.seed;
    const int episodes = args.episodes > 0 ? args.episodes : cfg.test_episodes;
    const ModelState& model = args.model == "best" ? selected_model(state) : state.model;
    const MetaTestResult res =
        meta_test(model, domain, partition, cfg.test_episode, episodes, seed);
    means.push_back(res.mean);
    out << path << ": accuracy " << res.mean << " +- " << res.ci95 << " (" << episodes
        << " episodes, seed " << seed << ")\n";
    json run = {{"checkpoint", path}, {"seed", seed}, {"episodes", episodes},
                {"accuracy", res.mean}, {"ci95", res.ci95}};

    if (model.method == Method::davs) {
      std::string dump = args.alpha_dump;
      if (dump.empty()) dump = (fs::path(path).parent_path() / "alpha_dump.csv").string();
      else if (args.checkpoints.size() > 1) dump += "." + std::to_string(runs.size());
      std::ofstream csv(dump);
      if (!csv) throw Error("cannot write '" + dump + "'");
      csv << "task";
      for (Eigen::Index m = 0; m < cfg.embed_dim; ++m) csv << ",mu_" << m;
      csv << '\n';
      for (std::size_t t = 0; t < res.task_scaling.size(); ++t) {
        csv << t;
        for (Eigen::Index m = 0; m < res.task_scaling[t].size(); ++m)
          csv << ',' << format_double(res.task_scaling[t][m]);
        csv << '\n';
      }
      run["alpha_dump"] = dump;
      out << "per-task scaling written to " << dump << '\n';
    }
    runs.push_back(std::move(run));
  }
  if (means.size() > 1) {
    const MeanCI agg = mean_ci95(means);
    out << "over " << means.size() << " runs: accuracy " << agg.mean << " +- " << agg.ci95
        << '\n';
  }
  if (!args.manifest.empty()) {
    write_json({{"format_version", kManifestVersion},
                {"command", "eval"},
                {"partition", args.partition},
                {"model", args.model},
                {"runs", runs},
                {"finished_at", utc_now()}},
               args.manifest);
  }
  return kOk;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string config;
  std::string out;
  std::string mu0;
  std::string mu_init;
};

std::string cell_name(double v) { return format_double(v); }

int cmd_sweep(const SweepArgs& args, const std::vector<std::string>& extras, std::ostream& out) {
  const auto mu0s = parse_list(args.mu0, "mu0");
  const auto inits = parse_list(args.mu_init, "mu-init");
  if (mu0s.empty() || inits.empty())
    throw ConfigError(mu0s.empty() ? "mu0" : "mu-init", "sweep grid is empty");
  if (args.out.empty()) throw ConfigError("out", "sweep needs --out");

  json base = args.config.empty() ? json::object() : load_json_file(args.config);
  apply_overrides(base, parse_overrides(extras));
  std::uint64_t seed_storage = 0;
  const std::uint64_t* fallback = env_seed(seed_storage);
  config_from_json(base, fallback);  // reject a bad base before running anything
  fs::create_directories(args.out);

  json cells = json::array();
  std::vector<std::vector<double>> acc(mu0s.size(), std::vector<double>(inits.size()));
  std::vector<std::vector<double>> mu(mu0s.size(), std::vector<double>(inits.size()));
  const std::string started = utc_now();
  for (std::size_t r = 0; r < mu0s.size(); ++r) {
    for (std::size_t c = 0; c < inits.size(); ++c) {
      json doc = base;
      doc["prior"]["mu0"] = mu0s[r];
      doc["init"]["mu_init"] = inits[c];
      doc["log"]["dir"] =
          args.out + "/mu0_" + cell_name(mu0s[r]) + "_init_" + cell_name(inits[c]);
      const TrainConfig cfg = config_from_json(doc, fallback);
      fs::create_directories(cfg.output_dir);
      write_json({{"format_version", kManifestVersion},
                  {"command", "train"},
                  {"config", to_json(cfg)},
                  {"seed", cfg.seed}},
                 cfg.output_dir + "/manifest.json");
      const SyntheticDomain domain = make_domain(cfg.domain, cfg.seed);
      const RunOutcome res = train_and_test(initial_state(cfg), domain);
      acc[r][c] = res.test.mean;
      mu[r][c] = final_mu(res.state.model, res.test);
      cells.push_back({{"mu0", mu0s[r]}, {"mu_init", inits[c]}, {"dir", cfg.output_dir},
                       {"test_acc", acc[r][c]}, {"test_ci95", res.test.ci95},
                       {"final_mu", mu[r][c]}});
      out << "mu0 " << format_double(mu0s[r]) << ", mu_init " << format_double(inits[c])
          << ": accuracy " << format_double(acc[r][c]) << ", final mu "
          << format_double(mu[r][c]) << '\n';
    }
  }

  auto write_matrix = [&](const std::string& path, const std::vector<std::vector<double>>& m) {
    std::ofstream csv(path);
    if (!csv) throw Error("cannot write '" + path + "'");
    csv << "mu0\\mu_init";
    for (double v : inits) csv << ',' << format_double(v);
    csv << '\n';
    for (std::size_t r = 0; r < mu0s.size(); ++r) {
      csv << format_double(mu0s[r]);
      for (double v : m[r]) csv << ',' << format_double(v);
      csv << '\n';
    }
  };
  write_matrix(args.out + "/accuracy.csv", acc);
  write_matrix(args.out + "/final_mu.csv", mu);
  write_json({{"format_version", kManifestVersion},
              {"command", "sweep"},
              {"base_config", base},
              {"mu0", mu0s},
              {"mu_init", inits},
              {"cells", cells},
              {"artifacts",
               {{"accuracy", args.out + "/accuracy.csv"},
                {"final_mu", args.out + "/final_mu.csv"}}},
              {"started_at", started},
              {"finished_at", utc_now()}},
             args.out + "/manifest.json");
  return kOk;
}

// ------------------------------------------------------------ gradcheck

struct GradcheckArgs {
  std::string method;
  std::optional<std::uint64_t> seed;
  int instances = 100;
  double tolerance = 1e-4;
  std::string report;
};

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  oracles::GradcheckOptions opt;
  opt.method = parse_method(args.method);
  std::uint64_t seed_storage = 0;
  if (args.seed) {
    opt.seed = *args.seed;
  } else if (const auto* s = env_seed(seed_storage)) {
    opt.seed = *s;
  } else {
    throw ConfigError("seed", "gradcheck needs --seed (or VARSCALE_SEED)");
  }
  if (args.instances < 1) throw ConfigError("instances", "--instances must be >= 1");
  opt.instances = args.instances;
  opt.tolerance = args.tolerance;

  const auto result = oracles::gradcheck(opt);
  if (args.report.empty() || args.report == "-") {
    oracles::write_grad_report_csv(out, result);
  } else {
    std::ofstream csv(args.report);
    if (!csv) throw Error("cannot write '" + args.report + "'");
    oracles::write_grad_report_csv(csv, result);
  }
  std::ostream& summary = args.report.empty() || args.report == "-" ? err : out;
  summary << "gradcheck " << args.method << ": " << result.reports.size() << " entries over "
          << result.instances << " instances, " << result.failures
          << " failures, max relative error " << format_double(result.max_rel_error) << '\n';
  return result.failures == 0 ? kOk : kVerificationFailure;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototypical networks with variational metric scaling"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Meta-train a model");
  train->add_option("--config", train_args.config, "JSON configuration file");
  train->add_option("--manifest", train_args.manifest, "re-run the configuration of a manifest");
  train->add_option("--out", train_args.out, "output directory (log.dir)");
  train->add_option("--resume", train_args.resume, "continue from a checkpoint");
  train->allow_extras();
  train->footer("Any configuration field can be set with --section.field=value, "
                "e.g. --method=svs --seed=7 --rates.l_psi=1e-3");

  EvalArgs eval_args;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Meta-test checkpoints");
  eval->add_option("--checkpoint", eval_args.checkpoints, "checkpoint file (repeatable)")
      ->required();
  eval->add_option("--episodes", eval_args.episodes, "test episodes (default from config)");
  auto* eval_seed_opt = eval->add_option("--seed", eval_seed, "episode seed");
  eval->add_option("--partition", eval_args.partition, "train, val or test");
  eval->add_option("--model", eval_args.model, "best (validation) or final");
  eval->add_option("--alpha-dump", eval_args.alpha_dump, "per-task scaling CSV (davs)");
  eval->add_option("--manifest", eval_args.manifest, "write an eval manifest");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Train over a (mu0, mu_init) grid");
  sweep->add_option("--config", sweep_args.config, "base JSON configuration");
  sweep->add_option("--out", sweep_args.out, "output directory")->required();
  sweep->add_option("--mu0", sweep_args.mu0, "comma-separated prior means")->required();
  sweep->add_option("--mu-init", sweep_args.mu_init, "comma-separated initial mu")->required();
  sweep->allow_extras();

  GradcheckArgs gc_args;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--method", gc_args.method, "pn, svs, dsvs or davs")->required();
  auto* gc_seed_opt = gc->add_option("--seed", gc_seed, "instance seed");
  gc->add_option("--instances", gc_args.instances, "random frozen instances");
  gc->add_option("--tolerance", gc_args.tolerance, "relative error threshold");
  gc->add_option("--report", gc_args.report, "CSV report path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*train) return cmd_train(train_args, train->remaining(), out);
    if (*eval) {
      if (*eval_seed_opt) eval_args.seed = eval_seed;
      return cmd_eval(eval_args, out);
    }
    if (*sweep) return cmd_sweep(sweep_args, sweep->remaining(), out);
    if (*gc) {
      if (*gc_seed_opt) gc_args.seed = gc_seed;
      return cmd_gradcheck(gc_args, out, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what();
    if (!e.field().empty()) err << " [field: " << e.field() << "]";
    err << '\n';
    return kUsageError;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage;
  storage.push_back("varscale");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run(static_cast<int>(storage.size()), argv.data(), out, err);
}

}  // namespace varscale::cli
