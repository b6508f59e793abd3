#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "config_io.hpp"
#include "manifest.hpp"
#include "sha1.hpp"

#include "metaexp/csv.hpp"
#include "metaexp/errors.hpp"
#include "metaexp/harness.hpp"
#include "metaexp/meta_step.hpp"
#include "metaexp/oracle.hpp"
#include "metaexp/params.hpp"
#include "metaexp/rng.hpp"
#include "metaexp/workers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace metaexp::cli {

namespace {

// exit-code convention, fixed for scripting
constexpr int kOk = 0;
constexpr int kOracleFailure = 1;
constexpr int kUsage = 2;
constexpr int kNumericFault = 3;

// rng stream tags local to the command front end, disjoint from the
// training streams (1..6) and the harness streams (101..105)
enum CliStream : std::uint64_t {
  kCliInitStream = 301,
  kCliPoolStream = 302,
  kCliGapStream = 303,
  kCliSweepStream = 304,
};

int code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return kUsage;
  } catch (const OracleInvalid&) {
    return kOracleFailure;
  } catch (const NumericFault&) {
    return kNumericFault;
  } catch (const std::exception&) {
    return kNumericFault;  // broken invariants and io faults count as internal
  }
}

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return code_for_current_exception();
  }
}

struct CommonOpts {
  std::string algo, env, config_path, out_dir;
  std::uint64_t seed = 0;
  std::int64_t budget = 0;
  CLI::Option* algo_opt = nullptr;
  CLI::Option* env_opt = nullptr;
  CLI::Option* config_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* budget_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  o.algo_opt = cmd->add_option("--algo", o.algo, "maml|emaml|rl2|erl2");
  o.env_opt = cmd->add_option("--env", o.env, "krazy|maze|pointmass");
  o.config_opt = cmd->add_option("--config", o.config_path, "json config file");
  o.seed_opt = cmd->add_option("--seed", o.seed, "master seed");
  o.budget_opt = cmd->add_option("--budget", o.budget, "training environment-step budget");
  cmd->add_option("--out", o.out_dir, "run directory")->required();
}

// precedence: flags over file keys over built-in defaults
harness::ExperimentConfig resolve_config(const CommonOpts& o) {
  json tree = json::object();
  if (o.config_opt->count() > 0) {
    std::ifstream in(o.config_path);
    if (!in.good()) throw ConfigError("config file '" + o.config_path + "' cannot be opened");
    std::ostringstream text;
    text << in.rdbuf();
    try {
      tree = json::parse(text.str());
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + o.config_path + "': " + e.what());
    }
  }
  harness::ExperimentConfig cfg = config_from_json(tree);
  if (o.algo_opt->count() > 0) {
    const auto a = meta::algo_from_name(o.algo);
    if (!a) throw ConfigError("--algo '" + o.algo + "' is not one of maml|emaml|rl2|erl2");
    cfg.step.algo = *a;
  }
  if (o.env_opt->count() > 0) {
    const auto f = env::family_from_name(o.env);
    if (!f) throw ConfigError("--env '" + o.env + "' is not one of krazy|maze|pointmass");
    cfg.family = *f;
  }
  if (o.seed_opt->count() > 0) cfg.step.seed = o.seed;
  if (o.budget_opt->count() > 0) cfg.budget = o.budget;
  cfg.validate();
  return cfg;
}

// manifest lifecycle around a command body: echo the resolved config, write
// the manifest in the running state, finalize it with the exit status even
// when the body throws
int with_run_dir(const harness::ExperimentConfig& cfg, const std::string& out_dir,
                 const std::function<void()>& body) {
  fs::create_directories(out_dir);
  if (fs::exists(fs::path(out_dir) / "manifest.json")) {
    throw ConfigError("out dir '" + out_dir + "' already holds a run (manifest.json exists)");
  }
  const json cfg_json = config_to_json(cfg);
  const std::string cfg_text = cfg_json.dump(2) + "\n";
  write_text_atomic((fs::path(out_dir) / "config.json").string(), cfg_text);

  RunManifest m;
  m.config = cfg_json;
  m.config_hash = git_blob_hash(cfg_text);
  m.started_at = utc_timestamp();
  m.run_id = std::string(meta::algo_name(cfg.step.algo)) + "-" + env::family_name(cfg.family) +
             "-s" + std::to_string(cfg.step.seed) + "-" + m.config_hash.substr(0, 8);
  write_manifest(out_dir, m);

  try {
    body();
  } catch (...) {
    m.finished_at = utc_timestamp();
    m.exit_status = code_for_current_exception();
    write_manifest(out_dir, m);
    throw;
  }
  m.finished_at = utc_timestamp();
  m.exit_status = kOk;
  write_manifest(out_dir, m);
  return kOk;
}

int cmd_train(const CommonOpts& opts) {
  const harness::ExperimentConfig cfg = resolve_config(opts);
  return with_run_dir(cfg, opts.out_dir, [&] {
    const harness::ExperimentResult res = harness::run_experiment(cfg, opts.out_dir);
    std::printf("curve %s\n", res.curve_path.c_str());
    std::printf("checkpoint %s\n", res.checkpoint_path.c_str());
    if (!res.curve.empty()) {
      const harness::CurvePoint& last = res.curve.back();
      std::printf("final pre_return %s post_return %s gap %s\n",
                  csv::format_double(last.pre_return).c_str(),
                  csv::format_double(last.post_return).c_str(),
                  csv::format_double(last.gap).c_str());
    }
  });
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path, int sweep_steps) {
  const harness::ExperimentConfig cfg = resolve_config(opts);
  if (sweep_steps >= 0) {
    if (meta::algo_recurrent(cfg.step.algo)) {
      throw ConfigError("--sweep-steps applies only to the gradient-adaptation algorithms");
    }
    if (sweep_steps > 20) throw ConfigError("--sweep-steps must be between 0 and 20");
  }
  return with_run_dir(cfg, opts.out_dir, [&] {
    const harness::PolicyBundle bundle = harness::make_policy(cfg);
    Rng init_rng = Rng::from_key(cfg.step.seed, {kCliInitStream});
    const ParamVector schema = harness::init_policy_params(cfg, bundle, init_rng);
    const ParamVector params = load_checkpoint(checkpoint_path, schema);

    Rng pool_rng = Rng::from_key(cfg.step.seed, {kCliPoolStream});
    const std::vector<env::TaskSpec> tasks =
        harness::sample_task_pool(cfg, /*test_pool=*/true, cfg.n_test_tasks, pool_rng);
    const WorkerPool pool(cfg.n_workers);

    const harness::GapResult gap = harness::evaluate_gap(
        cfg, bundle, params, tasks, pool, mix_key(cfg.step.seed, {kCliGapStream}));
    csv::Table table({"task", "pre_return", "post_return", "gap"});
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      table.add_row({std::to_string(i), csv::format_double(gap.pre[i]),
                     csv::format_double(gap.post[i]),
                     csv::format_double(gap.post[i] - gap.pre[i])});
    }
    table.write_file((fs::path(opts.out_dir) / "gap.csv").string());

    if (sweep_steps >= 0) {
      const std::vector<harness::SweepPoint> sweep = harness::grad_steps_sweep(
          cfg, bundle, params, tasks, sweep_steps, pool, mix_key(cfg.step.seed, {kCliSweepStream}));
      csv::Table sweep_table({"steps", "mean_return"});
      for (const harness::SweepPoint& p : sweep) {
        sweep_table.add_row({std::to_string(p.steps), csv::format_double(p.mean_return)});
      }
      sweep_table.write_file((fs::path(opts.out_dir) / "sweep.csv").string());
    }

    std::printf("mean_gap %s\n", csv::format_double(gap.mean_gap).c_str());
    if (gap.heuristics) {
      std::printf("tile_fraction %s death_visits %s goals_reached %s\n",
                  csv::format_double(gap.heuristics->tile_fraction).c_str(),
                  csv::format_double(gap.heuristics->death_visits).c_str(),
                  csv::format_double(gap.heuristics->goals_reached).c_str());
    }
  });
}

int cmd_oracle(const std::string& suite, std::uint64_t seed) {
  if (suite != "autodiff" && suite != "estimator" && suite != "envs" && suite != "all") {
    throw ConfigError("--suite '" + suite + "' is not one of autodiff|estimator|envs|all");
  }
  std::vector<oracle::Check> checks;
  const auto append = [&](std::vector<oracle::Check> more) {
    for (oracle::Check& c : more) checks.push_back(std::move(c));
  };
  if (suite == "autodiff" || suite == "all") {
    append(oracle::fd_primitive_checks(seed, 200));
    append(oracle::fd_composed_checks(seed));
  }
  if (suite == "estimator" || suite == "all") append(oracle::estimator_checks(seed));
  if (suite == "envs" || suite == "all") append(oracle::env_checks(seed));

  std::fputs(oracle::format_report(checks).c_str(), stdout);
  if (!oracle::all_pass(checks)) {
    for (const oracle::Check& c : checks) {
      if (!c.pass) {
        std::printf("failed %s observed %.17g tolerance %.17g\n", c.name.c_str(), c.observed,
                    c.tolerance);
      }
    }
    return kOracleFailure;
  }
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"meta-rl training, evaluation and oracle front end"};
  app.require_subcommand(1);

  CLI::App* train = app.add_subcommand("train", "meta-train a policy and write learning curves");
  CommonOpts train_opts;
  add_common(train, train_opts);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint's adaptation gap");
  CommonOpts eval_opts;
  add_common(eval, eval_opts);
  std::string checkpoint_path;
  int sweep_steps = -1;
  eval->add_option("--checkpoint", checkpoint_path, "trained parameter file")->required();
  eval->add_option("--sweep-steps", sweep_steps, "also sweep 0..N adaptation steps");

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "run the verification suites");
  std::string suite;
  std::uint64_t oracle_seed = 1234;
  oracle_cmd->add_option("--suite", suite, "autodiff|estimator|envs|all")->required();
  oracle_cmd->add_option("--seed", oracle_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (train->parsed()) return guarded([&] { return cmd_train(train_opts); });
  if (eval->parsed()) return guarded([&] { return cmd_eval(eval_opts, checkpoint_path, sweep_steps); });
  return guarded([&] { return cmd_oracle(suite, oracle_seed); });
}

}  // namespace

}  // namespace metaexp::cli

int main(int argc, char** argv) { return metaexp::cli::run(argc, argv); }
