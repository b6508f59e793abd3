#include "config_io.hpp"

#include <cstdint>
#include <limits>
#include <string>

#include "metaexp/errors.hpp"

namespace metaexp::cli {

namespace {

using nlohmann::json;
using meta::MetaStepConfig;
using harness::ExperimentConfig;

[[noreturn]] void bad_key(const std::string& path) {
  throw ConfigError("config key '" + path + "' is not recognised");
}

[[noreturn]] void bad_type(const std::string& path, const char* want) {
  throw ConfigError("config key '" + path + "' must be " + std::string(want));
}

double num_at(const json& v, const std::string& path) {
  if (!v.is_number()) bad_type(path, "a number");
  return v.get<double>();
}

int int_at(const json& v, const std::string& path) {
  if (!v.is_number_integer()) bad_type(path, "an integer");
  const auto x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    bad_type(path, "a 32-bit integer");
  }
  return static_cast<int>(x);
}

std::int64_t i64_at(const json& v, const std::string& path) {
  if (!v.is_number_integer()) bad_type(path, "an integer");
  return v.get<std::int64_t>();
}

std::uint64_t u64_at(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  bad_type(path, "a non-negative integer");
}

bool bool_at(const json& v, const std::string& path) {
  if (!v.is_boolean()) bad_type(path, "a boolean");
  return v.get<bool>();
}

std::string str_at(const json& v, const std::string& path) {
  if (!v.is_string()) bad_type(path, "a string");
  return v.get<std::string>();
}

const json& obj_at(const json& v, const std::string& path) {
  if (!v.is_object()) bad_type(path, "an object");
  return v;
}

[[noreturn]] void bad_choice(const std::string& path, const std::string& got,
                             const char* choices) {
  throw ConfigError("config key '" + path + "': '" + got + "' is not one of " + choices);
}

meta::InnerKind inner_kind_at(const json& v, const std::string& path) {
  const std::string s = str_at(v, path);
  for (meta::InnerKind k :
       {meta::InnerKind::sgd_vpg, meta::InnerKind::sgd_ppo, meta::InnerKind::random_perturb,
        meta::InnerKind::eps_greedy, meta::InnerKind::sign_flip, meta::InnerKind::perpendicular}) {
    if (s == meta::inner_kind_name(k)) return k;
  }
  bad_choice(path, s, "sgd_vpg|sgd_ppo|random_perturb|eps_greedy|sign_flip|perpendicular");
}

meta::CreditMode credit_mode_at(const json& v, const std::string& path) {
  const std::string s = str_at(v, path);
  if (s == "per_timestep") return meta::CreditMode::per_timestep;
  if (s == "dice_scalar") return meta::CreditMode::dice_scalar;
  bad_choice(path, s, "per_timestep|dice_scalar");
}

rl::SurrogateKind surrogate_kind_at(const json& v, const std::string& path) {
  const std::string s = str_at(v, path);
  if (s == "vpg") return rl::SurrogateKind::vpg;
  if (s == "ppo_clip") return rl::SurrogateKind::ppo_clip;
  if (s == "cpi") return rl::SurrogateKind::cpi;
  bad_choice(path, s, "vpg|ppo_clip|cpi");
}

env::ObsMode obs_mode_at(const json& v, const std::string& path) {
  const std::string s = str_at(v, path);
  if (s == "local3x3") return env::ObsMode::local3x3;
  if (s == "global") return env::ObsMode::global;
  bad_choice(path, s, "local3x3|global");
}

const char* surrogate_kind_str(rl::SurrogateKind k) {
  switch (k) {
    case rl::SurrogateKind::vpg: return "vpg";
    case rl::SurrogateKind::ppo_clip: return "ppo_clip";
    default: return "cpi";
  }
}

const char* obs_mode_str(env::ObsMode m) {
  return m == env::ObsMode::local3x3 ? "local3x3" : "global";
}

void apply_meta(meta::MetaConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "lambda_explore") c.lambda_explore = num_at(v, path);
    else if (key == "beta") c.beta = num_at(v, path);
    else if (key == "gamma") c.gamma = num_at(v, path);
    else if (key == "credit_mode") c.credit_mode = credit_mode_at(v, path);
    else if (key == "explore_episodes") c.explore_episodes = int_at(v, path);
    else if (key == "exploit_episodes") c.exploit_episodes = int_at(v, path);
    else if (key == "outer_kind") c.outer_kind = surrogate_kind_at(v, path);
    else if (key == "clip_eps") c.clip_eps = num_at(v, path);
    else if (key == "ent_coeff") c.ent_coeff = num_at(v, path);
    else if (key == "meta_grad_steps") c.meta_grad_steps = int_at(v, path);
    else if (key == "max_grad_norm") c.max_grad_norm = num_at(v, path);
    else if (key == "normalize_adv") c.normalize_adv = bool_at(v, path);
    else bad_key(path);
  }
}

void apply_inner(meta::InnerOperatorConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "kind") c.kind = inner_kind_at(v, path);
    else if (key == "alpha") c.alpha = num_at(v, path);
    else if (key == "inner_steps") c.inner_steps = int_at(v, path);
    else if (key == "simple_sampling") c.simple_sampling = bool_at(v, path);
    else if (key == "sigma") c.sigma = num_at(v, path);
    else if (key == "eps_op") c.eps_op = num_at(v, path);
    else if (key == "gamma") c.gamma = num_at(v, path);
    else if (key == "clip_eps") c.clip_eps = num_at(v, path);
    else if (key == "ent_coeff") c.ent_coeff = num_at(v, path);
    else if (key == "normalize_adv") c.normalize_adv = bool_at(v, path);
    else bad_key(path);
  }
}

void apply_rl2(meta::Rl2Config& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "episodes_per_trial") c.episodes_per_trial = int_at(v, path);
    else if (key == "explore_episodes") c.explore_episodes = int_at(v, path);
    else if (key == "gamma") c.gamma = num_at(v, path);
    else if (key == "outer_kind") c.outer_kind = surrogate_kind_at(v, path);
    else if (key == "clip_eps") c.clip_eps = num_at(v, path);
    else if (key == "ent_coeff") c.ent_coeff = num_at(v, path);
    else if (key == "normalize_adv") c.normalize_adv = bool_at(v, path);
    else bad_key(path);
  }
}

void apply_krazy(env::KrazyConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "width") c.width = int_at(v, path);
    else if (key == "height") c.height = int_at(v, path);
    else if (key == "n_goal") c.n_goal = int_at(v, path);
    else if (key == "n_death") c.n_death = int_at(v, path);
    else if (key == "n_ice") c.n_ice = int_at(v, path);
    else if (key == "n_wall") c.n_wall = int_at(v, path);
    else if (key == "n_lock") c.n_lock = int_at(v, path);
    else if (key == "n_key") c.n_key = int_at(v, path);
    else if (key == "n_teleporter_pairs") c.n_teleporter_pairs = int_at(v, path);
    else if (key == "n_energy") c.n_energy = int_at(v, path);
    else if (key == "initial_energy") c.initial_energy = int_at(v, path);
    else if (key == "energy_refill") c.energy_refill = int_at(v, path);
    else if (key == "horizon") c.horizon = int_at(v, path);
    else bad_key(path);
  }
}

void apply_maze(env::MazeConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "size") c.size = int_at(v, path);
    else if (key == "wall_penalty") c.wall_penalty = num_at(v, path);
    else if (key == "horizon") c.horizon = int_at(v, path);
    else bad_key(path);
  }
}

void apply_pointmass(env::PointmassConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "step") c.step = num_at(v, path);
    else if (key == "goal_radius") c.goal_radius = num_at(v, path);
    else if (key == "horizon") c.horizon = int_at(v, path);
    else bad_key(path);
  }
}

void apply_env_config(env::EnvConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "obs_mode") c.obs_mode = obs_mode_at(v, path);
    else if (key == "krazy") apply_krazy(c.krazy, v, path);
    else if (key == "maze") apply_maze(c.maze, v, path);
    else if (key == "pointmass") apply_pointmass(c.pointmass, v, path);
    else bad_key(path);
  }
}

void apply_harness(ExperimentConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, v] : obj_at(j, prefix).items()) {
    const std::string path = prefix + "." + key;
    if (key == "n_train_tasks") c.n_train_tasks = int_at(v, path);
    else if (key == "n_test_tasks") c.n_test_tasks = int_at(v, path);
    else if (key == "eval_every") c.eval_every = int_at(v, path);
    else if (key == "repeats") c.repeats = int_at(v, path);
    else if (key == "resample_hparams") c.resample_hparams = bool_at(v, path);
    else if (key == "mlp_hidden") c.mlp_hidden = int_at(v, path);
    else if (key == "mlp_bias_dim") c.mlp_bias_dim = int_at(v, path);
    else if (key == "gru_hidden") c.gru_hidden = int_at(v, path);
    else if (key == "n_workers") c.n_workers = int_at(v, path);
    else bad_key(path);
  }
}

}  // namespace

harness::ExperimentConfig config_from_json(const nlohmann::json& tree) {
  ExperimentConfig cfg;
  for (const auto& [key, v] : obj_at(tree, "(root)").items()) {
    if (key == "algo") {
      const std::string s = str_at(v, key);
      const auto a = meta::algo_from_name(s);
      if (!a) bad_choice(key, s, "maml|emaml|rl2|erl2");
      cfg.step.algo = *a;
    } else if (key == "env") {
      const std::string s = str_at(v, key);
      const auto f = env::family_from_name(s);
      if (!f) bad_choice(key, s, "krazy|maze|pointmass");
      cfg.family = *f;
    } else if (key == "seed") {
      cfg.step.seed = u64_at(v, key);
    } else if (key == "budget") {
      cfg.budget = i64_at(v, key);
    } else if (key == "horizon_override") {
      cfg.step.horizon_override = int_at(v, key);
    } else if (key == "meta") {
      apply_meta(cfg.step.meta, v, key);
    } else if (key == "inner") {
      apply_inner(cfg.step.inner, v, key);
    } else if (key == "rl2") {
      apply_rl2(cfg.step.rl2, v, key);
    } else if (key == "env_config") {
      apply_env_config(cfg.step.env, v, key);
    } else if (key == "harness") {
      apply_harness(cfg, v, key);
    } else {
      bad_key(key);
    }
  }
  return cfg;
}

nlohmann::json config_to_json(const harness::ExperimentConfig& cfg) {
  const MetaStepConfig& s = cfg.step;
  json j;
  j["algo"] = meta::algo_name(s.algo);
  j["env"] = env::family_name(cfg.family);
  j["seed"] = s.seed;
  j["budget"] = cfg.budget;
  j["horizon_override"] = s.horizon_override;
  j["meta"] = {{"lambda_explore", s.meta.lambda_explore},
               {"beta", s.meta.beta},
               {"gamma", s.meta.gamma},
               {"credit_mode", meta::credit_mode_name(s.meta.credit_mode)},
               {"explore_episodes", s.meta.explore_episodes},
               {"exploit_episodes", s.meta.exploit_episodes},
               {"outer_kind", surrogate_kind_str(s.meta.outer_kind)},
               {"clip_eps", s.meta.clip_eps},
               {"ent_coeff", s.meta.ent_coeff},
               {"meta_grad_steps", s.meta.meta_grad_steps},
               {"max_grad_norm", s.meta.max_grad_norm},
               {"normalize_adv", s.meta.normalize_adv}};
  j["inner"] = {{"kind", meta::inner_kind_name(s.inner.kind)},
                {"alpha", s.inner.alpha},
                {"inner_steps", s.inner.inner_steps},
                {"simple_sampling", s.inner.simple_sampling},
                {"sigma", s.inner.sigma},
                {"eps_op", s.inner.eps_op},
                {"gamma", s.inner.gamma},
                {"clip_eps", s.inner.clip_eps},
                {"ent_coeff", s.inner.ent_coeff},
                {"normalize_adv", s.inner.normalize_adv}};
  j["rl2"] = {{"episodes_per_trial", s.rl2.episodes_per_trial},
              {"explore_episodes", s.rl2.explore_episodes},
              {"gamma", s.rl2.gamma},
              {"outer_kind", surrogate_kind_str(s.rl2.outer_kind)},
              {"clip_eps", s.rl2.clip_eps},
              {"ent_coeff", s.rl2.ent_coeff},
              {"normalize_adv", s.rl2.normalize_adv}};
  j["env_config"] = {{"obs_mode", obs_mode_str(s.env.obs_mode)},
                     {"krazy",
                      {{"width", s.env.krazy.width},
                       {"height", s.env.krazy.height},
                       {"n_goal", s.env.krazy.n_goal},
                       {"n_death", s.env.krazy.n_death},
                       {"n_ice", s.env.krazy.n_ice},
                       {"n_wall", s.env.krazy.n_wall},
                       {"n_lock", s.env.krazy.n_lock},
                       {"n_key", s.env.krazy.n_key},
                       {"n_teleporter_pairs", s.env.krazy.n_teleporter_pairs},
                       {"n_energy", s.env.krazy.n_energy},
                       {"initial_energy", s.env.krazy.initial_energy},
                       {"energy_refill", s.env.krazy.energy_refill},
                       {"horizon", s.env.krazy.horizon}}},
                     {"maze",
                      {{"size", s.env.maze.size},
                       {"wall_penalty", s.env.maze.wall_penalty},
                       {"horizon", s.env.maze.horizon}}},
                     {"pointmass",
                      {{"step", s.env.pointmass.step},
                       {"goal_radius", s.env.pointmass.goal_radius},
                       {"horizon", s.env.pointmass.horizon}}}};
  j["harness"] = {{"n_train_tasks", cfg.n_train_tasks},
                  {"n_test_tasks", cfg.n_test_tasks},
                  {"eval_every", cfg.eval_every},
                  {"repeats", cfg.repeats},
                  {"resample_hparams", cfg.resample_hparams},
                  {"mlp_hidden", cfg.mlp_hidden},
                  {"mlp_bias_dim", cfg.mlp_bias_dim},
                  {"gru_hidden", cfg.gru_hidden},
                  {"n_workers", cfg.n_workers}};
  return j;
}

}  // namespace metaexp::cli
