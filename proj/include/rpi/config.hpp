#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rpi/agents.hpp"
#include "rpi/cartpole.hpp"
#include "rpi/evalbench.hpp"

namespace rpi {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct EvalConfig {
  int every = 2000;
  int rollouts = 100;
  std::optional<double> solve_threshold;  // nullopt: 95% of the ceiling
};

struct SweepConfig {
  std::vector<std::pair<int, int>> architectures;
  std::vector<std::pair<PhysicsParameter, double>> perturbations;
};

/// Everything one experiment needs: environment, agent, evaluation protocol,
/// seeds, output location, and optional sweep lists. Parsed from a flat
/// sectioned key=value file; unknown sections or keys are hard errors.
struct ExperimentConfig {
  EnvSpec env = cartpole_discrete_spec();
  AgentConfig agent = AgentConfig::defaults_for(Algorithm::Dqn);
  EvalConfig eval;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string output_dir;
  SweepConfig sweep;

  double resolved_solve_threshold() const {
    return eval.solve_threshold ? *eval.solve_threshold
                                : default_solve_threshold(env, agent.discount);
  }

  /// Canonical text of the semantic fields (environment, agent, evaluation).
  /// Identical behavior implies identical text, so its hash is the run
  /// identity used for aggregation compatibility and RNG lineage.
  std::string semantic_canonical() const {
    std::ostringstream out;
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return std::string(buf);
    };
    out << "env.kind=" << (env.kind == EnvKind::CartpoleDiscrete ? "cartpole_discrete"
                                                                 : "cartpole_continuous")
        << "\nenv.gravity=" << num(env.params.gravity)
        << "\nenv.cart_mass=" << num(env.params.cart_mass)
        << "\nenv.pole_mass=" << num(env.params.pole_mass)
        << "\nenv.pole_half_length=" << num(env.params.pole_half_length)
        << "\nenv.force_mag=" << num(env.params.force_mag)
        << "\nenv.timestep=" << num(env.params.timestep)
        << "\nenv.theta_threshold=" << num(env.theta_threshold)
        << "\nenv.x_threshold=" << num(env.x_threshold)
        << "\nenv.max_episode_steps=" << env.max_episode_steps
        << "\nagent.algorithm=" << to_string(agent.algorithm)
        << "\nagent.hidden=" << agent.critic_hidden1 << "-" << agent.critic_hidden2
        << "\nagent.actor_hidden=" << agent.actor_hidden1 << "-" << agent.actor_hidden2
        << "\nagent.lr_critic=" << num(agent.lr_critic)
        << "\nagent.lr_actor=" << num(agent.lr_actor)
        << "\nagent.batch_size=" << agent.batch_size
        << "\nagent.buffer_capacity=" << agent.buffer_capacity
        << "\nagent.target_update="
        << (agent.target_update.mode == TargetUpdate::Mode::Hard ? "hard" : "polyak")
        << "\nagent.target_sync_period=" << agent.target_update.period
        << "\nagent.polyak_tau=" << num(agent.target_update.tau)
        << "\nagent.eps_start=" << num(agent.eps_start)
        << "\nagent.eps_end=" << num(agent.eps_end)
        << "\nagent.eps_decay_steps=" << agent.eps_decay_steps
        << "\nagent.gauss_sigma=" << num(agent.gauss_sigma)
        << "\nagent.td3_policy_noise=" << num(agent.td3_policy_noise)
        << "\nagent.td3_noise_clip=" << num(agent.td3_noise_clip)
        << "\nagent.td3_policy_delay=" << agent.td3_policy_delay
        << "\nagent.discount=" << num(agent.discount)
        << "\nagent.total_steps=" << agent.total_steps
        << "\nagent.learning_starts=" << agent.learning_starts
        << "\nagent.update_every=" << agent.update_every
        << "\nagent.grad_steps_per_update=" << agent.grad_steps_per_update;
    if (agent.rpi) {
      out << "\nagent.rpi_c=" << num(agent.rpi->c)
          << "\nagent.rpi_lambda1=" << num(agent.rpi->lambda1)
          << "\nagent.rpi_lambda2=" << num(agent.rpi->lambda2)
          << "\nagent.rpi_q_min=" << num(agent.rpi->q_min)
          << "\nagent.rpi_double_target=" << (agent.rpi_dqn_double_target ? 1 : 0);
    }
    out << "\neval.every=" << eval.every
        << "\neval.rollouts=" << eval.rollouts
        << "\neval.solve_threshold=" << num(resolved_solve_threshold()) << "\n";
    return out.str();
  }

  std::string fingerprint() const { return hex64(fnv1a64(semantic_canonical())); }

  /// Canonical text of the entire config, seeds and sweep lists included.
  std::string full_canonical() const {
    std::ostringstream out;
    out << semantic_canonical();
    out << "run.seeds=";
    for (std::size_t i = 0; i < seeds.size(); ++i)
      out << (i ? "," : "") << seeds[i];
    out << "\nrun.output_dir=" << output_dir << "\n";
    for (auto& [h1, h2] : sweep.architectures)
      out << "sweep.arch=" << h1 << "-" << h2 << "\n";
    for (auto& [param, factor] : sweep.perturbations) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", factor);
      out << "sweep.perturb=" << to_string(param) << ":" << buf << "\n";
    }
    return out.str();
  }

  std::string provenance_hash() const { return hex64(fnv1a64(full_canonical())); }

  ExperimentConfig with_architecture(int h1, int h2) const {
    ExperimentConfig c = *this;
    c.agent.critic_hidden1 = h1;
    c.agent.critic_hidden2 = h2;
    c.agent.actor_hidden1 = h1;
    c.agent.actor_hidden2 = h2;
    c.sweep = {};
    return c;
  }

  ExperimentConfig with_perturbation(PhysicsParameter param, double factor) const {
    ExperimentConfig c = *this;
    c.env = perturbed_spec(env, param, factor);
    c.sweep = {};
    return c;
  }

  void validate() const {
    env.validate();
    agent.validate();
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    if (eval.every < 1 || eval.rollouts < 1)
      throw std::invalid_argument("config: eval.every and eval.rollouts must be >= 1");
  }
};

// --- Parsing -----------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline double to_double(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
  if (pos != v.size())
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  return d;
}

inline std::int64_t to_int(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  long long d;
  try {
    d = std::stoll(v, &pos);
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  }
  if (pos != v.size())
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  return d;
}

inline bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::pair<int, int> parse_hidden_pair(const std::string& v, const std::string& key) {
  auto dash = v.find('-');
  if (dash == std::string::npos)
    throw std::invalid_argument("config: " + key + " must look like '64-64', got '" + v + "'");
  return {static_cast<int>(to_int(trim(v.substr(0, dash)), key)),
          static_cast<int>(to_int(trim(v.substr(dash + 1)), key))};
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline PhysicsParameter parse_physics_parameter(const std::string& s) {
  if (s == "gravity") return PhysicsParameter::Gravity;
  if (s == "cart_mass") return PhysicsParameter::CartMass;
  if (s == "pole_mass") return PhysicsParameter::PoleMass;
  throw std::invalid_argument("config: unknown physics parameter '" + s + "'");
}

}  // namespace detail

/// Seed lists accept single values, commas, and inclusive ranges: "0-9",
/// "0,1,2", "0-3,7".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& part : detail::split(text, ',')) {
    if (part.empty()) throw std::invalid_argument("config: empty entry in seed list");
    auto dash = part.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(static_cast<std::uint64_t>(detail::to_int(part, "seeds")));
    } else {
      std::int64_t lo = detail::to_int(detail::trim(part.substr(0, dash)), "seeds");
      std::int64_t hi = detail::to_int(detail::trim(part.substr(dash + 1)), "seeds");
      if (hi < lo) throw std::invalid_argument("config: descending seed range '" + part + "'");
      for (std::int64_t s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  return seeds;
}

/// Strict config parser. Layout:
///   [env] kind plus optional physics/threshold overrides
///   [agent] algorithm, hidden sizes, optimizer and loss settings
///   [eval] cadence, rollouts, solve threshold ("auto" allowed)
///   [run] seeds, output_dir
///   [sweep] architectures or perturbations
/// '#' starts a comment. Unknown sections or keys reject the whole file.
inline ExperimentConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::map<std::string, std::string>> sections;
  {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::invalid_argument("config line " + std::to_string(lineno) +
                                      ": malformed section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        if (section != "env" && section != "agent" && section != "eval" &&
            section != "run" && section != "sweep")
          throw std::invalid_argument("config: unknown section [" + section + "]");
        sections[section];
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key = value");
      if (section.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": key outside any section");
      std::string key = detail::trim(line.substr(0, eq));
      std::string val = detail::trim(line.substr(eq + 1));
      if (!sections[section].emplace(key, val).second)
        throw std::invalid_argument("config: duplicate key '" + key + "' in [" + section + "]");
    }
  }

  auto take = [&](const std::string& sec, const std::string& key) -> std::optional<std::string> {
    auto s = sections.find(sec);
    if (s == sections.end()) return std::nullopt;
    auto it = s->second.find(key);
    if (it == s->second.end()) return std::nullopt;
    std::string v = it->second;
    s->second.erase(it);
    return v;
  };

  ExperimentConfig cfg;

  // [env]
  std::string kind = take("env", "kind").value_or("cartpole_discrete");
  if (kind == "cartpole_discrete") cfg.env = cartpole_discrete_spec();
  else if (kind == "cartpole_continuous") cfg.env = cartpole_continuous_spec();
  else throw std::invalid_argument("config: unknown env kind '" + kind + "'");
  if (auto v = take("env", "gravity")) cfg.env.params.gravity = detail::to_double(*v, "gravity");
  if (auto v = take("env", "cart_mass")) cfg.env.params.cart_mass = detail::to_double(*v, "cart_mass");
  if (auto v = take("env", "pole_mass")) cfg.env.params.pole_mass = detail::to_double(*v, "pole_mass");
  if (auto v = take("env", "pole_half_length")) cfg.env.params.pole_half_length = detail::to_double(*v, "pole_half_length");
  if (auto v = take("env", "force_mag")) cfg.env.params.force_mag = detail::to_double(*v, "force_mag");
  if (auto v = take("env", "timestep")) cfg.env.params.timestep = detail::to_double(*v, "timestep");
  if (auto v = take("env", "theta_threshold")) cfg.env.theta_threshold = detail::to_double(*v, "theta_threshold");
  if (auto v = take("env", "x_threshold")) cfg.env.x_threshold = detail::to_double(*v, "x_threshold");
  if (auto v = take("env", "max_episode_steps")) cfg.env.max_episode_steps = static_cast<int>(detail::to_int(*v, "max_episode_steps"));

  // [agent]
  Algorithm alg = parse_algorithm(take("agent", "algorithm").value_or("dqn"));
  cfg.agent = AgentConfig::defaults_for(alg);
  if (auto v = take("agent", "hidden")) {
    auto [h1, h2] = detail::parse_hidden_pair(*v, "hidden");
    cfg.agent.critic_hidden1 = h1;
    cfg.agent.critic_hidden2 = h2;
    cfg.agent.actor_hidden1 = h1;
    cfg.agent.actor_hidden2 = h2;
  }
  if (auto v = take("agent", "actor_hidden")) {
    auto [h1, h2] = detail::parse_hidden_pair(*v, "actor_hidden");
    cfg.agent.actor_hidden1 = h1;
    cfg.agent.actor_hidden2 = h2;
  }
  if (auto v = take("agent", "lr_critic")) cfg.agent.lr_critic = detail::to_double(*v, "lr_critic");
  if (auto v = take("agent", "lr_actor")) cfg.agent.lr_actor = detail::to_double(*v, "lr_actor");
  if (auto v = take("agent", "batch_size")) cfg.agent.batch_size = static_cast<int>(detail::to_int(*v, "batch_size"));
  if (auto v = take("agent", "buffer_capacity")) cfg.agent.buffer_capacity = static_cast<int>(detail::to_int(*v, "buffer_capacity"));
  if (auto v = take("agent", "target_update")) {
    if (*v == "hard") cfg.agent.target_update.mode = TargetUpdate::Mode::Hard;
    else if (*v == "polyak") cfg.agent.target_update.mode = TargetUpdate::Mode::Polyak;
    else throw std::invalid_argument("config: target_update must be 'hard' or 'polyak'");
  }
  if (auto v = take("agent", "target_sync_period")) cfg.agent.target_update.period = static_cast<int>(detail::to_int(*v, "target_sync_period"));
  if (auto v = take("agent", "polyak_tau")) cfg.agent.target_update.tau = detail::to_double(*v, "polyak_tau");
  if (auto v = take("agent", "eps_start")) cfg.agent.eps_start = detail::to_double(*v, "eps_start");
  if (auto v = take("agent", "eps_end")) cfg.agent.eps_end = detail::to_double(*v, "eps_end");
  if (auto v = take("agent", "eps_decay_steps")) cfg.agent.eps_decay_steps = static_cast<int>(detail::to_int(*v, "eps_decay_steps"));
  if (auto v = take("agent", "gauss_sigma")) cfg.agent.gauss_sigma = detail::to_double(*v, "gauss_sigma");
  if (auto v = take("agent", "td3_policy_noise")) cfg.agent.td3_policy_noise = detail::to_double(*v, "td3_policy_noise");
  if (auto v = take("agent", "td3_noise_clip")) cfg.agent.td3_noise_clip = detail::to_double(*v, "td3_noise_clip");
  if (auto v = take("agent", "td3_policy_delay")) cfg.agent.td3_policy_delay = static_cast<int>(detail::to_int(*v, "td3_policy_delay"));
  if (auto v = take("agent", "discount")) cfg.agent.discount = detail::to_double(*v, "discount");
  if (auto v = take("agent", "total_steps")) cfg.agent.total_steps = static_cast<int>(detail::to_int(*v, "total_steps"));
  if (auto v = take("agent", "learning_starts")) cfg.agent.learning_starts = static_cast<int>(detail::to_int(*v, "learning_starts"));
  if (auto v = take("agent", "update_every")) cfg.agent.update_every = static_cast<int>(detail::to_int(*v, "update_every"));
  if (auto v = take("agent", "grad_steps_per_update")) cfg.agent.grad_steps_per_update = static_cast<int>(detail::to_int(*v, "grad_steps_per_update"));
  for (const char* key : {"rpi_c", "rpi_lambda1", "rpi_lambda2", "rpi_q_min", "rpi_double_target"}) {
    if (auto v = take("agent", key)) {
      if (!cfg.agent.rpi)
        throw std::invalid_argument(std::string("config: ") + key +
                                    " is only valid for rpi_dqn/rpi_ddpg");
      std::string k = key;
      if (k == "rpi_c") cfg.agent.rpi->c = detail::to_double(*v, k);
      else if (k == "rpi_lambda1") cfg.agent.rpi->lambda1 = detail::to_double(*v, k);
      else if (k == "rpi_lambda2") cfg.agent.rpi->lambda2 = detail::to_double(*v, k);
      else if (k == "rpi_q_min") cfg.agent.rpi->q_min = detail::to_double(*v, k);
      else cfg.agent.rpi_dqn_double_target = detail::to_bool(*v, k);
    }
  }

  // [eval]
  if (auto v = take("eval", "every")) cfg.eval.every = static_cast<int>(detail::to_int(*v, "every"));
  if (auto v = take("eval", "rollouts")) cfg.eval.rollouts = static_cast<int>(detail::to_int(*v, "rollouts"));
  if (auto v = take("eval", "solve_threshold")) {
    if (*v != "auto") cfg.eval.solve_threshold = detail::to_double(*v, "solve_threshold");
  }

  // [run]
  if (auto v = take("run", "seeds")) cfg.seeds = parse_seed_list(*v);
  if (auto v = take("run", "output_dir")) cfg.output_dir = *v;

  // [sweep]
  if (auto v = take("sweep", "architectures")) {
    for (const std::string& part : detail::split(*v, ','))
      cfg.sweep.architectures.push_back(detail::parse_hidden_pair(part, "architectures"));
    if (cfg.sweep.architectures.empty())
      throw std::invalid_argument("config: empty architectures list");
  }
  if (auto v = take("sweep", "perturbations")) {
    for (const std::string& part : detail::split(*v, ',')) {
      auto colon = part.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("config: perturbation must look like 'gravity:2.0'");
      cfg.sweep.perturbations.emplace_back(
          detail::parse_physics_parameter(detail::trim(part.substr(0, colon))),
          detail::to_double(detail::trim(part.substr(colon + 1)), "perturbations"));
    }
    if (cfg.sweep.perturbations.empty())
      throw std::invalid_argument("config: empty perturbations list");
  }

  // Anything left is a typo; reject loudly.
  for (const auto& [section, keys] : sections)
    if (!keys.empty())
      throw std::invalid_argument("config: unknown key '" + keys.begin()->first +
                                  "' in [" + section + "]");

  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace rpi
