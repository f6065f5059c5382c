#include "collapse/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "collapse/rng.hpp"

namespace collapse {

namespace {

using nlohmann::json;

// One table drives serialization, parsing, and unknown-key rejection.
template <typename Fn>
void for_each_field(RunConfig& c, Fn&& fn) {
  fn("dim", c.dim);
  fn("n_train", c.n_train);
  fn("n_generations", c.n_generations);
  fn("n_runs", c.n_runs);
  fn("alpha", c.alpha);
  fn("master_seed", c.master_seed);
  fn("data_sigma", c.data_sigma);
  fn("horizon", c.horizon);
  fn("t_min", c.t_min);
  fn("n_steps", c.n_steps);
  fn("bandwidth", c.bandwidth);
  fn("n_eval", c.n_eval);
  fn("n_girsanov_paths", c.n_girsanov_paths);
  fn("n_energy_paths", c.n_energy_paths);
  fn("feature_dim", c.feature_dim);
  fn("eta_ridge", c.eta_ridge);
  fn("eta_folds", c.eta_folds);
  fn("analytic_reference", c.analytic_reference);
  fn("probe_energy", c.probe_energy);
  fn("probe_tolerance", c.probe_tolerance);
  fn("probe_paths", c.probe_paths);
  fn("probe_runs", c.probe_runs);
}

void assign_field(const json& v, const char* key, int& out) {
  if (!v.is_number_integer())
    throw std::runtime_error(std::string("config: field '") + key + "' must be an integer");
  out = v.get<int>();
}

void assign_field(const json& v, const char* key, uint64_t& out) {
  if (!v.is_number_unsigned() && !v.is_number_integer())
    throw std::runtime_error(std::string("config: field '") + key + "' must be a non-negative integer");
  if (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0)
    throw std::runtime_error(std::string("config: field '") + key + "' must be a non-negative integer");
  out = v.get<uint64_t>();
}

void assign_field(const json& v, const char* key, double& out) {
  if (!v.is_number())
    throw std::runtime_error(std::string("config: field '") + key + "' must be a number");
  out = v.get<double>();
}

void assign_field(const json& v, const char* key, bool& out) {
  if (!v.is_boolean())
    throw std::runtime_error(std::string("config: field '") + key + "' must be a boolean");
  out = v.get<bool>();
}

}  // namespace

DiffusionSchedule RunConfig::schedule() const {
  DiffusionSchedule s;
  s.T = horizon;
  s.t0 = t_min;
  s.n_steps = n_steps;
  s.h = bandwidth;
  return s;
}

GaussianMixture RunConfig::data_mixture() const {
  return GaussianMixture::five_cluster(dim, data_sigma);
}

RunConfig desk_profile() { return RunConfig{}; }

RunConfig paper_profile() {
  RunConfig c;
  c.n_train = 100000;
  c.n_generations = 20;
  c.n_steps = 500;
  c.n_eval = 50000;
  c.n_girsanov_paths = 5000;
  c.n_energy_paths = 5000;
  return c;
}

RunConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw std::runtime_error("config: unknown profile '" + name + "' (want desk or paper)");
}

std::vector<std::string> validate(const RunConfig& cfg) {
  std::vector<std::string> bad;
  auto need = [&](bool ok, const char* msg) {
    if (!ok) bad.emplace_back(msg);
  };
  need(cfg.dim >= 2, "dim: need >= 2 (clusters live in the first two coordinates)");
  need(cfg.n_train >= 10, "n_train: need >= 10");
  need(cfg.n_generations >= 1, "n_generations: need >= 1");
  need(cfg.n_runs >= 1, "n_runs: need >= 1");
  need(cfg.alpha > 0.0 && cfg.alpha <= 1.0, "alpha: need in (0, 1]");
  need(cfg.data_sigma > 0.0, "data_sigma: need > 0");
  need(cfg.t_min > 0.0 && cfg.t_min < cfg.horizon, "t_min/horizon: need 0 < t_min < horizon");
  need(std::isfinite(cfg.horizon), "horizon: need finite");
  need(cfg.n_steps >= 2, "n_steps: need >= 2");
  need(cfg.bandwidth > 0.0, "bandwidth: need > 0");
  need(cfg.n_eval >= 100, "n_eval: need >= 100");
  need(cfg.n_girsanov_paths >= 100, "n_girsanov_paths: need >= 100");
  need(cfg.n_energy_paths >= 100, "n_energy_paths: need >= 100");
  need(cfg.n_energy_paths <= cfg.n_train,
       "n_energy_paths: need <= n_train (error stats ride a prefix of the sampling batch)");
  need(cfg.feature_dim >= 8, "feature_dim: need >= 8");
  need(cfg.eta_ridge > 0.0, "eta_ridge: need > 0");
  need(cfg.eta_folds >= 2, "eta_folds: need >= 2");
  need(cfg.probe_energy > 0.0, "probe_energy: need > 0");
  need(cfg.probe_tolerance > 0.0 && cfg.probe_tolerance < 1.0, "probe_tolerance: need in (0, 1)");
  need(cfg.probe_paths >= 100, "probe_paths: need >= 100");
  need(cfg.probe_runs >= 1, "probe_runs: need >= 1");
  return bad;
}

std::string to_json(const RunConfig& cfg) {
  json j;  // nlohmann objects iterate in key order, so dump() is canonical
  for_each_field(const_cast<RunConfig&>(cfg),
                 [&](const char* key, const auto& value) { j[key] = value; });
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config: top level must be an object");

  RunConfig cfg = base;
  std::vector<std::string> known;
  for_each_field(cfg, [&](const char* key, auto& field) {
    known.emplace_back(key);
    auto it = j.find(key);
    if (it != j.end()) assign_field(*it, key, field);
  });
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::runtime_error("config: unknown field '" + it.key() + "'");
  }
  return cfg;
}

uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(to_json(cfg)); }

std::string config_hash_hex(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  return buf;
}

}  // namespace collapse
