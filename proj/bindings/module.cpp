#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "collapse/bounds.hpp"
#include "collapse/config.hpp"
#include "collapse/divergence.hpp"
#include "collapse/gmm.hpp"
#include "collapse/observability.hpp"
#include "collapse/recursion.hpp"
#include "collapse/rng.hpp"
#include "collapse/score_field.hpp"

namespace py = pybind11;
using namespace collapse;

namespace {

RunConfig parse_config(const std::string& json_text, std::optional<uint64_t> seed) {
  RunConfig cfg = json_text.empty() ? RunConfig{} : config_from_json(json_text);
  if (seed) cfg.master_seed = *seed;
  const auto errs = validate(cfg);
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
  return cfg;
}

py::dict record_to_dict(const GenerationRecord& r) {
  py::dict d;
  d["seed"] = r.seed;
  d["generation"] = r.generation;
  d["alpha"] = r.alpha;
  d["eps_star_sq"] = r.eps_star_sq;
  d["eps_star_se"] = r.eps_star_se;
  d["eps_hat_sq"] = r.eps_hat_sq;
  d["eps_hat_se"] = r.eps_hat_se;
  d["eta"] = r.eta;
  d["eta_se"] = r.eta_se;
  d["i_chi2"] = r.i_chi2;
  d["i_chi2_se"] = r.i_chi2_se;
  d["i_kl"] = r.i_kl;
  d["i_kl_se"] = r.i_kl_se;
  d["d_chi2"] = r.d_chi2;
  d["d_chi2_se"] = r.d_chi2_se;
  d["flags"] = r.flags;
  d["contraction_lhs"] = r.contraction_lhs;
  d["contraction_lhs_se"] = r.contraction_lhs_se;
  d["n_fresh"] = r.n_fresh;
  d["n_target_centers"] = r.n_target_centers;
  return d;
}

py::dict report_to_dict(const BoundReport& rep) {
  py::dict d;
  d["name"] = rep.name;
  d["n_pass"] = rep.n_pass;
  d["n_fail"] = rep.n_fail;
  d["gating"] = rep.gating;
  d["notes"] = rep.notes;
  py::list rows;
  for (const auto& row : rep.rows) {
    py::dict rd;
    rd["seed"] = row.seed;
    rd["generation"] = row.generation;
    rd["label"] = row.label;
    rd["lhs"] = row.lhs;
    rd["rhs"] = row.rhs;
    rd["combined_se"] = row.combined_se;
    rd["margin"] = row.margin;
    rd["pass"] = row.pass;
    rows.append(rd);
  }
  d["rows"] = rows;
  if (rep.has_fit) {
    py::dict fd;
    fd["slope"] = rep.fit.slope;
    fd["intercept"] = rep.fit.intercept;
    fd["r2"] = rep.fit.r2;
    fd["valid"] = rep.fit.valid;
    d["fit"] = fd;
  }
  return d;
}

std::vector<GenerationRecord> records_from_dicts(const py::sequence& rows) {
  std::vector<GenerationRecord> out;
  out.reserve(py::len(rows));
  for (const auto& item : rows) {
    py::dict d = py::cast<py::dict>(item);
    GenerationRecord r;
    r.seed = py::cast<uint64_t>(d["seed"]);
    r.generation = py::cast<int>(d["generation"]);
    r.alpha = py::cast<double>(d["alpha"]);
    r.eps_star_sq = py::cast<double>(d["eps_star_sq"]);
    r.eps_star_se = py::cast<double>(d["eps_star_se"]);
    r.eps_hat_sq = py::cast<double>(d["eps_hat_sq"]);
    r.eps_hat_se = py::cast<double>(d["eps_hat_se"]);
    r.eta = py::cast<double>(d["eta"]);
    r.eta_se = py::cast<double>(d["eta_se"]);
    r.i_chi2 = py::cast<double>(d["i_chi2"]);
    r.i_chi2_se = py::cast<double>(d["i_chi2_se"]);
    r.i_kl = py::cast<double>(d["i_kl"]);
    r.i_kl_se = py::cast<double>(d["i_kl_se"]);
    r.d_chi2 = py::cast<double>(d["d_chi2"]);
    r.d_chi2_se = py::cast<double>(d["d_chi2_se"]);
    if (d.contains("flags")) r.flags = py::cast<std::string>(d["flags"]);
    if (d.contains("contraction_lhs")) r.contraction_lhs = py::cast<double>(d["contraction_lhs"]);
    if (d.contains("contraction_lhs_se"))
      r.contraction_lhs_se = py::cast<double>(d["contraction_lhs_se"]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "self-training diffusion laboratory core";
  m.attr("__version__") = "0.1.0";

  m.def(
      "default_config", [](const std::string& profile) { return to_json(profile_by_name(profile)); },
      py::arg("profile") = "desk", "Canonical JSON for a named profile (desk or paper).");

  m.def(
      "config_hash",
      [](const std::string& json_text) { return config_hash_hex(parse_config(json_text, {})); },
      py::arg("config"), "Hex hash of the canonical form of a config.");

  m.def(
      "run",
      [](const std::string& config, std::optional<uint64_t> seed, const std::string& store_dir) {
        const RunConfig cfg = parse_config(config, seed);
        RunArtifacts art;
        {
          py::gil_scoped_release release;
          art = run_recursion(cfg, cfg.master_seed, store_dir);
        }
        py::dict out;
        py::list records;
        for (const auto& r : art.records) records.append(record_to_dict(r));
        out["records"] = records;
        out["final_d_chi2"] = art.final_d_chi2;
        out["final_d_chi2_se"] = art.final_d_chi2_se;
        py::list stores;
        for (const auto& p : art.stores) stores.append(p.string());
        out["stores"] = stores;
        return out;
      },
      py::arg("config") = "", py::arg("seed") = py::none(), py::arg("store_dir") = "",
      "One self-training recursion; returns per-generation records and the final divergence.");

  m.def(
      "heatmap",
      [](const std::string& config, std::optional<uint64_t> seed, int horizon) {
        const RunConfig cfg = parse_config(config, seed);
        if (horizon <= 0) horizon = std::min(8, cfg.n_generations);
        HeatmapResult hm;
        {
          py::gil_scoped_release release;
          hm = heatmap(cfg, cfg.master_seed, horizon);
        }
        py::dict out;
        out["contrib"] = Mat(hm.contrib);
        out["baseline_d"] = hm.baseline_d;
        out["horizon"] = hm.horizon;
        return out;
      },
      py::arg("config") = "", py::arg("seed") = py::none(), py::arg("horizon") = 0,
      "Ablation contribution matrix: row k, column n holds generation k's share of the "
      "divergence at generation n.");

  m.def(
      "ablation_contribution",
      [](const std::string& config, std::optional<uint64_t> seed, int ablate_at, int horizon) {
        const RunConfig cfg = parse_config(config, seed);
        py::gil_scoped_release release;
        return ablation_contribution(cfg, cfg.master_seed, ablate_at, horizon);
      },
      py::arg("config"), py::arg("seed"), py::arg("ablate_at"), py::arg("horizon"),
      "Divergence change at `horizon` when generation `ablate_at`'s model is replaced by a "
      "reference.");

  m.def(
      "probe",
      [](const std::string& config, std::optional<uint64_t> seed) {
        const RunConfig cfg = parse_config(config, seed);
        const auto gmm = cfg.data_mixture();
        auto base = std::make_shared<AnalyticScoreField>(gmm);
        ProbeConfig pcfg;
        pcfg.target_energy = cfg.probe_energy;
        pcfg.tolerance = cfg.probe_tolerance;
        pcfg.n_paths = cfg.probe_paths;
        pcfg.schedule = cfg.schedule();
        pcfg.feature_dim = cfg.feature_dim;
        pcfg.ridge = cfg.eta_ridge;
        SeqRng shape_rng(stream_key(cfg.master_seed, "probe-shape"));
        const std::vector<Perturbation> classes = {
            Perturbation::aligned(0.3),
            Perturbation::random_linear(cfg.dim, 0.3, shape_rng),
            Perturbation::time_only(0.5, 1.0),
            Perturbation::aligned(0.0),
        };
        std::vector<ProbeRow> rows;
        {
          py::gil_scoped_release release;
          rows = perturbation_probe(base, classes, pcfg, cfg.master_seed);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["perturbation"] = r.perturbation;
          d["scale"] = r.scale;
          d["eps_star_sq"] = r.eps_star_sq;
          d["eps_star_se"] = r.eps_star_se;
          d["eta"] = r.eta.eta;
          d["eta_se"] = r.eta.std_error;
          d["seed"] = r.seed;
          out.append(d);
        }
        return out;
      },
      py::arg("config") = "", py::arg("seed") = py::none(),
      "Equal-energy perturbation classes compared by observed-error fraction.");

  m.def(
      "check_bounds",
      [](const py::sequence& rows) {
        const auto records = records_from_dicts(rows);
        py::list out;
        out.append(report_to_dict(check_upper(records)));
        out.append(report_to_dict(check_lower(records)));
        out.append(report_to_dict(check_sandwich(records)));
        return out;
      },
      py::arg("records"),
      "Upper, lower, and sandwich bound reports for a list of generation records.");

  m.def("discounted_sum", &discounted_sum, py::arg("eps_sq"), py::arg("alpha"),
        "Discounted error accumulation S_{N+1} = eps_sq[N] + (1-alpha)^2 S_N; entry k holds "
        "S_{k+1}.");

  m.def(
      "gaussian_chi2",
      [](const Vec& m0, double v0, const Vec& m1, double v1) {
        return gaussian_chi2(m0, v0, m1, v1);
      },
      py::arg("m0"), py::arg("v0"), py::arg("m1"), py::arg("v1"),
      "chi^2(N(m0, v0 I) || N(m1, v1 I)); +inf when 2 v1 <= v0.");

  m.def(
      "gaussian_kl",
      [](const Vec& m0, double v0, const Vec& m1, double v1) {
        return gaussian_kl(m0, v0, m1, v1);
      },
      py::arg("m0"), py::arg("v0"), py::arg("m1"), py::arg("v1"),
      "KL(N(m0, v0 I) || N(m1, v1 I)).");

  m.def(
      "sample_mixture",
      [](const std::string& config, int64_t n, uint64_t key) {
        const RunConfig cfg = parse_config(config, {});
        SeqRng rng(key);
        return sample(cfg.data_mixture(), n, rng);
      },
      py::arg("config"), py::arg("n"), py::arg("key"),
      "Draw n points from the configured data mixture using a deterministic stream key.");

  m.def(
      "analytic_score",
      [](const std::string& config, const Mat& x, double t) {
        const RunConfig cfg = parse_config(config, {});
        AnalyticScoreField field(cfg.data_mixture());
        Mat out;
        field.eval(x, t, out);
        return out;
      },
      py::arg("config"), py::arg("x"), py::arg("t"),
      "Score of the diffused data mixture at time t, evaluated row-wise.");
}
