#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "collapse/bounds.hpp"
#include "collapse/config.hpp"
#include "collapse/ledger.hpp"
#include "collapse/observability.hpp"
#include "collapse/recursion.hpp"
#include "collapse/store.hpp"
#include "collapse/svg.hpp"

namespace fs = std::filesystem;
using namespace collapse;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// exit 2: the invocation or its inputs are malformed (vs. a failed run: 1)
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::string profile = "desk";
  uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* sub, CommonArgs& args, bool* seed_flag) {
  sub->add_option("--config", args.config_path, "JSON config file (overrides profile fields)");
  auto* seed_opt = sub->add_option("--seed", args.seed, "master seed override");
  sub->parse_complete_callback([seed_flag, seed_opt] { *seed_flag = seed_opt->count() > 0; });
  sub->add_option("--out", args.out_dir, "output directory");
  sub->add_option("--profile", args.profile, "base profile: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
}

RunConfig load_config(const CommonArgs& args) {
  RunConfig base;
  try {
    base = profile_by_name(args.profile);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  RunConfig cfg = base;
  if (!args.config_path.empty()) {
    std::ifstream f(args.config_path, std::ios::binary);
    if (!f) throw UsageError("cannot open config file: " + args.config_path);
    std::stringstream ss;
    ss << f.rdbuf();
    try {
      cfg = config_from_json(ss.str(), base);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (args.seed_given) cfg.master_seed = args.seed;
  const auto errs = validate(cfg);
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw UsageError(msg);
  }
  return cfg;
}

void write_manifest(const fs::path& out, const std::string& name, const std::string& command,
                    const RunConfig* cfg, const std::vector<fs::path>& artifacts) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  if (cfg) {
    j["config_hash"] = config_hash_hex(*cfg);
    j["master_seed"] = cfg->master_seed;
    j["config"] = nlohmann::json::parse(to_json(*cfg));
  }
  auto& arts = j["artifacts"] = nlohmann::json::array();
  for (const auto& p : artifacts) {
    if (!fs::exists(p)) throw std::runtime_error("manifest: artifact missing: " + p.string());
    arts.push_back(fs::relative(p, out).generic_string());
  }
  std::ofstream f(out / name, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("manifest: cannot open " + (out / name).string());
  f << j.dump(2) << "\n";
}

std::vector<GenerationRecord> read_ledger_with_extras(const fs::path& ledger_path) {
  std::vector<GenerationRecord> records;
  try {
    records = read_ledger_csv(ledger_path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  fs::path extras = ledger_path;
  extras.replace_filename(ledger_path.stem().string() + "_extras.csv");
  if (fs::exists(extras)) {
    try {
      read_extras_csv(extras, records);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  return records;
}

int cmd_run(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  std::vector<GenerationRecord> all;
  std::vector<fs::path> artifacts;
  std::vector<fs::path> stores;
  for (int r = 0; r < cfg.n_runs; ++r) {
    const uint64_t run_seed = cfg.master_seed + static_cast<uint64_t>(r);
    std::cout << "run " << (r + 1) << "/" << cfg.n_runs << " seed=" << run_seed << "\n";
    auto art = run_recursion(cfg, run_seed, out / "stores");
    all.insert(all.end(), art.records.begin(), art.records.end());
    stores.insert(stores.end(), art.stores.begin(), art.stores.end());
    std::cout << "  final chi2 vs data: " << art.final_d_chi2 << " (se " << art.final_d_chi2_se
              << ")\n";
  }
  const fs::path ledger = out / "ledger.csv";
  const fs::path extras = out / "ledger_extras.csv";
  write_ledger_csv(ledger, all);
  write_extras_csv(extras, all);
  artifacts.push_back(ledger);
  artifacts.push_back(extras);
  artifacts.insert(artifacts.end(), stores.begin(), stores.end());
  // sidecars ride along with their stores
  std::vector<fs::path> with_sidecars = artifacts;
  for (const auto& p : stores) with_sidecars.push_back(sidecar_path(p));
  write_manifest(out, "manifest.json", "run", &cfg, with_sidecars);
  std::cout << "wrote " << ledger.string() << " (" << all.size() << " rows)\n";
  return 0;
}

int cmd_verify(const fs::path& ledger_path, const fs::path& out) {
  const auto records = read_ledger_with_extras(ledger_path);
  if (records.empty()) throw UsageError("ledger has no rows: " + ledger_path.string());

  // Alpha-dependent checks run per blend weight; rows merge into one report.
  std::vector<double> alphas;
  for (const auto& r : records)
    if (std::find(alphas.begin(), alphas.end(), r.alpha) == alphas.end())
      alphas.push_back(r.alpha);
  auto per_alpha = [&](auto&& check) {
    BoundReport merged;
    bool first = true;
    for (double a : alphas) {
      std::vector<GenerationRecord> slice;
      for (const auto& r : records)
        if (r.alpha == a) slice.push_back(r);
      BoundReport rep = check(slice, a);
      if (first) {
        merged = std::move(rep);
        first = false;
      } else {
        merged.rows.insert(merged.rows.end(), rep.rows.begin(), rep.rows.end());
        merged.diagnostic_rows.insert(merged.diagnostic_rows.end(), rep.diagnostic_rows.begin(),
                                      rep.diagnostic_rows.end());
      }
    }
    merged.n_pass = merged.n_fail = 0;
    merged.first_fail = -1;
    for (size_t i = 0; i < merged.rows.size(); ++i) {
      if (merged.rows[i].pass)
        ++merged.n_pass;
      else if (++merged.n_fail == 1)
        merged.first_fail = static_cast<int>(i);
    }
    return merged;
  };

  std::vector<BoundReport> reports;
  reports.push_back(check_upper(records));
  reports.push_back(check_lower(records));
  reports.push_back(check_sandwich(records));
  reports.push_back(per_alpha([](const auto& recs, double a) { return check_accumulation(recs, a); }));
  reports.push_back(per_alpha([](const auto& recs, double a) { return persistence_diagnostics(recs, a); }));
  reports.push_back(per_alpha([](const auto& recs, double a) { return check_contraction(recs, a); }));
  reports.push_back(per_alpha([](const auto& recs, double a) { return check_two_step(recs, a); }));

  fs::create_directories(out);
  std::vector<fs::path> artifacts;
  nlohmann::json summary = nlohmann::json::array();
  bool failed = false;
  for (const auto& rep : reports) {
    const fs::path p = out / ("bounds_" + rep.name + ".csv");
    write_bound_report_csv(p, rep);
    artifacts.push_back(p);
    summary.push_back(bound_report_summary(rep));
    std::cout << rep.name << ": " << rep.n_pass << "/" << (rep.n_pass + rep.n_fail) << " pass"
              << (rep.gating ? "" : " (informational)") << "\n";
    if (rep.n_fail > 0) {
      for (const auto& row : rep.rows) {
        if (row.pass) continue;
        std::cout << "  FAIL " << rep.name << " seed=" << row.seed << " gen=" << row.generation
                  << " " << row.label << " lhs=" << row.lhs << " rhs=" << row.rhs
                  << " margin=" << row.margin << " allow=" << -3.0 * row.combined_se << "\n";
      }
      if (rep.gating) failed = true;
    }
  }
  const fs::path sum_path = out / "bounds_summary.json";
  {
    std::ofstream f(sum_path, std::ios::binary | std::ios::trunc);
    f << summary.dump(2) << "\n";
  }
  artifacts.push_back(sum_path);
  write_manifest(out, "verify_manifest.json", "verify", nullptr, artifacts);
  return failed ? 1 : 0;
}

int cmd_heatmap(const RunConfig& cfg, const fs::path& out, int horizon) {
  if (horizon <= 0) horizon = std::min(8, cfg.n_generations);
  fs::create_directories(out);
  Mat mean;
  std::vector<std::string> lines;
  for (int r = 0; r < cfg.n_runs; ++r) {
    const uint64_t run_seed = cfg.master_seed + static_cast<uint64_t>(r);
    std::cout << "heatmap seed " << run_seed << " horizon " << horizon << "\n";
    const auto hm = heatmap(cfg, run_seed, horizon);
    if (mean.size() == 0)
      mean = Mat::Zero(horizon, horizon);
    for (int k = 1; k <= horizon; ++k)
      for (int n = k; n <= horizon; ++n) {
        lines.push_back(std::to_string(run_seed) + "," + std::to_string(k) + "," +
                        std::to_string(n) + "," + format_double(hm.contrib(k - 1, n - 1)));
        mean(k - 1, n - 1) += hm.contrib(k - 1, n - 1) / cfg.n_runs;
      }
  }
  for (int k = 0; k < horizon; ++k)
    for (int n = 0; n < k; ++n) mean(k, n) = std::numeric_limits<double>::quiet_NaN();

  const fs::path csv = out / "heatmap.csv";
  {
    std::ofstream f(csv, std::ios::binary | std::ios::trunc);
    f << "# collapse-lab heatmap v1\nseed,ablate_at,horizon,contribution\n";
    for (const auto& l : lines) f << l << "\n";
  }
  const fs::path svg = out / "heatmap.svg";
  write_heatmap_svg(svg, mean);
  write_manifest(out, "heatmap_manifest.json", "heatmap", &cfg, {csv, svg});
  std::cout << "wrote " << csv.string() << "\n";
  return 0;
}

int cmd_probe(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const auto gmm = cfg.data_mixture();
  auto base = std::make_shared<AnalyticScoreField>(gmm);

  ProbeConfig pcfg;
  pcfg.target_energy = cfg.probe_energy;
  pcfg.tolerance = cfg.probe_tolerance;
  pcfg.n_paths = cfg.probe_paths;
  pcfg.schedule = cfg.schedule();
  pcfg.feature_dim = cfg.feature_dim;
  pcfg.ridge = cfg.eta_ridge;

  std::vector<ProbeRow> rows;
  for (int r = 0; r < cfg.probe_runs; ++r) {
    const uint64_t run_seed = cfg.master_seed + static_cast<uint64_t>(r);
    SeqRng shape_rng(stream_key(run_seed, "probe-shape"));
    const std::vector<Perturbation> classes = {
        Perturbation::aligned(0.3),
        Perturbation::random_linear(cfg.dim, 0.3, shape_rng),
        Perturbation::time_only(0.5, 1.0),
        Perturbation::aligned(0.0),  // zero-error control
    };
    std::cout << "probe seed " << run_seed << "\n";
    auto batch = perturbation_probe(base, classes, pcfg, run_seed);
    rows.insert(rows.end(), batch.begin(), batch.end());
  }
  const fs::path csv = out / "probe.csv";
  write_probe_csv(csv, rows);
  const fs::path svg = out / "probe.svg";
  write_probe_svg(svg, rows);
  write_manifest(out, "probe_manifest.json", "probe", &cfg, {csv, svg});
  std::cout << "wrote " << csv.string() << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_report(const fs::path& ledger_path, const fs::path& out) {
  const auto records = read_ledger_with_extras(ledger_path);
  if (records.empty()) throw UsageError("ledger has no rows: " + ledger_path.string());
  fs::create_directories(out);
  const fs::path div_svg = out / "divergence.svg";
  const fs::path bounds_svg = out / "bounds.svg";
  write_divergence_svg(div_svg, records);
  write_bounds_svg(bounds_svg, records);
  write_manifest(out, "report_manifest.json", "report", nullptr, {div_svg, bounds_svg});
  std::cout << "wrote " << div_svg.string() << ", " << bounds_svg.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-training diffusion laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  bool seed_given = false;
  int horizon = 0;
  std::string ledger_path;

  auto* run = app.add_subcommand("run", "execute the self-training recursion, write ledger");
  add_common(run, args, &seed_given);
  auto* verify = app.add_subcommand("verify", "check all bound reports against a ledger");
  verify->add_option("ledger", ledger_path, "ledger CSV path")->required();
  verify->add_option("--out", args.out_dir, "output directory");
  auto* heat = app.add_subcommand("heatmap", "ablation contribution matrix");
  add_common(heat, args, &seed_given);
  heat->add_option("--horizon", horizon, "matrix horizon (default min(8, n_generations))");
  auto* probe = app.add_subcommand("probe", "equal-energy perturbation observability probe");
  add_common(probe, args, &seed_given);
  auto* report = app.add_subcommand("report", "render ledger plots");
  report->add_option("ledger", ledger_path, "ledger CSV path")->required();
  report->add_option("--out", args.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  args.seed_given = seed_given;

  try {
    const fs::path out = args.out_dir;
    if (run->parsed()) return cmd_run(load_config(args), out);
    if (verify->parsed()) return cmd_verify(ledger_path, out);
    if (heat->parsed()) return cmd_heatmap(load_config(args), out, horizon);
    if (probe->parsed()) return cmd_probe(load_config(args), out);
    if (report->parsed()) return cmd_report(ledger_path, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
