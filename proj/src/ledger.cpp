#include "collapse/ledger.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace collapse {

namespace {

constexpr const char* kLedgerVersionLine = "# collapse-lab ledger v1";
constexpr const char* kLedgerHeader =
    "seed,generation,alpha,eps_star_sq,eps_star_se,eps_hat_sq,eps_hat_se,"
    "eta,eta_se,I_chi2,I_chi2_se,I_kl,I_kl_se,D_chi2,D_chi2_se,flags";
constexpr const char* kExtrasVersionLine = "# collapse-lab ledger extras v1";
constexpr const char* kExtrasHeader =
    "seed,generation,contraction_lhs,contraction_lhs_se,n_fresh,n_target_centers";
constexpr const char* kProbeVersionLine = "# collapse-lab probe v1";
constexpr const char* kProbeHeader = "class,scale,eps_star_sq,eps_star_se,eta,eta_se,seed";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const char* field) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("ledger: bad double in column ") + field + ": '" + s + "'");
  }
}

uint64_t parse_u64(const std::string& s, const char* field) {
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<uint64_t>(v);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("ledger: bad integer in column ") + field + ": '" + s + "'");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("ledger: cannot open for writing: " + path.string());
  return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ledger: cannot open for reading: " + path.string());
  return f;
}

// Reads the two framing lines and returns the remaining data lines.
std::vector<std::string> read_data_lines(std::ifstream& f, const char* version_line,
                                         const char* header, const char* what) {
  std::string line;
  if (!std::getline(f, line) || line != version_line)
    throw std::runtime_error(std::string(what) + ": missing or unknown version line");
  if (!std::getline(f, line) || line != header)
    throw std::runtime_error(std::string(what) + ": header mismatch");
  std::vector<std::string> out;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(line);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_ledger_csv(const std::filesystem::path& path,
                      const std::vector<GenerationRecord>& rows) {
  auto f = open_out(path);
  f << kLedgerVersionLine << "\n" << kLedgerHeader << "\n";
  for (const auto& r : rows) {
    f << r.seed << ',' << r.generation << ',' << format_double(r.alpha) << ','
      << format_double(r.eps_star_sq) << ',' << format_double(r.eps_star_se) << ','
      << format_double(r.eps_hat_sq) << ',' << format_double(r.eps_hat_se) << ','
      << format_double(r.eta) << ',' << format_double(r.eta_se) << ','
      << format_double(r.i_chi2) << ',' << format_double(r.i_chi2_se) << ','
      << format_double(r.i_kl) << ',' << format_double(r.i_kl_se) << ','
      << format_double(r.d_chi2) << ',' << format_double(r.d_chi2_se) << ','
      << (r.flags.empty() ? "ok" : r.flags) << "\n";
  }
}

std::vector<GenerationRecord> read_ledger_csv(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::vector<GenerationRecord> rows;
  for (const auto& line : read_data_lines(f, kLedgerVersionLine, kLedgerHeader, "ledger")) {
    auto c = split_csv_line(line);
    if (c.size() != 16) throw std::runtime_error("ledger: expected 16 columns, got line '" + line + "'");
    GenerationRecord r;
    r.seed = parse_u64(c[0], "seed");
    r.generation = static_cast<int>(parse_u64(c[1], "generation"));
    r.alpha = parse_double(c[2], "alpha");
    r.eps_star_sq = parse_double(c[3], "eps_star_sq");
    r.eps_star_se = parse_double(c[4], "eps_star_se");
    r.eps_hat_sq = parse_double(c[5], "eps_hat_sq");
    r.eps_hat_se = parse_double(c[6], "eps_hat_se");
    r.eta = parse_double(c[7], "eta");
    r.eta_se = parse_double(c[8], "eta_se");
    r.i_chi2 = parse_double(c[9], "I_chi2");
    r.i_chi2_se = parse_double(c[10], "I_chi2_se");
    r.i_kl = parse_double(c[11], "I_kl");
    r.i_kl_se = parse_double(c[12], "I_kl_se");
    r.d_chi2 = parse_double(c[13], "D_chi2");
    r.d_chi2_se = parse_double(c[14], "D_chi2_se");
    r.flags = c[15];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_extras_csv(const std::filesystem::path& path,
                      const std::vector<GenerationRecord>& rows) {
  auto f = open_out(path);
  f << kExtrasVersionLine << "\n" << kExtrasHeader << "\n";
  for (const auto& r : rows) {
    f << r.seed << ',' << r.generation << ','
      << format_double(r.contraction_lhs) << ',' << format_double(r.contraction_lhs_se) << ','
      << r.n_fresh << ',' << r.n_target_centers << "\n";
  }
}

void read_extras_csv(const std::filesystem::path& path, std::vector<GenerationRecord>& rows) {
  auto f = open_in(path);
  std::unordered_map<uint64_t, GenerationRecord*> by_key;
  auto key_of = [](uint64_t seed, int gen) {
    return seed * 1000003ull + static_cast<uint64_t>(gen);
  };
  for (auto& r : rows) by_key[key_of(r.seed, r.generation)] = &r;
  for (const auto& line : read_data_lines(f, kExtrasVersionLine, kExtrasHeader, "ledger extras")) {
    auto c = split_csv_line(line);
    if (c.size() != 6) throw std::runtime_error("ledger extras: expected 6 columns, got line '" + line + "'");
    uint64_t seed = parse_u64(c[0], "seed");
    int gen = static_cast<int>(parse_u64(c[1], "generation"));
    auto it = by_key.find(key_of(seed, gen));
    if (it == by_key.end()) continue;
    it->second->contraction_lhs = parse_double(c[2], "contraction_lhs");
    it->second->contraction_lhs_se = parse_double(c[3], "contraction_lhs_se");
    it->second->n_fresh = static_cast<int64_t>(parse_u64(c[4], "n_fresh"));
    it->second->n_target_centers = static_cast<int64_t>(parse_u64(c[5], "n_target_centers"));
  }
}

void write_probe_csv(const std::filesystem::path& path, const std::vector<ProbeRow>& rows) {
  auto f = open_out(path);
  f << kProbeVersionLine << "\n" << kProbeHeader << "\n";
  for (const auto& r : rows) {
    f << r.perturbation << ',' << format_double(r.scale) << ','
      << format_double(r.eps_star_sq) << ',' << format_double(r.eps_star_se) << ','
      << format_double(r.eta.eta) << ',' << format_double(r.eta.std_error) << ','
      << r.seed << "\n";
  }
}

}  // namespace collapse
