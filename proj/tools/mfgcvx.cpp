// mfgcvx: generate data, invert it, sweep lambda, certify the Volterra
// Carleman estimate, render fields.
//
// Exit codes: 0 ok, 2 usage or precondition, 3 numerical failure,
// 4 verification failed, 5 I/O error, 1 anything else.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "mfgcvx/carleman.hpp"
#include "mfgcvx/config.hpp"
#include "mfgcvx/io.hpp"
#include "mfgcvx/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mfgcvx;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kOutputRootEnv = "MFGCVX_OUTPUT_ROOT";

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kNumerical = 3, kVerifyFailed = 4, kIo = 5 };

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(byte, sizeof byte, "%02x", md[k]);
    hex += byte;
  }
  return hex;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Output directory: --out, else $MFGCVX_OUTPUT_ROOT/<command>, else runs/<command>.
fs::path prepare_out(const std::string& out, const std::string& command, bool force) {
  fs::path dir;
  if (!out.empty()) {
    dir = out;
  } else {
    const char* root = std::getenv(kOutputRootEnv);
    dir = fs::path(root && *root ? root : "runs") / command;
  }
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ContractError("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ContractError("output directory '" + dir.string() +
                          "' is not empty (use --force to overwrite)");
  } else {
    fs::create_directories(dir);
  }
  return dir;
}

struct Manifest {
  json j;
  fs::path dir;

  Manifest(const fs::path& d, const std::string& command) : dir(d) {
    j["tool"] = "mfgcvx";
    j["version"] = kVersion;
    j["command"] = command;
    j["created"] = utc_now();
  }
  void add_file(const std::string& name) { j["files"][name] = sha256_file(dir / name); }
  void write() const { write_text(dir / "manifest.json", j.dump(2) + "\n"); }
};

void put_field(Manifest& m, const std::string& name, const Field& f) {
  write_field(m.dir / name, f);
  m.add_file(name);
}

json metrics_json(const Metrics& m) {
  return {{"rel_l2", m.rel_l2},
          {"contrast", m.contrast},
          {"mask_rel_l2", m.mask_rel_l2},
          {"inside_median", m.inside_median},
          {"outside_median", m.outside_median}};
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ContractError("not a number in list: '" + item + "'");
    }
  }
  return out;
}

// Common options shared by the experiment commands.
struct Common {
  std::string config, out;
  bool force = false;
  std::string letter;
  double contrast = 0.0;
  double delta = -1.0;
  long long seed = -1;
  std::string lambda;
};

ExperimentConfig resolve_config(const Common& c, const std::optional<ExperimentConfig>& base) {
  ExperimentConfig cfg = !c.config.empty() ? load_config(c.config) : base.value_or(ExperimentConfig{});
  if (!c.letter.empty()) cfg.phantom.letter = letter_from_string(c.letter);
  if (c.contrast != 0.0) cfg.phantom.contrast = c.contrast;
  if (c.delta >= 0.0) cfg.noise.delta = c.delta;
  if (c.seed >= 0) cfg.noise.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  return cfg;
}

// ---- generate -------------------------------------------------------------

void write_dataset(const fs::path& dir, const ExperimentConfig& cfg, const Dataset& d,
                   const GeneratedData& gen) {
  Manifest m(dir, "generate");
  m.j["config"] = config_to_json(cfg);
  const auto& o = d.observations;
  put_field(m, "v0.fld", o.v0);
  put_field(m, "p0.fld", o.p0);
  put_field(m, "g01.fld", o.g01);
  put_field(m, "g02.fld", o.g02);
  put_field(m, "g11.fld", o.g11);
  put_field(m, "g12.fld", o.g12);
  put_field(m, "s.fld", d.s);
  put_field(m, "s_t.fld", d.s_t);
  put_field(m, "k_true.fld", d.k_true);
  put_field(m, "mask.fld", d.mask);
  m.j["min_abs_p"] = gen.min_abs_p;
  m.j["denominator_min"] = denominator_field(o.p0, GaussianDelta{cfg.sigma}).min_abs;
  m.write();
}

int cmd_generate(const Common& c) {
  const ExperimentConfig cfg = resolve_config(c, std::nullopt);
  const fs::path dir = prepare_out(c.out.empty() ? cfg.output : c.out, "generate", c.force);
  GeneratedData gen;
  const Dataset d = generate_dataset(cfg, &gen);
  write_dataset(dir, cfg, d, gen);
  std::printf("dataset written to %s (min |p**| = %.6g)\n", dir.string().c_str(), gen.min_abs_p);
  return kOk;
}

// ---- invert ---------------------------------------------------------------

struct LoadedDataset {
  Dataset data;
  ExperimentConfig config;
  std::string manifest_hash;
};

LoadedDataset load_dataset(const fs::path& dir) {
  const fs::path mf = dir / "manifest.json";
  std::ifstream in(mf);
  if (!in) throw IoError("dataset '" + dir.string() + "' has no manifest.json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("dataset manifest: " + std::string(e.what()));
  }
  LoadedDataset l;
  l.config = config_from_json(j.at("config"));
  l.manifest_hash = sha256_file(mf);
  auto& o = l.data.observations;
  o.v0 = read_field(dir / "v0.fld");
  o.p0 = read_field(dir / "p0.fld");
  o.g01 = read_field(dir / "g01.fld");
  o.g02 = read_field(dir / "g02.fld");
  o.g11 = read_field(dir / "g11.fld");
  o.g12 = read_field(dir / "g12.fld");
  o.dt_g01 = trace_ddt(o.g01);
  o.dt_g02 = trace_ddt(o.g02);
  o.dt_g11 = trace_ddt(o.g11);
  o.dt_g12 = trace_ddt(o.g12);
  l.data.s = read_field(dir / "s.fld");
  l.data.s_t = read_field(dir / "s_t.fld");
  l.data.k_true = read_field(dir / "k_true.fld");
  l.data.mask = read_field(dir / "mask.fld");
  for (const auto& [name, hash] : j.at("files").items())
    if (sha256_file(dir / name) != hash.get<std::string>())
      throw IoError("dataset file '" + name + "' does not match its manifest hash");
  return l;
}

void write_inversion(const fs::path& dir, const ExperimentConfig& cfg, const InversionOutcome& r,
                     const std::string& dataset_hash) {
  Manifest m(dir, "invert");
  m.j["config"] = config_to_json(cfg);
  if (!dataset_hash.empty()) m.j["dataset_manifest_sha256"] = dataset_hash;
  m.j["unweighted"] = cfg.solver.lambda == 0.0;
  m.j["noise"] = {{"delta", cfg.noise.delta}, {"seed", cfg.noise.seed}, {"applied", r.noisy}};
  m.j["derivatives"] = r.noisy ? "natural cubic splines" : "grid stencils";
  m.j["gradient_norm"] = "max over free nodes";
  m.j["denominator_min"] = r.denominator_min;
  const auto& res = r.result;
  m.j["iterations"] = res.iterations;
  m.j["converged"] = res.converged;
  m.j["final_J"] = res.J_history.back();
  m.j["final_gradient_norm"] = res.grad_norm_history.back();
  m.j["wall_seconds"] = res.wall_seconds;
  m.j["metrics"] = metrics_json(r.metrics);
  put_field(m, "k_comp.fld", res.k_comp);
  put_field(m, "u.fld", res.final_iterate.u);
  put_field(m, "m.fld", res.final_iterate.m);
  {
    std::ostringstream os;
    os << "iteration,J,grad_norm,mu\n";
    char line[128];
    for (std::size_t k = 0; k < res.J_history.size(); ++k) {
      std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", k, res.J_history[k],
                    res.grad_norm_history[k], k == 0 ? 0.0 : res.step_history[k - 1]);
      os << line;
    }
    write_text(dir / "convergence.csv", os.str());
    m.add_file("convergence.csv");
  }
  {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "rel_l2,contrast,mask_rel_l2,inside_median,outside_median,iterations,converged\n"
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%d\n",
                  r.metrics.rel_l2, r.metrics.contrast, r.metrics.mask_rel_l2,
                  r.metrics.inside_median, r.metrics.outside_median, res.iterations,
                  res.converged ? 1 : 0);
    write_text(dir / "metrics.csv", buf);
    m.add_file("metrics.csv");
  }
  const PgmScaling sc = write_pgm(dir / "k_comp.pgm", res.k_comp);
  m.add_file("k_comp.pgm");
  m.j["k_comp_pgm"] = {{"min", sc.min}, {"max", sc.max}, {"constant", sc.constant}};
  write_csv(dir / "k_comp.csv", res.k_comp);
  m.add_file("k_comp.csv");
  m.write();
}

int cmd_invert(const Common& c, const std::string& data_dir) {
  std::optional<LoadedDataset> loaded;
  if (!data_dir.empty()) loaded = load_dataset(data_dir);
  ExperimentConfig cfg =
      resolve_config(c, loaded ? std::optional<ExperimentConfig>(loaded->config) : std::nullopt);
  if (!c.lambda.empty()) {
    const auto l = parse_list(c.lambda);
    if (l.size() != 1) throw ContractError("invert takes a single --lambda value");
    cfg.solver.lambda = l.front();
  }
  const fs::path dir = prepare_out(c.out.empty() ? cfg.output : c.out, "invert", c.force);
  const Dataset data = loaded ? loaded->data : generate_dataset(cfg);
  const InversionOutcome r = invert_dataset(cfg, data);
  write_inversion(dir, cfg, r, loaded ? loaded->manifest_hash : std::string());
  std::printf("lambda %g: %zu iterations, converged %s, rel-L2 %.4f, contrast %.4f -> %s\n",
              cfg.solver.lambda, r.result.iterations, r.result.converged ? "yes" : "no",
              r.metrics.rel_l2, r.metrics.contrast, dir.string().c_str());
  return kOk;
}

// ---- sweep-lambda ---------------------------------------------------------

int cmd_sweep(const Common& c, const std::string& data_dir) {
  std::optional<LoadedDataset> loaded;
  if (!data_dir.empty()) loaded = load_dataset(data_dir);
  const ExperimentConfig cfg =
      resolve_config(c, loaded ? std::optional<ExperimentConfig>(loaded->config) : std::nullopt);
  const std::vector<double> lambdas =
      parse_list(c.lambda.empty() ? std::string("0,1,2,3,4,10") : c.lambda);
  if (lambdas.empty()) throw ContractError("sweep-lambda: empty --lambda list");
  const fs::path dir = prepare_out(c.out.empty() ? cfg.output : c.out, "sweep-lambda", c.force);
  const Dataset data = loaded ? loaded->data : generate_dataset(cfg);
  const auto points = sweep_lambda(cfg, data, lambdas);
  std::ostringstream os;
  os << "lambda,rel_l2,contrast,mask_rel_l2,iterations,converged,error\n";
  char line[256];
  for (const auto& p : points) {
    if (p.outcome) {
      ExperimentConfig pc = cfg;
      pc.solver.lambda = p.lambda;
      char sub[64];
      std::snprintf(sub, sizeof sub, "lambda_%g", p.lambda);
      fs::create_directories(dir / sub);
      write_inversion(dir / sub, pc, *p.outcome, loaded ? loaded->manifest_hash : std::string());
      const auto& m = p.outcome->metrics;
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%zu,%d,\n", p.lambda, m.rel_l2,
                    m.contrast, m.mask_rel_l2, p.outcome->result.iterations,
                    p.outcome->result.converged ? 1 : 0);
      os << line;
      std::printf("lambda %g: rel-L2 %.4f contrast %.4f\n", p.lambda, m.rel_l2, m.contrast);
    } else {
      std::string err = p.error;
      for (char& ch : err)
        if (ch == ',' || ch == '\n') ch = ';';
      std::snprintf(line, sizeof line, "%.17g,,,,,,", p.lambda);
      os << line << err << '\n';
      std::printf("lambda %g: failed: %s\n", p.lambda, p.error.c_str());
    }
  }
  write_text(dir / "summary.csv", os.str());
  Manifest m(dir, "sweep-lambda");
  m.j["config"] = config_to_json(cfg);
  m.j["lambdas"] = lambdas;
  m.add_file("summary.csv");
  m.write();
  return kOk;
}

// ---- verify-carleman ------------------------------------------------------

int cmd_verify(const std::string& out, bool force, long long seed, int trials,
               const std::string& lambda_list, double d, double alpha) {
  const std::vector<double> lambdas =
      parse_list(lambda_list.empty() ? std::string("1,2,4,8") : lambda_list);
  if (lambdas.empty()) throw ContractError("verify-carleman: empty --lambda list");
  for (double l : lambdas)
    if (!(l > 0.0)) throw ContractError("verify-carleman: lambda must be positive");
  if (!(alpha > 0.0 && alpha < 1.0 / 3.0))
    throw ContractError("verify-carleman: alpha must lie in (0, 1/3)");
  (void)CarlemanParams::from_alpha(1.0, alpha, 1.0, 1.0);
  if (!(d > 0.0)) throw ContractError("verify-carleman: d must be positive");
  const fs::path dir = prepare_out(out, "verify-carleman", force);
  const auto reports =
      certify_volterra_estimate(static_cast<std::uint64_t>(seed < 0 ? 1 : seed), trials, lambdas, d, alpha);
  std::ostringstream os;
  os << "lambda,d,alpha,lhs,rhs,margin,holds,status\n";
  int failed = 0, inconclusive = 0;
  char line[256];
  for (const auto& r : reports) {
    const bool conv = r.status == CertificationStatus::converged;
    if (!conv) ++inconclusive;
    else if (!r.holds) ++failed;
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%s\n", r.lambda, r.d,
                  r.alpha, r.lhs, r.rhs, r.margin, r.holds ? 1 : 0,
                  conv ? "converged" : "inconclusive");
    os << line;
  }
  write_text(dir / "carleman_report.csv", os.str());
  Manifest m(dir, "verify-carleman");
  m.j["seed"] = seed < 0 ? 1 : seed;
  m.j["trials_per_lambda"] = trials;
  m.j["lambdas"] = lambdas;
  m.j["d"] = d;
  m.j["alpha"] = alpha;
  m.j["failed"] = failed;
  m.j["inconclusive"] = inconclusive;
  m.add_file("carleman_report.csv");
  m.write();
  std::printf("%zu trials: %zu hold, %d fail, %d inconclusive\n", reports.size(),
              reports.size() - static_cast<std::size_t>(failed + inconclusive), failed,
              inconclusive);
  return failed || inconclusive ? kVerifyFailed : kOk;
}

// ---- render ---------------------------------------------------------------

int cmd_render(const std::string& file, const std::string& slice, const std::string& out) {
  Field f = read_field(file);
  const auto& g = f.grid();
  if (f.rank() == Rank::space_time) {
    if (slice.rfind("t=", 0) != 0)
      throw ContractError("render: space-time field needs --slice t=X");
    const double t = parse_list(slice.substr(2)).at(0);
    const double pos = t / g.ht();
    const long n = std::lround(pos);
    if (n < 0 || n >= static_cast<long>(g.nt) || std::abs(pos - static_cast<double>(n)) > 1e-9)
      throw ContractError("render: t=" + slice.substr(2) + " is not a time slice of the grid");
    f = time_slice(f, static_cast<std::size_t>(n));
  } else if (f.rank() != Rank::spatial) {
    throw ContractError("render: only spatial fields (or space-time with --slice) can be rendered");
  } else if (!slice.empty()) {
    throw ContractError("render: --slice applies to space-time fields only");
  }
  fs::path base = fs::path(file).stem();
  const fs::path dir = out.empty() ? fs::path(file).parent_path() : fs::path(out);
  if (!dir.empty()) fs::create_directories(dir);
  const fs::path pgm = dir / (base.string() + ".pgm");
  const PgmScaling sc = write_pgm(pgm, f);
  json side = {{"source", fs::path(file).filename().string()},
               {"min", sc.min},
               {"max", sc.max},
               {"constant", sc.constant},
               {"slice", slice}};
  write_text(dir / (base.string() + ".pgm.json"), side.dump(2) + "\n");
  write_csv(dir / (base.string() + ".csv"), f);
  std::printf("wrote %s\n", pgm.string().c_str());
  return kOk;
}

void add_common(CLI::App* sub, Common& c, bool experiment) {
  sub->add_option("--config", c.config, "JSON experiment config");
  sub->add_option("--out", c.out, "output directory");
  sub->add_flag("--force", c.force, "write into a non-empty output directory");
  if (!experiment) return;
  sub->add_option("--letter", c.letter, "phantom letter: A, Omega or SZ");
  sub->add_option("--contrast", c.contrast, "inclusion value c_a");
  sub->add_option("--delta", c.delta, "noise level");
  sub->add_option("--seed", c.seed, "noise seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convexification solver for the MFG interaction-coefficient inverse problem"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common gen_c, inv_c, sweep_c;
  std::string inv_data, sweep_data;
  auto* gen = app.add_subcommand("generate", "generate a dataset on the fine grid");
  add_common(gen, gen_c, true);

  auto* inv = app.add_subcommand("invert", "reconstruct k from a dataset");
  add_common(inv, inv_c, true);
  inv->add_option("--data", inv_data, "dataset directory written by generate");
  inv->add_option("--lambda", inv_c.lambda, "Carleman parameter");

  auto* sweep = app.add_subcommand("sweep-lambda", "invert one dataset for several lambdas");
  add_common(sweep, sweep_c, true);
  sweep->add_option("--data", sweep_data, "dataset directory written by generate");
  sweep->add_option("--lambda", sweep_c.lambda, "comma-separated list (default 0,1,2,3,4,10)");

  std::string v_out, v_lambda;
  bool v_force = false;
  long long v_seed = 1;
  int v_trials = 100;
  double v_d = 0.5, v_alpha = 0.2;
  auto* ver = app.add_subcommand("verify-carleman", "certify the Volterra Carleman estimate");
  ver->add_option("--out", v_out, "output directory");
  ver->add_flag("--force", v_force, "write into a non-empty output directory");
  ver->add_option("--seed", v_seed, "seed of the random functions");
  ver->add_option("--trials", v_trials, "functions per lambda")->check(CLI::PositiveNumber);
  ver->add_option("--lambda", v_lambda, "comma-separated list (default 1,2,4,8)");
  ver->add_option("--d", v_d, "half-width of the time interval");
  ver->add_option("--alpha", v_alpha, "weight exponent");

  std::string r_file, r_slice, r_out;
  auto* ren = app.add_subcommand("render", "export a field as PGM and CSV");
  ren->add_option("file", r_file, "field container")->required();
  ren->add_option("--slice", r_slice, "time slice for space-time fields, e.g. t=0.5");
  ren->add_option("--out", r_out, "output directory (default: next to the input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    if (*gen) return cmd_generate(gen_c);
    if (*inv) return cmd_invert(inv_c, inv_data);
    if (*sweep) return cmd_sweep(sweep_c, sweep_data);
    if (*ver) return cmd_verify(v_out, v_force, v_seed, v_trials, v_lambda, v_d, v_alpha);
    if (*ren) return cmd_render(r_file, r_slice, r_out);
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
