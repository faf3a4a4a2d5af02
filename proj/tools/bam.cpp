// bam — Bayesian allocation models for count tensors.
//
// Subcommands: score (marginal likelihood across model orders), decompose
// (posterior factor tables), simulate (generative draws), exact (enumeration
// baselines). Results are JSON; tensors use the text format of the library.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bam/exact.hpp"
#include "bam/simulate.hpp"
#include "bam/smc.hpp"
#include "bam/vb.hpp"

using nlohmann::ordered_json;
using namespace bam;

namespace {

constexpr const char* kVersion = "1.0.0";

class Timer {
 public:
  double ms() const {
    const auto dt = std::chrono::steady_clock::now() - start_;
    const double v = std::chrono::duration<double, std::milli>(dt).count();
    return std::round(v * 1000.0) / 1000.0;
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int resolve_threads(int flag_value, bool flag_given) {
  if (flag_given) return std::max(1, flag_value);
  if (const char* env = std::getenv("BAM_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

std::pair<int64_t, int64_t> parse_range(const std::string& text, const std::string& what) {
  try {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
      const int64_t v = std::stoll(text);
      return {v, v};
    }
    const int64_t lo = std::stoll(text.substr(0, colon));
    const int64_t hi = std::stoll(text.substr(colon + 1));
    if (lo > hi) throw Error(Error::Code::bad_argument, what + ": empty range '" + text + "'");
    return {lo, hi};
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(Error::Code::bad_argument, what + ": expected LO:HI, got '" + text + "'");
  }
}

// Flags shared by every subcommand that names a model.
struct ModelOptions {
  std::string model_file;  // positional JSON path; exclusive with --model
  std::string kind_name;   // catalog kind
  std::string k_range;     // catalog rank grid LO:HI (score/exact)
  int64_t k = 0;           // single catalog rank (decompose/simulate)
  int depth = 2;           // pachinko latent levels
  double a = 1.0;
  double b = 1.0;
  bool a_given = false;
  bool b_given = false;
};

void add_model_flags(CLI::App* cmd, ModelOptions& opt, bool with_range, bool with_single_k) {
  cmd->add_option("model-file", opt.model_file, "Model spec JSON (alternative to --model)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--model", opt.kind_name,
                  "Catalog model: klnmf, cp, tucker, pachinko, mmb, snmf");
  if (with_range)
    cmd->add_option("--k-range", opt.k_range, "Latent cardinality grid LO:HI (catalog models)");
  if (with_single_k)
    cmd->add_option("--k", opt.k, "Latent cardinality (catalog models)");
  cmd->add_option("--depth", opt.depth, "Latent levels for pachinko")->default_val(2);
  cmd->add_option("--a", opt.a, "Equivalent sample size / Gamma shape")->default_val(1.0);
  cmd->add_option("--b", opt.b, "Gamma rate of the token intensity")->default_val(1.0);
}

// Node cardinalities in the catalog's canonical order, for an observation
// with the given visible axis lengths and latent cardinality k.
std::vector<int64_t> catalog_dims(CatalogKind kind, const std::vector<int64_t>& visible,
                                  int64_t k, int depth) {
  auto need = [&](size_t axes) {
    if (visible.size() != axes)
      throw Error(Error::Code::bad_argument,
                  std::string(catalog_name(kind)) + " expects a " + std::to_string(axes) +
                      "-way observation, got " + std::to_string(visible.size()) + " axes");
  };
  if (k < 1) throw Error(Error::Code::bad_argument, "latent cardinality must be >= 1");
  switch (kind) {
    case CatalogKind::klnmf:
      need(2);
      return {visible[0], k, visible[1]};
    case CatalogKind::cp: {
      if (visible.empty())
        throw Error(Error::Code::bad_argument, "cp needs at least one observed axis");
      std::vector<int64_t> dims{k};
      dims.insert(dims.end(), visible.begin(), visible.end());
      return dims;
    }
    case CatalogKind::tucker:
      need(3);
      return {visible[0], visible[1], visible[2], k, k, k};
    case CatalogKind::pachinko: {
      need(2);
      if (depth < 1) throw Error(Error::Code::bad_argument, "pachinko depth must be >= 1");
      std::vector<int64_t> dims{visible[0]};
      dims.insert(dims.end(), static_cast<size_t>(depth), k);
      dims.push_back(visible[1]);
      return dims;
    }
    case CatalogKind::mmb:
      need(3);
      return {visible[0], visible[1], visible[2], k, k};
    case CatalogKind::snmf: {
      if (visible.size() == 2 && visible[0] != visible[1])
        throw Error(Error::Code::bad_argument, "snmf needs a square observation");
      if (visible.size() != 1 && visible.size() != 2)
        throw Error(Error::Code::bad_argument, "snmf expects a 2-way observation");
      return {k, visible[0]};
    }
  }
  throw Error(Error::Code::bad_argument, "unknown catalog kind");
}

struct ModelEntry {
  std::shared_ptr<const ModelLayout> layout;
  PriorSpec prior;
  int64_t k = -1;  // catalog rank; -1 for a file-specified model
};

// Expands the model flags into one entry per requested rank. Catalog kinds
// derive node cardinalities from the observed axis lengths.
std::vector<ModelEntry> build_models(const ModelOptions& opt,
                                     const std::vector<int64_t>& visible_dims, bool use_range) {
  const bool has_file = !opt.model_file.empty();
  const bool has_kind = !opt.kind_name.empty();
  if (has_file == has_kind)
    throw Error(Error::Code::bad_argument, "give exactly one of a model file or --model");

  if (has_file) {
    ModelFile file = read_model_json(opt.model_file);
    PriorSpec prior = file.prior.value_or(PriorSpec{opt.a, opt.b});
    if (opt.a_given) prior.a = opt.a;
    if (opt.b_given) prior.b = opt.b;
    if (!opt.k_range.empty() || opt.k != 0)
      throw Error(Error::Code::bad_argument, "--k/--k-range only apply to --model <kind>");
    return {{ModelLayout::create(std::move(file.spec)), prior, -1}};
  }

  const auto kind = catalog_kind(opt.kind_name);
  if (!kind)
    throw Error(Error::Code::bad_argument, "unknown catalog model '" + opt.kind_name + "'");
  int64_t lo = 0, hi = 0;
  if (use_range) {
    if (opt.k_range.empty())
      throw Error(Error::Code::bad_argument, "--model <kind> needs --k-range LO:HI");
    std::tie(lo, hi) = parse_range(opt.k_range, "--k-range");
  } else {
    if (opt.k < 1) throw Error(Error::Code::bad_argument, "--model <kind> needs --k >= 1");
    lo = hi = opt.k;
  }
  std::vector<ModelEntry> entries;
  for (int64_t k = lo; k <= hi; ++k) {
    auto spec = build_catalog_model(*kind, catalog_dims(*kind, visible_dims, k, opt.depth));
    entries.push_back({ModelLayout::create(std::move(spec)), PriorSpec{opt.a, opt.b}, k});
  }
  return entries;
}

ordered_json invocation_json(int argc, char** argv, std::optional<uint64_t> seed) {
  ordered_json inv;
  inv["argv"] = std::vector<std::string>(argv, argv + argc);
  if (seed) inv["seed"] = *seed;
  inv["version"] = kVersion;
  return inv;
}

void emit(const ordered_json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw Error(Error::Code::bad_argument, "cannot write " + out_path);
  out << doc.dump(2) << '\n';
}

// Relative standard error of the linear-scale mean: sd(Z)/(mean(Z)·√R),
// computed from log values with a max shift.
std::optional<double> relative_se(const std::vector<double>& log_runs) {
  const size_t R = log_runs.size();
  if (R < 2) return std::nullopt;
  const double m = log_mean_exp(log_runs);
  if (!std::isfinite(m)) return std::nullopt;
  double ss = 0.0;
  for (double lz : log_runs) {
    const double z = std::exp(lz - m);  // mean 1 by construction
    ss += (z - 1.0) * (z - 1.0);
  }
  const double sd = std::sqrt(ss / static_cast<double>(R - 1));
  return sd / std::sqrt(static_cast<double>(R));
}

ordered_json factor_tables_json(const ModelSpec& spec, const std::vector<FactorTable>& tables) {
  ordered_json arr = ordered_json::array();
  for (const FactorTable& t : tables) {
    ordered_json entry;
    entry["node"] = spec.nodes[t.node].name;
    std::vector<std::string> family;
    for (int m : t.family) family.push_back(spec.nodes[m].name);
    entry["family"] = family;
    entry["dims"] = t.family_dims;
    entry["values"] = t.values;  // mixed radix over `family`, first axis fastest
    arr.push_back(std::move(entry));
  }
  return arr;
}

double hoyer_sparsity(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  double l1 = 0.0, l2 = 0.0;
  for (double x : v) {
    l1 += std::abs(x);
    l2 += x * x;
  }
  if (l2 <= 0.0) return 0.0;
  return (std::sqrt(n) - l1 / std::sqrt(l2)) / (std::sqrt(n) - 1.0);
}

const FactorTable& table_for(const std::vector<FactorTable>& tables, int node) {
  for (const FactorTable& t : tables)
    if (t.node == node) return t;
  throw Error(Error::Code::bad_argument, "missing factor table");
}

// KL-NMF reporting convention: W_{ik} = θ̂(i|k), H_{kj} = T·θ̂(k|j)·θ̂(j), so
// W·H reconstructs T·p̂(i,j) and its grand total is exactly T.
void add_nmf_factors(ordered_json& doc, const std::vector<FactorTable>& tables, int64_t T) {
  // Nodes in graph order: j (root), k | j, i | k.
  const FactorTable& tj = table_for(tables, 0);   // θ(j),   dims [J]
  const FactorTable& tk = table_for(tables, 1);   // θ(k|j), family {j,k}, dims [J, K]
  const FactorTable& ti = table_for(tables, 2);   // θ(i|k), family {k,i}, dims [K, I]
  const size_t J = static_cast<size_t>(tj.family_dims[0]);
  const size_t K = static_cast<size_t>(ti.family_dims[0]);
  const size_t I = static_cast<size_t>(ti.family_dims[1]);

  std::vector<std::vector<double>> W(I, std::vector<double>(K));
  std::vector<std::vector<double>> H(K, std::vector<double>(J));
  for (size_t i = 0; i < I; ++i)
    for (size_t k = 0; k < K; ++k) W[i][k] = ti.values[k + K * i];
  for (size_t k = 0; k < K; ++k)
    for (size_t j = 0; j < J; ++j)
      H[k][j] = static_cast<double>(T) * tk.values[j + J * k] * tj.values[j];

  double total = 0.0;
  std::vector<double> w_flat, h_flat;
  for (size_t i = 0; i < I; ++i)
    for (size_t j = 0; j < J; ++j)
      for (size_t k = 0; k < K; ++k) total += W[i][k] * H[k][j];
  for (const auto& row : W) w_flat.insert(w_flat.end(), row.begin(), row.end());
  for (const auto& row : H) h_flat.insert(h_flat.end(), row.begin(), row.end());

  doc["W"] = W;
  doc["H"] = H;
  doc["reconstruction_total"] = total;
  doc["sparsity"] = {{"W", hoyer_sparsity(w_flat)}, {"H", hoyer_sparsity(h_flat)}};
}

struct SmcFlags {
  int64_t particles = 1000;
  int64_t runs = 1;
  uint64_t seed = 0;
  std::string resampling = "systematic";
  std::string schedule = "adaptive";
  double ess_threshold = 0.5;
  int64_t latent_cap = 1'000'000;
};

void add_smc_flags(CLI::App* cmd, SmcFlags& opt, bool with_runs) {
  cmd->add_option("--particles", opt.particles, "Particles per run")->default_val(1000);
  if (with_runs) cmd->add_option("--runs", opt.runs, "Independent runs per model")->default_val(1);
  cmd->add_option("--seed", opt.seed, "Root random seed")->default_val(0);
  cmd->add_option("--resampling", opt.resampling, "multinomial|residual|stratified|systematic")
      ->default_val("systematic")
      ->check(CLI::IsMember({"multinomial", "residual", "stratified", "systematic"}));
  cmd->add_option("--schedule", opt.schedule, "always|adaptive|never")
      ->default_val("adaptive")
      ->check(CLI::IsMember({"always", "adaptive", "never"}));
  cmd->add_option("--ess-threshold", opt.ess_threshold,
                  "Adaptive schedule fires when ESS < threshold·M")
      ->default_val(0.5);
  cmd->add_option("--latent-cap", opt.latent_cap, "Max latent cells per visible cell")
      ->default_val(1'000'000);
}

ResamplingScheme parse_resampling(const std::string& name) {
  if (name == "multinomial") return ResamplingScheme::multinomial;
  if (name == "residual") return ResamplingScheme::residual;
  if (name == "stratified") return ResamplingScheme::stratified;
  return ResamplingScheme::systematic;
}

ResampleSchedule parse_schedule(const std::string& name) {
  if (name == "always") return ResampleSchedule::always;
  if (name == "never") return ResampleSchedule::never;
  return ResampleSchedule::adaptive;
}

SmcConfig smc_config(const SmcFlags& flags, uint64_t engine_seed, int threads) {
  SmcConfig cfg;
  cfg.particles = flags.particles;
  cfg.seed = engine_seed;
  cfg.resampling = parse_resampling(flags.resampling);
  cfg.schedule = parse_schedule(flags.schedule);
  cfg.ess_threshold = flags.ess_threshold;
  cfg.threads = threads;
  cfg.latent_cap = flags.latent_cap;
  return cfg;
}

ordered_json ess_summary(const std::vector<SmcEstimate>& estimates) {
  double lo = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  int64_t n = 0, fired = 0;
  for (const SmcEstimate& est : estimates) {
    for (double e : est.ess_trace) {
      lo = std::min(lo, e);
      sum += e;
      ++n;
    }
    fired += static_cast<int64_t>(est.resample_steps.size());
  }
  ordered_json out;
  if (n > 0) {
    out["min"] = lo;
    out["mean"] = sum / static_cast<double>(n);
  }
  out["resample_events"] = fired;
  return out;
}

// -------------------------------------------------------------------- score

struct ScoreOptions {
  std::string tensor_path;
  ModelOptions model;
  SmcFlags smc;
  std::string method = "smc";
  int restarts = 10;
  int max_iters = 2000;
  double tol = 1e-8;
  double max_states = 1e8;
  int threads = 1;
  bool threads_given = false;
  std::string out_path;
};

int run_score(const ScoreOptions& opt, int argc, char** argv) {
  const SparseCountTensor X = read_tensor_file(opt.tensor_path);
  const auto models = build_models(opt.model, X.dims(), /*use_range=*/true);
  const int threads = resolve_threads(opt.threads, opt.threads_given);

  ordered_json doc;
  doc["invocation"] = invocation_json(argc, argv, opt.smc.seed);
  doc["command"] = "score";
  doc["method"] = opt.method;
  doc["model"] = opt.model.model_file.empty() ? opt.model.kind_name : opt.model.model_file;

  std::vector<double> estimates;
  ordered_json results = ordered_json::array();
  for (const ModelEntry& entry : models) {
    Kernel kernel(entry.layout, entry.prior);
    ordered_json result;
    if (entry.k >= 0) result["k"] = entry.k;
    Timer timer;

    if (opt.method == "exact") {
      const double value = exact_log_marginal(kernel, X, ExactConfig{opt.max_states});
      result["log_marginal"] = value;
      estimates.push_back(value);
    } else if (opt.method == "vb") {
      VBConfig cfg;
      cfg.restarts = opt.restarts;
      cfg.max_iters = opt.max_iters;
      cfg.tol = opt.tol;
      cfg.seed = Rng::keyed(opt.smc.seed, 0x5642, static_cast<uint64_t>(entry.k + 1), 0).next();
      cfg.threads = threads;
      cfg.latent_cap = opt.smc.latent_cap;
      const VBState state = run_vb(kernel, X, cfg);
      result["log_marginal"] = state.elbo;
      result["elbo"] = state.elbo;
      result["iterations"] = state.iterations;
      result["restarts"] = opt.restarts;
      estimates.push_back(state.elbo);
    } else {
      std::vector<SmcEstimate> runs;
      std::vector<double> log_runs;
      for (int64_t r = 0; r < opt.smc.runs; ++r) {
        const uint64_t engine_seed =
            Rng::keyed(opt.smc.seed, 0x534D43, static_cast<uint64_t>(entry.k + 1),
                       static_cast<uint64_t>(r))
                .next();
        runs.push_back(run_sis_r(kernel, X, smc_config(opt.smc, engine_seed, threads)));
        log_runs.push_back(runs.back().log_Z);
      }
      const double value = log_mean_exp(log_runs);
      result["log_marginal"] = value;
      if (auto se = relative_se(log_runs)) result["se"] = *se;
      result["runs"] = log_runs;
      result["ess"] = ess_summary(runs);
      estimates.push_back(value);
    }
    result["wall_ms"] = timer.ms();
    results.push_back(std::move(result));
  }
  doc["results"] = std::move(results);

  const double norm = log_sum_exp(estimates);
  ordered_json odds = ordered_json::array();
  for (double v : estimates) odds.push_back(v - norm);
  doc["log_odds"] = std::move(odds);

  emit(doc, opt.out_path);
  return 0;
}

// ---------------------------------------------------------------- decompose

struct DecomposeOptions {
  std::string tensor_path;
  ModelOptions model;
  SmcFlags smc;
  int threads = 1;
  bool threads_given = false;
  std::string out_path;
};

int run_decompose(const DecomposeOptions& opt, int argc, char** argv) {
  const SparseCountTensor X = read_tensor_file(opt.tensor_path);
  const auto models = build_models(opt.model, X.dims(), /*use_range=*/false);
  const ModelEntry& entry = models.front();
  const int threads = resolve_threads(opt.threads, opt.threads_given);

  Kernel kernel(entry.layout, entry.prior);
  Timer timer;
  const uint64_t engine_seed =
      Rng::keyed(opt.smc.seed, 0x444543, static_cast<uint64_t>(entry.k + 1), 0).next();
  const SmcEstimate est = run_sis_r(kernel, X, smc_config(opt.smc, engine_seed, threads));

  const auto best = std::max_element(
      est.particles.begin(), est.particles.end(),
      [](const Particle& p, const Particle& q) { return p.log_weight < q.log_weight; });
  const auto mean_tables = extract_decomposition(kernel, est.particles);
  const auto map_tables = extract_decomposition(kernel, best->stats);

  ordered_json doc;
  doc["invocation"] = invocation_json(argc, argv, opt.smc.seed);
  doc["command"] = "decompose";
  doc["model"] = opt.model.model_file.empty() ? opt.model.kind_name : opt.model.model_file;
  if (entry.k >= 0) doc["k"] = entry.k;
  doc["log_marginal"] = est.log_Z;
  doc["ess"] = ess_summary({est});
  const ModelSpec& spec = entry.layout->spec();
  doc["factors_mean"] = factor_tables_json(spec, mean_tables);
  doc["factors_map"] = factor_tables_json(spec, map_tables);
  if (catalog_kind(opt.model.kind_name) == CatalogKind::klnmf)
    add_nmf_factors(doc, mean_tables, X.total());
  doc["wall_ms"] = timer.ms();

  emit(doc, opt.out_path);
  return 0;
}

// ----------------------------------------------------------------- simulate

struct SimulateOptions {
  ModelOptions model;
  std::vector<int64_t> dims;  // visible axis lengths for catalog kinds
  std::optional<int64_t> tokens;
  bool lambda_draw = false;
  uint64_t seed = 0;
  std::string out_path;
  std::string latent_path;
};

int run_simulate(const SimulateOptions& opt, int argc, char** argv) {
  (void)argc;
  (void)argv;
  if (opt.tokens.has_value() == opt.lambda_draw)
    throw Error(Error::Code::bad_argument, "give exactly one of --tokens or --lambda-draw");
  std::vector<ModelEntry> models;
  if (!opt.model.model_file.empty()) {
    models = build_models(opt.model, {}, /*use_range=*/false);
  } else {
    if (opt.dims.empty())
      throw Error(Error::Code::bad_argument, "--model <kind> needs --dims I1,I2,...");
    models = build_models(opt.model, opt.dims, /*use_range=*/false);
  }
  const ModelEntry& entry = models.front();

  Kernel kernel(entry.layout, entry.prior);
  const SimulationResult sim = simulate(kernel, opt.seed, opt.tokens);

  auto write_with_header = [&](const SparseCountTensor& t, std::ostream& out, const char* role) {
    out << "# bam simulate " << role << " seed=" << opt.seed << " tokens=" << sim.tokens;
    if (opt.lambda_draw) out << " lambda=" << sim.lambda;
    out << "\n";
    write_tensor(t, out);
  };

  if (opt.out_path.empty()) {
    write_with_header(sim.X, std::cout, "observed");
  } else {
    std::ofstream out(opt.out_path);
    if (!out) throw Error(Error::Code::bad_argument, "cannot write " + opt.out_path);
    write_with_header(sim.X, out, "observed");
  }
  std::string latent_path = opt.latent_path;
  if (latent_path.empty() && !opt.out_path.empty()) latent_path = opt.out_path + ".latent";
  if (!latent_path.empty()) {
    std::ofstream out(latent_path);
    if (!out) throw Error(Error::Code::bad_argument, "cannot write " + latent_path);
    write_with_header(sim.S, out, "latent");
  }
  return 0;
}

// -------------------------------------------------------------------- exact

struct ExactOptions {
  std::string tensor_path;
  ModelOptions model;
  double max_states = 1e8;
  std::string missing_range;
  int histogram_bins = 0;
  std::string csv_prefix;
  std::string out_path;
};

int run_exact(const ExactOptions& opt, int argc, char** argv) {
  const SparseCountTensor X = read_tensor_file(opt.tensor_path);
  const auto models = build_models(opt.model, X.dims(), /*use_range=*/true);
  const ExactConfig config{opt.max_states};
  if (!opt.csv_prefix.empty() && opt.histogram_bins <= 0)
    throw Error(Error::Code::bad_argument, "--emit-csv needs --histogram");
  if (!X.mask().empty() && opt.missing_range.empty())
    throw Error(Error::Code::bad_argument,
                "tensor has missing cells; give --missing-posterior LO:HI");

  ordered_json doc;
  doc["invocation"] = invocation_json(argc, argv, std::nullopt);
  doc["command"] = "exact";
  doc["model"] = opt.model.model_file.empty() ? opt.model.kind_name : opt.model.model_file;

  ordered_json results = ordered_json::array();
  for (const ModelEntry& entry : models) {
    Kernel kernel(entry.layout, entry.prior);
    ordered_json result;
    if (entry.k >= 0) result["k"] = entry.k;
    Timer timer;

    if (!opt.missing_range.empty()) {
      const auto [lo, hi] = parse_range(opt.missing_range, "--missing-posterior");
      const auto posterior = exact_missing_posterior(kernel, X, lo, hi, config);
      std::vector<int64_t> totals;
      std::vector<double> log_marginals;
      for (const auto& [t, v] : posterior) {
        totals.push_back(t);
        log_marginals.push_back(v);
      }
      const double norm = log_sum_exp(log_marginals);
      std::vector<double> log_post;
      for (double v : log_marginals) log_post.push_back(v - norm);
      const auto mode =
          std::max_element(log_marginals.begin(), log_marginals.end()) - log_marginals.begin();
      ordered_json mp;
      mp["totals"] = totals;
      mp["log_marginal"] = log_marginals;
      mp["log_posterior"] = log_post;
      mp["mode"] = totals[static_cast<size_t>(mode)];
      result["missing_posterior"] = std::move(mp);
    }

    if (X.mask().empty()) {
      if (opt.histogram_bins > 0) {
        const MarginalHistogram hist = marginal_histogram(kernel, X, opt.histogram_bins, config);
        result["log_marginal"] = hist.log_total;
        ordered_json hj;
        hj["lo"] = hist.lo;
        hj["hi"] = hist.hi;
        hj["bins"] = hist.bins;
        ordered_json dep;
        for (const auto& [d, c] : hist.dep_counts) dep[std::to_string(d)] = c;
        hj["dep_counts"] = std::move(dep);
        hj["states"] = hist.states;
        result["histogram"] = std::move(hj);
        if (!opt.csv_prefix.empty()) {
          const std::string path = entry.k >= 0
                                       ? opt.csv_prefix + ".k" + std::to_string(entry.k) + ".csv"
                                       : opt.csv_prefix + ".csv";
          std::ofstream csv(path);
          if (!csv) throw Error(Error::Code::bad_argument, "cannot write " + path);
          csv << "bin_lo,bin_hi,count\n";
          const double width = (hist.hi - hist.lo) / static_cast<double>(hist.bins.size());
          for (size_t i = 0; i < hist.bins.size(); ++i)
            csv << hist.lo + width * static_cast<double>(i) << ','
                << hist.lo + width * static_cast<double>(i + 1) << ',' << hist.bins[i] << '\n';
        }
      } else {
        result["log_marginal"] = exact_log_marginal(kernel, X, config);
      }
    }
    result["wall_ms"] = timer.ms();
    results.push_back(std::move(result));
  }
  doc["results"] = std::move(results);
  emit(doc, opt.out_path);
  return 0;
}

int exit_code(const Error& e) {
  switch (e.code) {
    case Error::Code::parse:
    case Error::Code::bad_model:
    case Error::Code::bad_argument:
      return 2;
    case Error::Code::infeasible:
      return 3;
    case Error::Code::all_weights_zero:
      return 4;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian allocation models for count tensors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  ScoreOptions score;
  CLI::App* score_cmd =
      app.add_subcommand("score", "Marginal likelihood across a model-order grid");
  score_cmd->add_option("tensor", score.tensor_path, "Observation tensor file")
      ->required()
      ->check(CLI::ExistingFile);
  add_model_flags(score_cmd, score.model, /*with_range=*/true, /*with_single_k=*/false);
  score_cmd->add_option("--method", score.method, "smc|vb|exact")
      ->default_val("smc")
      ->check(CLI::IsMember({"smc", "vb", "exact"}));
  add_smc_flags(score_cmd, score.smc, /*with_runs=*/true);
  score_cmd->add_option("--restarts", score.restarts, "Variational restarts")->default_val(10);
  score_cmd->add_option("--max-iters", score.max_iters, "Variational iteration cap")
      ->default_val(2000);
  score_cmd->add_option("--tol", score.tol, "Variational convergence tolerance")
      ->default_val(1e-8);
  score_cmd->add_option("--max-states", score.max_states, "Exact enumeration cap")
      ->default_val(1e8);
  auto* score_threads = score_cmd->add_option("--threads", score.threads, "Worker threads");
  score_cmd->add_option("--out", score.out_path, "JSON output path (default stdout)");

  DecomposeOptions dec;
  CLI::App* dec_cmd = app.add_subcommand("decompose", "Posterior factor tables for one model");
  dec_cmd->add_option("tensor", dec.tensor_path, "Observation tensor file")
      ->required()
      ->check(CLI::ExistingFile);
  add_model_flags(dec_cmd, dec.model, /*with_range=*/false, /*with_single_k=*/true);
  add_smc_flags(dec_cmd, dec.smc, /*with_runs=*/false);
  auto* dec_threads = dec_cmd->add_option("--threads", dec.threads, "Worker threads");
  dec_cmd->add_option("--out", dec.out_path, "JSON output path (default stdout)");

  SimulateOptions sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Draw a tensor from the generative model");
  add_model_flags(sim_cmd, sim.model, /*with_range=*/false, /*with_single_k=*/true);
  sim_cmd->add_option("--dims", sim.dims, "Visible axis lengths for --model kinds")
      ->delimiter(',');
  int64_t tokens_value = 0;
  auto* tokens_opt = sim_cmd->add_option("--tokens", tokens_value, "Fixed token count");
  sim_cmd->add_flag("--lambda-draw", sim.lambda_draw,
                    "Draw λ from Gamma(a,b) and the token count from Poisson(λ)");
  sim_cmd->add_option("--seed", sim.seed, "Random seed")->default_val(0);
  sim_cmd->add_option("--out", sim.out_path, "Tensor output path (default stdout)");
  sim_cmd->add_option("--latent-out", sim.latent_path,
                      "Ground-truth allocation output (default <out>.latent)");

  ExactOptions ex;
  CLI::App* ex_cmd = app.add_subcommand("exact", "Enumeration baselines");
  ex_cmd->add_option("tensor", ex.tensor_path, "Observation tensor file")
      ->required()
      ->check(CLI::ExistingFile);
  add_model_flags(ex_cmd, ex.model, /*with_range=*/true, /*with_single_k=*/false);
  ex_cmd->add_option("--max-states", ex.max_states, "Enumeration cap")->default_val(1e8);
  ex_cmd->add_option("--missing-posterior", ex.missing_range,
                     "Posterior over the grand total LO:HI for masked tensors");
  ex_cmd->add_option("--histogram", ex.histogram_bins,
                     "Histogram of per-state log-probabilities with this many bins");
  ex_cmd->add_option("--emit-csv", ex.csv_prefix, "Histogram CSV path prefix");
  ex_cmd->add_option("--out", ex.out_path, "JSON output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    score.model.a_given = score_cmd->count("--a") > 0;
    score.model.b_given = score_cmd->count("--b") > 0;
    score.threads_given = score_threads->count() > 0;
    dec.model.a_given = dec_cmd->count("--a") > 0;
    dec.model.b_given = dec_cmd->count("--b") > 0;
    dec.threads_given = dec_threads->count() > 0;
    sim.model.a_given = sim_cmd->count("--a") > 0;
    sim.model.b_given = sim_cmd->count("--b") > 0;
    ex.model.a_given = ex_cmd->count("--a") > 0;
    ex.model.b_given = ex_cmd->count("--b") > 0;
    if (tokens_opt->count() > 0) sim.tokens = tokens_value;

    if (score_cmd->parsed()) return run_score(score, argc, argv);
    if (dec_cmd->parsed()) return run_decompose(dec, argc, argv);
    if (sim_cmd->parsed()) return run_simulate(sim, argc, argv);
    if (ex_cmd->parsed()) return run_exact(ex, argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
