#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bam/exact.hpp"
#include "bam/simulate.hpp"
#include "bam/smc.hpp"
#include "bam/vb.hpp"

namespace py = pybind11;
using namespace bam;

namespace {

// Python-facing handle: immutable layout plus the prior it will be scored
// under. Construct via Model.catalog(...) or Model.from_json(...).
struct PyModel {
  std::shared_ptr<const ModelLayout> layout;
  PriorSpec prior;

  Kernel kernel() const { return Kernel(layout, prior); }
};

PyModel model_catalog(const std::string& kind_name, const std::vector<int64_t>& dims, double a,
                      double b) {
  const auto kind = catalog_kind(kind_name);
  if (!kind) throw Error(Error::Code::bad_argument, "unknown catalog model '" + kind_name + "'");
  return {ModelLayout::create(build_catalog_model(*kind, dims)), PriorSpec{a, b}};
}

PyModel model_from_json(const std::string& text, std::optional<double> a,
                        std::optional<double> b) {
  ModelFile file = parse_model_json(text);
  PriorSpec prior = file.prior.value_or(PriorSpec{});
  if (a) prior.a = *a;
  if (b) prior.b = *b;
  return {ModelLayout::create(std::move(file.spec)), prior};
}

SmcConfig make_smc_config(int64_t particles, uint64_t seed, const std::string& resampling,
                          const std::string& schedule, double ess_threshold, int threads,
                          int64_t latent_cap) {
  SmcConfig cfg;
  cfg.particles = particles;
  cfg.seed = seed;
  if (resampling == "multinomial") cfg.resampling = ResamplingScheme::multinomial;
  else if (resampling == "residual") cfg.resampling = ResamplingScheme::residual;
  else if (resampling == "stratified") cfg.resampling = ResamplingScheme::stratified;
  else if (resampling == "systematic") cfg.resampling = ResamplingScheme::systematic;
  else throw Error(Error::Code::bad_argument, "unknown resampling scheme '" + resampling + "'");
  if (schedule == "always") cfg.schedule = ResampleSchedule::always;
  else if (schedule == "adaptive") cfg.schedule = ResampleSchedule::adaptive;
  else if (schedule == "never") cfg.schedule = ResampleSchedule::never;
  else throw Error(Error::Code::bad_argument, "unknown schedule '" + schedule + "'");
  cfg.ess_threshold = ess_threshold;
  cfg.threads = threads;
  cfg.latent_cap = latent_cap;
  return cfg;
}

py::list tensor_items(const SparseCountTensor& t) {
  py::list out;
  std::vector<int64_t> tuple(static_cast<size_t>(t.order()));
  for (uint64_t key : t.sorted_entry_keys()) {
    t.unpack(key, tuple);
    out.append(py::make_tuple(py::cast(tuple), t.at_key(key)));
  }
  return out;
}

py::list factor_list(const PyModel& model, const std::vector<FactorTable>& tables) {
  const ModelSpec& spec = model.layout->spec();
  py::list out;
  for (const FactorTable& t : tables) {
    py::dict entry;
    entry["node"] = spec.nodes[t.node].name;
    std::vector<std::string> family;
    for (int m : t.family) family.push_back(spec.nodes[m].name);
    entry["family"] = family;
    entry["dims"] = t.family_dims;
    entry["values"] = t.values;  // mixed radix over `family`, first axis fastest
    out.append(std::move(entry));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayesian allocation models: exact, sequential Monte Carlo, and "
            "variational marginal likelihood for count tensors";

  py::register_exception<Error>(m, "BamError");

  py::class_<SparseCountTensor>(m, "Tensor")
      .def(py::init<std::vector<int64_t>>(), py::arg("dims"))
      .def_property_readonly("dims", &SparseCountTensor::dims)
      .def("at", [](const SparseCountTensor& t, const std::vector<int64_t>& i) { return t.at(i); })
      .def("set",
           [](SparseCountTensor& t, const std::vector<int64_t>& i, int64_t c) { t.set(i, c); })
      .def("add",
           [](SparseCountTensor& t, const std::vector<int64_t>& i, int64_t d) { t.add(i, d); })
      .def("mark_missing",
           [](SparseCountTensor& t, const std::vector<int64_t>& i) { t.mark_missing(i); })
      .def("total", &SparseCountTensor::total)
      .def("items", &tensor_items)
      .def_static("read", &read_tensor_file, py::arg("path"))
      .def("write", &write_tensor_file, py::arg("path"))
      .def("__repr__", [](const SparseCountTensor& t) {
        std::string s = "Tensor(dims=[";
        for (size_t i = 0; i < t.dims().size(); ++i)
          s += (i ? "," : "") + std::to_string(t.dims()[i]);
        return s + "], nnz=" + std::to_string(t.entries().size()) + ")";
      });

  py::class_<PyModel>(m, "Model")
      .def_static("catalog", &model_catalog, py::arg("kind"), py::arg("dims"),
                  py::arg("a") = 1.0, py::arg("b") = 1.0,
                  "Standard model graph; dims lists node cardinalities in the "
                  "kind's canonical order (see Model.catalog_help()).")
      .def_static("from_json", &model_from_json, py::arg("text"), py::arg("a") = py::none(),
                  py::arg("b") = py::none())
      .def_static("catalog_help", [] {
        return "klnmf [I,K,J]; cp [R,d1..dN]; tucker [I1,I2,I3,J4,J5,J6]; "
               "pachinko [I,K1..KL,J]; mmb [I1,I2,S,K1,K2]; snmf [R,I]";
      })
      .def_property_readonly("a", [](const PyModel& mm) { return mm.prior.a; })
      .def_property_readonly("b", [](const PyModel& mm) { return mm.prior.b; })
      .def_property_readonly("nodes",
                             [](const PyModel& mm) {
                               std::vector<std::pair<std::string, int64_t>> out;
                               for (const Node& n : mm.layout->spec().nodes)
                                 out.emplace_back(n.name, n.card);
                               return out;
                             })
      .def_property_readonly("visible", [](const PyModel& mm) {
        std::vector<std::string> out;
        for (int v : mm.layout->spec().visible) out.push_back(mm.layout->spec().nodes[v].name);
        return out;
      });

  m.def(
      "exact_log_marginal",
      [](const PyModel& model, const SparseCountTensor& X, double max_states) {
        return exact_log_marginal(model.kernel(), X, ExactConfig{max_states});
      },
      py::arg("model"), py::arg("x"), py::arg("max_states") = 1e8,
      "Enumerates every allocation compatible with x; exact log marginal likelihood.");

  m.def(
      "log_marginal_allocation",
      [](const PyModel& model, const SparseCountTensor& S) {
        const Kernel kernel = model.kernel();
        const FamilyStats stats = stats_from_tensor(model.layout, S);
        return kernel.log_marginal_allocation(stats, log_factorial_term(S));
      },
      py::arg("model"), py::arg("s"),
      "log π(S) of a fully specified allocation tensor (axes in node order).");

  m.def(
      "smc_log_marginal",
      [](const PyModel& model, const SparseCountTensor& X, int64_t particles, uint64_t seed,
         const std::string& resampling, const std::string& schedule, double ess_threshold,
         int threads, int64_t latent_cap) {
        const Kernel kernel = model.kernel();
        const SmcEstimate est =
            run_sis_r(kernel, X, make_smc_config(particles, seed, resampling, schedule,
                                                 ess_threshold, threads, latent_cap));
        py::dict out;
        out["log_z"] = est.log_Z;
        out["log_z0"] = est.log_Z0;
        out["ess_trace"] = est.ess_trace;
        out["resample_steps"] = est.resample_steps;
        return out;
      },
      py::arg("model"), py::arg("x"), py::arg("particles") = 1000, py::arg("seed") = 0,
      py::arg("resampling") = "systematic", py::arg("schedule") = "adaptive",
      py::arg("ess_threshold") = 0.5, py::arg("threads") = 1,
      py::arg("latent_cap") = 1'000'000,
      "One sequential-importance-sampling-with-resampling pass; returns the "
      "log marginal estimate and diagnostics.");

  m.def(
      "vb_elbo",
      [](const PyModel& model, const SparseCountTensor& X, int restarts, int max_iters,
         double tol, uint64_t seed, int threads, int64_t latent_cap) {
        VBConfig cfg;
        cfg.restarts = restarts;
        cfg.max_iters = max_iters;
        cfg.tol = tol;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.latent_cap = latent_cap;
        const VBState state = run_vb(model.kernel(), X, cfg);
        py::dict out;
        out["elbo"] = state.elbo;
        out["iterations"] = state.iterations;
        out["elbo_trace"] = state.elbo_trace;
        return out;
      },
      py::arg("model"), py::arg("x"), py::arg("restarts") = 10, py::arg("max_iters") = 2000,
      py::arg("tol") = 1e-8, py::arg("seed") = 0, py::arg("threads") = 1,
      py::arg("latent_cap") = 1'000'000,
      "Mean-field variational lower bound on the log marginal likelihood.");

  m.def(
      "decompose",
      [](const PyModel& model, const SparseCountTensor& X, int64_t particles, uint64_t seed,
         const std::string& resampling, const std::string& schedule, double ess_threshold,
         int threads, int64_t latent_cap) {
        const Kernel kernel = model.kernel();
        const SmcEstimate est =
            run_sis_r(kernel, X, make_smc_config(particles, seed, resampling, schedule,
                                                 ess_threshold, threads, latent_cap));
        py::dict out;
        out["log_z"] = est.log_Z;
        out["factors"] = factor_list(model, extract_decomposition(kernel, est.particles));
        return out;
      },
      py::arg("model"), py::arg("x"), py::arg("particles") = 1000, py::arg("seed") = 0,
      py::arg("resampling") = "systematic", py::arg("schedule") = "adaptive",
      py::arg("ess_threshold") = 0.5, py::arg("threads") = 1,
      py::arg("latent_cap") = 1'000'000,
      "Posterior-mean conditional tables, weight-averaged over the particle set.");

  m.def(
      "missing_posterior",
      [](const PyModel& model, const SparseCountTensor& X, int64_t lo, int64_t hi,
         double max_states) {
        return exact_missing_posterior(model.kernel(), X, lo, hi, ExactConfig{max_states});
      },
      py::arg("model"), py::arg("x"), py::arg("lo"), py::arg("hi"), py::arg("max_states") = 1e8,
      "Unnormalized log marginal per grand total for a tensor with missing cells.");

  m.def(
      "simulate",
      [](const PyModel& model, uint64_t seed, std::optional<int64_t> tokens) {
        const SimulationResult sim = simulate(model.kernel(), seed, tokens);
        py::dict out;
        out["x"] = sim.X;
        out["s"] = sim.S;
        out["lambda"] = sim.lambda;
        out["tokens"] = sim.tokens;
        return out;
      },
      py::arg("model"), py::arg("seed") = 0, py::arg("tokens") = py::none(),
      "Generative draw; fixes the token count when `tokens` is given.");
}
