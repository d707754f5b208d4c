// Python bindings. JSON values cross the boundary as strings; the Python
// package wraps them into dicts.

#include "vfalign/experiments.hpp"
#include "vfalign/svcca.hpp"
#include "vfalign/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace vfalign;
using nlohmann::json;

namespace {

// NumPy arrays arrive in either memory order; the library works row-major.
using InMatrix = Eigen::Ref<const Eigen::MatrixXd>;

Matrix to_rows(const InMatrix& m) { return Matrix(m); }

RowVector to_row(const std::vector<double>& v) {
  return Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json parse(const std::string& text) { return json::parse(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compiled core of vfalign";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IterationLimitError>(m, "IterationLimitError", PyExc_RuntimeError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

  py::class_<VectorField, std::shared_ptr<VectorField>>(m, "VectorField")
      .def_property_readonly("dim", &VectorField::dim)
      .def("__call__", [](const VectorField& f, const InMatrix& x) { return f.eval(to_rows(x)); }, py::arg("x"))
      .def("jacobian", [](const VectorField& f, const std::vector<double>& x) { return f.jacobian(to_row(x)); })
      .def("describe_json", [](const VectorField& f) { return f.describe().dump(); });

  m.def("van_der_pol", [](double mu) -> std::shared_ptr<VectorField> { return std::make_shared<VanDerPol>(mu); },
        py::arg("mu"));
  m.def("pitchfork", [](double mu) -> std::shared_ptr<VectorField> { return std::make_shared<Pitchfork>(mu); },
        py::arg("mu"));
  m.def(
      "linear",
      [](const InMatrix& A) -> std::shared_ptr<VectorField> {
        return std::make_shared<LinearField>(LinearSystemSpec{to_rows(A), std::nullopt});
      },
      py::arg("A"));
  m.def(
      "conjugate",
      [](std::shared_ptr<VectorField> f, const InMatrix& Q) {
        return std::const_pointer_cast<VectorField>(make_conjugate(f, to_rows(Q)));
      },
      py::arg("field"), py::arg("Q"));
  m.def(
      "field_from_json",
      [](const std::string& text) { return std::const_pointer_cast<VectorField>(field_from_json(parse(text), "system")); },
      py::arg("spec"));
  m.def("random_orthogonal", &random_orthogonal, py::arg("n"), py::arg("seed"));
  m.def("random_gaussian_positive_det", &random_gaussian_positive_det, py::arg("n"), py::arg("seed"));

  py::class_<Sampler>(m, "Sampler")
      .def_static(
          "uniform_box",
          [](const std::vector<double>& lo, const std::vector<double>& hi, std::uint64_t seed) {
            return Sampler::uniform_box(to_row(lo), to_row(hi), seed);
          },
          py::arg("low"), py::arg("high"), py::arg("seed"))
      .def_static("standard_normal", &Sampler::standard_normal, py::arg("dim"), py::arg("seed"))
      .def_static("vdp_box", &Sampler::vdp_box, py::arg("seed"))
      .def_static("pitchfork_box", &Sampler::pitchfork_box, py::arg("mu"), py::arg("seed"))
      .def_static(
          "mapped_box",
          [](const InMatrix& Q, const std::vector<double>& lo, const std::vector<double>& hi, std::uint64_t seed) {
            return Sampler::mapped_box(to_rows(Q), to_row(lo), to_row(hi), seed);
          },
          py::arg("Q"), py::arg("low"), py::arg("high"), py::arg("seed"))
      .def_property_readonly("dim", &Sampler::dim)
      .def("draw", &Sampler::draw, py::arg("count"))
      .def("reseeded", &Sampler::reseeded, py::arg("seed"))
      .def("describe_json", [](const Sampler& s) { return s.describe().dump(); });

  py::class_<IResNet>(m, "IResNet")
      .def_static("identity_init", &IResNet::identity_init, py::arg("dim"), py::arg("layers") = 10,
                  py::arg("cap") = 0.99, py::arg("seed") = 0)
      .def_static("random_warp", &IResNet::random_warp, py::arg("dim"), py::arg("layers") = 10, py::arg("cap") = 0.99,
                  py::arg("w2_scale") = 1.0, py::arg("seed") = 0)
      .def_static("load", &IResNet::load, py::arg("path"))
      .def_static("from_json", [](const std::string& text) { return IResNet::from_json(parse(text)); })
      .def_property_readonly("dim", &IResNet::dim)
      .def_property_readonly("layers", &IResNet::layers)
      .def_property_readonly("cap", &IResNet::cap)
      .def("forward", [](const IResNet& n, const InMatrix& x) { return n.forward(to_rows(x)); }, py::arg("x"))
      .def(
          "jvp", [](const IResNet& n, const InMatrix& x, const InMatrix& v) { return n.jvp(to_rows(x), to_rows(v)); },
          py::arg("x"), py::arg("v"))
      .def(
          "inverse",
          [](const IResNet& n, const InMatrix& y, double tol, int max_iter) {
            InverseOptions o;
            o.tol = tol;
            o.max_iter = max_iter;
            return n.inverse(to_rows(y), o);
          },
          py::arg("y"), py::arg("tol") = 1e-10, py::arg("max_iter") = 100)
      .def("jacobian", [](const IResNet& n, const std::vector<double>& x) { return n.jacobian(to_row(x)); })
      .def("save", &IResNet::save, py::arg("path"))
      .def("to_json", [](const IResNet& n) { return n.to_json().dump(); });

  m.def(
      "similarity",
      [](const VectorField& f, const VectorField& g, const IResNet& phi, const IResNet& psi, Sampler p, Sampler q,
         int samples) { return to_json(similarity(f, g, phi, psi, p, q, samples)).dump(); },
      py::arg("f"), py::arg("g"), py::arg("phi"), py::arg("psi"), py::arg("p"), py::arg("q"), py::arg("samples") = 10000);
  m.def(
      "orbital_loss",
      [](const VectorField& f, const VectorField& g, const IResNet& H, const InMatrix& x) {
        return orbital_loss(f, g, H, to_rows(x));
      },
      py::arg("f"), py::arg("g"), py::arg("net"), py::arg("x"));

  m.def(
      "train",
      [](const VectorField& f, const VectorField& g, const Sampler& p, const Sampler& q, const std::string& config,
         bool include_timing) {
        const TrainConfig cfg = train_config_from_json(parse(config));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(f, g, p, q, cfg);
        }
        return py::make_tuple(r.phi, r.psi, to_json(r.record, include_timing).dump());
      },
      py::arg("f"), py::arg("g"), py::arg("p"), py::arg("q"), py::arg("config") = "{}",
      py::arg("include_timing") = true);

  m.def(
      "run_experiment",
      [](const std::string& config, int workers, bool full_scale, std::optional<std::uint64_t> seed,
         bool include_timing) {
        RunOptions opts;
        opts.workers = workers;
        opts.full_scale = full_scale;
        opts.seed = seed;
        const json cfg = parse(config);
        ExperimentOutput out;
        {
          py::gil_scoped_release release;
          out = run_experiment(cfg, opts);
        }
        return py::make_tuple(to_json(out, include_timing).dump(), to_csv(out.rows, include_timing));
      },
      py::arg("config"), py::arg("workers") = 1, py::arg("full_scale") = false, py::arg("seed") = py::none(),
      py::arg("include_timing") = true);

  m.def(
      "cca",
      [](const InMatrix& a, const InMatrix& b) {
        CcaResult r = cca(to_rows(a), to_rows(b));
        return py::make_tuple(r.mean, Eigen::VectorXd(r.correlations), r.rank);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "simulate_ensemble",
      [](const VectorField& f, const Sampler& initial, int trials, double dt, double horizon, double noise,
         int record_every, std::uint64_t seed) {
        EnsembleOptions o;
        o.trials = trials;
        o.dt = dt;
        o.horizon = horizon;
        o.noise = noise;
        o.record_every = record_every;
        TrajectoryEnsemble e = simulate_ensemble(f, initial, o, seed);
        return py::make_tuple(e.states, e.trial_ids, e.trial_lengths);
      },
      py::arg("field"), py::arg("initial"), py::arg("trials") = 1000, py::arg("dt") = 0.01, py::arg("horizon") = 10.0,
      py::arg("noise") = 0.0, py::arg("record_every") = 1, py::arg("seed") = 0);
}
