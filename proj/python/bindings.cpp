#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "irloss/checkpoint.hpp"
#include "irloss/cli.hpp"
#include "irloss/curriculum.hpp"
#include "irloss/data.hpp"
#include "irloss/errors.hpp"
#include "irloss/eval.hpp"
#include "irloss/gradcheck.hpp"
#include "irloss/imprecision.hpp"
#include "irloss/loss.hpp"
#include "irloss/nn.hpp"

namespace py = pybind11;
using namespace irloss;

namespace {

SignMode sign_mode(const std::string& name) {
  if (name == "random") return SignMode::random_per_sample;
  if (name == "positive") return SignMode::fixed_positive;
  if (name == "corners") return SignMode::all_corners;
  throw py::value_error("signs must be 'random', 'positive' or 'corners'");
}

WeightSpec weight_spec(const std::string& scheme, double lam, const std::optional<Vector>& custom) {
  WeightSpec spec;
  spec.lambda = lam;
  if (scheme == "linear") spec.scheme = WeightScheme::linear;
  else if (scheme == "exponential") spec.scheme = WeightScheme::exponential;
  else if (scheme == "custom") spec.scheme = WeightScheme::custom;
  else throw py::value_error("scheme must be 'linear', 'exponential' or 'custom'");
  if (custom) spec.custom = *custom;
  return spec;
}

TrainConfig train_config(std::size_t epochs, std::size_t batch_size, double learning_rate, int alpha,
                         std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.adam.learning_rate = learning_rate;
  cfg.alpha = alpha;
  cfg.seed = seed;
  return cfg;
}

// A trained or freshly initialized model plus the statistics it expects.
struct Model {
  ModelParams params;
  std::optional<Normalization> stats;

  Vector predict_raw(const Sequence& x) const { return model_predictor(params, stats)(x); }
};

py::dict train_output(const TrainResult& result, const std::optional<Normalization>& stats) {
  py::list stages;
  for (const auto& s : result.report.stages) {
    py::dict d;
    d["stage"] = s.stage;
    d["delta"] = s.delta;
    d["weight"] = s.weight;
    d["epoch_losses"] = s.epoch_losses;
    d["final_loss"] = s.final_loss;
    stages.append(d);
  }
  py::dict out;
  out["model"] = Model{result.model, stats};
  out["stages"] = stages;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Imprecision-range loss for LSTM lab-value forecasting";
  m.attr("__version__") = IRLOSS_VERSION;
  m.attr("MEASURES") = std::vector<std::string>(kMeasureNames.begin(), kMeasureNames.end());

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_ArithmeticError);

  // imprecision
  m.def("delta_sequence", [](double r, double s) { return delta_sequence({r, s}); }, py::arg("r"), py::arg("s"),
        "Scales j*s for j = 1..N with N = r/s.");
  m.def("perturb", &perturb, py::arg("x"), py::arg("delta"), py::arg("signs"),
        "Elementwise x * (1 + sign * delta).");

  // loss
  m.def("base_loss", [](const Vector& y, const Vector& pred, int alpha) { return base_loss(y, pred, alpha); },
        py::arg("y"), py::arg("pred"), py::arg("alpha") = 2);
  m.def(
      "weight_vector",
      [](std::size_t n, const std::string& scheme, double lam, std::optional<Vector> custom) {
        return weight_vector(n, weight_spec(scheme, lam, custom)).values();
      },
      py::arg("n"), py::arg("scheme") = "linear", py::arg("lam") = 0.5, py::arg("custom") = py::none());

  // data
  py::class_<PatientRecord>(m, "PatientRecord")
      .def_readonly("id", &PatientRecord::id)
      .def_readonly("inputs", &PatientRecord::inputs)
      .def_readonly("target", &PatientRecord::target);

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def("__getitem__",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.size()) throw py::index_error();
             return d.records[i];
           })
      .def_property_readonly("steps", &Dataset::steps)
      .def("save_csv", [](const Dataset& d, const std::string& path) { save_csv(d, path); })
      .def_static("load_csv", [](const std::string& path) { return load_csv(std::filesystem::path(path)); })
      .def("split", [](const Dataset& d, std::size_t n_train) { return split(d, n_train); }, py::arg("n_train"));

  m.def(
      "generate_synthetic",
      [](std::size_t patients, std::size_t steps, std::size_t horizon, double noise, std::uint64_t seed) {
        SyntheticConfig cfg;
        cfg.patients = patients;
        cfg.steps = steps;
        cfg.horizon = horizon;
        cfg.noise = noise;
        cfg.seed = seed;
        return generate_synthetic(cfg);
      },
      py::arg("patients") = 2460, py::arg("steps") = 6, py::arg("horizon") = 24, py::arg("noise") = 0.05,
      py::arg("seed") = 1);

  // model
  py::class_<Model>(m, "Model")
      .def("predict", &Model::predict_raw, py::arg("x"), "Prediction in raw units for a raw input sequence.")
      .def_property_readonly("parameter_count", [](const Model& mdl) { return mdl.params.parameter_count(); })
      .def("__eq__", [](const Model& a, const Model& b) { return a.params == b.params && a.stats == b.stats; })
      .def("save",
           [](const Model& mdl, const std::string& path) {
             std::ofstream out(path, std::ios::binary);
             if (!out) throw std::runtime_error("cannot write " + path);
             write_checkpoint(out, Checkpoint{mdl.params, mdl.stats});
           })
      .def_static("load", [](const std::string& path) {
        const auto cp = read_checkpoint(std::filesystem::path(path));
        return Model{cp.params, cp.normalization};
      });

  m.def(
      "init_model",
      [](const std::vector<std::size_t>& hidden, std::uint64_t seed, double dropout,
         const std::optional<Dataset>& data) {
        std::vector<LayerShape> shapes;
        std::size_t in = kMeasureCount;
        for (auto h : hidden) {
          shapes.push_back({in, h});
          in = h;
        }
        std::optional<Normalization> stats;
        if (data) stats = data->stats;
        return Model{init_params(shapes, kMeasureCount, seed, dropout), stats};
      },
      py::arg("hidden") = std::vector<std::size_t>{32, 32}, py::arg("seed") = 1, py::arg("dropout") = 0.0,
      py::arg("data") = py::none(), "New model; pass the training split to attach its normalization.");

  // training
  m.def(
      "train_baseline",
      [](const Dataset& train, const Model& init, std::size_t epochs, std::size_t batch_size, double lr, int alpha,
         std::uint64_t seed) {
        py::gil_scoped_release release;
        auto result = train_baseline(train, init.params, train_config(epochs, batch_size, lr, alpha, seed));
        py::gil_scoped_acquire acquire;
        return train_output(result, train.stats);
      },
      py::arg("train"), py::arg("model"), py::arg("epochs") = 10, py::arg("batch_size") = 32,
      py::arg("learning_rate") = 1e-3, py::arg("alpha") = 2, py::arg("seed") = 1);

  m.def(
      "train_curriculum",
      [](const Dataset& train, const Model& init, double r, double s, const std::string& signs,
         std::uint64_t sign_seed, const std::string& scheme, std::size_t epochs, std::size_t batch_size, double lr,
         int alpha, std::uint64_t seed) {
        const ImprecisionSpec spec{r, s};
        py::gil_scoped_release release;
        const auto sets = generate_datasets(train, spec, {sign_mode(signs), sign_seed});
        const auto weights = weight_vector(spec.stage_count(), weight_spec(scheme, 0.5, std::nullopt));
        auto result = train_curriculum(sets, weights, init.params, train_config(epochs, batch_size, lr, alpha, seed));
        py::gil_scoped_acquire acquire;
        return train_output(result, train.stats);
      },
      py::arg("train"), py::arg("model"), py::arg("r") = 0.10, py::arg("s") = 0.01, py::arg("signs") = "random",
      py::arg("sign_seed") = 0, py::arg("scheme") = "linear", py::arg("epochs") = 10, py::arg("batch_size") = 32,
      py::arg("learning_rate") = 1e-3, py::arg("alpha") = 2, py::arg("seed") = 1);

  // evaluation
  m.def(
      "accuracy",
      [](const Model& mdl, const Dataset& test, double delta, std::uint64_t seed) {
        const auto rep = accuracy(model_predictor(mdl.params, mdl.stats), test, ReferenceRanges::defaults(),
                                  Perturbation{delta, {SignMode::random_per_sample, seed}});
        py::dict out;
        out["per_measure"] = std::vector<double>(rep.accuracy.begin(), rep.accuracy.end());
        out["average"] = rep.average;
        return out;
      },
      py::arg("model"), py::arg("test"), py::arg("delta") = 0.0, py::arg("seed") = 12345);

  m.def(
      "distance",
      [](const Model& mdl, const Dataset& test, std::vector<double> deltas, std::size_t samples, int alpha,
         std::uint64_t seed) {
        EvalConfig cfg;
        cfg.deltas = std::move(deltas);
        cfg.samples_per_patient = samples;
        cfg.alpha = alpha;
        cfg.signs.seed = seed;
        const auto rep = distance(model_predictor(mdl.params, mdl.stats), test, cfg);
        py::dict out;
        out["total"] = rep.total;
        out["per_patient"] = rep.per_patient;
        out["per_measure"] = std::vector<double>(rep.per_measure.begin(), rep.per_measure.end());
        return out;
      },
      py::arg("model"), py::arg("test"), py::arg("deltas") = std::vector<double>{0.0}, py::arg("samples") = 1,
      py::arg("alpha") = 2, py::arg("seed") = 12345);

  m.def(
      "gradcheck",
      [](int alpha, std::uint64_t seed) {
        const auto r = reference_gradcheck(alpha, seed);
        py::dict out;
        out["max_relative_error"] = r.max_relative_error;
        out["parameters_checked"] = r.parameters_checked;
        out["excluded_samples"] = r.excluded_samples;
        return out;
      },
      py::arg("alpha") = 2, py::arg("seed") = 1);

  m.def("run_cli", [](const std::vector<std::string>& args) { return cli::run(args); }, py::arg("args"),
        "Runs the command-line tool in-process and returns its exit code.");
}
