#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crow/io.hpp"
#include "crow/stats.hpp"
#include "crow/synth.hpp"
#include "crow/training.hpp"
#include "crow/verify.hpp"

namespace py = pybind11;
using namespace crow;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<std::size_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = static_cast<std::size_t>(arr.shape(i));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(shape);
  std::copy(t.values().begin(), t.values().end(), arr.mutable_data());
  return arr;
}

std::vector<Tensor> rows_to_tensors(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  std::vector<Tensor> rows;
  const std::size_t n = static_cast<std::size_t>(arr.shape(0));
  const std::size_t d = static_cast<std::size_t>(arr.shape(1));
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> data(arr.data() + i * d, arr.data() + (i + 1) * d);
    rows.emplace_back(std::vector<std::size_t>{d}, std::move(data));
  }
  return rows;
}

SplitScheme parse_split(const std::string& kind, std::size_t rows, std::size_t cols) {
  if (kind == "halves") return {SplitKind::Halves, 0, 0};
  if (kind == "checkerboard") return {SplitKind::Checkerboard, rows, cols};
  throw std::invalid_argument("split kind must be 'halves' or 'checkerboard', got '" + kind + "'");
}

py::array_t<double> sample_frames(const SequenceSample& s) {
  const std::size_t T = s.frames.size(), d = s.frames.empty() ? 0 : s.frames[0].width();
  py::array_t<double> arr({T, d});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(s.frames[t].values().begin(), s.frames[t].values().end(),
              arr.mutable_data() + t * d);
  }
  return arr;
}

py::array_t<double> sample_covariates(const SequenceSample& s) {
  const std::size_t T = s.covariates.size(), d = s.covariates.empty() ? 0 : s.covariates[0].width();
  py::array_t<double> arr({T, d});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(s.covariates[t].values().begin(), s.covariates[t].values().end(),
              arr.mutable_data() + t * d);
  }
  return arr;
}

}  // namespace

PYBIND11_MODULE(_crow, mod) {
  mod.doc() = "Conditionally invertible recurrent flow: training, generation, densities";

  py::class_<FlowConfig>(mod, "FlowConfig")
      .def(py::init([](std::size_t d_x, std::size_t d_y, std::size_t d_z, std::size_t d_total,
                       std::size_t n_blocks, std::size_t hidden, const std::string& split,
                       std::size_t rows, std::size_t cols, double s_max, std::uint64_t seed) {
             FlowConfig c;
             c.d_x = d_x;
             c.d_y = d_y;
             c.d_z = d_z;
             c.d_total = d_total;
             c.n_blocks = n_blocks;
             c.hidden = hidden;
             c.split = parse_split(split, rows, cols);
             c.s_max = s_max;
             c.seed = seed;
             c.validate();
             return c;
           }),
           py::arg("d_x"), py::arg("d_y"), py::arg("d_z"), py::arg("d_total"),
           py::arg("n_blocks") = 1, py::arg("hidden") = 16, py::arg("split") = "halves",
           py::arg("rows") = 0, py::arg("cols") = 0, py::arg("s_max") = 2.0, py::arg("seed") = 0)
      .def_readonly("d_x", &FlowConfig::d_x)
      .def_readonly("d_y", &FlowConfig::d_y)
      .def_readonly("d_z", &FlowConfig::d_z)
      .def_readonly("d_total", &FlowConfig::d_total)
      .def_readonly("n_blocks", &FlowConfig::n_blocks)
      .def_readonly("hidden", &FlowConfig::hidden)
      .def_readonly("seed", &FlowConfig::seed);

  py::class_<DatasetMeta>(mod, "DatasetMeta")
      .def_readonly("d_x", &DatasetMeta::d_x)
      .def_readonly("d_y", &DatasetMeta::d_y)
      .def_readonly("T", &DatasetMeta::T)
      .def_readonly("kind", &DatasetMeta::kind)
      .def_readonly("seed", &DatasetMeta::seed)
      .def_readonly("rows", &DatasetMeta::rows)
      .def_readonly("cols", &DatasetMeta::cols);

  py::class_<Dataset>(mod, "Dataset")
      .def_readonly("meta", &Dataset::meta)
      .def("__len__", [](const Dataset& d) { return d.samples.size(); })
      .def("frames", [](const Dataset& d, std::size_t i) { return sample_frames(d.samples.at(i)); })
      .def("covariates",
           [](const Dataset& d, std::size_t i) { return sample_covariates(d.samples.at(i)); })
      .def("save", [](const Dataset& d, const std::string& path) { save_dataset(d, path); })
      .def_static("load", &load_dataset);

  py::class_<FlowModel>(mod, "FlowModel")
      .def_readonly("config", &FlowModel::config)
      .def("save", [](const FlowModel& m, const std::string& path) { save_model(m, path); })
      .def_static("load", &load_model);

  mod.def("init_model", &init_model, py::arg("config"));

  mod.def(
      "synth_moving_blob",
      [](std::size_t n, std::size_t T, std::size_t rows, std::size_t cols, std::uint64_t seed) {
        RngState rng(seed);
        return synth_moving_blob(n, T, rows, cols, rng);
      },
      py::arg("n"), py::arg("T"), py::arg("rows"), py::arg("cols"), py::arg("seed") = 0);

  mod.def(
      "synth_regime",
      [](std::size_t n, std::size_t T, std::size_t d, std::uint64_t seed) {
        RngState rng(seed);
        return synth_regime(n, T, d, rng);
      },
      py::arg("n"), py::arg("T"), py::arg("d"), py::arg("seed") = 0);

  py::class_<EpochMetrics>(mod, "EpochMetrics")
      .def_readonly("epoch", &EpochMetrics::epoch)
      .def_readonly("loss_Z", &EpochMetrics::loss_Z)
      .def_readonly("loss_Y", &EpochMetrics::loss_Y)
      .def_readonly("loss_X", &EpochMetrics::loss_X)
      .def_readonly("pad", &EpochMetrics::pad)
      .def_readonly("grad_norm", &EpochMetrics::grad_norm)
      .def_readonly("roundtrip_err", &EpochMetrics::roundtrip_err);

  mod.def(
      "train",
      [](FlowModel& m, const Dataset& data, std::size_t epochs, std::size_t batch, double lr,
         double w_Z, double w_Y, double w_X, double w_P, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch = batch;
        cfg.adam.lr = lr;
        cfg.w_Z = w_Z;
        cfg.w_Y = w_Y;
        cfg.w_X = w_X;
        cfg.w_P = w_P;
        cfg.seed = seed;
        RngState rng(seed);
        TrainResult result = train(m, data, cfg, rng);
        if (result.aborted) throw std::runtime_error("training aborted: " + result.abort_reason);
        return result.epochs;
      },
      py::arg("model"), py::arg("dataset"), py::arg("epochs") = 1, py::arg("batch") = 128,
      py::arg("lr") = 5e-4, py::arg("w_Z") = 1.0, py::arg("w_Y") = 1.0, py::arg("w_X") = 1.0,
      py::arg("w_P") = 1.0, py::arg("seed") = 0);

  mod.def(
      "generate",
      [](const FlowModel& m,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& conditions,
         std::size_t n, std::uint64_t seed) {
        std::vector<Tensor> covs = rows_to_tensors(conditions);
        RngState rng(seed);
        const std::size_t T = covs.size();
        py::array_t<double> out({n, T, m.config.d_x});
        for (std::size_t i = 0; i < n; ++i) {
          SequenceSample s = sequence_generate(m, covs, rng);
          for (std::size_t t = 0; t < T; ++t) {
            std::copy(s.frames[t].values().begin(), s.frames[t].values().end(),
                      out.mutable_data() + (i * T + t) * m.config.d_x);
          }
        }
        return out;
      },
      py::arg("model"), py::arg("conditions"), py::arg("n") = 1, py::arg("seed") = 0,
      "Sample n sequences conditioned on a [T, d_y] covariate path.");

  mod.def(
      "density",
      [](const FlowModel& m,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& frames) {
        SequenceSample s;
        if (frames.ndim() != 2) throw std::invalid_argument("frames must be [T, d_x]");
        s.frames = rows_to_tensors(frames);
        s.covariates.assign(s.frames.size(), Tensor({m.config.d_y}));
        std::vector<StepResult> steps = sequence_forward(m, s);
        py::array_t<double> out({steps.size(), static_cast<std::size_t>(2)});
        for (std::size_t t = 0; t < steps.size(); ++t) {
          out.mutable_data()[2 * t] = steps[t].logdet;
          out.mutable_data()[2 * t + 1] = log_density(steps[t]);
        }
        return out;
      },
      py::arg("model"), py::arg("frames"),
      "Per-timestep [logdet, log_density] for a [T, d_x] sequence.");

  mod.def(
      "forward_step",
      [](const FlowModel& m,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
        StepResult r = step_forward(m, to_tensor(x), initial_hiddens(m));
        return py::make_tuple(to_array(r.y_hat), to_array(r.z), to_array(r.pad_out), r.logdet);
      },
      py::arg("model"), py::arg("x"), "Single-step forward from zero hidden states.");

  mod.def(
      "inverse_step",
      [](const FlowModel& m,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& pad_in) {
        StepInverseResult r =
            step_inverse(m, to_tensor(y), to_tensor(z), to_tensor(pad_in), initial_hiddens(m));
        return to_array(r.x);
      },
      py::arg("model"), py::arg("y"), py::arg("z"), py::arg("pad_in"),
      "Single-step inverse from zero hidden states.");

  mod.def(
      "mmd2",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return mmd2(rows_to_tensors(a), rows_to_tensors(b), MmdConfig());
      },
      py::arg("a"), py::arg("b"));

  mod.def(
      "group_analysis",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b, double alpha) {
        GroupStats stats = group_analysis(rows_to_tensors(a), rows_to_tensors(b), alpha);
        py::list rows;
        for (std::size_t f = 0; f < stats.features.size(); ++f) {
          py::dict row;
          row["feature"] = f;
          row["t_stat"] = stats.features[f].t_stat;
          row["p_raw"] = stats.features[f].p_raw;
          row["p_corrected"] = stats.features[f].p_corrected;
          row["significant"] = stats.features[f].significant;
          rows.append(row);
        }
        return rows;
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 0.01);

  mod.def(
      "verify",
      [](std::uint64_t seed) {
        py::list rows;
        for (const CheckResult& c : run_verification(seed)) {
          py::dict row;
          row["name"] = c.name;
          row["ok"] = c.ok;
          row["detail"] = c.detail;
          rows.append(row);
        }
        return rows;
      },
      py::arg("seed") = 0, "Run the invariant/oracle suite; returns one record per check.");
}
