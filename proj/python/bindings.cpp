#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "reskin/config.hpp"
#include "reskin/datagen.hpp"
#include "reskin/eval.hpp"
#include "reskin/experiments.hpp"
#include "reskin/field_sim.hpp"
#include "reskin/neural.hpp"
#include "reskin/protocol.hpp"

namespace py = pybind11;
using namespace reskin;
using nlohmann::json;

namespace {

cfg::RunConfig config_from(const std::string& overrides, const std::string& preset) {
  cfg::RunConfig c;
  if (!preset.empty()) exp::apply_preset(c, preset);
  if (!overrides.empty()) c.merge(json::parse(overrides));
  c.validate();
  return c;
}

py::bytes as_bytes(const std::vector<std::uint8_t>& v) {
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

std::span<const std::uint8_t> view(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

using ChipArray = Eigen::Matrix<double, kNumMagnetometers, 4, Eigen::RowMajor>;

protocol::FluxFrame frame_from(std::uint64_t ts, const ChipArray& chips) {
  protocol::FluxFrame f;
  f.timestamp_us = ts;
  for (int c = 0; c < kNumMagnetometers; ++c) {
    f.chips[c].temp = float(chips(c, 0));
    f.chips[c].bx = float(chips(c, 1));
    f.chips[c].by = float(chips(c, 2));
    f.chips[c].bz = float(chips(c, 3));
  }
  return f;
}

ChipArray chips_of(const protocol::FluxFrame& f) {
  ChipArray a;
  for (int c = 0; c < kNumMagnetometers; ++c)
    a.row(c) << f.chips[c].temp, f.chips[c].bx, f.chips[c].by, f.chips[c].bz;
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Simulated magnetic skin: physics, wire protocol, decoder and experiments";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("dipole_field", &sim::dipole_field, py::arg("position"), py::arg("moment"),
        py::arg("observer"), py::arg("k") = 1.0);

  m.def("config_defaults", [] { return cfg::RunConfig().flat().dump(); });
  m.def("config_resolve", [](const std::string& overrides, const std::string& preset) {
    const auto c = config_from(overrides, preset);
    return py::make_tuple(c.flat().dump(), c.hash());
  }, py::arg("overrides") = "", py::arg("preset") = "");
  m.def("presets", [] {
    std::vector<std::string> names;
    for (const auto& p : exp::presets()) names.push_back(p.name);
    return names;
  });

  m.def("simulate", [](const std::string& overrides) {
    const auto c = config_from(overrides, "");
    auto sensor = exp::make_single_sensor(c);
    const auto ds = exp::simulate_dataset(c, sensor, "sensor");
    const auto mats = data::to_matrices(ds);
    return py::make_tuple(mats.X, mats.Y);
  }, py::arg("overrides") = "", "Single-sensor dataset as (X flux deltas, Y labels).");

  m.def("run_experiment", [](const std::string& preset, const std::string& overrides, int jobs) {
    const auto c = config_from(overrides, preset);
    exp::ExperimentResult r;
    {
      py::gil_scoped_release release;
      r = exp::run_experiment(c, jobs);
    }
    return py::make_tuple(eval::render_report(r.reports, eval::ReportFormat::json), r.artifacts);
  }, py::arg("preset"), py::arg("overrides") = "", py::arg("jobs") = 1);

  py::class_<nn::MlpModel>(m, "Model")
      .def_static("load", &nn::load_model)
      .def_static("from_bytes", [](const std::string& b) { return nn::decode_model(view(b)); })
      .def("save", [](const nn::MlpModel& model, const std::string& path) { nn::save_model(path, model); })
      .def("to_bytes", [](const nn::MlpModel& model) { return as_bytes(nn::encode_model(model)); })
      .def("predict", [](const nn::MlpModel& model, const Eigen::MatrixXd& X) { return nn::predict(model, X); })
      .def("features", [](const nn::MlpModel& model, const Eigen::MatrixXd& X) { return nn::features(model, X); })
      .def_property_readonly("widths", [](const nn::MlpModel& model) { return model.arch.widths; })
      .def_property_readonly("parameter_count", &nn::MlpModel::parameter_count);

  m.def("train", [](const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const std::string& overrides) {
    const auto c = config_from(overrides, "");
    const auto tc = c.train();
    nn::TrainResult r;
    {
      py::gil_scoped_release release;
      r = nn::train(nn::init_model(nn::Architecture::canonical(int(Y.cols()), c.as<bool>("train.relu_feature_layers")),
                                   tc.seed),
                    X, Y, tc, nn::FitOptions{});
    }
    return py::make_tuple(r.model, r.log.to_csv());
  }, py::arg("X"), py::arg("Y"), py::arg("overrides") = "");

  m.def("localization_accuracy", &eval::localization_accuracy, py::arg("predictions"),
        py::arg("labels"), py::arg("tolerance") = 1.0);
  m.def("mse", [](const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y) {
    const auto r = eval::mse_metrics(P, Y);
    return py::make_tuple(r.mse_xy, r.mse_f);
  });

  m.def("crc16", [](const std::string& b) { return protocol::crc16_ccitt(view(b)); });
  m.def("encode_frame", [](std::uint64_t ts, const ChipArray& chips) {
    const auto w = protocol::encode_frame(frame_from(ts, chips));
    return py::bytes(reinterpret_cast<const char*>(w.data()), w.size());
  }, py::arg("timestamp_us"), py::arg("chips"), "chips: 5 x 4 array of (temp, bx, by, bz).");
  m.def("decode_stream", [](const std::string& b) {
    const auto r = protocol::decode_stream(view(b));
    py::list frames;
    for (const auto& f : r.frames) frames.append(py::make_tuple(f.timestamp_us, chips_of(f)));
    py::dict stats;
    stats["frames"] = r.stats.frames;
    stats["skipped_bytes"] = r.stats.skipped_bytes;
    stats["crc_failures"] = r.stats.crc_failures;
    stats["timestamp_regressions"] = r.stats.timestamp_regressions;
    return py::make_tuple(frames, stats);
  });
}
