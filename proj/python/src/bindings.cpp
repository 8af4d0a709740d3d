#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "litevsr/acoustic_model.hpp"
#include "litevsr/crop.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/eval.hpp"
#include "litevsr/feature_norm.hpp"
#include "litevsr/media.hpp"
#include "litevsr/nn/tensor.hpp"
#include "litevsr/training.hpp"
#include "litevsr/visual_base.hpp"
#include "litevsr/vocab.hpp"

namespace py = pybind11;
namespace lv = litevsr;

namespace {

using VideoArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

lv::VideoTensor to_video(const VideoArray& a) {
  if (a.ndim() != 4) throw lv::DimensionError("video must be a [frames, height, width, channels] array");
  lv::VideoTensor v;
  v.frames = static_cast<int>(a.shape(0));
  v.height = static_cast<int>(a.shape(1));
  v.width = static_cast<int>(a.shape(2));
  v.channels = static_cast<int>(a.shape(3));
  v.data.assign(a.data(), a.data() + a.size());
  return v;
}

lv::Matrix run(const lv::nn::Var& out) { return lv::nn::to_matrix(out); }

lv::MouthTrack to_track(const Eigen::Ref<const lv::Matrix>& centers,
                        const std::vector<double>& widths) {
  if (centers.cols() != 2 || centers.rows() != static_cast<Eigen::Index>(widths.size())) {
    throw lv::DimensionError("centers must be [frames, 2] with one width per frame");
  }
  lv::MouthTrack m;
  for (Eigen::Index i = 0; i < centers.rows(); ++i) m.center.emplace_back(centers(i, 0), centers(i, 1));
  m.width = widths;
  return m;
}

lv::Matrix plan_to_matrix(const lv::CropPlan& plan) {
  lv::Matrix out(plan.frames(), 3);
  for (int f = 0; f < plan.frames(); ++f) {
    out(f, 0) = plan.rects[f].cx;
    out(f, 1) = plan.rects[f].cy;
    out(f, 2) = plan.rects[f].side;
  }
  return out;
}

py::dict regression_dict(const lv::RegressionResult& r) {
  py::dict d;
  d["slope"] = r.slope;
  d["intercept"] = r.intercept;
  d["r"] = r.pearson_r;
  d["n"] = r.n;
  return d;
}

}  // namespace

PYBIND11_MODULE(_litevsr, m) {
  m.doc() = "Core routines of the litevsr library";

  auto error = py::register_exception<lv::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<lv::ConfigError>(m, "ConfigError", error.ptr());
  auto data_error = py::register_exception<lv::DataError>(m, "DataError", error.ptr());
  py::register_exception<lv::NumericError>(m, "NumericError", error.ptr());
  py::register_exception<lv::DimensionError>(m, "DimensionError", data_error.ptr());

  py::class_<lv::Vocabulary>(m, "Vocabulary")
      .def(py::init<std::vector<std::string>>(), py::arg("tokens"))
      .def_static("characters", &lv::Vocabulary::characters)
      .def_static("load", &lv::Vocabulary::load, py::arg("path"))
      .def("save", &lv::Vocabulary::save, py::arg("path"))
      .def_property_readonly("size", &lv::Vocabulary::size)
      .def_property_readonly("blank_id", &lv::Vocabulary::blank_id)
      .def("token", &lv::Vocabulary::token, py::arg("id"))
      .def("encode", [](const lv::Vocabulary& v, const std::string& s) { return v.encode(s).ids; },
           py::arg("text"))
      .def("decode", &lv::Vocabulary::decode, py::arg("ids"));

  m.def("wer", py::overload_cast<const std::string&, const std::string&>(&lv::wer),
        py::arg("ref"), py::arg("hyp"));
  m.def("cer", &lv::cer, py::arg("ref"), py::arg("hyp"));
  m.def("normalize_words", &lv::normalize_words, py::arg("text"));
  m.def(
      "greedy_ctc_decode",
      [](const Eigen::Ref<const lv::Matrix>& logits, int blank) {
        return lv::greedy_ctc_decode(logits, blank).ids;
      },
      py::arg("logits"), py::arg("blank_id"));
  m.def(
      "linear_regression",
      [](const std::vector<double>& xs, const std::vector<double>& ys) {
        return regression_dict(lv::linear_regression(xs, ys));
      },
      py::arg("xs"), py::arg("ys"));
  m.def(
      "noam_lr",
      [](int64_t step, int64_t warmup, double peak) {
        return lv::noam_lr(step, lv::ScheduleConfig{warmup, peak});
      },
      py::arg("step"), py::arg("warmup_steps"), py::arg("peak_lr"));

  py::class_<lv::NormalizationStats>(m, "NormalizationStats")
      .def_readonly("mu", &lv::NormalizationStats::mu)
      .def_readonly("sigma", &lv::NormalizationStats::sigma)
      .def_readonly("frame_count", &lv::NormalizationStats::frame_count)
      .def_readonly("sigma_floor", &lv::NormalizationStats::sigma_floor)
      .def_property_readonly("dim", &lv::NormalizationStats::dim)
      .def("clamped", &lv::NormalizationStats::clamped)
      .def_static("identity", &lv::NormalizationStats::identity, py::arg("dim"))
      .def_static("load", &lv::NormalizationStats::load, py::arg("path"))
      .def("save", &lv::NormalizationStats::save, py::arg("path"));
  m.def(
      "compute_stats",
      [](const std::vector<lv::Matrix>& seqs, double floor) {
        std::vector<lv::FeatureSequence> fs;
        for (const auto& s : seqs) fs.emplace_back(s);
        return lv::compute_stats(fs, floor);
      },
      py::arg("sequences"), py::arg("sigma_floor") = lv::kDefaultSigmaFloor);
  m.def("normalize", py::overload_cast<const lv::Matrix&, const lv::NormalizationStats&>(&lv::normalize),
        py::arg("features"), py::arg("stats"));
  m.def("denormalize",
        py::overload_cast<const lv::Matrix&, const lv::NormalizationStats&>(&lv::denormalize),
        py::arg("features"), py::arg("stats"));

  m.def("gaussian_kernel", &lv::gaussian_kernel, py::arg("sigma"));
  m.def(
      "gaussian_smooth",
      [](const std::vector<double>& x, double sigma) { return lv::gaussian_smooth(x, sigma); },
      py::arg("signal"), py::arg("sigma"));
  m.def(
      "plan_crop",
      [](const Eigen::Ref<const lv::Matrix>& centers, const std::vector<double>& widths,
         const std::string& mode, double sigma, double width_scale) {
        lv::CropConfig cfg;
        cfg.mode = lv::crop_mode_from_string(mode);
        cfg.gaussian_sigma = sigma;
        cfg.width_scale = width_scale;
        cfg.validate();
        return plan_to_matrix(lv::plan_crop(to_track(centers, widths), cfg));
      },
      py::arg("centers"), py::arg("widths"), py::arg("mode") = "fixed", py::arg("sigma") = 4.0,
      py::arg("width_scale") = 1.5,
      "Crop rects [frames, 3] as (cx, cy, side) from mouth centres [frames, 2] and widths.");
  m.def(
      "read_landmarks",
      [](const std::filesystem::path& path) {
        const auto t = lv::read_landmarks(path);
        py::array_t<double> out({t.frames(), lv::kNumLandmarks, 2});
        auto w = out.mutable_unchecked<3>();
        for (int f = 0; f < t.frames(); ++f) {
          for (int i = 0; i < lv::kNumLandmarks; ++i) {
            w(f, i, 0) = t.point(f, i).x();
            w(f, i, 1) = t.point(f, i).y();
          }
        }
        return out;
      },
      py::arg("path"));

  py::class_<lv::VisualBase, std::shared_ptr<lv::VisualBase>>(m, "VisualBase")
      .def_static("load", &lv::VisualBase::load, py::arg("path"))
      .def_property_readonly("output_dim",
                             [](const lv::VisualBase& v) { return v.config().output_dim; })
      .def_property_readonly("input_size",
                             [](const lv::VisualBase& v) { return v.config().input_size; })
      .def_property_readonly(
          "num_parameters",
          [](const lv::VisualBase& v) { return lv::nn::parameter_count(v.parameters()); })
      .def(
          "forward",
          [](const lv::VisualBase& v, const VideoArray& video) {
            lv::nn::NoGradGuard no_grad;
            return run(v.forward(to_video(video)));
          },
          py::arg("video"), "Features [frames, output_dim] of a [F, S, S, C] clip in [0, 1].");

  py::class_<lv::AcousticModel, std::shared_ptr<lv::AcousticModel>>(m, "AcousticModel")
      .def_static("load", &lv::AcousticModel::load, py::arg("path"))
      .def_property_readonly("num_layers", &lv::AcousticModel::num_layers)
      .def_property_readonly("model_dim",
                             [](const lv::AcousticModel& a) { return a.config().model_dim; })
      .def_property_readonly("split_layer",
                             [](const lv::AcousticModel& a) { return a.config().split_layer; })
      .def_property_readonly("blank_id",
                             [](const lv::AcousticModel& a) { return a.config().vocab_size; })
      .def(
          "forward",
          [](const lv::AcousticModel& a, const lv::Matrix& x) {
            lv::nn::NoGradGuard no_grad;
            return run(a.forward(lv::nn::from_matrix(x)));
          },
          py::arg("features"), "CTC logits of front-end features [T, input_dim].")
      .def(
          "base_forward",
          [](std::shared_ptr<lv::AcousticModel> a, const lv::Matrix& x) {
            lv::nn::NoGradGuard no_grad;
            const auto split = lv::split_model(a, a->config().split_layer);
            return run(split.base.forward(lv::nn::from_matrix(x)));
          },
          py::arg("features"), "Audio-base outputs [T', model_dim].")
      .def(
          "head_forward",
          [](std::shared_ptr<lv::AcousticModel> a, const lv::Matrix& h) {
            lv::nn::NoGradGuard no_grad;
            const auto split = lv::split_model(a, a->config().split_layer);
            return run(split.head.forward(lv::nn::from_matrix(h)));
          },
          py::arg("features"), "CTC logits from audio-base features.");
}
