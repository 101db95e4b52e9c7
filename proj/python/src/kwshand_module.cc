// Copyright (c) 2026 The kwshand Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Python bindings: features, inference, training, checkpoints and the
// command path. Audio is float64 in [-1, 1] unless it says int16.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <optional>

#include "kws/checkpoint.h"
#include "kws/cli.h"
#include "kws/command.h"
#include "kws/features.h"
#include "kws/training.h"

namespace py = pybind11;

namespace kws {
namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I16Array = py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>;

std::vector<double> ToVector(const F64Array& a) {
  if (a.ndim() != 1) throw Error(ErrorCode::kShapeMismatch, "expected a 1-d array");
  return std::vector<double>(a.data(), a.data() + a.size());
}

F64Array GridToArray(const SpectrogramGrid& g) {
  F64Array out({g.bins, g.frames});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

GestureClass LabelFromName(const std::string& name) {
  const auto c = ClassFromName(name);
  if (!c) throw Error(ErrorCode::kInvalidArgument, "unknown class name " + name);
  return *c;
}

GestureTable TableFrom(const std::optional<std::string>& json) {
  return json ? GestureTable::FromJson(*json) : GestureTable::Default();
}

py::dict ClassificationDict(const Classification& c) {
  py::dict d;
  d["class"] = std::string(ClassName(c.label));
  d["prob"] = c.probability();
  d["probabilities"] = std::vector<double>(c.probabilities.begin(), c.probabilities.end());
  return d;
}

InMemorySource SourceFrom(const F64Array& windows, const std::vector<std::string>& labels) {
  if (windows.ndim() != 2 || windows.shape(1) != static_cast<py::ssize_t>(kWindowSamples)) {
    throw Error(ErrorCode::kShapeMismatch, "windows must have shape (n, 16000)");
  }
  if (static_cast<std::size_t>(windows.shape(0)) != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one label per window");
  }
  InMemorySource src;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = windows.data() + i * kWindowSamples;
    src.Add(SampleWindow(std::vector<double>(row, row + kWindowSamples)), LabelFromName(labels[i]));
  }
  return src;
}

// Float network plus the metadata a checkpoint carries.
struct Model {
  Network<float> network;
  CheckpointMetadata metadata;
};

}  // namespace
}  // namespace kws

PYBIND11_MODULE(_kwshand, m) {
  using namespace kws;
  m.doc() = "Speech-command recognition and prosthetic-hand command encoding";

  // Messages start with the error code name, e.g. "BadMagic: ...".
  py::register_exception<Error>(m, "KwsError", PyExc_RuntimeError);

  m.attr("SAMPLE_RATE") = kSampleRateHz;
  m.attr("WINDOW_SAMPLES") = kWindowSamples;
  m.attr("CLASS_NAMES") = std::vector<std::string>(kClassNames.begin(), kClassNames.end());

  m.def("read_wav", [](const std::filesystem::path& path) {
    const AudioClip clip = ReadWavFile(path);
    return py::array_t<std::int16_t>(static_cast<py::ssize_t>(clip.samples.size()),
                                     clip.samples.data());
  }, py::arg("path"), "16 kHz mono 16-bit PCM samples of a WAV file");
  m.def("write_wav", [](const std::filesystem::path& path, const I16Array& pcm) {
    AudioClip clip;
    clip.samples.assign(pcm.data(), pcm.data() + pcm.size());
    WriteWavFile(path, clip);
  }, py::arg("path"), py::arg("pcm"));
  m.def("to_window", [](const I16Array& pcm) {
    AudioClip clip;
    clip.samples.assign(pcm.data(), pcm.data() + pcm.size());
    const SampleWindow w = ToWindow(clip);
    return py::array_t<double>(static_cast<py::ssize_t>(w.size()), w.values().data());
  }, py::arg("pcm"), "scale by 1/32768 and pad or cut to one second");

  m.def("stft_power", [](const F64Array& samples) {
    return GridToArray(StftPower(SampleWindow(ToVector(samples))));
  }, py::arg("samples"), "129 x 71 power spectrogram of a one-second window");
  m.def("compute_features", [](const F64Array& samples) {
    return GridToArray(ComputeFeatures(SampleWindow(ToVector(samples))));
  }, py::arg("samples"), "129 x 71 log power spectrogram of a one-second window");

  py::class_<Model>(m, "Model")
      .def_static("fresh", [](std::uint64_t seed) {
        Model md{Network<float>::KeywordNet(seed), {}};
        md.metadata.seed = seed;
        return md;
      }, py::arg("seed") = 17)
      .def_static("load", [](const std::filesystem::path& path) {
        LoadedCheckpoint ck = LoadCheckpoint(path);
        return Model{std::move(ck.network), ck.metadata};
      }, py::arg("path"))
      .def("save", [](const Model& md, const std::filesystem::path& path) {
        SaveCheckpoint(md.network, md.metadata, path);
      }, py::arg("path"))
      .def_property_readonly("epochs_completed",
                             [](const Model& md) { return md.metadata.epochs_completed; })
      .def_property_readonly("best_val_accuracy",
                             [](const Model& md) { return md.metadata.best_val_accuracy; })
      .def("param_counts", [](const Model& md) {
        const ParamCounts c = md.network.CountParams();
        py::dict d;
        d["trainable"] = c.trainable;
        d["non_trainable"] = c.non_trainable;
        d["total"] = c.total();
        d["per_layer"] = c.per_layer;
        return d;
      })
      .def("output_shapes", [](const Model& md) {
        std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
        for (const Shape3& s : md.network.output_shapes()) {
          out.emplace_back(s.height, s.width, s.channels);
        }
        return out;
      })
      .def("layer_table", [](const Model& md) { return RenderLayerTable(md.network).text; })
      .def("parameters", [](const Model& md) {
        py::dict d;
        for (const auto& p : md.network.Parameters()) {
          py::array_t<float> a(p.shape);
          std::copy(p.values.begin(), p.values.end(), a.mutable_data());
          d[py::str(p.name)] = a;
        }
        return d;
      }, "copies of every parameter tensor by name")
      .def("predict", [](const Model& md, const F64Array& features) {
        if (features.ndim() != 2 || features.shape(0) != 129 || features.shape(1) != 71) {
          throw Error(ErrorCode::kShapeMismatch, "features must be 129 x 71");
        }
        LogSpectrogram g;
        g.bins = 129;
        g.frames = 71;
        g.values.assign(features.data(), features.data() + features.size());
        return Classify(md.network, g).probabilities;
      }, py::arg("features"), "class probabilities for a 129 x 71 log spectrogram")
      .def("classify", [](const Model& md, const F64Array& samples) {
        return ClassificationDict(
            Classify(md.network, ComputeFeatures(SampleWindow(ToVector(samples)))));
      }, py::arg("samples"))
      .def("train", [](Model& md, const F64Array& windows, const std::vector<std::string>& labels,
                       int epochs, std::size_t batch_size, std::uint64_t seed,
                       std::optional<F64Array> val_windows,
                       std::optional<std::vector<std::string>> val_labels) {
        const InMemorySource train = SourceFrom(windows, labels);
        std::optional<InMemorySource> val;
        if (val_windows && val_labels) val = SourceFrom(*val_windows, *val_labels);
        TrainConfig config;
        config.epochs = epochs;
        config.batch_size = batch_size;
        config.seed = seed;
        config.augment = false;
        std::vector<EpochReport> reports;
        {
          py::gil_scoped_release release;
          auto state = AdamState<float>::For(md.network, config.adam);
          reports = Train(md.network, train, val ? &*val : nullptr, NoisePool{}, state, config);
        }
        md.metadata.epochs_completed += epochs;
        md.metadata.seed = seed;
        py::list out;
        for (const auto& r : reports) {
          py::dict d;
          d["epoch"] = r.epoch;
          d["train_loss"] = r.train_loss;
          d["train_accuracy"] = r.train_accuracy;
          d["val_accuracy"] = r.val_accuracy;
          out.append(d);
          if (r.val_accuracy && (!md.metadata.best_val_accuracy ||
                                 *r.val_accuracy > *md.metadata.best_val_accuracy)) {
            md.metadata.best_val_accuracy = r.val_accuracy;
          }
        }
        return out;
      }, py::arg("windows"), py::arg("labels"), py::arg("epochs"), py::arg("batch_size") = 64,
         py::arg("seed") = 17, py::arg("val_windows") = py::none(),
         py::arg("val_labels") = py::none(),
         "Adam training without noise augmentation; returns per-epoch metrics")
      .def("evaluate", [](const Model& md, const F64Array& windows,
                          const std::vector<std::string>& labels) {
        const InMemorySource src = SourceFrom(windows, labels);
        EvalResult r;
        {
          py::gil_scoped_release release;
          r = Evaluate(md.network, src);
        }
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["total"] = r.total;
        d["confusion"] = r.confusion;
        return d;
      }, py::arg("windows"), py::arg("labels"));

  m.def("default_gesture_table", [] { return GestureTable::Default().ToJson(); },
        "the default gesture table as JSON text");
  m.def("trajectory", [](const std::string& label, std::optional<std::string> table) {
    std::optional<std::vector<double>> out;
    if (const auto t = LookupTrajectory(TableFrom(table), LabelFromName(label))) {
      out = std::vector<double>(t->values.begin(), t->values.end());
    }
    return out;
  }, py::arg("label"), py::arg("table") = py::none(), "finger values or None for unknown");
  m.def("trajectory_to_codes", [](const std::array<double, kNumFingers>& values,
                                  const std::array<int, kNumFingers>& channel_map,
                                  const std::array<double, kDacChannels>& max_fraction) {
    std::vector<std::pair<int, std::int64_t>> out;
    for (const auto& c : TrajectoryToCodes(FingerTrajectory::Make(values), channel_map,
                                           max_fraction)) {
      out.emplace_back(c.channel, c.code);
    }
    return out;
  }, py::arg("values"), py::arg("channel_map") = std::array<int, 5>{0, 1, 2, 3, 4},
     py::arg("max_fraction") = std::array<double, 8>{1, 1, 1, 1, 1, 1, 1, 1});
  m.def("encode_dac_frames", [](const std::vector<std::pair<int, std::int64_t>>& codes) {
    std::vector<ChannelCode> cc;
    for (const auto& [ch, code] : codes) cc.push_back({ch, code});
    py::list out;
    for (const DacFrame& f : EncodeDacFrames(cc)) {
      out.append(py::bytes(reinterpret_cast<const char*>(f.data()), f.size()));
    }
    return out;
  }, py::arg("codes"), "3-byte DAC frames for (channel, code) pairs");
  m.def("decision_json", [](const std::string& label, double prob, std::int64_t t_ms,
                            std::optional<std::string> table) {
    Classification c;
    c.label = LabelFromName(label);
    c.probabilities.fill(0.0);
    c.probabilities[ClassIndex(c.label)] = prob;
    return DecisionToJson(MakeDecision(t_ms, c, TableFrom(table)));
  }, py::arg("label"), py::arg("prob"), py::arg("t_ms") = 1000, py::arg("table") = py::none());
  m.def("stream_decode", [](const Model& md, const F64Array& samples, int hop_ms,
                            double threshold, int refractory_ms,
                            std::optional<std::string> table) {
    const std::vector<double> x = ToVector(samples);
    const StreamConfig config{hop_ms, threshold, refractory_ms};
    const GestureTable t = TableFrom(table);
    std::vector<std::string> out;
    {
      py::gil_scoped_release release;
      for (const auto& d : StreamDecode(x, md.network, t, config)) {
        out.push_back(DecisionToJson(d));
      }
    }
    return out;
  }, py::arg("model"), py::arg("samples"), py::arg("hop_ms") = 500, py::arg("threshold") = 0.7,
     py::arg("refractory_ms") = 1000, py::arg("table") = py::none(),
     "JSON decision lines from sliding one-second windows");
}
