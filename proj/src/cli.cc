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

#include "kws/cli.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kws/audio.h"
#include "kws/checkpoint.h"
#include "kws/command.h"
#include "kws/features.h"
#include "kws/random.h"
#include "kws/training.h"

namespace kws {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for anything that keeps a checkpoint from loading, so it maps to
// the checkpoint exit code even when the cause is plain I/O.
struct CheckpointFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::set<std::string> kBoolKeys = {"no-augment", "no-timing", "json", "fresh"};

template <typename Int>
Int ParseInt(const std::string& key, const std::string& v) {
  Int out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw Error(ErrorCode::kInvalidArgument, key + ": not an integer: " + v);
  }
  return out;
}

double ParseReal(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, key + ": not a number: " + v);
  }
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::kInvalidArgument, key + ": not a boolean: " + v);
}

void Apply(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "data-dir") c.data_dir = v;
  else if (key == "out") c.out = v;
  else if (key == "epochs") c.epochs = ParseInt<int>(key, v);
  else if (key == "batch-size") c.batch_size = ParseInt<int>(key, v);
  else if (key == "lr") c.lr = ParseReal(key, v);
  else if (key == "seed") c.seed = ParseInt<std::uint64_t>(key, v);
  else if (key == "no-augment") c.no_augment = ParseBool(key, v);
  else if (key == "no-timing") c.no_timing = ParseBool(key, v);
  else if (key == "checkpoint") c.checkpoint = v;
  else if (key == "split") c.split = v;
  else if (key == "json") c.json = ParseBool(key, v);
  else if (key == "wav") c.wav = v;
  else if (key == "gesture-table") c.gesture_table = v;
  else if (key == "threshold") c.threshold = ParseReal(key, v);
  else if (key == "input") c.input = v;
  else if (key == "hop-ms") c.hop_ms = ParseInt<int>(key, v);
  else if (key == "refractory-ms") c.refractory_ms = ParseInt<int>(key, v);
  else if (key == "fresh") c.fresh = ParseBool(key, v);
  else throw Error(ErrorCode::kInvalidArgument, "unknown setting " + key);
}

std::string ShapeText(const Shape3& s) {
  if (s.height == 1 && s.width == 1) return std::to_string(s.channels);
  return s.ToString();
}

LoadedCheckpoint LoadModel(const std::string& path) {
  if (path.empty()) throw UsageFailure("--checkpoint is required");
  try {
    return LoadCheckpoint(path);
  } catch (const Error& e) {
    throw CheckpointFailure(e.what());
  }
}

Split ParseSplit(const std::string& s) {
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw UsageFailure("--split must be val or test");
}

std::vector<double> ToUnit(const std::vector<std::int16_t>& pcm) {
  std::vector<double> out(pcm.size());
  std::transform(pcm.begin(), pcm.end(), out.begin(),
                 [](std::int16_t v) { return v * kPcmScale; });
  return out;
}

GestureTable TableFor(const RunConfig& c) {
  return c.gesture_table.empty() ? GestureTable::Default()
                                 : GestureTable::Load(c.gesture_table);
}

// ---- subcommands -----------------------------------------------------------

int CmdTrain(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.data_dir.empty()) {
    throw UsageFailure(std::string("--data-dir is required (or set ") + kDataDirEnv + ")");
  }
  if (c.epochs < 1 || c.batch_size < 1 || !(c.lr > 0.0)) {
    throw UsageFailure("epochs and batch size must be >= 1 and lr > 0");
  }
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.batch_size = static_cast<std::size_t>(c.batch_size);
  tc.seed = c.seed;
  tc.adam.learning_rate = c.lr;
  tc.augment = !c.no_augment;
  tc.record_wall_time = !c.no_timing;

  DatasetIndex index = IndexDataset(c.data_dir);
  if (tc.subsample_unknown) {
    index = SubsampleUnknown(index, DeriveSeed(c.seed, Stream::kSubsample));
  }
  NoisePool noise;
  if (tc.augment) {
    noise = LoadNoisePool(index);
    if (noise.empty()) err << "warning: no background noise found; training without it\n";
  }
  DatasetSource train(index, Split::kTrain);
  DatasetSource val(index, Split::kVal);
  if (train.empty()) throw Error(ErrorCode::kEmptyTrainingSplit, "no training examples");

  fs::create_directories(c.out);
  std::ofstream csv(fs::path(c.out) / "epochs.csv", std::ios::trunc);
  if (!csv) throw Error(ErrorCode::kIoError, "cannot write epochs.csv in " + c.out);
  WriteEpochCsvHeader(csv);

  Network<float> net = Network<float>::KeywordNet(c.seed);
  AdamState<float> state = AdamState<float>::For(net, tc.adam);
  CheckpointMetadata meta;
  meta.seed = c.seed;
  out << "training on " << train.size() << " examples, validating on " << val.size()
      << "\n";
  Train(net, train, val.empty() ? nullptr : &val, noise, state, tc,
        [&](const EpochReport& r, const Network<float>& n) {
          WriteEpochCsvRow(csv, r, tc.record_wall_time);
          csv.flush();
          meta.epochs_completed = r.epoch;
          if (r.val_accuracy &&
              (!meta.best_val_accuracy || *r.val_accuracy > *meta.best_val_accuracy)) {
            meta.best_val_accuracy = r.val_accuracy;
            SaveCheckpoint(n, meta, fs::path(c.out) / "best.kws");
          }
          SaveCheckpoint(n, meta, fs::path(c.out) / "final.kws");
          out << "epoch " << r.epoch << "/" << tc.epochs << " loss " << r.train_loss
              << " acc " << r.train_accuracy;
          if (r.val_accuracy) out << " val " << *r.val_accuracy;
          out << "\n";
          out.flush();
        });
  return kExitOk;
}

int CmdEval(const RunConfig& c, std::ostream& out) {
  const Split split = ParseSplit(c.split);
  LoadedCheckpoint ck = LoadModel(c.checkpoint);
  if (c.data_dir.empty()) throw UsageFailure("--data-dir is required");
  const DatasetIndex index = IndexDataset(c.data_dir);
  const DatasetSource source(index, split);
  if (source.empty()) throw Error(ErrorCode::kEmptySplit, std::string(SplitName(split)));

  // Raw accuracy over the whole split plus balanced accuracy over the
  // subsampled-unknown view of it.
  const DatasetIndex balanced = SubsampleUnknown(index, DeriveSeed(c.seed, Stream::kSubsample));
  std::set<fs::path> kept;
  for (const auto& e : balanced.EntriesFor(split)) kept.insert(e.relative_path);

  ConfusionMatrix confusion{};
  std::size_t correct = 0, bal_total = 0, bal_correct = 0;
  const auto entries = index.EntriesFor(split);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Classification cls = Classify(ck.network, ComputeFeatures(source.window(i)));
    const std::size_t truth = ClassIndex(source.label(i));
    const std::size_t pred = ClassIndex(cls.label);
    ++confusion[truth][pred];
    correct += pred == truth;
    if (kept.count(entries[i].relative_path)) {
      ++bal_total;
      bal_correct += pred == truth;
    }
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(source.size());
  const double bal = bal_total ? static_cast<double>(bal_correct) / bal_total : 0.0;

  if (c.json) {
    json j = {{"split", SplitName(split)},
              {"total", source.size()},
              {"accuracy", acc},
              {"balanced_total", bal_total},
              {"balanced_accuracy", bal},
              {"class_names", ck.network.spec().class_names},
              {"confusion", confusion}};
    out << j.dump() << "\n";
    return kExitOk;
  }
  out << "split: " << SplitName(split) << "\n"
      << "accuracy: " << acc << " (" << correct << "/" << source.size() << ")\n"
      << "balanced accuracy: " << bal << " (" << bal_correct << "/" << bal_total << ")\n"
      << "confusion (rows true, columns predicted):\n";
  out << std::setw(9) << "";
  for (auto name : kClassNames) out << std::setw(8) << name;
  out << "\n";
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    out << std::setw(9) << kClassNames[i];
    for (std::size_t j = 0; j < kNumClasses; ++j) out << std::setw(8) << confusion[i][j];
    out << "\n";
  }
  return kExitOk;
}

int CmdRecognize(const RunConfig& c, std::ostream& out) {
  if (c.wav.empty()) throw UsageFailure("--wav is required");
  if (!(c.threshold > 0.0 && c.threshold <= 1.0)) {
    throw UsageFailure("--threshold must be in (0, 1]");
  }
  LoadedCheckpoint ck = LoadModel(c.checkpoint);
  const GestureTable table = TableFor(c);
  const SampleWindow window = ToWindow(ReadWavFile(c.wav));
  const Classification cls = Classify(ck.network, ComputeFeatures(window));
  const std::int64_t t_ms = 1000;
  if (cls.probability() >= c.threshold) {
    out << DecisionToJson(MakeDecision(t_ms, cls, table)) << "\n";
    return kExitOk;
  }
  Decision held;
  held.t_ms = t_ms;
  held.label = cls.label;
  held.probability = cls.probability();
  json j = json::parse(DecisionToJson(held));
  j["below_threshold"] = true;
  out << j.dump() << "\n";
  return kExitOk;
}

int CmdStream(const RunConfig& c, std::istream& in, std::ostream& out) {
  StreamConfig sc{c.hop_ms, c.threshold, c.refractory_ms};
  sc.Validate();
  LoadedCheckpoint ck = LoadModel(c.checkpoint);
  StreamDecoder decoder(NetworkScorer(ck.network), TableFor(c), sc);
  auto emit = [&](const std::vector<Decision>& ds) {
    for (const auto& d : ds) out << DecisionToJson(d) << "\n";
    out.flush();
  };
  if (c.input.rfind("wav:", 0) == 0) {
    emit(decoder.Push(ToUnit(ReadWavFile(c.input.substr(4)).samples)));
  } else if (c.input == "pcm-stdin") {
    // Raw 16 kHz mono signed 16-bit little-endian.
    std::vector<char> raw(8000);
    std::vector<std::int16_t> pcm;
    char carry = 0;
    bool has_carry = false;
    while (in) {
      in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
      const std::size_t got = static_cast<std::size_t>(in.gcount());
      if (got == 0) break;
      std::vector<std::uint8_t> bytes;
      if (has_carry) bytes.push_back(static_cast<std::uint8_t>(carry));
      bytes.insert(bytes.end(), raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(got));
      has_carry = bytes.size() % 2 == 1;
      if (has_carry) carry = static_cast<char>(bytes.back());
      pcm.clear();
      for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) {
        pcm.push_back(static_cast<std::int16_t>(bytes[i] | (bytes[i + 1] << 8)));
      }
      emit(decoder.Push(ToUnit(pcm)));
    }
  } else {
    throw UsageFailure("--input must be wav:PATH or pcm-stdin");
  }
  return kExitOk;
}

int CmdInspect(const RunConfig& c, std::ostream& out) {
  if (c.fresh == !c.checkpoint.empty()) {
    throw UsageFailure("inspect needs exactly one of --checkpoint or --fresh");
  }
  const Network<float> net =
      c.fresh ? Network<float>::KeywordNet(c.seed) : LoadModel(c.checkpoint).network;
  const LayerTableReport report = RenderLayerTable(net);
  out << report.text;
  return report.conforms ? kExitOk : kExitCheckpoint;
}

int CmdFeatures(const RunConfig& c) {
  if (c.wav.empty() || c.out.empty()) throw UsageFailure("--wav and --out are required");
  const LogSpectrogram grid = ComputeFeatures(ReadWavFile(c.wav));
  std::ofstream f(c.out, std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIoError, "cannot write " + c.out);
  WriteFeaturesCsv(f, grid);
  return kExitOk;
}

// Registers value options whose presence is recorded, so only flags actually
// given override the config file.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  FlagSet& Value(const std::string& name, const std::string& help) {
    opts_.emplace_back(name, app_->add_option("--" + name, values_[name], help));
    return *this;
  }
  FlagSet& Switch(const std::string& name, const std::string& help) {
    opts_.emplace_back(name, app_->add_flag("--" + name, help));
    return *this;
  }
  ConfigLayer Given() const {
    ConfigLayer layer;
    for (const auto& [name, opt] : opts_) {
      if (opt->count() == 0) continue;
      layer[name] = kBoolKeys.count(name) ? "true" : values_.at(name);
    }
    return layer;
  }

 private:
  CLI::App* app_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> opts_;
};

}  // namespace

RunConfig ResolveRunConfig(const ConfigLayer& file, const ConfigLayer& flags,
                           const char* env_data_dir) {
  RunConfig c;
  if (env_data_dir && *env_data_dir) c.data_dir = env_data_dir;
  for (const auto& [k, v] : file) Apply(c, k, v);
  for (const auto& [k, v] : flags) Apply(c, k, v);
  return c;
}

ConfigLayer LoadConfigFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be an object");
  ConfigLayer layer;
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) layer[k] = v.get<std::string>();
    else if (v.is_boolean() || v.is_number()) layer[k] = v.dump();
    else throw Error(ErrorCode::kInvalidArgument, "config: bad value for " + k);
  }
  return layer;
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kBadMagic:
    case ErrorCode::kUnsupportedVersion:
    case ErrorCode::kSpecMismatch:
    case ErrorCode::kTruncatedPayload:
    case ErrorCode::kTrailingData:
      return kExitCheckpoint;
    default:
      return kExitData;
  }
}

LayerTableReport RenderLayerTable(const Network<float>& network) {
  static const std::vector<std::string> kShapes = {
      "129 x 71 x 1", "120 x 65 x 8", "17 x 13 x 8", "17 x 13 x 8",
      "11 x 9 x 32",  "2 x 3 x 32",   "2 x 3 x 32",  "192",
      "64",           "64",           "9"};
  static const std::vector<std::size_t> kCounts = {568, 0, 32, 8992, 0,
                                                   128, 0, 12352, 0, 585};
  const NetworkSpec& spec = network.spec();
  const ParamCounts counts = network.CountParams();

  std::ostringstream os;
  char line[200];
  const char* fmt = "%-6s %-20s %-8s %-8s %-8s %-11s %-14s %s\n";
  std::snprintf(line, sizeof(line), fmt, "Layer", "Type", "Filters", "Size", "Stride",
                "Activation", "Output shape", "Params");
  os << line;
  std::vector<std::string> shapes = {ShapeText(spec.input)};
  std::snprintf(line, sizeof(line), fmt, "0", "Input", "-", "-", "-", "-",
                shapes[0].c_str(), "0");
  os << line;
  auto act = [](Activation a) {
    return a == Activation::kRelu ? "ReLU" : a == Activation::kSoftmax ? "SoftMax" : "-";
  };
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    std::string filters = "-", size = "-", stride = "-", activation = "-";
    if (const auto* c = std::get_if<ConvSpec>(&spec.layers[l])) {
      filters = std::to_string(c->filters);
      size = std::to_string(c->filter_h) + " x " + std::to_string(c->filter_w);
      stride = "1";
      activation = act(c->activation);
    } else if (const auto* p = std::get_if<PoolSpec>(&spec.layers[l])) {
      size = std::to_string(p->pool_h) + " x " + std::to_string(p->pool_w);
      stride = size;
      activation = "Max";
    } else if (const auto* d = std::get_if<DenseSpec>(&spec.layers[l])) {
      activation = act(d->activation);
    }
    shapes.push_back(ShapeText(network.output_shapes()[l]));
    std::snprintf(line, sizeof(line), fmt, std::to_string(l + 1).c_str(),
                  LayerTypeName(spec.layers[l]).c_str(), filters.c_str(), size.c_str(),
                  stride.c_str(), activation.c_str(), shapes.back().c_str(),
                  std::to_string(counts.per_layer[l]).c_str());
    os << line;
  }
  os << "trainable: " << counts.trainable << "\n"
     << "non-trainable: " << counts.non_trainable << "\n"
     << "total: " << counts.total() << "\n";

  LayerTableReport report;
  report.conforms = shapes == kShapes && counts.per_layer == kCounts &&
                    counts.trainable == 22577 && counts.non_trainable == 80;
  if (!report.conforms) os << "MISMATCH: layer table differs from the reference network\n";
  report.text = os.str();
  return report;
}

int RunCli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Speech-command keyword spotting for a prosthetic hand", "kws"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with default flag values");

  struct Sub {
    CLI::App* app;
    std::unique_ptr<FlagSet> flags;
  };
  std::vector<Sub> subs;
  auto add = [&](const char* name, const char* help) -> FlagSet& {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "JSON file with default flag values");
    subs.push_back({s, std::make_unique<FlagSet>(s)});
    return *subs.back().flags;
  };
  add("train", "train from a speech-commands directory")
      .Value("data-dir", "dataset root")
      .Value("out", "output directory for checkpoints and epochs.csv")
      .Value("epochs", "number of epochs")
      .Value("batch-size", "examples per batch")
      .Value("lr", "Adam learning rate")
      .Value("seed", "master seed")
      .Switch("no-augment", "disable background-noise mixing")
      .Switch("no-timing", "write 0 in the seconds column of epochs.csv");
  add("eval", "accuracy and confusion matrix on a split")
      .Value("checkpoint", "checkpoint file")
      .Value("data-dir", "dataset root")
      .Value("split", "val or test")
      .Value("seed", "seed for the balanced view")
      .Switch("json", "print JSON");
  add("recognize", "classify one WAV file")
      .Value("checkpoint", "checkpoint file")
      .Value("wav", "16 kHz mono 16-bit WAV")
      .Value("gesture-table", "gesture table JSON")
      .Value("threshold", "minimum probability for a command");
  add("stream", "sliding-window decoding of a long recording")
      .Value("checkpoint", "checkpoint file")
      .Value("input", "wav:PATH or pcm-stdin")
      .Value("gesture-table", "gesture table JSON")
      .Value("hop-ms", "window hop")
      .Value("threshold", "minimum probability for a command")
      .Value("refractory-ms", "minimum gap between commands");
  add("inspect", "print the layer table")
      .Value("checkpoint", "checkpoint file")
      .Switch("fresh", "inspect a freshly initialized network")
      .Value("seed", "seed for --fresh");
  add("features", "export the log spectrogram of a WAV as CSV")
      .Value("wav", "16 kHz mono 16-bit WAV")
      .Value("out", "CSV path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const Sub* chosen = nullptr;
    for (const auto& s : subs) {
      if (s.app->parsed()) chosen = &s;
    }
    const std::string name = chosen->app->get_name();
    const ConfigLayer file = config_path.empty() ? ConfigLayer{} : LoadConfigFile(config_path);
    const RunConfig c = ResolveRunConfig(file, chosen->flags->Given(), std::getenv(kDataDirEnv));
    if (name == "train") return CmdTrain(c, out, err);
    if (name == "eval") return CmdEval(c, out);
    if (name == "recognize") return CmdRecognize(c, out);
    if (name == "stream") return CmdStream(c, in, out);
    if (name == "inspect") return CmdInspect(c, out);
    return CmdFeatures(c);
  } catch (const UsageFailure& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointFailure& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace kws
