/* Copyright 2026 The tinysed Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tinysed/cost.hpp"
#include "tinysed/distill.hpp"
#include "tinysed/mel.hpp"
#include "tinysed/model_io.hpp"
#include "tinysed/qexec.hpp"
#include "tinysed/quant.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tinysed;

namespace {

struct Globals {
  bool json = false;
};

void emit(const Globals& g, const json& j, const std::string& text) {
  if (g.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << text;
  }
}

// Outputs must never overwrite an input.
void check_distinct(const std::vector<fs::path>& inputs, const fs::path& output) {
  for (const auto& in : inputs) {
    if (in.empty() || output.empty()) continue;
    std::error_code ec;
    if (fs::equivalent(in, output, ec) || fs::weakly_canonical(in) == fs::weakly_canonical(output)) {
      throw DomainError("output '" + output.string() + "' would overwrite input '" + in.string() + "'");
    }
  }
}

// Thousands with two decimals, truncated.
// Model outputs are a .json/.bin pair; neither may overwrite an input.
void check_model_output(const std::vector<fs::path>& inputs, const fs::path& out) {
  check_distinct(inputs, model_json_path(out));
  check_distinct(inputs, model_blob_path(out));
}

std::string kilo(std::uint64_t v) {
  return std::to_string(v / 1000) + "." + (v % 1000 / 10 < 10 ? "0" : "") + std::to_string(v % 1000 / 10);
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

ModelArch resolve_arch(const std::string& preset_name, const std::string& arch_file) {
  if (!arch_file.empty()) {
    std::ifstream in(arch_file);
    if (!in) throw FormatError("cannot open '" + arch_file + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw FormatError("'" + arch_file + "': " + e.what());
    }
    return arch_from_json(j.contains("arch") ? j.at("arch") : j);
  }
  return preset(preset_name);
}

const Split& pick_split(const SyntheticDataset& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "val") return d.val;
  if (name == "test") return d.test;
  throw DomainError("unknown split '" + name + "'");
}

// Input clips: every --features file is one clip; a dataset contributes
// each patch of the chosen split as a one-patch clip.
std::vector<std::vector<TensorF>> gather_clips(const std::vector<std::string>& features,
                                               const std::string& data, const std::string& split) {
  std::vector<std::vector<TensorF>> clips;
  for (const auto& f : features) clips.push_back(load_patches(f));
  if (!data.empty()) {
    const SyntheticDataset d = load_dataset(data);
    for (const auto& x : pick_split(d, split).x) clips.push_back({x});
  }
  if (clips.empty()) throw DomainError("no calibration input: pass --data or --features");
  return clips;
}

std::vector<TensorF> clip_from(const std::string& wav, const std::string& features, bool resample) {
  if (!wav.empty() == !features.empty()) {
    throw DomainError("pass exactly one of --wav and --features");
  }
  if (!features.empty()) return load_patches(features);
  const PcmClip pcm = read_wav(wav);
  return log_mel_patches(pcm.samples, pcm.sample_rate, {}, resample);
}

// ---------------------------------------------------------------------------
// Training options shared by train / distill / distill2.

struct TrainOpts {
  TrainConfig cfg;
  std::string curve;
};

void add_train_options(CLI::App* sub, TrainOpts& o) {
  sub->add_option("--lr", o.cfg.learning_rate, "Learning rate")->capture_default_str();
  sub->add_option("--epochs", o.cfg.epochs, "Maximum epochs")->capture_default_str();
  sub->add_option("--batch", o.cfg.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--patience", o.cfg.patience, "Early-stop patience (epochs)")->capture_default_str();
  sub->add_option("--clip", o.cfg.clip_norm, "Gradient norm clip, 0 disables")->capture_default_str();
  sub->add_option("--seed", o.cfg.seed, "Seed for initialization and shuffling")->capture_default_str();
  sub->add_option("--curve", o.curve, "Write the learning curve as CSV");
}

json report_json(const TrainReport& r) {
  json j;
  j["stage"] = r.stage;
  j["weights"] = {r.weights.alpha_h, r.weights.alpha_s, r.weights.alpha_e};
  j["best_epoch"] = r.best_epoch;
  j["epochs_run"] = r.curve.size();
  j["final_train_loss"] = r.final_train_loss;
  j["final_val_loss"] = r.final_val_loss;
  return j;
}

std::string report_text(const TrainReport& r) {
  std::ostringstream os;
  os << "stage " << r.stage << ": best epoch " << r.best_epoch << " of " << r.curve.size()
     << ", train loss " << fixed(r.final_train_loss, 4) << ", val loss "
     << fixed(r.final_val_loss, 4) << "\n";
  return os.str();
}

struct LossSelection {
  std::string strategy;
  std::optional<double> alpha_h, alpha_s, alpha_e;
};

void add_loss_options(CLI::App* sub, LossSelection& s, const std::string& default_strategy) {
  s.strategy = default_strategy;
  sub->add_option("--strategy", s.strategy, "Th, Ths, Thse or Te")->capture_default_str();
  sub->add_option("--alpha-h", s.alpha_h, "Hard-label weight (overrides --strategy)");
  sub->add_option("--alpha-s", s.alpha_s, "Soft-label weight (overrides --strategy)");
  sub->add_option("--alpha-e", s.alpha_e, "Embedding weight (overrides --strategy)");
}

// Returns the weights and whether the two-step embedding schedule applies.
std::pair<LossWeights, bool> resolve_loss(const LossSelection& s) {
  const Strategy st = strategy_from_string(s.strategy);
  if (s.alpha_h || s.alpha_s || s.alpha_e) {
    LossWeights w{s.alpha_h.value_or(0.0), s.alpha_s.value_or(0.0), s.alpha_e.value_or(0.0)};
    w.validate();
    return {w, false};
  }
  return {strategy_weights(st), st == Strategy::Te};
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t classes = 10, per_class = 100, height = 24, width = 16;
  std::uint64_t seed = 0;
  SynthDomain domain;
  std::string out;
};

void cmd_synth(const Globals& g, const SynthArgs& a) {
  const SyntheticDataset d =
      synth_dataset(a.classes, a.per_class, {a.height, a.width, 1}, a.seed, a.domain);
  save_dataset(a.out, d);
  json j{{"output", a.out},
         {"classes", d.classes},
         {"patch_shape", d.patch_shape},
         {"train", d.train.size()},
         {"val", d.val.size()},
         {"test", d.test.size()},
         {"seed", d.seed}};
  std::ostringstream os;
  os << "wrote " << a.out << ": " << d.classes << " classes, " << shape_to_string(d.patch_shape)
     << " patches, " << d.train.size() << "/" << d.val.size() << "/" << d.test.size()
     << " train/val/test\n";
  emit(g, j, os.str());
}

struct FeaturizeArgs {
  std::string wav, out;
  bool resample = false;
};

void cmd_featurize(const Globals& g, const FeaturizeArgs& a) {
  check_distinct({a.wav}, a.out);
  const PcmClip pcm = read_wav(a.wav);
  const auto patches = log_mel_patches(pcm.samples, pcm.sample_rate, {}, a.resample);
  save_patches(a.out, patches);
  json j{{"input", a.wav},
         {"output", a.out},
         {"sample_rate", pcm.sample_rate},
         {"samples", pcm.samples.size()},
         {"patches", patches.size()},
         {"patch_shape", patches.front().shape()}};
  std::ostringstream os;
  os << "wrote " << a.out << ": " << patches.size() << " patches of "
     << shape_to_string(patches.front().shape()) << "\n";
  emit(g, j, os.str());
}

struct TrainArgs {
  std::string data, preset = "toy_student", arch, out;
  TrainOpts train;
};

void finish_training(const Globals& g, const std::string& out, const Model& m,
                     const SyntheticDataset& d, const std::vector<TrainReport>& reports,
                     const std::string& curve, json extra = json::object()) {
  save_model(out, m);
  if (!curve.empty()) write_curve_csv(curve, reports);
  json j = std::move(extra);
  j["output"] = out;
  j["stages"] = json::array();
  std::string text;
  for (const auto& r : reports) {
    j["stages"].push_back(report_json(r));
    text += report_text(r);
  }
  const double acc = d.test.size() ? accuracy(m, d.test) : 0.0;
  j["test_accuracy"] = acc;
  text += "test accuracy " + fixed(100.0 * acc, 2) + "%, model written to " + out + "\n";
  emit(g, j, text);
}

void cmd_train(const Globals& g, const TrainArgs& a) {
  check_model_output({a.data, a.arch}, a.out);
  const ModelArch arch = resolve_arch(a.preset, a.arch);
  if (a.train.cfg.epochs == 0) {
    // Seeded initialization only; the way to get inference-only presets.
    save_model(a.out, init_model(arch, a.train.cfg.seed));
    emit(g, json{{"output", a.out}, {"model", arch.name}, {"seed", a.train.cfg.seed}},
         "initialized " + arch.name + " with seed " + std::to_string(a.train.cfg.seed) +
             ", model written to " + a.out + "\n");
    return;
  }
  if (a.data.empty()) throw DomainError("train needs --data");
  const SyntheticDataset d = load_dataset(a.data);
  TrainResult r =
      sgd_train(init_model(arch, a.train.cfg.seed), d, nullptr, strategy_weights(Strategy::Th), a.train.cfg);
  r.report.stage = "train";
  finish_training(g, a.out, r.model, d, {r.report}, a.train.curve);
}

struct DistillArgs {
  std::string data, teacher, preset = "toy_student", arch, out;
  std::string inter_preset = "toy_teacher", inter_arch, inter_out;
  LossSelection loss;
  TrainOpts train;
};

void cmd_distill(const Globals& g, const DistillArgs& a) {
  check_model_output({a.data, a.arch, model_json_path(a.teacher), model_blob_path(a.teacher)}, a.out);
  const SyntheticDataset d = load_dataset(a.data);
  const Model teacher = load_model(a.teacher);
  const ModelArch arch = resolve_arch(a.preset, a.arch);
  const auto [w, two_step] = resolve_loss(a.loss);
  const DistillResult r = distill(teacher, arch, w, d, a.train.cfg, two_step);
  json extra{{"teacher_test_accuracy", d.test.size() ? accuracy(teacher, d.test) : 0.0}};
  finish_training(g, a.out, r.student, d, r.stages, a.train.curve, extra);
}

void cmd_distill2(const Globals& g, const DistillArgs& a) {
  check_model_output({a.data, a.arch, a.inter_arch, model_json_path(a.teacher), model_blob_path(a.teacher)},
                     a.out);
  if (!a.inter_out.empty()) {
    check_model_output({a.data, a.arch, a.inter_arch, model_json_path(a.teacher), model_blob_path(a.teacher)},
                       a.inter_out);
  }
  const SyntheticDataset d = load_dataset(a.data);
  const Model teacher = load_model(a.teacher);
  const ModelArch inter = resolve_arch(a.inter_preset, a.inter_arch);
  const ModelArch arch = resolve_arch(a.preset, a.arch);
  const auto [w, two_step] = resolve_loss(a.loss);
  if (two_step) throw DomainError("distill2 needs a compound-loss strategy, not Te");
  const TwoStageResult r = two_stage_distill(teacher, inter, arch, w, d, a.train.cfg);
  std::vector<TrainReport> reports = r.stage1;
  reports.insert(reports.end(), r.stage2.begin(), r.stage2.end());
  json extra{{"teacher_test_accuracy", d.test.size() ? accuracy(teacher, d.test) : 0.0},
             {"intermediate_test_accuracy", d.test.size() ? accuracy(r.intermediate, d.test) : 0.0}};
  if (!a.inter_out.empty()) {
    save_model(a.inter_out, r.intermediate);
    extra["intermediate_output"] = a.inter_out;
  }
  finish_training(g, a.out, r.student, d, reports, a.train.curve, extra);
}

struct CalibArgs {
  std::string model, data, split = "train", out, plan;
  std::vector<std::string> features;
  std::string scheme = "sqnr";
  double pth = kDefaultOverloadThreshold;
  std::uint64_t seed = 0;
};

QuantizedModel calibrated(const CalibArgs& a, const Model& m) {
  const auto clips = gather_clips(a.features, a.data, a.split);
  return quantize_model(m, collect_stats(m, clips, a.seed), {scheme_from_string(a.scheme), a.pth});
}

void cmd_calibrate(const Globals& g, const CalibArgs& a) {
  std::vector<fs::path> inputs{model_json_path(a.model), model_blob_path(a.model), a.data};
  inputs.insert(inputs.end(), a.features.begin(), a.features.end());
  if (!a.out.empty()) check_distinct(inputs, a.out);
  const QuantizedModel qm = calibrated(a, load_model(a.model));
  const json plan = to_json(qm.plan);
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw DomainError("cannot write '" + a.out + "'");
    out << plan.dump(2) << "\n";
  }
  emit(g, plan, plan_report(qm.plan));
}

void cmd_quantize(const Globals& g, const CalibArgs& a) {
  std::vector<fs::path> inputs{model_json_path(a.model), model_blob_path(a.model), a.data, a.plan};
  inputs.insert(inputs.end(), a.features.begin(), a.features.end());
  check_model_output(inputs, a.out);
  const Model m = load_model(a.model);
  QuantizedModel qm;
  if (!a.plan.empty()) {
    std::ifstream in(a.plan);
    if (!in) throw FormatError("cannot open '" + a.plan + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw FormatError("'" + a.plan + "': " + e.what());
    }
    qm = apply_plan(m, plan_from_json(j));
  } else {
    qm = calibrated(a, m);
  }
  save_quantized(a.out, qm);
  json j{{"output", a.out},
         {"scheme", to_string(qm.plan.scheme)},
         {"warnings", qm.plan.warnings},
         {"buffers", {{"a", qm.buffers.buffer_a},
                      {"b", qm.buffers.buffer_b},
                      {"scratch", qm.buffers.scratch},
                      {"total", qm.buffers.total}}}};
  std::ostringstream os;
  os << plan_report(qm.plan) << "buffers " << qm.buffers.total << " B, quantized model written to "
     << a.out << "\n";
  emit(g, j, os.str());
}

struct InferArgs {
  std::string model, qmodel, wav, features;
  bool use_float = false, use_int8 = false, resample = false;
};

void cmd_infer(const Globals& g, const InferArgs& a) {
  bool use_float = a.use_float, use_int8 = a.use_int8;
  if (!use_float && !use_int8) {
    use_float = !a.model.empty();
    use_int8 = !a.qmodel.empty();
  }
  if (use_float && a.model.empty()) throw DomainError("--float needs --model");
  if (use_int8 && a.qmodel.empty()) throw DomainError("--int8 needs --qmodel");
  if (!use_float && !use_int8) throw DomainError("pass --model and/or --qmodel");
  const auto clip = clip_from(a.wav, a.features, a.resample);
  json j{{"patches", clip.size()}};
  std::ostringstream os;
  std::vector<double> float_logits, int8_logits;
  if (use_float) {
    const ForwardTrace t = forward(load_model(a.model), clip, false);
    float_logits = t.logits.values();
    j["float"] = {{"prediction", argmax(t.logits)},
                  {"logits", float_logits},
                  {"probabilities", t.class_probs.values()}};
    os << "float prediction " << argmax(t.logits) << " (p = " << fixed(t.class_probs[argmax(t.logits)], 4)
       << ")\n";
  }
  if (use_int8) {
    const QuantizedModel qm = load_quantized(a.qmodel);
    const QForwardResult r = qforward(qm, quantize_patches(qm, clip));
    std::vector<int> codes(r.logits.values().begin(), r.logits.values().end());
    for (std::int8_t c : r.logits.values()) int8_logits.push_back(dequantize(c, r.logit_format));
    j["int8"] = {{"prediction", r.prediction},
                 {"logit_codes", codes},
                 {"logit_format", r.logit_format.to_string()},
                 {"logits", int8_logits},
                 {"peak_bytes", r.peak_bytes}};
    os << "int8 prediction " << r.prediction << " (logits in " << r.logit_format.to_string()
       << ", peak " << r.peak_bytes << " B)\n";
  }
  if (use_float && use_int8) {
    if (float_logits.size() != int8_logits.size()) throw DomainError("models disagree on class count");
    double gap = 0.0;
    for (std::size_t i = 0; i < float_logits.size(); ++i) {
      gap = std::max(gap, std::abs(float_logits[i] - int8_logits[i]));
    }
    j["logit_gap"] = gap;
    os << "max |float - int8| logit gap " << fixed(gap, 4) << "\n";
  }
  emit(g, j, os.str());
}

struct CompareArgs {
  std::string model, qmodel, data, split = "test";
};

void cmd_compare(const Globals& g, const CompareArgs& a) {
  const Model m = load_model(a.model);
  const QuantizedModel qm = load_quantized(a.qmodel);
  const SyntheticDataset d = load_dataset(a.data);
  const Split& s = pick_split(d, a.split);
  std::vector<std::vector<TensorF>> clips;
  for (const auto& x : s.x) clips.push_back({x});
  const CompareReport r = compare_models(m, qm, clips, s.y, d.classes);
  std::ostringstream os;
  os << r.samples << " samples: float " << fixed(100 * r.accuracy_float, 2) << "%, int8 "
     << fixed(100 * r.accuracy_int8, 2) << "%, drop " << fixed(100 * r.gap, 2)
     << " pts, top-1 agreement " << fixed(100 * r.agreement, 2) << "%\nclass  F1(float)  F1(int8)\n";
  for (std::size_t c = 0; c < r.classes; ++c) {
    os << std::setw(5) << c << "  " << std::setw(9) << fixed(r.f1_float[c], 3) << "  "
       << std::setw(8) << fixed(r.f1_int8[c], 3) << "\n";
  }
  emit(g, to_json(r), os.str());
}

struct ArchArgs {
  std::string preset = "M20k_int8", arch, platform = "all";
  std::optional<double> power_budget;
};

void cmd_estimate(const Globals& g, const ArchArgs& a) {
  const CostReport r = estimate(resolve_arch(a.preset, a.arch));
  std::ostringstream os;
  os << "model " << r.model << "\n"
     << std::left << std::setw(10) << "layer" << std::setw(11) << "kind" << std::setw(14)
     << "output" << std::right << std::setw(12) << "params" << std::setw(14) << "kop" << "\n";
  for (const auto& l : r.layers) {
    os << std::left << std::setw(10) << l.name << std::setw(11) << to_string(l.kind)
       << std::setw(14) << shape_to_string(l.output) << std::right << std::setw(12) << l.params
       << std::setw(14) << kilo(l.ops) << "\n";
  }
  os << "total params " << r.total_params << ", ops " << r.total_ops << " ("
     << kilo(r.total_ops) << " kop)\n"
     << "buffers A " << r.buffers.buffer_a << " + B " << r.buffers.buffer_b << " + scratch "
     << r.buffers.scratch << " = " << r.buffers.total << " B\n";
  emit(g, to_json(r), os.str());
}

void cmd_feasibility(const Globals& g, const ArchArgs& a) {
  const CostReport r = estimate(resolve_arch(a.preset, a.arch));
  std::vector<PlatformSpec> boards;
  if (a.platform == "all") {
    boards = platform_presets();
  } else {
    boards.push_back(platform(a.platform));
  }
  json j{{"model", r.model}, {"platforms", json::array()}};
  std::ostringstream os;
  os << "model " << r.model << ": " << r.params_bytes() << " B params, " << r.buffers.total
     << " B buffers, " << fixed(static_cast<double>(r.total_ops) / 1e6, 3) << " Mop per patch\n";
  for (const auto& b : boards) {
    const FeasibilityVerdict v = feasibility(r, b, a.power_budget);
    json row = to_json(v);
    row["platform"] = b.name;
    j["platforms"].push_back(row);
    os << std::left << std::setw(20) << b.name << (v.pass ? "PASS" : "FAIL");
    for (const auto& why : v.reasons) os << "  " << why;
    os << "\n";
  }
  emit(g, j, os.str());
}

struct ExportArgs {
  std::string qmodel, header;
};

void cmd_export(const Globals& g, const ExportArgs& a) {
  check_distinct({model_json_path(a.qmodel), model_blob_path(a.qmodel)}, a.header);
  const QuantizedModel qm = load_quantized(a.qmodel);
  const std::string text = export_c_header(qm);
  std::ofstream out(a.header, std::ios::trunc);
  if (!out) throw DomainError("cannot write '" + a.header + "'");
  out << text;
  json j{{"output", a.header}, {"bytes", text.size()}, {"buffers", qm.buffers.total}};
  emit(g, j, "wrote " + a.header + " (" + std::to_string(text.size()) + " bytes)\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinysed: tiny sound event detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a TOML/INI file; flags override");
  Globals g;
  app.add_flag("--json", g.json, "Machine-readable JSON output");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-data", "Generate a seeded synthetic dataset");
  c_synth->add_option("--classes", synth.classes)->capture_default_str();
  c_synth->add_option("--per-class", synth.per_class)->capture_default_str();
  c_synth->add_option("--height", synth.height)->capture_default_str();
  c_synth->add_option("--width", synth.width)->capture_default_str();
  c_synth->add_option("--freq-offset", synth.domain.freq_offset)->capture_default_str();
  c_synth->add_option("--gain", synth.domain.gain)->capture_default_str();
  c_synth->add_option("--noise", synth.domain.noise)->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("-o,--out", synth.out, "Dataset file")->required();

  FeaturizeArgs feat;
  auto* c_feat = app.add_subcommand("featurize", "WAV clip to log-mel patches");
  c_feat->add_option("wav", feat.wav, "16-bit PCM WAV")->required()->check(CLI::ExistingFile);
  c_feat->add_option("-o,--out", feat.out, "Patch file")->required();
  c_feat->add_flag("--resample", feat.resample, "Resample other rates to 16 kHz");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train from scratch on hard labels");
  c_train->add_option("--data", train.data, "Dataset file (not needed with --epochs 0)")
      ->check(CLI::ExistingFile);
  c_train->add_option("--preset", train.preset, "Architecture preset")->capture_default_str();
  c_train->add_option("--arch", train.arch, "Architecture JSON (overrides --preset)")
      ->check(CLI::ExistingFile);
  c_train->add_option("-o,--out", train.out, "Model path")->required();
  add_train_options(c_train, train.train);

  DistillArgs dist;
  auto* c_dist = app.add_subcommand("distill", "Distill a student from a teacher");
  auto* c_dist2 = app.add_subcommand("distill2", "Teacher -> intermediate -> student");
  for (auto* c : {c_dist, c_dist2}) {
    c->add_option("--data", dist.data)->required()->check(CLI::ExistingFile);
    c->add_option("--teacher", dist.teacher, "Teacher model")->required();
    c->add_option("--preset", dist.preset, "Student preset")->capture_default_str();
    c->add_option("--arch", dist.arch, "Student architecture JSON")->check(CLI::ExistingFile);
    c->add_option("-o,--out", dist.out, "Student model path")->required();
    add_loss_options(c, dist.loss, "Thse");
    add_train_options(c, dist.train);
  }
  c_dist2->add_option("--intermediate-preset", dist.inter_preset)->capture_default_str();
  c_dist2->add_option("--intermediate-arch", dist.inter_arch)->check(CLI::ExistingFile);
  c_dist2->add_option("--intermediate-out", dist.inter_out, "Also save the intermediate model");

  CalibArgs calib;
  auto* c_calib = app.add_subcommand("calibrate", "Collect statistics and choose Q-formats");
  auto* c_quant = app.add_subcommand("quantize", "Produce an int8 model");
  for (auto* c : {c_calib, c_quant}) {
    c->add_option("--model", calib.model, "Float model")->required();
    c->add_option("--data", calib.data, "Dataset file")->check(CLI::ExistingFile);
    c->add_option("--split", calib.split, "Dataset split")->capture_default_str();
    c->add_option("--features", calib.features, "Patch files, one clip each")
        ->check(CLI::ExistingFile);
    c->add_option("--scheme", calib.scheme, "sqnr or overload")->capture_default_str();
    c->add_option("--pth", calib.pth, "Overload probability threshold")->capture_default_str();
    c->add_option("--seed", calib.seed, "Reservoir sampling seed")->capture_default_str();
  }
  c_calib->add_option("-o,--out", calib.out, "Write the plan as JSON");
  c_quant->add_option("--plan", calib.plan, "Use a stored plan instead of calibrating")
      ->check(CLI::ExistingFile);
  c_quant->add_option("-o,--out", calib.out, "Quantized model path")->required();

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Classify one clip");
  c_infer->add_option("--model", infer.model, "Float model");
  c_infer->add_option("--qmodel", infer.qmodel, "Quantized model");
  c_infer->add_option("--wav", infer.wav, "WAV clip")->check(CLI::ExistingFile);
  c_infer->add_option("--features", infer.features, "Patch file")->check(CLI::ExistingFile);
  c_infer->add_flag("--float", infer.use_float, "Run the float model");
  c_infer->add_flag("--int8", infer.use_int8, "Run the int8 model");
  c_infer->add_flag("--resample", infer.resample, "Resample other rates to 16 kHz");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Float vs int8 accuracy on a dataset split");
  c_cmp->add_option("--model", cmp.model)->required();
  c_cmp->add_option("--qmodel", cmp.qmodel)->required();
  c_cmp->add_option("--data", cmp.data)->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--split", cmp.split)->capture_default_str();

  ArchArgs arch;
  auto* c_est = app.add_subcommand("estimate", "Parameters, operations and buffers per layer");
  auto* c_feas = app.add_subcommand("feasibility", "Check a model against platform presets");
  for (auto* c : {c_est, c_feas}) {
    c->add_option("--preset", arch.preset, "Architecture preset")->capture_default_str();
    c->add_option("--arch", arch.arch, "Architecture JSON (overrides --preset)")
        ->check(CLI::ExistingFile);
  }
  c_feas->add_option("--platform", arch.platform, "Platform name or 'all'")->capture_default_str();
  c_feas->add_option("--power-budget", arch.power_budget, "Power budget in mW");

  ExportArgs exp;
  auto* c_exp = app.add_subcommand("export", "Write a C header for the int8 model");
  c_exp->add_option("--qmodel", exp.qmodel)->required();
  c_exp->add_option("--header", exp.header, "Output header")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (c_synth->parsed()) cmd_synth(g, synth);
    if (c_feat->parsed()) cmd_featurize(g, feat);
    if (c_train->parsed()) cmd_train(g, train);
    if (c_dist->parsed()) cmd_distill(g, dist);
    if (c_dist2->parsed()) cmd_distill2(g, dist);
    if (c_calib->parsed()) cmd_calibrate(g, calib);
    if (c_quant->parsed()) cmd_quantize(g, calib);
    if (c_infer->parsed()) cmd_infer(g, infer);
    if (c_cmp->parsed()) cmd_compare(g, cmp);
    if (c_est->parsed()) cmd_estimate(g, arch);
    if (c_feas->parsed()) cmd_feasibility(g, arch);
    if (c_exp->parsed()) cmd_export(g, exp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
