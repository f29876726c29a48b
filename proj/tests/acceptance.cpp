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

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tinysed/cost.hpp"
#include "tinysed/distill.hpp"
#include "tinysed/fxp.hpp"
#include "tinysed/qexec.hpp"
#include "tinysed/quant.hpp"

using namespace tinysed;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = limit_s <= 0.0 || secs < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++g_failures;
  std::printf("[%s] %2d %s: %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", id, title.c_str(),
              o.detail.c_str(), secs, in_time ? "" : ", over time limit");
  std::fflush(stdout);
}

std::uint64_t layer_ops(const CostReport& r, const std::string& name) {
  for (const auto& l : r.layers) {
    if (l.name == name) return l.ops;
  }
  throw DomainError("no layer " + name);
}

std::uint64_t layer_out(const CostReport& r, const std::string& name) {
  for (const auto& l : r.layers) {
    if (l.name == name) return l.output_elements;
  }
  throw DomainError("no layer " + name);
}

double rel_err(double got, double want) { return std::abs(got - want) / want; }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<TensorF> normal_patches(const Shape& s, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<TensorF> out;
  for (std::size_t k = 0; k < n; ++k) {
    TensorF t(s);
    for (auto& v : t.values()) v = d(rng);
    out.push_back(std::move(t));
  }
  return out;
}

Split first_per_class(const Split& s, std::size_t per_class, std::size_t classes) {
  Split out;
  std::vector<std::size_t> seen(classes, 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (seen[s.y[i]]++ < per_class) {
      out.x.push_back(s.x[i]);
      out.y.push_back(s.y[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome cost_table() {
  const CostReport r = estimate(preset("M20k_int8"));
  const std::vector<std::pair<std::string, std::uint64_t>> rows = {
      {"conv1", 419616}, {"conv2", 751680}, {"conv3", 628992}, {"conv4", 207360}, {"conv5", 27648},
      {"fc1", 8192},     {"fc2", 16384},    {"fc3", 1200},     {"rnn", 22560}};
  std::ostringstream os;
  bool ok = true;
  for (const auto& [name, want] : rows) {
    if (layer_ops(r, name) != want) {
      ok = false;
      os << name << "=" << layer_ops(r, name) << " want " << want << "; ";
    }
  }
  const std::vector<std::pair<std::string, double>> pools = {
      {"pool1", 23310}, {"pool2", 24840}, {"pool3", 11090}, {"pool4", 2160}, {"pool5", 580}};
  double worst_pool = 0.0;
  for (const auto& [name, want] : pools) {
    const double per_out = std::abs(static_cast<double>(layer_ops(r, name)) - want) /
                           static_cast<double>(layer_out(r, name));
    worst_pool = std::max(worst_pool, per_out);
  }
  ok = ok && worst_pool <= 5.0;
  const double e = rel_err(static_cast<double>(r.total_ops), 2145610.0);
  ok = ok && e < 0.01;
  os << "9 rows exact" << (ok ? "" : "?") << ", total " << r.total_ops << " ("
     << fmt("%.3f%% off", 100 * e) << "), worst pool row " << fmt("%.2f ops/output", worst_pool);
  return {ok, os.str()};
}

Outcome param_table() {
  const std::vector<std::pair<std::string, double>> rows = {
      {"VGGish", 72.1e6}, {"M20M", 18.0e6}, {"M2M", 1.88e6}, {"M200k", 202e3}};
  std::ostringstream os;
  bool ok = true;
  for (const auto& [name, want] : rows) {
    const double got = static_cast<double>(count_params(preset(name)).total);
    const double e = rel_err(got, want);
    ok = ok && e <= 0.005;
    os << name << " " << static_cast<std::uint64_t>(got) << fmt(" (%.2f%%), ", 100 * e);
  }
  const std::uint64_t m20k = count_params(preset("M20k")).total;
  ok = ok && m20k == 30606;
  os << "M20k " << m20k;
  return {ok, os.str()};
}

Outcome ops_table() {
  const std::vector<std::pair<std::string, double>> rows = {
      {"VGGish", 1.72e9}, {"M20M", 608e6}, {"M2M", 148e6}, {"M200k", 13.6e6}};
  std::ostringstream os;
  bool ok = true;
  for (const auto& [name, want] : rows) {
    const double got = static_cast<double>(count_ops(preset(name)).total);
    const double e = rel_err(got, want);
    ok = ok && e <= 0.02;
    os << name << fmt(" %.4g (%.2f%%) ", got, 100 * e);
  }
  return {ok, os.str()};
}

Outcome buffer_plan() {
  const ModelArch arch = preset("M20k_int8");
  const BufferPlan p = plan_buffers(arch);
  bool ok = p.buffer_a == 10440 && p.buffer_b == 23312 && p.scratch == 576 && p.total == 34328;
  const Model m = init_model(arch, 5);
  const std::vector<std::vector<TensorF>> clips{normal_patches(arch.input_shape, 4, 6)};
  const QuantizedModel qm = quantize_model(m, collect_stats(m, clips));
  InferenceContext ctx(qm.buffers);
  const QForwardResult r = qforward(qm, quantize_patches(qm, clips[0]), ctx);
  ok = ok && r.peak_bytes == p.total;
  std::ostringstream os;
  os << "A " << p.buffer_a << " + B " << p.buffer_b << " + scratch " << p.scratch << " = "
     << p.total << ", qforward peak " << r.peak_bytes;
  return {ok, os.str()};
}

Outcome feasibility_matrix() {
  const std::vector<std::string> models = {"VGGish", "M20M", "M2M", "M200k", "M20k", "M20k_int8"};
  std::map<std::string, CostReport> reports;
  for (const auto& n : models) reports.emplace(n, estimate(preset(n)));
  auto verdict = [&](const std::string& model, const std::string& board) {
    return feasibility(reports.at(model), platform(board));
  };
  bool ok = true;
  std::ostringstream os;
  for (const auto& n : models) {
    const auto v = verdict(n, "Arduino");
    ok = ok && !v.pass &&
         std::find(v.failed.begin(), v.failed.end(), Axis::Ram) != v.failed.end();
  }
  os << "Arduino fails all on RAM" << (ok ? "" : " (violated)");
  const auto uc = verdict("M20k_int8", "ChipKit uc32");
  const bool uc_ok = !uc.pass && uc.failed == std::vector<Axis>{Axis::Ram} &&
                     uc.ram_shortfall_bytes > 0 && uc.ram_shortfall_bytes <= 2048;
  ok = ok && uc_ok;
  os << "; uc32 short by " << uc.ram_shortfall_bytes << " B";
  for (const std::string board : {"STM32L476RG", "TI MSP432P4111"}) {
    for (const std::string model : {"M20k_int8", "M200k"}) {
      const bool pass = verdict(model, board).pass;
      ok = ok && pass;
      if (!pass) os << "; " << model << " fails " << board;
    }
  }
  os << "; VGGish passes on:";
  for (const auto& p : platform_presets()) {
    const bool pass = verdict("VGGish", p.name).pass;
    if (pass) os << " " << p.name;
    ok = ok && pass == (p.name == "Raspberry Pi 3 B+");
  }
  return {ok, os.str()};
}

// 2-conv + 2-dense model with a batch norm in between.
ModelArch gradient_arch() {
  ModelArch a;
  a.name = "grad_toy";
  a.input_shape = {6, 5, 1};
  a.layers = {LayerSpec::conv("conv1", 4, Padding::Same),
              LayerSpec::pool("pool1"),
              LayerSpec::conv("conv2", 4, Padding::Valid),
              LayerSpec::flatten(),
              LayerSpec::dense("fc1", 6, Activation::None, true),
              LayerSpec::batchnorm("bn", Activation::Relu),
              LayerSpec::dense("fc2", 3),
              LayerSpec::softmax()};
  return a;
}

Model jittered(const Model& m, std::uint64_t seed) {
  Model r = m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 0.2);
  for (auto& [k, t] : r.weights.tensors) {
    if (k.ends_with("/mean") || k.ends_with("/var")) continue;
    for (auto& v : t.values()) v += d(rng);
  }
  r.weights.at("bn/mean").values().assign(6, 0.1);
  r.weights.at("bn/var").values().assign(6, 1.7);
  return r;
}

Outcome gradients() {
  const Model m = jittered(init_model(gradient_arch(), 31), 32);
  const Model teacher = jittered(init_model(gradient_arch(), 33), 34);
  const auto xs = normal_patches(m.arch.input_shape, 3, 35);
  const std::vector<std::size_t> ys{1, 2, 0};
  const TeacherTargets tt = teacher_targets(teacher, xs);
  auto loss = [&](const Model& mm, const LossWeights& w) {
    std::vector<ForwardTrace> tr;
    for (const auto& x : xs) tr.push_back(forward(mm, x, false));
    return compound_loss(loss_terms(tr, &tt, ys), w);
  };
  constexpr double h = 1e-4;
  bool ok = true;
  std::ostringstream os;
  for (Strategy s : {Strategy::Th, Strategy::Ths, Strategy::Thse, Strategy::Te}) {
    const LossWeights w = strategy_weights(s);
    const GradResult g = backprop_grads(m, xs, ys, &tt, w);
    double worst = 0.0;
    std::size_t n = 0;
    for (const auto& key : trainable_keys(m.arch)) {
      for (std::size_t j = 0; j < m.weights.at(key).size(); ++j, ++n) {
        Model a = m, b = m;
        a.weights.at(key)[j] += h;
        b.weights.at(key)[j] -= h;
        const double fd = (loss(a, w) - loss(b, w)) / (2 * h);
        const double an = g.grads.at(key)[j];
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-7}));
      }
    }
    ok = ok && worst < 1e-4;
    os << to_string(s) << fmt(" %.1e ", worst);
    if (s == Strategy::Te) os << "over " << n << " parameters";
  }
  return {ok, os.str()};
}

// Teacher trained on a source domain; each seed draws an in-domain target
// task with 20 labelled patches per class.
Outcome distillation_trend() {
  constexpr std::size_t kClasses = 10;
  constexpr std::size_t kSeeds = 5;
  const Shape shape{24, 16, 1};
  const SyntheticDataset source = synth_dataset(kClasses, 200, shape, 1000, {0.0, 1.0, 0.5});
  TrainConfig tc;
  tc.learning_rate = 0.02;
  tc.epochs = 20;
  tc.batch_size = 32;
  tc.patience = 4;
  tc.clip_norm = 5.0;
  tc.seed = 1;
  const Model teacher =
      sgd_train(init_model(preset("toy_teacher"), 1), source, nullptr, {1, 0, 0}, tc).model;

  double th = 0, thse = 0, two = 0, teach = 0;
  int two_wins = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    SyntheticDataset d = synth_dataset(kClasses, 300, shape, 2000 + s, {0.5, 1.0, 0.5});
    d.train = first_per_class(d.train, 20, kClasses);
    d.val = first_per_class(d.val, 20, kClasses);
    TrainConfig sc;
    sc.learning_rate = 0.02;
    sc.epochs = 300;
    sc.batch_size = 16;
    sc.patience = 40;
    sc.clip_norm = 20.0;
    sc.seed = 10 + s;
    const ModelArch student = preset("toy_student");
    const double a_th = accuracy(distill(teacher, student, Strategy::Th, d, sc).student, d.test);
    const double a_thse =
        accuracy(distill(teacher, student, Strategy::Thse, d, sc).student, d.test);
    const double a_two = accuracy(two_stage_distill(teacher, preset("toy_teacher"), student,
                                                    strategy_weights(Strategy::Thse), d, sc)
                                      .student,
                                  d.test);
    th += a_th;
    thse += a_thse;
    two += a_two;
    teach += accuracy(teacher, d.test);
    if (a_two > a_thse) ++two_wins;
  }
  th *= 100.0 / kSeeds;
  thse *= 100.0 / kSeeds;
  two *= 100.0 / kSeeds;
  teach *= 100.0 / kSeeds;
  const bool ok = thse - th >= 2.0 && two >= thse - 0.5 && two - thse > 0.0;
  std::ostringstream os;
  os << fmt("mean acc Th %.2f, Thse %.2f, two-stage %.2f", th, thse, two)
     << fmt(" (teacher %.2f); Thse-Th %+.2f, two-direct %+.2f", teach, thse - th, two - thse)
     << ", two-stage ahead on " << two_wins << "/" << kSeeds << " seeds";
  return {ok, os.str()};
}

Model trained_toy(std::uint64_t seed, const SyntheticDataset& d) {
  TrainConfig tc;
  tc.learning_rate = 0.02;
  tc.epochs = 100;
  tc.batch_size = 16;
  tc.patience = 20;
  tc.clip_norm = 20.0;
  tc.seed = 20 + seed;
  return sgd_train(init_model(preset("toy_student"), 20 + seed), d, nullptr, {1, 0, 0}, tc).model;
}

Outcome quantization_fidelity() {
  constexpr std::size_t kSeeds = 5;
  std::map<Scheme, double> min_agree{{Scheme::Sqnr, 1.0}, {Scheme::Overload, 1.0}};
  std::map<Scheme, double> drop{{Scheme::Sqnr, 0.0}, {Scheme::Overload, 0.0}};
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const SyntheticDataset d = synth_dataset(10, 100, {24, 16, 1}, 3000 + s, {0.0, 1.0, 0.5});
    const Model m = trained_toy(s, d);
    const StatsMap stats = collect_stats(m, d.train.x, s);
    std::vector<std::vector<TensorF>> clips;
    for (const auto& x : d.test.x) clips.push_back({x});
    for (Scheme sc : {Scheme::Sqnr, Scheme::Overload}) {
      const QuantizedModel qm = quantize_model(m, stats, {sc, 1e-4});
      const CompareReport r = compare_models(m, qm, clips, d.test.y, 10);
      min_agree[sc] = std::min(min_agree[sc], r.agreement);
      drop[sc] += 100.0 * r.gap / kSeeds;
    }
  }
  bool ok = true;
  std::ostringstream os;
  for (Scheme sc : {Scheme::Sqnr, Scheme::Overload}) {
    ok = ok && min_agree[sc] >= 0.95 && drop[sc] <= 5.0;
    os << to_string(sc) << fmt(": min agreement %.1f%%, mean drop %.2f pts; ", 100 * min_agree[sc],
                               drop[sc]);
  }
  return {ok, os.str()};
}

double oracle_sqnr(const std::vector<double>& xs, int integer_bits) {
  const double scale = std::ldexp(1.0, 7 - integer_bits);
  double sig = 0.0, err = 0.0;
  for (double x : xs) {
    const double code = std::clamp(std::round(x * scale), -128.0, 127.0);
    const double e = x - code / scale;
    sig += x * x;
    err += e * e;
  }
  return err == 0.0 ? std::numeric_limits<double>::infinity() : sig / err;
}

Outcome quantizer_optimality() {
  // 50 calibration patches keep every tensor below the reservoir cap, so the
  // reservoir is the full stream.
  const SyntheticDataset d = synth_dataset(10, 100, {24, 16, 1}, 3000, {0.0, 1.0, 0.5});
  const Model m = trained_toy(0, d);
  const std::vector<TensorF> calib(d.train.x.begin(), d.train.x.begin() + 50);
  const StatsMap stats = collect_stats(m, calib, 7);
  std::size_t tensors = 0, checks = 0;
  std::ostringstream bad;
  for (const auto& [key, st] : stats) {
    const auto& xs = st.reservoir();
    if (xs.size() != st.count()) {
      bad << key << " not exhaustive; ";
      continue;
    }
    ++tensors;
    const bool all_zero = std::all_of(xs.begin(), xs.end(), [](double v) { return v == 0.0; });
    const QFormat chosen = qformat_sqnr(st);
    if (all_zero) {
      if (chosen != QFormat(0, 7)) bad << key << " zero tensor; ";
    } else {
      const double best = oracle_sqnr(xs, chosen.integer_bits());
      for (int i = 0; i <= 7; ++i, ++checks) {
        if (i == chosen.integer_bits()) continue;
        const double other = oracle_sqnr(xs, i);
        const bool beaten = other > best * (1 + 1e-12) ||
                            (other >= best * (1 - 1e-12) && i < chosen.integer_bits());
        if (beaten) bad << key << " sqnr Q" << i << " beats " << chosen.to_string() << "; ";
      }
    }
    for (double p_th : {1e-4, 1e-2, 0.0}) {
      int want = -1;
      for (int i = 0; i <= 7 && want < 0; ++i) {
        const double lim = std::ldexp(1.0, i);
        const auto n = std::count_if(xs.begin(), xs.end(), [&](double v) { return std::abs(v) >= lim; });
        const double frac = static_cast<double>(n) / static_cast<double>(xs.size());
        if (p_th == 0.0 ? n == 0 : frac < p_th) want = i;
      }
      const OverloadChoice c = qformat_overload_checked(st, p_th);
      ++checks;
      const bool match = want < 0 ? c.saturated && c.format.integer_bits() == 7
                                  : !c.saturated && c.format.integer_bits() == want;
      if (!match) bad << key << " overload p_th=" << p_th << "; ";
    }
  }
  const bool ok = bad.str().empty() && tensors > 0;
  std::ostringstream os;
  os << tensors << " tensors, " << checks << " comparisons" << (ok ? "" : "; " + bad.str());
  return {ok, os.str()};
}

Outcome shift_identities() {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> bits(0, 7);
  std::uniform_int_distribution<int> code(-128, 127);
  std::uniform_int_distribution<int> layers(1, 6);
  std::uniform_int_distribution<int> fan_in(1, 64);
  std::size_t plans = 0, specs = 0, max_dev = 0;
  bool ok = true;
  while (plans < 10000) {
    QuantPlan plan;
    plan.input = QFormat::with_integer_bits(bits(rng));
    QFormat in = plan.input;
    const int n_layers = layers(rng);
    for (int l = 0; l < n_layers; ++l) {
      LayerQuant lq;
      lq.layer = "l" + std::to_string(l);
      lq.input = in;
      lq.weight = QFormat::with_integer_bits(bits(rng));
      const int acc_dec = in.decimal_bits() + lq.weight.decimal_bits();
      // Valid plans keep both shifts nonnegative.
      auto draw = [&] {
        for (;;) {
          const QFormat q = QFormat::with_integer_bits(bits(rng));
          if (q.decimal_bits() <= acc_dec) return q;
        }
      };
      lq.bias = draw();
      lq.output = draw();
      lq.shift = derive_shifts(lq.input, lq.weight, lq.bias, lq.output);
      plan.layers.push_back(lq);
      in = lq.output;
    }
    const QuantPlan round_trip = plan_from_json(to_json(plan));
    for (const LayerQuant& lq : round_trip.layers) {
      ++specs;
      const int ni = lq.input.decimal_bits(), nw = lq.weight.decimal_bits();
      const int nb = lq.bias.decimal_bits(), no = lq.output.decimal_bits();
      if (lq.shift.left_shift != ni + nw - nb || lq.shift.right_shift != ni + nw - no) ok = false;
      // One random accumulation per layer against the float oracle.
      const int k = fan_in(rng);
      std::int32_t acc = 0;
      double real = 0.0;
      for (int j = 0; j < k; ++j) {
        const int x = code(rng), w = code(rng);
        acc += x * w;
        real += dequantize(static_cast<std::int8_t>(x), lq.input) *
                dequantize(static_cast<std::int8_t>(w), lq.weight);
      }
      const int b = code(rng);
      real += dequantize(static_cast<std::int8_t>(b), lq.bias);
      const double want = std::clamp(std::round(std::ldexp(real, no)), -128.0, 127.0);
      const double got = requantize(acc, b, lq.shift);
      const auto dev = static_cast<std::size_t>(std::abs(got - want));
      max_dev = std::max(max_dev, dev);
    }
    ++plans;
  }
  ok = ok && max_dev <= 1;
  std::ostringstream os;
  os << plans << " plans, " << specs << " shift specs, identities "
     << (ok ? "exact" : "violated") << ", max |requantize - oracle| = " << max_dev << " code";
  return {ok, os.str()};
}

}  // namespace

int main() {
  run(1, "cost table (M20k_int8 ops)", 1.0, cost_table);
  run(2, "parameter table", 1.0, param_table);
  run(3, "operations table", 1.0, ops_table);
  run(4, "buffer plan and qforward peak", 0.0, buffer_plan);
  run(5, "feasibility verdicts", 1.0, feasibility_matrix);
  run(6, "gradient vs finite differences", 60.0, gradients);
  run(7, "distillation trend over 5 seeds", 900.0, distillation_trend);
  run(8, "int8 fidelity over 5 seeds", 300.0, quantization_fidelity);
  run(9, "quantizer optimality", 0.0, quantizer_optimality);
  run(10, "shift identities and requantize", 0.0, shift_identities);
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
