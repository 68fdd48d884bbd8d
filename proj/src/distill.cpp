// Copyright 2026 The diffqa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "diffqa/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffqa/csv.hpp"
#include "diffqa/errors.hpp"
#include "diffqa/optim.hpp"
#include "diffqa/rng.hpp"
#include "diffqa/stats.hpp"

namespace diffqa {

std::size_t LabelSet::train_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const LabelEntry& e) { return e.train; }));
}

void LabelSet::save_csv(const std::filesystem::path& path) const {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : entries) {
    rows.push_back({e.ref, format_real(e.raw, 17), format_real(e.normalized, 17), e.train ? "train" : "val"});
  }
  write_csv(path, {"path", "raw", "normalized", "split"}, rows);
}

LabelSet LabelSet::load_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t cp = csv.column("path"), cr = csv.column("raw"), cn = csv.column("normalized"),
                    cs = csv.column("split");
  LabelSet out;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    const std::size_t line = csv.line_numbers[i];
    if (row[cs] != "train" && row[cs] != "val") throw ParseError(path.string(), line, "split must be train or val", true);
    out.entries.push_back(LabelEntry{row[cp], parse_real(row[cr], path.string(), line),
                                     parse_real(row[cn], path.string(), line), row[cs] == "train"});
  }
  normalize_labels(out);
  return out;
}

std::uint64_t stable_hash(const std::string& ref) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : ref) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool in_train_split(const std::string& ref, double train_fraction) {
  DIFFQA_REQUIRE(train_fraction > 0.0 && train_fraction <= 1.0, "train_fraction must lie in (0, 1]");
  return static_cast<double>(mix64(stable_hash(ref)) % 10000) < train_fraction * 10000.0;
}

void normalize_labels(LabelSet& labels) {
  bool any = false;
  double lo = 0.0, hi = 0.0;
  for (const auto& e : labels.entries) {
    if (!std::isfinite(e.raw)) throw NumericError("label for '" + e.ref + "' is not finite");
    if (!e.train) continue;
    lo = any ? std::min(lo, e.raw) : e.raw;
    hi = any ? std::max(hi, e.raw) : e.raw;
    any = true;
  }
  DIFFQA_REQUIRE(any, "labels: the training split is empty");
  if (hi == lo) throw ContractError("labels: degenerate distribution, every training score equals " + format_real(lo));
  labels.min_raw = lo;
  labels.max_raw = hi;
  for (auto& e : labels.entries) e.normalized = std::clamp((e.raw - lo) / (hi - lo), 0.0, 1.0);
}

LabelSet make_label_set(std::span<const std::string> refs, std::span<const double> raw, double train_fraction) {
  DIFFQA_REQUIRE(refs.size() == raw.size(), "labels: one raw score per reference");
  LabelSet out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    out.entries.push_back(LabelEntry{refs[i], raw[i], 0.0, in_train_split(refs[i], train_fraction)});
  }
  normalize_labels(out);
  return out;
}

LabelSet generate_labels(std::span<const std::string> refs, std::span<const Image> images, const Denoiser& model,
                         const Embedder& embedder, const ScorerConfig& cfg, double train_fraction) {
  DIFFQA_REQUIRE(refs.size() == images.size(), "generate_labels: one reference per image");
  std::vector<double> raw;
  for (const auto& q : score_images(images, model, embedder, cfg)) raw.push_back(q.value);
  return make_label_set(refs, raw, train_fraction);
}

LabelSet generate_labels(std::span<const std::string> refs, const Denoiser& model, const Embedder& embedder,
                         const ScorerConfig& cfg, double train_fraction, const std::filesystem::path& base_dir) {
  std::vector<double> raw;
  for (const auto& rec : score_batch(refs, model, embedder, cfg, 0, base_dir)) {
    if (!rec.quality) throw std::runtime_error("generate_labels: '" + rec.ref + "': " + rec.error);
    raw.push_back(*rec.quality);
  }
  return make_label_set(refs, raw, train_fraction);
}

// ---------------------------------------------------------------------------

namespace {

TensorF mirror_batch(const TensorF& x) {
  if (x.rank() != 4) throw ShapeError("regressor", "expected [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0) * x.dim(1) * x.dim(2), W = x.dim(3);
  TensorF out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < W; ++c) out[r * W + c] = x[r * W + W - 1 - c];
  return out;
}

TensorF he_dense(std::size_t in, std::size_t out, Rng& rng) {
  TensorF t(Shape{in, out});
  const double s = std::sqrt(2.0 / static_cast<double>(in));
  for (auto& v : t.data()) v = static_cast<float>(s * rng.normal());
  return t;
}

}  // namespace

RegressorModel::RegressorModel(std::shared_ptr<const Embedder> backbone, std::size_t hidden, std::uint64_t seed)
    : backbone_(std::move(backbone)) {
  DIFFQA_REQUIRE(backbone_ != nullptr, "regressor: backbone required");
  DIFFQA_REQUIRE(hidden >= 1, "regressor: hidden width must be positive");
  backbone_params_ = backbone_->parameters();
  const std::size_t f = feature_dim();
  Rng rng(seed);
  head_.add("fc1.w", he_dense(f, hidden, rng));
  head_.add("fc1.b", TensorF(Shape{1, hidden}, 0.0f));
  head_.add("fc2.w", TensorF(Shape{hidden, 1}, 0.0f));
  head_.add("fc2.b", TensorF(Shape{1, 1}, 0.5f));
  head_.add("lin.w", TensorF(Shape{f, 1}, 0.0f));
  mean_ = TensorF(Shape{1, f}, 0.0f);
  inv_std_ = TensorF(Shape{1, f}, 1.0f);
}

void RegressorModel::set_feature_stats(TensorF mean, TensorF inv_std) {
  const Shape s{1, feature_dim()};
  if (mean.shape() != s || inv_std.shape() != s) throw ShapeError("regressor", "feature statistics must be " + shape_str(s));
  mean_ = std::move(mean);
  inv_std_ = std::move(inv_std);
}

Var RegressorModel::build_from_features(Graph<float>& g, const ParameterSet<float>& head, Var features) const {
  Var f = g.mul(g.sub(features, g.constant(mean_)), g.constant(inv_std_));
  Var h = g.silu(g.add(g.matmul(f, g.parameter(head, "fc1.w")), g.parameter(head, "fc1.b")));
  Var out = g.add(g.matmul(h, g.parameter(head, "fc2.w")), g.parameter(head, "fc2.b"));
  return g.add(out, g.matmul(f, g.parameter(head, "lin.w")));
}

std::size_t RegressorModel::feature_dim() const { return backbone_->feature_dim() + backbone_->dim(); }

Var RegressorModel::head_input(Graph<float>& g, const ParameterSet<float>& backbone, Var x) const {
  Var mx = g.constant(mirror_batch(g.value(x)));
  Var d = g.sub(g.l2_normalize_rows(backbone_->embedding(g, backbone, x)),
                g.l2_normalize_rows(backbone_->embedding(g, backbone, mx)));
  return g.concat_cols({backbone_->features(g, backbone, x), g.mul(d, d)});
}

Var RegressorModel::build(Graph<float>& g, const ParameterSet<float>& backbone, const ParameterSet<float>& head,
                          Var x) const {
  return build_from_features(g, head, head_input(g, backbone, x));
}

TensorF RegressorModel::raw_features(const TensorF& x) const {
  Graph<float> g(false);
  return g.value(head_input(g, backbone_params_, g.constant(x)));
}

std::vector<double> RegressorModel::score_batch(const TensorF& x) const {
  Graph<float> g(false);
  const TensorF& out = g.value(build(g, backbone_params_, head_, g.constant(x)));
  std::vector<double> s(out.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(out[i])) throw NumericError("regressor: non-finite output");
    s[i] = std::clamp(static_cast<double>(out[i]), 0.0, 1.0);
  }
  return s;
}

double RegressorModel::score(const Image& x) const { return score_batch(to_batch(x)).front(); }

double score_distilled(const RegressorModel& model, const Image& x) { return model.score(x); }

TensorTable RegressorModel::to_table() const {
  TensorTable t;
  t.put_params("backbone/", backbone_params_);
  t.put_params("head/", head_);
  t.put("feature/mean", mean_);
  t.put("feature/inv_std", inv_std_);
  auto& c = t.config();
  c["kind"] = "regressor";
  c["hidden"] = std::to_string(head_.get("fc1.w").dim(1));
  c["backbone.image_size"] = std::to_string(backbone_->image_size());
  c["backbone.channels"] = std::to_string(backbone_->channels());
  c["backbone.dim"] = std::to_string(backbone_->dim());
  if (const auto* p = dynamic_cast<const ProjectionEmbedder*>(backbone_.get())) {
    c["backbone.kind"] = "projection";
    c["backbone.pool"] = std::to_string(p->pool());
    c["backbone.seed"] = std::to_string(p->seed());
  } else if (const auto* ce = dynamic_cast<const ConvEmbedder*>(backbone_.get())) {
    c["backbone.kind"] = "trained-toy";
    c["backbone.width"] = std::to_string(ce->config().width);
  } else {
    throw ContractError("regressor: backbone type cannot be serialized");
  }
  return t;
}

RegressorModel RegressorModel::from_table(const TensorTable& t) {
  const auto& c = t.config();
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = c.find(k);
    if (it == c.end()) throw ContractError("regressor checkpoint is missing '" + k + "'");
    return it->second;
  };
  if (c.count("kind") == 0 || c.at("kind") != "regressor") throw ContractError("checkpoint is not a regressor");
  const std::size_t size = std::stoul(get("backbone.image_size")), ch = std::stoul(get("backbone.channels")),
                    dim = std::stoul(get("backbone.dim"));
  std::shared_ptr<const Embedder> backbone;
  if (get("backbone.kind") == "projection") {
    backbone = std::make_shared<ProjectionEmbedder>(size, ch, dim, std::stoul(get("backbone.pool")),
                                                    std::stoull(get("backbone.seed")));
  } else {
    ConvEmbedderConfig cfg{size, ch, std::stoul(get("backbone.width")), dim};
    backbone = std::make_shared<ConvEmbedder>(cfg, t.params("backbone/"));
  }
  RegressorModel m(backbone, std::stoul(get("hidden")), 0);
  auto bb = t.params("backbone/");
  auto head = t.params("head/");
  if (!bb.congruent(m.backbone_params_) || !head.congruent(m.head_)) {
    throw ContractError("regressor checkpoint tensors do not match the recorded architecture");
  }
  m.backbone_params_ = std::move(bb);
  m.head_ = std::move(head);
  m.set_feature_stats(t.f32("feature/mean"), t.f32("feature/inv_std"));
  return m;
}

// ---------------------------------------------------------------------------

namespace {

TensorF gather_rows(const TensorF& x, std::span<const std::size_t> idx) {
  Shape s = x.shape();
  const std::size_t per = x.size() / s[0];
  s[0] = idx.size();
  TensorF out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

double clamped_mse(const RegressorModel& m, const ParameterSet<float>& bb, const ParameterSet<float>& head,
                   const TensorF& input, bool from_features, std::span<const double> target) {
  Graph<float> g(false);
  Var x = g.constant(input);
  const TensorF& out = g.value(from_features ? m.build_from_features(g, head, x) : m.build(g, bb, head, x));
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = std::clamp(static_cast<double>(out[i]), 0.0, 1.0) - target[i];
    s += d * d;
  }
  return s / static_cast<double>(target.size());
}

}  // namespace

RegressorReport train_regressor(RegressorModel& model, const LabelSet& labels, std::span<const Image> images,
                                const RegressorConfig& cfg) {
  DIFFQA_REQUIRE(images.size() == labels.entries.size(), "train_regressor: one image per label");
  DIFFQA_REQUIRE(cfg.batch_size >= 1 && cfg.epochs >= 1, "train_regressor: batch_size and epochs must be positive");
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < labels.entries.size(); ++i) (labels.entries[i].train ? tr : va).push_back(i);
  DIFFQA_REQUIRE(tr.size() >= 2, "train_regressor: need two or more training labels");
  DIFFQA_REQUIRE(!va.empty(), "train_regressor: the validation split is empty");
  {
    double lo = labels.entries[tr[0]].normalized, hi = lo;
    for (auto i : tr) {
      lo = std::min(lo, labels.entries[i].normalized);
      hi = std::max(hi, labels.entries[i].normalized);
    }
    DIFFQA_REQUIRE(hi > lo, "train_regressor: degenerate training labels");
  }

  const TensorF all = to_batch(images);
  const TensorF x_tr = gather_rows(all, tr), x_va = gather_rows(all, va);
  std::vector<double> y_tr, y_va;
  for (auto i : tr) y_tr.push_back(labels.entries[i].normalized);
  for (auto i : va) y_va.push_back(labels.entries[i].normalized);

  // Standardization fitted on the initial training features.
  TensorF f_tr = model.raw_features(x_tr);
  const std::size_t F = f_tr.dim(1);
  TensorF mean(Shape{1, F}, 0.0f), inv(Shape{1, F}, 1.0f);
  for (std::size_t j = 0; j < F; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) m += f_tr[i * F + j];
    m /= static_cast<double>(tr.size());
    for (std::size_t i = 0; i < tr.size(); ++i) v += (f_tr[i * F + j] - m) * (f_tr[i * F + j] - m);
    v /= static_cast<double>(tr.size());
    mean[j] = static_cast<float>(m);
    inv[j] = static_cast<float>(1.0 / std::sqrt(v + 1e-6));
  }
  model.set_feature_stats(mean, inv);
  const bool frozen = !cfg.fine_tune_backbone;
  const TensorF f_va = frozen ? model.raw_features(x_va) : TensorF{};

  AdamConfig adam;
  adam.lr = cfg.lr;
  auto head_state = AdamState<float>::zeros_like(model.head_params());
  auto bb_state = AdamState<float>::zeros_like(model.backbone_params());
  RegressorReport rep;
  auto best_head = model.head_params();
  auto best_bb = model.backbone_params();
  rep.best_validation_loss = frozen ? clamped_mse(model, model.backbone_params(), model.head_params(), f_va, true, y_va)
                                    : clamped_mse(model, model.backbone_params(), model.head_params(), x_va, false, y_va);
  std::size_t since_best = 0;
  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<float> y;
      for (auto i : idx) y.push_back(static_cast<float>(y_tr[i]));
      Graph<float> g;
      Var pred = frozen ? model.build_from_features(g, model.head_params(), g.constant(gather_rows(f_tr, idx)))
                        : model.build(g, model.backbone_params(), model.head_params(), g.constant(gather_rows(x_tr, idx)));
      Var loss = g.mse(pred, g.constant(TensorF(Shape{idx.size(), 1}, std::move(y))));
      const double lv = g.value(loss).item();
      if (!std::isfinite(lv)) {
        throw NumericError("train_regressor: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      g.backward(loss);
      GradientMap<float> grads = g.parameter_grads();
      GradientMap<float> head_grads, bb_grads;
      for (auto& [name, gr] : grads) {
        if (model.head_params().contains(name)) {
          head_grads.emplace(name, std::move(gr));
        } else {
          bb_grads.emplace(name, std::move(gr));
        }
      }
      adam_step(model.head_params(), head_grads, head_state, adam);
      if (!frozen) adam_step(model.backbone_params(), bb_grads, bb_state, adam);
      total += lv;
      ++batches;
    }
    rep.train_loss.push_back(total / static_cast<double>(batches));
    const double vl = frozen ? clamped_mse(model, model.backbone_params(), model.head_params(), f_va, true, y_va)
                             : clamped_mse(model, model.backbone_params(), model.head_params(), x_va, false, y_va);
    rep.validation_loss.push_back(vl);
    if (vl < rep.best_validation_loss) {
      rep.best_validation_loss = vl;
      rep.best_epoch = epoch + 1;
      best_head = model.head_params();
      best_bb = model.backbone_params();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model.head_params() = std::move(best_head);
  model.backbone_params() = std::move(best_bb);
  return rep;
}

FidelityReport distillation_fidelity(const RegressorModel& model, const LabelSet& labels,
                                     std::span<const Image> images) {
  DIFFQA_REQUIRE(images.size() == labels.entries.size(), "distillation_fidelity: one image per label");
  std::vector<Image> val;
  std::vector<double> teacher;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (labels.entries[i].train) continue;
    val.push_back(images[i]);
    teacher.push_back(labels.entries[i].normalized);
  }
  DIFFQA_REQUIRE(val.size() >= 2, "distillation_fidelity: need two or more validation images");
  const auto student = model.score_batch(to_batch(val));
  return FidelityReport{pearson(student, teacher), spearman(student, teacher), val.size()};
}

}  // namespace diffqa
