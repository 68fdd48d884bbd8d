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

#include "diffqa/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffqa/csv.hpp"
#include "diffqa/errors.hpp"
#include "diffqa/optim.hpp"
#include "diffqa/rng.hpp"

namespace diffqa {

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("cosine_similarity", std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw ContractError("cosine_similarity: zero-norm embedding");
  if (!std::isfinite(dot) || !std::isfinite(na) || !std::isfinite(nb)) {
    throw NumericError("cosine_similarity: non-finite embedding");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

void Embedder::check_input(const Shape& s) const {
  if (s.size() != 4 || s[1] != channels() || s[2] != image_size() || s[3] != image_size()) {
    throw ShapeError("embed", "expected [N," + std::to_string(channels()) + "," + std::to_string(image_size()) + "," +
                                  std::to_string(image_size()) + "], got " + shape_str(s));
  }
}

Embedding Embedder::embed(const Image& x) const { return embed_batch(to_batch(x)).front(); }

std::vector<Embedding> Embedder::embed_images(std::span<const Image> images) const {
  if (images.empty()) return {};
  return embed_batch(to_batch(images));
}

namespace {

std::vector<Embedding> rows_to_embeddings(const TensorF& t) {
  const std::size_t n = t.dim(0), d = t.dim(1);
  std::vector<Embedding> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].values.assign(t.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                         t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

ProjectionEmbedder::ProjectionEmbedder(std::size_t image_size, std::size_t channels, std::size_t dim, std::size_t pool,
                                       std::uint64_t seed)
    : image_size_(image_size), channels_(channels), dim_(dim), pool_(pool), seed_(seed) {
  DIFFQA_REQUIRE(image_size >= 1 && channels >= 1 && dim >= 1, "projection embedder: sizes must be positive");
  DIFFQA_REQUIRE(pool >= 1 && image_size % pool == 0, "projection embedder: pool must divide image_size");
  const std::size_t side = image_size / pool;
  const std::size_t in = channels * image_size * image_size;
  const std::size_t pooled = channels * side * side;
  TensorF avg(Shape{in, pooled}, 0.0f);
  const float w = 1.0f / static_cast<float>(pool * pool);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < image_size; ++y) {
      for (std::size_t x = 0; x < image_size; ++x) {
        const std::size_t row = (c * image_size + y) * image_size + x;
        const std::size_t col = (c * side + y / pool) * side + x / pool;
        avg[row * pooled + col] = w;
      }
    }
  }
  Rng rng(seed);
  TensorF proj(Shape{pooled, dim});
  const double s = 1.0 / std::sqrt(static_cast<double>(pooled));
  for (auto& v : proj.data()) v = static_cast<float>(s * rng.normal());
  params_.add("proj.pool", std::move(avg));
  params_.add("proj.w", std::move(proj));
}

Var ProjectionEmbedder::features(Graph<float>& g, const ParameterSet<float>& params, Var x) const {
  check_input(g.value(x).shape());
  const std::size_t n = g.value(x).dim(0);
  Var flat = g.reshape(x, Shape{n, channels_ * image_size_ * image_size_});
  return g.matmul(g.matmul(flat, g.parameter(params, "proj.pool")), g.parameter(params, "proj.w"));
}

std::vector<Embedding> ProjectionEmbedder::embed_batch(const TensorF& x) const {
  check_input(x.shape());
  const std::size_t n = x.dim(0), in = channels_ * image_size_ * image_size_;
  const TensorF& avg = params_.get("proj.pool");
  const TensorF& w = params_.get("proj.w");
  const std::size_t pooled = avg.dim(1);
  std::vector<Embedding> out(n);
  std::vector<double> p(pooled);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(p.begin(), p.end(), 0.0);
    for (std::size_t r = 0; r < in; ++r) {
      const double v = x[i * in + r];
      for (std::size_t c = 0; c < pooled; ++c) p[c] += v * avg[r * pooled + c];
    }
    out[i].values.assign(dim_, 0.0);
    for (std::size_t c = 0; c < pooled; ++c) {
      for (std::size_t d = 0; d < dim_; ++d) out[i].values[d] += p[c] * w[c * dim_ + d];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void ConvEmbedderConfig::validate() const {
  DIFFQA_REQUIRE(image_size >= 4 && image_size % 4 == 0, "conv embedder: image_size must be a multiple of 4");
  DIFFQA_REQUIRE(channels >= 1 && width >= 1 && dim >= 1, "conv embedder: sizes must be positive");
}

namespace {

TensorF he(Shape s, std::size_t fan_in, Rng& rng) {
  TensorF t(std::move(s));
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<float>(std * rng.normal());
  return t;
}

}  // namespace

ConvEmbedder::ConvEmbedder(ConvEmbedderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t w = cfg_.width;
  params_.add("emb.conv1.w", he(Shape{w, cfg_.channels, 3, 3}, cfg_.channels * 9, rng));
  params_.add("emb.conv1.b", TensorF(Shape{w}, 0.0f));
  params_.add("emb.conv2.w", he(Shape{2 * w, w, 3, 3}, w * 9, rng));
  params_.add("emb.conv2.b", TensorF(Shape{2 * w}, 0.0f));
  params_.add("emb.conv3.w", he(Shape{2 * w, 2 * w, 3, 3}, 2 * w * 9, rng));
  params_.add("emb.conv3.b", TensorF(Shape{2 * w}, 0.0f));
  params_.add("emb.fc.w", he(Shape{feature_dim(), cfg_.dim}, feature_dim(), rng));
  params_.add("emb.fc.b", TensorF(Shape{1, cfg_.dim}, 0.0f));
}

ConvEmbedder::ConvEmbedder(ConvEmbedderConfig cfg, ParameterSet<float> params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  const ConvEmbedder reference(cfg_, 0);
  if (!params_.congruent(reference.params_)) throw ContractError("conv embedder: parameters do not match config");
}

std::size_t ConvEmbedder::feature_dim() const {
  const std::size_t side = cfg_.image_size / 4;
  return 2 * cfg_.width * side * side;
}

Var ConvEmbedder::features(Graph<float>& g, const ParameterSet<float>& p, Var x) const {
  check_input(g.value(x).shape());
  const std::size_t n = g.value(x).dim(0);
  auto conv = [&](const std::string& name, Var in, std::size_t stride) {
    return g.silu(g.conv2d(in, g.parameter(p, name + ".w"), g.parameter(p, name + ".b"),
                           Conv2dOptions{stride, Padding::kSame}));
  };
  Var h = conv("emb.conv1", x, 1);
  h = conv("emb.conv2", h, 2);
  h = conv("emb.conv3", h, 2);
  return g.reshape(h, Shape{n, feature_dim()});
}

Var ConvEmbedder::embedding(Graph<float>& g, const ParameterSet<float>& p, Var x) const {
  Var f = features(g, p, x);
  return g.add(g.matmul(f, g.parameter(p, "emb.fc.w")), g.parameter(p, "emb.fc.b"));
}

std::vector<Embedding> ConvEmbedder::embed_batch(const TensorF& x) const {
  check_input(x.shape());
  Graph<float> g(false);
  return rows_to_embeddings(g.value(embedding(g, params_, g.constant(x))));
}

TensorTable ConvEmbedder::to_table() const {
  TensorTable t;
  t.put_params("", params_);
  auto& c = t.config();
  c["kind"] = "conv-embedder";
  c["image_size"] = std::to_string(cfg_.image_size);
  c["channels"] = std::to_string(cfg_.channels);
  c["width"] = std::to_string(cfg_.width);
  c["dim"] = std::to_string(cfg_.dim);
  return t;
}

ConvEmbedder ConvEmbedder::from_table(const TensorTable& t) {
  const auto& c = t.config();
  auto get = [&](const std::string& k) -> std::size_t {
    auto it = c.find(k);
    if (it == c.end()) throw ContractError("embedder checkpoint is missing '" + k + "'");
    return std::stoul(it->second);
  };
  if (c.count("kind") == 0 || c.at("kind") != "conv-embedder") throw ContractError("checkpoint is not a conv embedder");
  ConvEmbedderConfig cfg{get("image_size"), get("channels"), get("width"), get("dim")};
  return ConvEmbedder(cfg, t.params(""));
}

// ---------------------------------------------------------------------------

std::vector<double> train_embedder(ConvEmbedder& model, std::span<const Image> images, std::span<const int> identities,
                                   const EmbedderTrainConfig& cfg) {
  DIFFQA_REQUIRE(images.size() == identities.size() && !images.empty(), "train_embedder: one identity per image");
  DIFFQA_REQUIRE(cfg.identities_per_batch >= 2 && cfg.samples_per_identity >= 2,
                 "train_embedder: batches need two identities with two samples each");
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < images.size(); ++i) by_id[identities[i]].push_back(i);
  std::vector<int> ids;
  for (const auto& [id, members] : by_id) {
    if (members.size() >= 2) ids.push_back(id);
  }
  DIFFQA_REQUIRE(ids.size() >= 2, "train_embedder: need two identities with two or more samples");

  AdamConfig adam;
  adam.lr = cfg.lr;
  auto state = AdamState<float>::zeros_like(model.parameters());
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    std::shuffle(ids.begin(), ids.end(), rng.engine());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < ids.size(); start += cfg.identities_per_batch) {
      const std::size_t end = std::min(ids.size(), start + cfg.identities_per_batch);
      if (end - start < 2) break;
      std::vector<Image> batch;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        auto members = by_id[ids[k]];
        std::shuffle(members.begin(), members.end(), rng.engine());
        const std::size_t take = std::min(members.size(), cfg.samples_per_identity);
        for (std::size_t j = 0; j < take; ++j) {
          batch.push_back(images[members[j]]);
          labels.push_back(ids[k]);
        }
      }
      const std::size_t n = batch.size();
      TensorF mated(Shape{n, n}, 0.0f), nonmated(Shape{n, n}, 0.0f);
      double n_m = 0.0, n_n = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          if (labels[i] == labels[j]) {
            mated[i * n + j] = 1.0f;
            n_m += 1.0;
          } else {
            nonmated[i * n + j] = 1.0f;
            n_n += 1.0;
          }
        }
      }
      Graph<float> g;
      Var e = g.l2_normalize_rows(model.embedding(g, model.parameters(), g.constant(to_batch(batch))));
      Var s = g.matmul(e, g.transpose(e));
      Var pull = g.scale(g.sum(g.mul(g.add_scalar(g.scale(s, -1.0f), 1.0f), g.constant(mated))),
                         static_cast<float>(1.0 / n_m));
      Var push = g.scale(g.sum(g.mul(g.relu(g.add_scalar(s, static_cast<float>(-cfg.margin))), g.constant(nonmated))),
                         static_cast<float>(1.0 / n_n));
      Var loss = g.add(pull, push);
      const double lv = g.value(loss).item();
      if (!std::isfinite(lv)) throw NumericError("train_embedder: non-finite loss in epoch " + std::to_string(epoch));
      g.backward(loss);
      adam_step(model.parameters(), g.parameter_grads(), state, adam);
      total += lv;
      ++batches;
    }
    history.push_back(batches ? total / static_cast<double>(batches) : 0.0);
  }
  return history;
}

// ---------------------------------------------------------------------------

void EmbeddingTable::put(const std::string& ref, Embedding e) {
  DIFFQA_REQUIRE(e.dim() >= 1, "embedding table: empty embedding for '" + ref + "'");
  if (table_.empty()) dim_ = e.dim();
  if (e.dim() != dim_) throw ShapeError("embedding table", "'" + ref + "' has dimension " + std::to_string(e.dim()));
  table_[ref] = std::move(e);
}

const Embedding& EmbeddingTable::at(const std::string& ref) const {
  auto it = table_.find(ref);
  if (it == table_.end()) throw ContractError("no embedding for reference '" + ref + "'");
  return it->second;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  if (path.extension() == ".csv") {
    std::vector<std::string> header{"path"};
    for (std::size_t i = 0; i < dim_; ++i) header.push_back("e" + std::to_string(i));
    std::vector<std::vector<std::string>> rows;
    for (const auto& [ref, e] : table_) {
      std::vector<std::string> row{ref};
      for (double v : e.values) row.push_back(format_real(v, 17));
      rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
    return;
  }
  TensorTable t;
  for (const auto& [ref, e] : table_) t.put(ref, TensorD(Shape{e.dim()}, e.values));
  t.config()["kind"] = "embeddings";
  t.save(path);
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  EmbeddingTable out;
  if (path.extension() == ".csv") {
    const CsvTable csv = read_csv(path);
    if (csv.header.size() < 2 || csv.header[0] != "path") {
      throw ParseError(path.string(), 1, "expected header 'path,e0,...'", true);
    }
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      Embedding e;
      for (std::size_t c = 1; c < csv.header.size(); ++c) {
        e.values.push_back(parse_real(csv.rows[r][c], path.string(), csv.line_numbers[r]));
      }
      if (out.contains(csv.rows[r][0])) {
        throw ParseError(path.string(), csv.line_numbers[r], "duplicate reference '" + csv.rows[r][0] + "'", true);
      }
      out.put(csv.rows[r][0], std::move(e));
    }
    return out;
  }
  const TensorTable t = TensorTable::load(path);
  for (const auto& name : t.names()) {
    const auto& entry = t.at(name);
    Embedding e;
    if (const auto* d = std::get_if<TensorD>(&entry)) {
      e.values = d->vec();
    } else {
      const auto& f = std::get<TensorF>(entry);
      e.values.assign(f.data().begin(), f.data().end());
    }
    out.put(name, std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------

EmbedderKind parse_embedder_kind(const std::string& s) {
  if (s == "projection" || s == "deterministic-projection") return EmbedderKind::kProjection;
  if (s == "trained-toy" || s == "toy") return EmbedderKind::kTrainedToy;
  if (s == "external-import" || s == "external") return EmbedderKind::kExternalImport;
  throw ContractError("unknown embedder kind '" + s + "'");
}

std::string embedder_kind_name(EmbedderKind k) {
  switch (k) {
    case EmbedderKind::kProjection: return "projection";
    case EmbedderKind::kTrainedToy: return "trained-toy";
    case EmbedderKind::kExternalImport: return "external-import";
  }
  return "unknown";
}

void EmbedderSpec::validate() const {
  switch (kind) {
    case EmbedderKind::kProjection:
      DIFFQA_REQUIRE(dim >= 1 && image_size >= 1 && channels >= 1 && pool >= 1,
                     "projection embedder needs dim, image_size, channels and pool");
      break;
    case EmbedderKind::kTrainedToy:
    case EmbedderKind::kExternalImport:
      DIFFQA_REQUIRE(!path.empty(), embedder_kind_name(kind) + " embedder needs a path");
      break;
  }
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case EmbedderKind::kProjection:
      return std::make_unique<ProjectionEmbedder>(spec.image_size, spec.channels, spec.dim, spec.pool, spec.seed);
    case EmbedderKind::kTrainedToy:
      return std::make_unique<ConvEmbedder>(ConvEmbedder::load(spec.path));
    case EmbedderKind::kExternalImport:
      break;
  }
  throw ContractError("external-import embeddings are served by reference; load them with EmbeddingTable");
}

}  // namespace diffqa
