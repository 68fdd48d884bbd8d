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


#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffqa/csv.hpp"
#include "diffqa/denoiser.hpp"
#include "diffqa/distill.hpp"
#include "diffqa/embedder.hpp"
#include "diffqa/errors.hpp"
#include "diffqa/eval.hpp"
#include "diffqa/image.hpp"
#include "diffqa/rng.hpp"
#include "diffqa/run_config.hpp"
#include "diffqa/scorer.hpp"
#include "diffqa/toy_faces.hpp"

namespace diffqa::cli {
namespace {

namespace fs = std::filesystem;
using Keys = std::map<std::string, std::string>;

Keys operator+(Keys a, const Keys& b) {
  a.insert(b.begin(), b.end());
  return a;
}

// ---------------------------------------------------------------------------
// Key groups shared between commands.

const Keys kGeometry = {{"image_size", "16"}, {"channels", "1"}};

Keys toy_keys(const std::string& prefix) {
  return {{prefix + "identities", "16"},        {prefix + "samples_per_identity", "4"},
          {prefix + "pose_jitter", "0.3"},       {prefix + "illumination_jitter", "0.1"},
          {prefix + "geometry_jitter", "0.03"},  {prefix + "seed", "0"}};
}

const Keys kDataset = Keys{{"dataset", ""}} + toy_keys("toy_");

const Keys kEmbedder = {{"embedder", "projection"},
                        {"embedder_path", ""},
                        {"embedder_dim", "32"},
                        {"embedder_pool", "2"},
                        {"embedder_seed", "0"}};

const Keys kScorer = {{"checkpoint", ""},        {"t_infer", "5"},           {"n", "10"},
                      {"use_flip", "true"},      {"use_forward_term", "true"}, {"use_backward_term", "true"},
                      {"seed", "0"}};

ToyFaceConfig toy_config(const RunConfig& c, const std::string& prefix) {
  ToyFaceConfig t;
  t.image_size = static_cast<std::size_t>(c.integer("image_size"));
  t.channels = static_cast<std::size_t>(c.integer("channels"));
  t.identities = static_cast<std::size_t>(c.integer(prefix + "identities"));
  t.samples_per_identity = static_cast<std::size_t>(c.integer(prefix + "samples_per_identity"));
  t.pose_jitter = c.real(prefix + "pose_jitter");
  t.illumination_jitter = c.real(prefix + "illumination_jitter");
  t.geometry_jitter = c.real(prefix + "geometry_jitter");
  t.seed = c.seed(prefix + "seed");
  t.validate();
  return t;
}

EmbedderSpec embedder_spec(const RunConfig& c) {
  EmbedderSpec s;
  s.kind = parse_embedder_kind(c.str("embedder"));
  s.dim = static_cast<std::size_t>(c.integer("embedder_dim"));
  s.image_size = static_cast<std::size_t>(c.integer("image_size"));
  s.channels = static_cast<std::size_t>(c.integer("channels"));
  s.pool = static_cast<std::size_t>(c.integer("embedder_pool"));
  s.seed = c.seed("embedder_seed");
  s.path = c.str("embedder_path");
  s.validate();
  return s;
}

ScorerConfig scorer_config(const RunConfig& c) {
  ScorerConfig s;
  s.t_infer = static_cast<int>(c.integer("t_infer"));
  s.n = static_cast<std::size_t>(c.integer("n"));
  s.use_flip = c.flag("use_flip");
  s.use_forward_term = c.flag("use_forward_term");
  s.use_backward_term = c.flag("use_backward_term");
  s.seed = c.seed("seed");
  return s;
}

DenoiserModel load_denoiser(const RunConfig& c) {
  const fs::path p = c.str("checkpoint");
  if (p.empty()) throw ContractError("checkpoint is not set");
  if (!fs::exists(p)) throw ContractError("checkpoint not found: " + p.string());
  return DenoiserModel::load(p);
}

// ---------------------------------------------------------------------------
// Datasets: a manifest CSV with a `path` column (relative to the manifest) and an
// optional `identity` column, or the built-in toy generator when `dataset` is empty.

struct Dataset {
  std::vector<std::string> refs;
  std::vector<int> identities;
  fs::path base;
  std::vector<Image> images;
};

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.csv" : p; }

Dataset read_manifest(const fs::path& dataset) {
  const fs::path path = manifest_path(dataset);
  if (!fs::exists(path)) throw ContractError("dataset not found: " + path.string());
  const CsvTable csv = read_csv(path);
  const std::size_t pc = csv.column("path");
  const auto id_it = std::find(csv.header.begin(), csv.header.end(), "identity");
  Dataset d;
  d.base = path.parent_path();
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    d.refs.push_back(csv.rows[r][pc]);
    if (id_it != csv.header.end()) {
      const auto& f = csv.rows[r][static_cast<std::size_t>(id_it - csv.header.begin())];
      try {
        d.identities.push_back(std::stoi(f));
      } catch (const std::exception&) {
        throw ParseError(path.string(), csv.line_numbers[r], "bad identity '" + f + "'", true);
      }
    }
  }
  if (d.refs.empty()) throw ContractError("dataset is empty: " + path.string());
  return d;
}

void load_images(Dataset& d) {
  d.images.clear();
  for (const auto& r : d.refs) d.images.push_back(load_image(d.base / r));
}

Dataset load_dataset(const RunConfig& c) {
  if (!c.str("dataset").empty()) {
    Dataset d = read_manifest(c.str("dataset"));
    load_images(d);
    return d;
  }
  Dataset d;
  for (auto& f : make_toy_faces(toy_config(c, "toy_"))) {
    d.refs.push_back(f.name);
    d.identities.push_back(f.identity);
    d.images.push_back(std::move(f.image));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_toy_dataset(const RunConfig& c, const fs::path& out) {
  const ToyFaceConfig tc = toy_config(c, "");
  auto faces = make_toy_faces(tc);
  const bool severity = c.flag("severity");
  fs::create_directories(out / "images");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    int level = 0;
    if (severity) {
      Rng rng(derive_seed(tc.seed, i, 1));
      level = static_cast<int>(rng.uniform_int(0, kSeverityLevels - 1));
      faces[i].image = apply_severity(faces[i].image, level, rng);
    }
    faces[i].name = "images/" + faces[i].name;
    save_image(out / faces[i].name, faces[i].image);
    rows.push_back({faces[i].name, std::to_string(faces[i].identity), format_real(faces[i].yaw), std::to_string(level)});
  }
  write_csv(out / "manifest.csv", {"path", "identity", "yaw", "severity"}, rows);
  PairList pairs;
  for (const auto& p : make_toy_pairs(faces, static_cast<std::size_t>(c.integer("max_nonmated")), derive_seed(tc.seed, 2))) {
    pairs.push_back({faces[p.a].name, faces[p.b].name, p.mated});
  }
  save_pairs_csv(out / "pairs.csv", pairs);
  std::cout << faces.size() << " images, " << pairs.size() << " pairs -> " << out.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, const fs::path& out) {
  const Dataset data = load_dataset(c);
  UNetConfig net;
  net.image_size = static_cast<std::size_t>(c.integer("image_size"));
  net.channels = static_cast<std::size_t>(c.integer("channels"));
  net.base_channels = static_cast<std::size_t>(c.integer("base_channels"));
  net.depth = static_cast<std::size_t>(c.integer("depth"));
  net.groups = static_cast<std::size_t>(c.integer("groups"));
  net.time_dim = static_cast<std::size_t>(c.integer("time_dim"));
  DiffusionConfig diffusion;
  diffusion.T = static_cast<int>(c.integer("T"));
  diffusion.T_prime = static_cast<int>(c.integer("T_prime"));
  diffusion.beta_start = c.real("beta_start");
  diffusion.beta_end = c.real("beta_end");
  OutputConfig output;
  output.input_skip = c.flag("input_skip");
  output.sigma_data = c.real("sigma_data");

  TrainConfig tc;
  tc.lr = c.real("lr");
  tc.batch_size = static_cast<std::size_t>(c.integer("batch_size"));
  tc.ema_decay = c.real("ema_decay");
  tc.use_degradation = c.flag("use_degradation");
  tc.balance_steps = c.flag("balance_steps");
  tc.random_flip = c.flag("random_flip");
  tc.degradation.blur_sigma_range = {c.real("degrade_blur_min"), c.real("degrade_blur_max")};
  tc.degradation.downscale_factors.clear();
  for (const auto& f : c.list("degrade_downscale")) tc.degradation.downscale_factors.push_back(std::stoi(f));
  tc.degradation.noise_sigma_range = {c.real("degrade_noise_min"), c.real("degrade_noise_max")};
  tc.degradation.block_size = static_cast<int>(c.integer("degrade_block"));
  tc.degradation.per_op_probability = c.real("degrade_probability");
  tc.degradation.validate();
  if (tc.lr == 0.0) std::cerr << "warning: lr=0, training will not change the weights\n";

  const std::uint64_t seed = c.seed("seed");
  const fs::path resume = c.str("resume");
  if (!resume.empty() && !fs::exists(resume)) throw ContractError("resume checkpoint not found: " + resume.string());
  DenoiserModel model = resume.empty() ? DenoiserModel(net, diffusion, output, seed) : DenoiserModel::load(resume);

  const int epochs = static_cast<int>(c.integer("epochs"));
  const int every = static_cast<int>(c.integer("checkpoint_every"));
  const fs::path ckpt = out / "denoiser.bin";
  const fs::path log = out / "loss.csv";
  std::vector<std::vector<std::string>> rows;
  if (!resume.empty() && fs::exists(log)) {
    const CsvTable prior = read_csv(log);
    for (const auto& r : prior.rows) {
      if (std::stoi(r.at(0)) <= model.epochs_done()) rows.push_back(r);
    }
  }
  while (model.epochs_done() < epochs) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(model.epochs_done())));
    const EpochStats s = train_epoch(model, data.images, tc, rng);
    rows.push_back({std::to_string(model.epochs_done()), format_real(s.mean_loss), format_real(s.mean_mse)});
    if (every > 0 && model.epochs_done() % every == 0) {
      model.save(ckpt);
      std::cerr << "epoch " << model.epochs_done() << " loss " << format_real(s.mean_loss, 6) << "\n";
    }
  }
  model.save(ckpt);
  write_csv(log, {"epoch", "loss", "mse"}, rows);
  std::cout << "trained to epoch " << model.epochs_done() << " -> " << ckpt.string() << "\n";
  return 0;
}

int cmd_train_embedder(const RunConfig& c, const fs::path& out) {
  const Dataset data = load_dataset(c);
  if (data.identities.size() != data.images.size()) throw ContractError("embedder training needs an identity column");
  ConvEmbedderConfig ec;
  ec.image_size = static_cast<std::size_t>(c.integer("image_size"));
  ec.channels = static_cast<std::size_t>(c.integer("channels"));
  ec.width = static_cast<std::size_t>(c.integer("width"));
  ec.dim = static_cast<std::size_t>(c.integer("dim"));
  EmbedderTrainConfig tc;
  tc.epochs = static_cast<std::size_t>(c.integer("epochs"));
  tc.identities_per_batch = static_cast<std::size_t>(c.integer("identities_per_batch"));
  tc.samples_per_identity = static_cast<std::size_t>(c.integer("batch_samples_per_identity"));
  tc.lr = c.real("lr");
  tc.margin = c.real("margin");
  tc.seed = c.seed("seed");
  ConvEmbedder model(ec, c.seed("seed"));
  const auto losses = train_embedder(model, data.images, data.identities, tc);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t e = 0; e < losses.size(); ++e) rows.push_back({std::to_string(e + 1), format_real(losses[e])});
  write_csv(out / "loss.csv", {"epoch", "loss"}, rows);
  model.save(out / "embedder.bin");
  std::cout << "embedder -> " << (out / "embedder.bin").string() << "\n";
  return 0;
}

int cmd_embed(const RunConfig& c, const fs::path& out) {
  if (c.str("dataset").empty()) throw ContractError("dataset is not set");
  const Dataset data = load_dataset(c);
  const auto emb = make_embedder(embedder_spec(c));
  const auto e = emb->embed_images(data.images);
  EmbeddingTable table;
  for (std::size_t i = 0; i < e.size(); ++i) table.put(data.refs[i], e[i]);
  const fs::path path = out / (c.str("format") == "binary" ? "embeddings.bin" : "embeddings.csv");
  table.save(path);
  std::cout << table.size() << " embeddings -> " << path.string() << "\n";
  return 0;
}

int cmd_score(const RunConfig& c, const fs::path& out) {
  const Dataset data = read_manifest(c.str("dataset"));
  std::vector<ScoreRecord> records;
  if (!c.str("regressor").empty()) {
    const RegressorModel reg = RegressorModel::load(c.str("regressor"));
    for (const auto& ref : data.refs) {
      ScoreRecord r{ref, std::nullopt, ""};
      try {
        r.quality = score_distilled(reg, load_image(data.base / ref));
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      records.push_back(std::move(r));
    }
  } else {
    const DenoiserModel model = load_denoiser(c);
    const auto emb = make_embedder(embedder_spec(c));
    records = score_batch(data.refs, model, *emb, scorer_config(c), 0, data.base);
  }
  write_quality_csv(out / "qualities.csv", records);
  write_error_csv(out / "errors.csv", records);
  const auto failed = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const ScoreRecord& r) { return !r.quality; }));
  std::cout << records.size() - failed << " scored, " << failed << " failed -> " << (out / "qualities.csv").string()
            << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_distill(const RunConfig& c, const fs::path& out) {
  const Dataset manifest = read_manifest(c.str("dataset"));
  const DenoiserModel model = load_denoiser(c);
  std::shared_ptr<const Embedder> emb = make_embedder(embedder_spec(c));
  const LabelSet labels =
      generate_labels(manifest.refs, model, *emb, scorer_config(c), c.real("train_fraction"), manifest.base);
  labels.save_csv(out / "labels.csv");

  Dataset data;
  data.base = manifest.base;
  for (const auto& e : labels.entries) data.refs.push_back(e.ref);
  load_images(data);
  RegressorConfig rc;
  rc.hidden = static_cast<std::size_t>(c.integer("hidden"));
  rc.lr = c.real("lr");
  rc.epochs = static_cast<std::size_t>(c.integer("epochs"));
  rc.batch_size = static_cast<std::size_t>(c.integer("batch_size"));
  rc.patience = static_cast<std::size_t>(c.integer("patience"));
  rc.fine_tune_backbone = c.flag("fine_tune_backbone");
  rc.seed = c.seed("seed");
  RegressorModel reg(emb, rc.hidden, rc.seed);
  const RegressorReport rep = train_regressor(reg, labels, data.images, rc);
  reg.save(out / "regressor.bin");

  std::vector<std::vector<std::string>> rows;
  for (std::size_t e = 0; e < rep.train_loss.size(); ++e) {
    rows.push_back({std::to_string(e + 1), format_real(rep.train_loss[e]),
                    e < rep.validation_loss.size() ? format_real(rep.validation_loss[e]) : ""});
  }
  write_csv(out / "regressor_loss.csv", {"epoch", "train_loss", "validation_loss"}, rows);
  const FidelityReport f = distillation_fidelity(reg, labels, data.images);
  write_csv(out / "fidelity.csv", {"pearson", "spearman", "count", "best_epoch"},
            {{format_real(f.pearson), format_real(f.spearman), std::to_string(f.count), std::to_string(rep.best_epoch)}});
  std::cout << "validation fidelity over " << f.count << " images: pearson " << format_real(f.pearson, 4)
            << ", spearman " << format_real(f.spearman, 4) << "\n";
  return 0;
}

int cmd_edc(const RunConfig& c, const fs::path& out) {
  ProtocolConfig pc;
  pc.pairs = c.str("pairs");
  pc.embeddings = c.str("embeddings");
  for (const auto& m : c.list("methods")) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) throw ContractError("methods entries are name=qualities.csv, got '" + m + "'");
    pc.methods.push_back({m.substr(0, eq), m.substr(eq + 1)});
  }
  pc.fmr = c.real("fmr");
  pc.discard_limits = c.reals("discard_limits");
  pc.svg = c.flag("svg");
  pc.out_dir = out;
  const ProtocolReport rep = run_protocol(pc);
  std::cout << "threshold " << format_real(rep.threshold.tau, 6) << " at fmr " << format_real(rep.threshold.achieved_fmr, 6)
            << " (" << rep.mated << " mated, " << rep.nonmated << " non-mated)\n";
  for (const auto& m : rep.methods) {
    for (const auto& p : m.pauc) {
      std::cout << m.name << " pauc@" << format_real(p.discard_limit) << " raw " << format_real(p.raw, 6)
                << " normalized " << (p.normalized_defined ? format_real(p.normalized, 6) : "undefined") << "\n";
    }
  }
  return 0;
}

struct Command {
  std::string name;
  std::string help;
  Keys keys;
  std::function<int(const RunConfig&, const fs::path&)> run;
};

std::vector<Command> commands() {
  const Keys train = kGeometry + kDataset +
                     Keys{{"base_channels", "16"},      {"depth", "2"},
                          {"groups", "4"},              {"time_dim", "32"},
                          {"T", "1000"},                {"T_prime", "100"},
                          {"beta_start", "0.0001"},     {"beta_end", "0.02"},
                          {"input_skip", "true"},       {"sigma_data", "0.5"},
                          {"lr", "0.00008"},            {"batch_size", "16"},
                          {"ema_decay", "0.995"},       {"use_degradation", "true"},
                          {"balance_steps", "false"},   {"random_flip", "false"},
                          {"degrade_blur_min", "0.5"},  {"degrade_blur_max", "1.5"},
                          {"degrade_downscale", "2,4"}, {"degrade_noise_min", "2"},
                          {"degrade_noise_max", "20"},  {"degrade_block", "2"},
                          {"degrade_probability", "0.5"}, {"epochs", "200"},
                          {"seed", "0"},                {"resume", ""},
                          {"checkpoint_every", "10"}};
  return {
      {"toy-dataset", "Generate a synthetic face dataset with manifest and pairs",
       kGeometry + toy_keys("") + Keys{{"max_nonmated", "2000"}, {"severity", "false"}}, cmd_toy_dataset},
      {"train", "Train the restoration denoiser", train, cmd_train},
      {"train-embedder", "Train the toy face embedder",
       kGeometry + kDataset +
           Keys{{"width", "16"}, {"dim", "32"}, {"epochs", "30"}, {"identities_per_batch", "8"},
                {"batch_samples_per_identity", "4"}, {"lr", "0.002"}, {"margin", "0.2"}, {"seed", "0"}},
       cmd_train_embedder},
      {"embed", "Embed every image of a dataset", kGeometry + kDataset + kEmbedder + Keys{{"format", "csv"}}, cmd_embed},
      {"score", "Score image quality with the diffusion scorer or a distilled regressor",
       kGeometry + kEmbedder + kScorer + Keys{{"dataset", ""}, {"regressor", ""}}, cmd_score},
      {"distill", "Generate teacher labels and train the quality regressor",
       kGeometry + kEmbedder + kScorer +
           Keys{{"dataset", ""}, {"train_fraction", "0.9"}, {"hidden", "32"}, {"lr", "0.001"}, {"epochs", "2000"},
                {"batch_size", "32"}, {"patience", "200"}, {"fine_tune_backbone", "false"}},
       cmd_distill},
      {"edc", "Compute EDC curves and pAUC for quality methods",
       Keys{{"pairs", ""}, {"embeddings", ""}, {"methods", ""}, {"fmr", "0.001"}, {"discard_limits", "0.3"},
            {"svg", "true"}},
       cmd_edc},
  };
}

std::string key_list(const Keys& keys) {
  std::string s = "Config keys (default):\n";
  for (const auto& [k, v] : keys) s += "  " + k + " = " + v + "\n";
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"diffqa: diffusion-based face image quality assessment"};
  app.require_subcommand(1);
  std::string config, out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  const auto cmds = commands();
  for (const auto& cmd : cmds) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override one key (repeatable)");
    sub->add_option("--seed", seed, "override the seed key");
    sub->add_option("--out", out, "output directory")->required();
    sub->footer(key_list(cmd.keys));
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const auto it = std::find_if(cmds.begin(), cmds.end(), [&](const Command& c) { return app.got_subcommand(c.name); });
  try {
    RunConfig cfg(it->keys);
    if (!config.empty()) cfg.merge_file(config);
    for (const auto& s : sets) cfg.merge_assignment(s);
    if (seed) cfg.set("seed", std::to_string(*seed));
    fs::create_directories(out);
    cfg.write_echo(fs::path(out) / "config.txt");
    return it->run(cfg, out);
  } catch (const std::exception& e) {
    std::cerr << "diffqa " << it->name << ": error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace diffqa::cli
