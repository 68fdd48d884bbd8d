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

#include "diffqa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "diffqa/csv.hpp"
#include "diffqa/errors.hpp"

namespace diffqa {

PairList load_pairs_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t ca = csv.column("ref_a"), cb = csv.column("ref_b"), cl = csv.column("label");
  PairList out;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const std::string& l = csv.rows[i][cl];
    bool mated;
    if (l == "mated" || l == "1") {
      mated = true;
    } else if (l == "non-mated" || l == "nonmated" || l == "0") {
      mated = false;
    } else {
      throw ParseError(path.string(), csv.line_numbers[i], "unknown pair label '" + l + "'", true);
    }
    out.push_back(PairEntry{csv.rows[i][ca], csv.rows[i][cb], mated});
  }
  return out;
}

void save_pairs_csv(const std::filesystem::path& path, const PairList& pairs) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : pairs) rows.push_back({p.a, p.b, p.mated ? "mated" : "non-mated"});
  write_csv(path, {"ref_a", "ref_b", "label"}, rows);
}

std::map<std::string, double> load_qualities_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t cp = csv.column("path"), cq = csv.column("quality");
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const double q = parse_real(csv.rows[i][cq], path.string(), csv.line_numbers[i]);
    if (!out.emplace(csv.rows[i][cp], q).second) {
      throw ParseError(path.string(), csv.line_numbers[i], "duplicate path '" + csv.rows[i][cp] + "'", true);
    }
  }
  return out;
}

Similarities compute_similarities(const PairList& pairs, const EmbeddingTable& embeddings) {
  Similarities s;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double v = cosine_similarity(embeddings.at(pairs[i].a), embeddings.at(pairs[i].b));
    if (pairs[i].mated) {
      s.mated.push_back(v);
      s.mated_pair.push_back(i);
    } else {
      s.nonmated.push_back(v);
      s.nonmated_pair.push_back(i);
    }
  }
  return s;
}

Threshold solve_threshold(std::span<const double> nonmated, double fmr_target) {
  DIFFQA_REQUIRE(!nonmated.empty(), "solve_threshold: no non-mated scores");
  DIFFQA_REQUIRE(fmr_target > 0.0 && fmr_target < 1.0, "solve_threshold: fmr_target must lie in (0, 1)");
  std::vector<double> s(nonmated.begin(), nonmated.end());
  for (double v : s) {
    if (!std::isfinite(v)) throw NumericError("solve_threshold: non-finite score");
  }
  std::sort(s.begin(), s.end(), std::greater<>());
  const double n = static_cast<double>(s.size());
  // Largest admissible number of scores at or above the threshold.
  const auto allowed = static_cast<std::size_t>(std::floor(fmr_target * n + 1e-9));
  Threshold t{std::nextafter(s.front(), std::numeric_limits<double>::infinity()), 0.0};
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    if (j > allowed) break;
    t = Threshold{s[i], static_cast<double>(j) / n};
    i = j;
  }
  return t;
}

double EdcCurve::fnmr_at(double d) const {
  DIFFQA_REQUIRE(!points.empty(), "edc: empty curve");
  double v = points.front().fnmr;
  for (const auto& p : points) {
    if (p.discard_fraction > d) break;
    v = p.fnmr;
  }
  return v;
}

EdcCurve edc_curve(std::span<const double> mated_scores, std::span<const double> pair_quality, double threshold,
                   double discard_limit) {
  DIFFQA_REQUIRE(mated_scores.size() == pair_quality.size(), "edc_curve: one quality per mated pair");
  DIFFQA_REQUIRE(discard_limit >= 0.0 && discard_limit <= 1.0, "edc_curve: discard_limit must lie in [0, 1]");
  const std::size_t m = mated_scores.size();
  if (m == 0) throw ContractError("edc_curve: no mated pairs, every pair is discarded before the first point");
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(pair_quality[i]) || !std::isfinite(mated_scores[i])) {
      throw NumericError("edc_curve: non-finite score or quality at pair " + std::to_string(i));
    }
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pair_quality[a] < pair_quality[b]; });
  std::size_t failures = 0;
  for (double s : mated_scores) failures += s < threshold ? 1 : 0;

  EdcCurve c;
  c.threshold = threshold;
  c.mated_total = m;
  c.fnmr_at_zero = static_cast<double>(failures) / static_cast<double>(m);
  c.points.push_back(EdcPoint{0.0, c.fnmr_at_zero, m});
  std::size_t discarded = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && pair_quality[order[j]] == pair_quality[order[i]]) {
      failures -= mated_scores[order[j]] < threshold ? 1 : 0;
      ++j;
    }
    discarded = j;
    i = j;
    if (discarded == m) break;
    const double frac = static_cast<double>(discarded) / static_cast<double>(m);
    if (frac > discard_limit) break;
    const std::size_t surviving = m - discarded;
    c.points.push_back(EdcPoint{frac, static_cast<double>(failures) / static_cast<double>(surviving), surviving});
  }
  return c;
}

std::vector<double> pair_qualities(const PairList& pairs, std::span<const std::size_t> pair_index,
                                   const std::map<std::string, double>& qualities) {
  auto q = [&](const std::string& ref) {
    auto it = qualities.find(ref);
    if (it == qualities.end()) throw ContractError("no quality for reference '" + ref + "'");
    return it->second;
  };
  std::vector<double> out;
  out.reserve(pair_index.size());
  for (std::size_t i : pair_index) out.push_back(std::min(q(pairs.at(i).a), q(pairs.at(i).b)));
  return out;
}

PaucResult pauc(const EdcCurve& curve, double discard_limit) {
  DIFFQA_REQUIRE(!curve.points.empty(), "pauc: empty curve");
  DIFFQA_REQUIRE(discard_limit > 0.0 && discard_limit <= 1.0, "pauc: discard_limit must lie in (0, 1]");
  PaucResult r;
  r.discard_limit = discard_limit;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double x0 = curve.points[i].discard_fraction;
    if (x0 >= discard_limit) break;
    const double x1 = i + 1 < curve.points.size() ? std::min(curve.points[i + 1].discard_fraction, discard_limit)
                                                  : discard_limit;
    r.raw += curve.points[i].fnmr * (x1 - x0);
  }
  if (curve.fnmr_at_zero > 0.0) {
    r.normalized = r.raw / (discard_limit * curve.fnmr_at_zero);
    r.normalized_defined = true;
  }
  return r;
}

MethodResult evaluate_method(const std::string& name, const PairList& pairs, const Similarities& sims,
                             const Threshold& threshold, double fmr_target,
                             const std::map<std::string, double>& qualities, std::span<const double> discard_limits) {
  DIFFQA_REQUIRE(!discard_limits.empty(), "evaluate_method: no discard limits");
  const double max_limit = *std::max_element(discard_limits.begin(), discard_limits.end());
  const auto pq = pair_qualities(pairs, sims.mated_pair, qualities);
  MethodResult r{name, edc_curve(sims.mated, pq, threshold.tau, max_limit), {}};
  r.curve.fmr_target = fmr_target;
  for (double l : discard_limits) r.pauc.push_back(pauc(r.curve, l));
  return r;
}

ProtocolReport run_protocol(const ProtocolConfig& cfg) {
  DIFFQA_REQUIRE(!cfg.methods.empty(), "run_protocol: no quality methods configured");
  std::set<std::string> names;
  for (const auto& m : cfg.methods) {
    DIFFQA_REQUIRE(!m.name.empty() && m.name.find_first_of("/\\,") == std::string::npos,
                   "run_protocol: invalid method name '" + m.name + "'");
    DIFFQA_REQUIRE(names.insert(m.name).second, "run_protocol: duplicate method '" + m.name + "'");
  }
  const PairList pairs = load_pairs_csv(cfg.pairs);
  const EmbeddingTable emb = EmbeddingTable::load(cfg.embeddings);
  const Similarities sims = compute_similarities(pairs, emb);
  DIFFQA_REQUIRE(!sims.mated.empty() && !sims.nonmated.empty(),
                 "run_protocol: need at least one mated and one non-mated pair");
  ProtocolReport rep;
  rep.threshold = solve_threshold(sims.nonmated, cfg.fmr);
  rep.mated = sims.mated.size();
  rep.nonmated = sims.nonmated.size();
  std::vector<std::vector<std::string>> pauc_rows;
  for (const auto& m : cfg.methods) {
    rep.methods.push_back(
        evaluate_method(m.name, pairs, sims, rep.threshold, cfg.fmr, load_qualities_csv(m.qualities), cfg.discard_limits));
    const auto& r = rep.methods.back();
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : r.curve.points) rows.push_back({format_real(p.discard_fraction), format_real(p.fnmr)});
    if (!cfg.out_dir.empty()) write_csv(cfg.out_dir / ("edc_" + m.name + ".csv"), {"discard_fraction", "fnmr"}, rows);
    for (const auto& p : r.pauc) {
      pauc_rows.push_back({m.name, format_real(cfg.fmr), format_real(p.discard_limit), format_real(p.raw),
                           p.normalized_defined ? format_real(p.normalized) : "undefined",
                           format_real(r.curve.fnmr_at_zero)});
    }
  }
  if (!cfg.out_dir.empty()) {
    write_csv(cfg.out_dir / "pauc.csv", {"method", "fmr", "discard_limit", "raw_pauc", "normalized_pauc", "fnmr_at_zero"},
              pauc_rows);
    if (cfg.svg) {
      const double lim = *std::max_element(cfg.discard_limits.begin(), cfg.discard_limits.end());
      write_file(cfg.out_dir / "edc.svg", edc_svg(rep.methods, lim));
    }
  }
  return rep;
}

std::string edc_svg(const std::vector<MethodResult>& methods, double discard_limit) {
  const double W = 480, H = 320, L = 56, R = 16, T = 16, B = 40;
  double ymax = 0.0;
  for (const auto& m : methods) {
    for (const auto& p : m.curve.points) ymax = std::max(ymax, p.fnmr);
  }
  if (ymax <= 0.0) ymax = 1.0;
  auto px = [&](double d) { return L + (W - L - R) * d / discard_limit; };
  auto py = [&](double f) { return H - B - (H - T - B) * f / ymax; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_real(W) + "\" height=\"" +
                  format_real(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<line x1=\"" + format_real(L) + "\" y1=\"" + format_real(H - B) + "\" x2=\"" + format_real(W - R) + "\" y2=\"" +
       format_real(H - B) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + format_real(L) + "\" y1=\"" + format_real(T) + "\" x2=\"" + format_real(L) + "\" y2=\"" +
       format_real(H - B) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + format_real(W / 2) + "\" y=\"" + format_real(H - 8) +
       "\" font-size=\"12\" text-anchor=\"middle\">discard fraction (0 to " + format_real(discard_limit) + ")</text>\n";
  s += "<text x=\"14\" y=\"" + format_real(H / 2) + "\" font-size=\"12\" transform=\"rotate(-90 14 " +
       format_real(H / 2) + ")\" text-anchor=\"middle\">FNMR (max " + format_real(ymax, 4) + ")</text>\n";
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const auto& pts = methods[k].curve.points;
    std::string path;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double x0 = pts[i].discard_fraction;
      if (x0 > discard_limit) break;
      const double x1 = i + 1 < pts.size() ? std::min(pts[i + 1].discard_fraction, discard_limit) : discard_limit;
      path += (i == 0 ? "M" : "L") + format_real(px(x0), 6) + "," + format_real(py(pts[i].fnmr), 6) + " L" +
              format_real(px(x1), 6) + "," + format_real(py(pts[i].fnmr), 6) + " ";
    }
    const char* col = colors[k % 6];
    s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + format_real(W - R - 4) + "\" y=\"" + format_real(T + 14 * (k + 1)) + "\" font-size=\"12\" fill=\"" +
         col + "\" text-anchor=\"end\">" + methods[k].name + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace diffqa
