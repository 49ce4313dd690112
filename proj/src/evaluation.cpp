// Copyright 2026 The EmoTx Authors
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

#include "emotx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "emotx/error.hpp"

namespace emotx {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& names,
                          const std::vector<double>& values, double max_value) {
  const int bar = 18;
  const int width = 720;
  const int left = 140;
  const int height = 40 + bar * static_cast<int>(names.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<text x=\"10\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  const double scale = max_value > 0.0 ? (width - left - 60) / max_value : 0.0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const int y = 30 + bar * static_cast<int>(i);
    const double w = std::max(0.0, values[i]) * scale;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y + 13 << "\" font-size=\"11\" text-anchor=\"end\">"
        << xml_escape(names[i]) << "</text>";
    svg << "<rect x=\"" << left << "\" y=\"" << y + 2 << "\" width=\"" << fmt(w) << "\" height=\"" << bar - 4
        << "\" fill=\"#4878a8\"/>";
    char label[32];
    std::snprintf(label, sizeof label, "%.3f", values[i]);
    svg << "<text x=\"" << fmt(left + w + 4) << "\" y=\"" << y + 13 << "\" font-size=\"10\">" << label
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string heatmap_svg(const std::string& title, const std::vector<std::string>& names, const Eigen::MatrixXd& m) {
  const int cell = 16;
  const int left = 140;
  const int top = 150;
  const int n = static_cast<int>(names.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + cell * n + 20 << "\" height=\""
      << top + cell * n + 20 << "\">\n";
  svg << "<text x=\"10\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  for (int i = 0; i < n; ++i) {
    svg << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * i + 12
        << "\" font-size=\"10\" text-anchor=\"end\">" << xml_escape(names[static_cast<std::size_t>(i)]) << "</text>";
    svg << "<text transform=\"translate(" << left + cell * i + 12 << "," << top - 6
        << ") rotate(-90)\" font-size=\"10\">" << xml_escape(names[static_cast<std::size_t>(i)]) << "</text>\n";
    for (int j = 0; j < n; ++j) {
      const int shade = 255 - static_cast<int>(std::lround(std::clamp(m(i, j), 0.0, 1.0) * 200.0));
      svg << "<rect x=\"" << left + cell * j << "\" y=\"" << top + cell * i << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << ",255)\"/>";
    }
    svg << '\n';
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string matrix_tsv(const std::vector<std::string>& names, const Eigen::MatrixXd& m) {
  std::ostringstream out;
  out << "label";
  for (const auto& n : names) out << '\t' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << '\t' << fmt(m(i, j));
    out << '\n';
  }
  return out.str();
}

void write_histogram(const std::map<int, int>& hist, const std::string& title, const std::filesystem::path& base) {
  std::vector<std::string> names;
  std::vector<double> values;
  std::ostringstream tsv;
  tsv << "num_labels\tcount\n";
  double top = 0.0;
  for (const auto& [labels, count] : hist) {
    names.push_back(std::to_string(labels));
    values.push_back(count);
    top = std::max(top, static_cast<double>(count));
    tsv << labels << '\t' << count << '\n';
  }
  write_text(base.string() + ".tsv", tsv.str());
  write_text(base.string() + ".svg", bar_chart_svg(title, names, values, top));
}

// AP bars from an eval table; the TSV repeats the table's values verbatim.
void write_ap_bars(const std::filesystem::path& table, const std::string& title, const std::filesystem::path& base) {
  std::ifstream in(table);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> names;
  std::vector<double> values;
  std::ostringstream tsv;
  tsv << "label\tap\n";
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string label, ap;
    std::getline(row, label, '\t');
    std::getline(row, ap, '\t');
    if (label == "mAP" || ap == "nan") continue;
    names.push_back(label);
    values.push_back(std::stod(ap));
    tsv << label << '\t' << ap << '\n';
  }
  write_text(base.string() + ".tsv", tsv.str());
  write_text(base.string() + ".svg", bar_chart_svg(title, names, values, 1.0));
}

}  // namespace

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InputError("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!labels[order[r]]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(r + 1);
  }
  if (hits == 0.0) return std::nullopt;
  return sum / hits;
}

MapResult mean_ap(std::span<const Probabilities> scores, std::span<const LabelVector> targets) {
  if (scores.size() != targets.size()) throw InputError("mean_ap: row count mismatch");
  MapResult result;
  if (targets.empty()) return result;
  const std::size_t k_count = targets.front().size();
  std::vector<double> column(scores.size());
  std::vector<std::uint8_t> truth(scores.size());
  double total = 0.0;
  int used = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    int positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != k_count || targets[i].size() != k_count) throw InputError("mean_ap: label count mismatch");
      column[i] = scores[i][k];
      truth[i] = targets[i][k];
      positives += truth[i] ? 1 : 0;
    }
    const auto ap = average_precision(column, truth);
    result.per_label.push_back(ap);
    result.positives.push_back(positives);
    if (ap) {
      total += *ap;
      ++used;
    } else {
      std::clog << "mean_ap: label " << k << " has no positives, excluded\n";
    }
  }
  if (used > 0) result.map = total / used;
  return result;
}

RandomBaseline random_baseline(std::span<const LabelVector> targets, int trials, std::uint64_t seed) {
  if (trials < 1) throw InputError("random_baseline: trials must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RandomBaseline out;
  const std::size_t k_count = targets.empty() ? 0 : targets.front().size();
  std::vector<double> label_sum(k_count, 0.0);
  std::vector<int> label_hits(k_count, 0);
  std::vector<double> maps;
  std::vector<Probabilities> scores(targets.size(), Probabilities(k_count));
  for (int t = 0; t < trials; ++t) {
    for (auto& row : scores) {
      for (double& v : row) v = unit(rng);
    }
    const MapResult r = mean_ap(scores, targets);
    if (r.map) maps.push_back(*r.map);
    for (std::size_t k = 0; k < k_count; ++k) {
      if (!r.per_label[k]) continue;
      label_sum[k] += *r.per_label[k];
      ++label_hits[k];
    }
  }
  if (!maps.empty()) {
    const double mean = std::accumulate(maps.begin(), maps.end(), 0.0) / static_cast<double>(maps.size());
    double var = 0.0;
    for (double m : maps) var += (m - mean) * (m - mean);
    out.mean = mean;
    out.stddev = std::sqrt(var / static_cast<double>(maps.size()));
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    if (label_hits[k] > 0) {
      out.per_label.emplace_back(label_sum[k] / label_hits[k]);
    } else {
      out.per_label.emplace_back(std::nullopt);
    }
  }
  return out;
}

void write_eval_table(const MapResult& result, const LabelSet& labels, const std::filesystem::path& path) {
  if (result.per_label.size() != labels.size()) throw InputError("eval table: label count mismatch");
  std::ostringstream out;
  out << "label\tap\tn_pos\n";
  int total_pos = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    out << labels.label(k) << '\t' << (result.per_label[k] ? fmt(*result.per_label[k]) : "nan") << '\t'
        << result.positives[k] << '\n';
    total_pos += result.positives[k];
  }
  out << "mAP\t" << (result.map ? fmt(*result.map) : "nan") << '\t' << total_pos << '\n';
  write_text(path, out.str());
}

std::vector<EvalRow> read_eval_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open eval table " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    EvalRow r;
    std::string ap, pos;
    if (!std::getline(row, r.label, '\t') || !std::getline(row, ap, '\t') || !std::getline(row, pos, '\t')) {
      throw SchemaError("malformed eval row in " + path.string() + ": " + line);
    }
    if (ap != "nan") r.ap = std::stod(ap);
    r.positives = std::stoi(pos);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  const std::vector<std::string> required = {"eval_scene.tsv", "eval_character.tsv", "scenes.jsonl"};
  std::string missing;
  for (const auto& name : required) {
    if (!std::filesystem::exists(run_dir / name)) missing += (missing.empty() ? "" : ", ") + name;
  }
  if (!missing.empty()) throw IoError("report: missing artifacts in " + run_dir.string() + ": " + missing);

  std::filesystem::create_directories(out_dir);
  write_ap_bars(run_dir / "eval_scene.tsv", "Scene-level AP per label", out_dir / "ap_scene");
  write_ap_bars(run_dir / "eval_character.tsv", "Character-level AP per label", out_dir / "ap_character");

  const Dataset data = read_dataset(run_dir / "scenes.jsonl");
  const LabelSet labels = LabelSet::named(data.label_set);
  for (Level level : {Level::kScene, Level::kCharacter}) {
    const std::string suffix(to_string(level));
    const Eigen::MatrixXd co = label_cooccurrence(data.scenes, labels.size(), level);
    write_text(out_dir / ("cooccurrence_" + suffix + ".tsv"), matrix_tsv(labels.labels(), co));
    write_text(out_dir / ("cooccurrence_" + suffix + ".svg"),
               heatmap_svg("Label co-occurrence (" + suffix + ")", labels.labels(), co));
    write_histogram(label_count_histogram(data.scenes, level), "Labels per " + suffix,
                    out_dir / ("histogram_" + suffix));
  }

  if (std::filesystem::exists(run_dir / "expressiveness.tsv")) {
    std::ifstream in(run_dir / "expressiveness.tsv");
    std::string line;
    std::getline(in, line);
    std::vector<std::string> names;
    std::vector<double> values;
    double top = 0.0;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string label, mean;
      std::getline(row, label, '\t');
      std::getline(row, mean, '\t');
      names.push_back(label);
      values.push_back(std::stod(mean));
      top = std::max(top, values.back());
    }
    std::filesystem::copy_file(run_dir / "expressiveness.tsv", out_dir / "expressiveness.tsv",
                               std::filesystem::copy_options::overwrite_existing);
    write_text(out_dir / "expressiveness.svg", bar_chart_svg("Expressiveness per label", names, values, top));
  }
}

}  // namespace emotx
