// SPDX-License-Identifier: Apache-2.0
#include "amn/explain.hpp"

#include "amn/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace amn {

namespace {

constexpr const char* kExplanationFormat = "amn-explanation";
constexpr int kExplanationVersion = 1;

std::vector<double> to_vector(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

}  // namespace

nlohmann::ordered_json ShapeFunction::to_json() const {
  nlohmann::ordered_json j;
  j["feature"] = feature;
  j["feature_index"] = feature_index;
  j["weight"] = weight;
  j["offset"] = offset;
  j["grid"] = grid;
  j["grid_original"] = grid_original;
  j["contributions"] = contributions;
  j["bin_edges"] = bin_edges;
  j["density"] = density;
  return j;
}

ShapeFunction ShapeFunction::from_json(const nlohmann::json& j) {
  ShapeFunction s;
  s.feature = j.at("feature").get<std::string>();
  s.feature_index = j.at("feature_index").get<Index>();
  s.weight = j.at("weight").get<double>();
  s.offset = j.at("offset").get<double>();
  s.grid = to_vector(j.at("grid"));
  s.grid_original = to_vector(j.at("grid_original"));
  s.contributions = to_vector(j.at("contributions"));
  s.bin_edges = to_vector(j.at("bin_edges"));
  s.density = to_vector(j.at("density"));
  if (s.grid.size() != s.contributions.size() || s.grid.size() != s.grid_original.size() ||
      s.bin_edges.size() != s.density.size() + 1) {
    throw DataError("shape function '" + s.feature + "' has inconsistent array lengths");
  }
  return s;
}

ShapeFunction sweep_shape(const AmnModel& model, Index feature, const SeriesDataset& train,
                          const NormMeta& norm, const ExplainOptions& options) {
  if (options.grid_size < 2) throw ConfigError("shape grid needs at least 2 points");
  if (options.density_bins < 1) throw ConfigError("density histogram needs at least 1 bin");
  if (train.size() == 0) throw DataError("cannot sweep a shape without training data");
  if (train.features() != model.features()) {
    throw ContractError("training data does not match the model's features");
  }
  const Index k = model.module_index(feature);
  const Index g = options.grid_size;
  const auto values = train.inputs.col(feature);

  double lo = values.minCoeff();
  double hi = values.maxCoeff();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double step = (hi - lo) / static_cast<double>(g - 1);

  ShapeFunction s;
  s.feature = model.feature_names()[static_cast<std::size_t>(feature)];
  s.feature_index = feature;
  s.weight = model.mean_weights()[feature];
  s.grid.resize(static_cast<std::size_t>(g));
  for (Index i = 0; i < g; ++i) s.grid[static_cast<std::size_t>(i)] = lo + step * static_cast<double>(i);
  s.grid.back() = hi;

  RowMatrix selected = RowMatrix::Zero(g, static_cast<Index>(model.active().size()));
  for (Index i = 0; i < g; ++i) selected(i, k) = s.grid[static_cast<std::size_t>(i)];
  NoGradScope no_grad;
  const EnsembleOutput out = model.module_outputs(selected);
  const auto raw = out.contributions.matrix().col(k);

  std::vector<double> support(static_cast<std::size_t>(g), 0.0);
  for (Index r = 0; r < values.size(); ++r) {
    const auto i = std::clamp<Index>(std::llround((values[r] - lo) / step), 0, g - 1);
    support[static_cast<std::size_t>(i)] += 1.0;
  }
  double weighted = 0.0;
  for (Index i = 0; i < g; ++i) weighted += support[static_cast<std::size_t>(i)] * raw[i];
  s.offset = weighted / static_cast<double>(values.size());
  s.contributions.resize(static_cast<std::size_t>(g));
  for (Index i = 0; i < g; ++i) s.contributions[static_cast<std::size_t>(i)] = raw[i] - s.offset;

  const Index channel = feature % train.channels();
  const ChannelStats& stats = norm.channel(train.channel_names[static_cast<std::size_t>(channel)]);
  s.grid_original.reserve(s.grid.size());
  for (double z : s.grid) s.grid_original.push_back(stats.denormalize(z));

  const Index bins = options.density_bins;
  s.bin_edges.resize(static_cast<std::size_t>(bins + 1));
  for (Index b = 0; b <= bins; ++b) {
    s.bin_edges[static_cast<std::size_t>(b)] =
        lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  }
  s.bin_edges.back() = hi;
  s.density.assign(static_cast<std::size_t>(bins), 0.0);
  for (Index r = 0; r < values.size(); ++r) {
    const auto b = std::clamp<Index>(
        static_cast<Index>(std::floor((values[r] - lo) / (hi - lo) * static_cast<double>(bins))), 0,
        bins - 1);
    s.density[static_cast<std::size_t>(b)] += 1.0;
  }
  const double peak = *std::max_element(s.density.begin(), s.density.end());
  for (double& d : s.density) d /= peak;
  return s;
}

Decomposition decompose(const AmnModel& model, const RowMatrix& inputs) {
  constexpr Index kChunk = 512;
  NoGradScope no_grad;
  Decomposition d;
  d.features = model.active();
  const auto n = static_cast<Index>(d.features.size());
  d.contributions.resize(inputs.rows(), n);
  d.prediction.resize(inputs.rows());
  for (Index start = 0; start < inputs.rows(); start += kChunk) {
    const Index len = std::min(kChunk, inputs.rows() - start);
    const ModelOutput o = model.evaluate(inputs.middleRows(start, len));
    d.beta = o.beta;
    d.contributions.middleRows(start, len) = o.contributions.matrix();
    d.prediction.segment(start, len) = o.prediction.values();
  }
  if (inputs.rows() == 0) d.beta = model.module_outputs(RowMatrix::Zero(1, n)).beta;
  return d;
}

nlohmann::ordered_json Explanation::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = kExplanationFormat;
  j["version"] = version;
  j["task"] = to_string(task);
  j["beta"] = beta;
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    features.push_back({{"name", feature_names[i]}, {"weight", feature_weights[i]}});
  }
  j["features"] = std::move(features);
  j["selected"] = selected;
  nlohmann::ordered_json shape_list = nlohmann::ordered_json::array();
  for (const auto& s : shapes) shape_list.push_back(s.to_json());
  j["shapes"] = std::move(shape_list);
  nlohmann::ordered_json sample_list = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    sample_list.push_back(
        {{"row", s.row}, {"prediction", s.prediction}, {"contributions", s.contributions}});
  }
  j["samples"] = std::move(sample_list);
  return j;
}

Explanation Explanation::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string{}) != kExplanationFormat) {
    throw VersionError("not an AMN explanation document");
  }
  Explanation e;
  e.version = j.at("version").get<int>();
  if (e.version != kExplanationVersion) {
    throw VersionError("explanation version " + std::to_string(e.version) +
                       " is not supported (expected " + std::to_string(kExplanationVersion) + ")");
  }
  e.task = parse_task(j.at("task").get<std::string>());
  e.beta = j.at("beta").get<double>();
  for (const auto& f : j.at("features")) {
    e.feature_names.push_back(f.at("name").get<std::string>());
    e.feature_weights.push_back(f.at("weight").get<double>());
  }
  e.selected = j.at("selected").get<std::vector<std::string>>();
  for (const auto& s : j.at("shapes")) e.shapes.push_back(ShapeFunction::from_json(s));
  for (const auto& s : j.at("samples")) {
    e.samples.push_back({s.at("row").get<std::size_t>(), s.at("prediction").get<double>(),
                         to_vector(s.at("contributions"))});
  }
  return e;
}

Explanation explain(const AmnModel& model, const SeriesDataset& train, const SeriesDataset& samples,
                    const NormMeta& norm, const ExplainOptions& options) {
  if (samples.features() != model.features()) {
    throw ContractError("samples do not match the model's features");
  }
  Explanation e;
  e.task = model.config().task;
  e.feature_names = model.feature_names();
  const Vector& w = model.mean_weights();
  e.feature_weights.assign(w.data(), w.data() + w.size());
  // Module columns ranked by final weight; the module order itself is fixed
  // at the freeze and the weights keep moving afterwards.
  const std::vector<Index>& active = model.active();
  std::vector<std::size_t> rank(active.size());
  for (std::size_t k = 0; k < rank.size(); ++k) rank[k] = k;
  std::stable_sort(rank.begin(), rank.end(),
                   [&](std::size_t a, std::size_t b) { return w[active[a]] > w[active[b]]; });
  for (std::size_t k : rank) {
    e.selected.push_back(e.feature_names[static_cast<std::size_t>(active[k])]);
    e.shapes.push_back(sweep_shape(model, active[k], train, norm, options));
  }
  const Index count = std::min(options.max_samples, samples.size());
  const Decomposition d = decompose(model, samples.inputs.topRows(count));
  e.beta = d.beta;
  for (Index i = 0; i < count; ++i) {
    SampleExplanation s;
    s.row = samples.target_rows[static_cast<std::size_t>(i)];
    s.prediction = d.prediction[i];
    for (std::size_t k : rank) s.contributions.push_back(d.contributions(i, static_cast<Index>(k)));
    e.samples.push_back(std::move(s));
  }
  return e;
}

std::string explanation_text(const Explanation& e) { return e.to_json().dump(2) + "\n"; }

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // Avoid "-0.00" flipping with the sign of tiny values.
  if (std::string(buf) == "-0.00") return "0.00";
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  if (std::string(buf) == "-0") return "0";
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const ShapeFunction& s, Index rank) {
  constexpr double kWidth = 640, kHeight = 420;
  constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 80;
  constexpr double kPlotW = kWidth - kLeft - kRight, kPlotH = kHeight - kTop - kBottom;
  constexpr int kTicks = 5;

  const double x0 = s.grid.front(), x1 = s.grid.back();
  double y0 = *std::min_element(s.contributions.begin(), s.contributions.end());
  double y1 = *std::max_element(s.contributions.begin(), s.contributions.end());
  if (y1 - y0 < 1e-9) {
    y0 -= 1.0;
    y1 += 1.0;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * kPlotW; };
  auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * kPlotH; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">#" +
         std::to_string(rank) + " " + escape_xml(s.feature) + " (weight " + label(s.weight) +
         ")</text>\n";

  // Density: one red bar per bin, opacity proportional to the density.
  for (std::size_t b = 0; b < s.density.size(); ++b) {
    if (s.density[b] <= 0.0) continue;
    const double left = px(s.bin_edges[b]);
    const double right = px(s.bin_edges[b + 1]);
    svg += "<rect x=\"" + num(left) + "\" y=\"" + num(kTop) + "\" width=\"" + num(right - left) +
           "\" height=\"" + num(kPlotH) + "\" fill=\"red\" fill-opacity=\"" +
           num(0.45 * s.density[b]) + "\"/>\n";
  }

  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(kPlotW) +
         "\" height=\"" + num(kPlotH) + "\" fill=\"none\" stroke=\"black\"/>\n";
  if (y0 < 0.0 && y1 > 0.0) {
    svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(0.0)) + "\" x2=\"" +
           num(kLeft + kPlotW) + "\" y2=\"" + num(py(0.0)) +
           "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }

  svg += "<polyline fill=\"none\" stroke=\"blue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    if (i) svg += ' ';
    svg += num(px(s.grid[i])) + "," + num(py(s.contributions[i]));
  }
  svg += "\"/>\n";

  // Two x-axis label rows: normalized values, then original units.
  const double base = kTop + kPlotH;
  for (int t = 0; t < kTicks; ++t) {
    const double frac = static_cast<double>(t) / (kTicks - 1);
    const double x = x0 + frac * (x1 - x0);
    const auto nearest = static_cast<std::size_t>(
        std::lround(frac * static_cast<double>(s.grid.size() - 1)));
    const double original = s.grid_original[nearest];
    svg += "<line x1=\"" + num(px(x)) + "\" y1=\"" + num(base) + "\" x2=\"" + num(px(x)) +
           "\" y2=\"" + num(base + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(px(x)) + "\" y=\"" + num(base + 18) +
           "\" text-anchor=\"middle\">" + label(x) + "</text>\n";
    svg += "<text x=\"" + num(px(x)) + "\" y=\"" + num(base + 34) +
           "\" text-anchor=\"middle\" fill=\"dimgray\">" + label(original) + "</text>\n";

    const double y = y0 + frac * (y1 - y0);
    svg += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py(y)) + "\" x2=\"" + num(kLeft) +
           "\" y2=\"" + num(py(y)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(y) + 4) +
           "\" text-anchor=\"end\">" + label(y) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + kPlotW / 2) + "\" y=\"" + num(kHeight - 12) +
         "\" text-anchor=\"middle\">normalized value (top), original value (bottom)</text>\n";
  svg += "<text transform=\"translate(16 " + num(kTop + kPlotH / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">contribution</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::string svg_name(const ShapeFunction& shape, Index rank, Index count) {
  const int width = static_cast<int>(std::to_string(std::max<Index>(count, 1)).size());
  char prefix[32];
  std::snprintf(prefix, sizeof prefix, "%0*lld", width, static_cast<long long>(rank));
  std::string name = shape.feature;
  for (char& c : name) {
    if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
  }
  return std::string(prefix) + "_" + name + ".svg";
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_explanation(const Explanation& e, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "explanation.json", explanation_text(e));
  const auto count = static_cast<Index>(e.shapes.size());
  for (Index r = 0; r < count; ++r) {
    const ShapeFunction& s = e.shapes[static_cast<std::size_t>(r)];
    write_file(dir / svg_name(s, r + 1, count), render_svg(s, r + 1));
  }
}

}  // namespace amn
