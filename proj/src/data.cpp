// SPDX-License-Identifier: Apache-2.0
#include "amn/data.hpp"

#include "amn/error.hpp"
#include "amn/layers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace amn {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string join(std::span<const std::string> names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) s += ", ";
    s += names[i];
  }
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null" ||
         cell == "?";
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double shape_value(ShapeKind kind, double x) {
  switch (kind) {
    case ShapeKind::kIdentity: return x;
    case ShapeKind::kSine: return std::sin(1.5 * x);
    case ShapeKind::kQuadratic: return x * x;
    case ShapeKind::kStep: return x > 0.0 ? 1.0 : -1.0;
    case ShapeKind::kCubic: return 0.25 * x * x * x;
    case ShapeKind::kAbs: return std::abs(x);
  }
  return x;
}

}  // namespace

std::string to_string(Task task) {
  return task == Task::kRegression ? "regression" : "classification";
}

Task parse_task(std::string_view text) {
  if (text == "regression") return Task::kRegression;
  if (text == "classification") return Task::kClassification;
  throw ConfigError("unknown task '" + std::string(text) +
                    "' (expected regression or classification)");
}

CsvSchema CsvSchema::from_json(const nlohmann::json& j) {
  CsvSchema s;
  for (const auto& [key, value] : j.items()) {
    if (key == "timestamp") {
      if (!value.is_null()) s.timestamp = value.get<std::string>();
    } else if (key == "columns") {
      for (const auto& c : value) {
        const auto kind = c.at("kind").get<std::string>();
        if (kind != "numeric" && kind != "categorical") {
          throw ConfigError("schema column kind must be numeric or categorical, got " + kind);
        }
        s.columns.emplace_back(c.at("name").get<std::string>(),
                               kind == "numeric" ? ColumnKind::kNumeric : ColumnKind::kCategorical);
      }
    } else if (key == "vocabularies") {
      s.vocabularies = value.get<std::map<std::string, std::vector<std::string>>>();
    } else {
      throw ConfigError("unknown schema key '" + key + "'");
    }
  }
  return s;
}

nlohmann::json CsvSchema::to_json() const {
  nlohmann::json j;
  j["timestamp"] = timestamp ? nlohmann::json(*timestamp) : nlohmann::json(nullptr);
  j["columns"] = nlohmann::json::array();
  for (const auto& [name, kind] : columns) {
    j["columns"].push_back(
        {{"name", name}, {"kind", kind == ColumnKind::kNumeric ? "numeric" : "categorical"}});
  }
  j["vocabularies"] = vocabularies;
  return j;
}

std::size_t Table::column_index(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw DataError("unknown column '" + std::string(name) + "'; available: " + join(names));
  }
  return static_cast<std::size_t>(it - names.begin());
}

const std::vector<double>& Table::column(std::string_view name) const {
  return columns[column_index(name)];
}

Table Table::slice_rows(std::size_t begin, std::size_t end) const {
  Table t;
  t.names = names;
  t.kinds = kinds;
  t.vocabularies = vocabularies;
  t.timestamp_name = timestamp_name;
  for (const auto& c : columns) t.columns.emplace_back(c.begin() + begin, c.begin() + end);
  if (!timestamps.empty()) t.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
  return t;
}

Table parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("schema error: " + source + " is empty");
  if (std::all_of(header.begin(), header.end(),
                  [](const std::string& c) { return parse_number(c).has_value(); })) {
    throw DataError("schema error: " + source + " has no header row (first line is numeric)");
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) {
      throw DataError("schema error: empty column name at position " + std::to_string(i + 1));
    }
    if (std::find(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(i), header[i]) !=
        header.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw DataError("schema error: duplicate column '" + header[i] + "'");
    }
  }
  auto header_pos = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("unknown column '" + name + "' in schema; " + source +
                      " has columns: " + join(header));
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  std::optional<std::size_t> ts_pos;
  if (schema.timestamp) ts_pos = header_pos(*schema.timestamp);

  std::vector<std::string> names;
  std::vector<std::optional<ColumnKind>> kinds;
  std::vector<std::size_t> positions;
  if (schema.columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (ts_pos && *ts_pos == i) continue;
      names.push_back(header[i]);
      kinds.emplace_back(std::nullopt);
      positions.push_back(i);
    }
  } else {
    for (const auto& [name, kind] : schema.columns) {
      names.push_back(name);
      kinds.emplace_back(kind);
      positions.push_back(header_pos(name));
    }
  }

  std::vector<std::vector<std::string>> cells(names.size());
  std::vector<std::size_t> line_numbers;
  std::vector<std::string> timestamps;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError(source + " line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < names.size(); ++c) cells[c].push_back(fields[positions[c]]);
    if (ts_pos) timestamps.push_back(fields[*ts_pos]);
    line_numbers.push_back(line_no);
  }

  Table t;
  t.names = names;
  t.timestamps = std::move(timestamps);
  if (schema.timestamp) t.timestamp_name = *schema.timestamp;
  for (std::size_t c = 0; c < names.size(); ++c) {
    ColumnKind kind;
    if (kinds[c]) {
      kind = *kinds[c];
    } else {
      const bool numeric = std::all_of(cells[c].begin(), cells[c].end(), [](const std::string& s) {
        return is_missing(s) || parse_number(s).has_value();
      });
      kind = numeric ? ColumnKind::kNumeric : ColumnKind::kCategorical;
    }
    std::vector<double> values(cells[c].size(), kMissing);
    if (kind == ColumnKind::kNumeric) {
      for (std::size_t r = 0; r < cells[c].size(); ++r) {
        const std::string& s = cells[c][r];
        if (is_missing(s)) continue;
        const auto v = parse_number(s);
        if (!v) {
          throw DataError(source + " line " + std::to_string(line_numbers[r]) + ", column '" +
                          names[c] + "': cannot parse '" + s + "' as a number");
        }
        values[r] = *v;
      }
    } else {
      std::vector<std::string> vocab;
      if (const auto it = schema.vocabularies.find(names[c]); it != schema.vocabularies.end()) {
        vocab = it->second;
      }
      for (std::size_t r = 0; r < cells[c].size(); ++r) {
        const std::string& s = cells[c][r];
        if (is_missing(s)) continue;
        auto it = std::find(vocab.begin(), vocab.end(), s);
        if (it == vocab.end()) {
          vocab.push_back(s);
          it = vocab.end() - 1;
        }
        values[r] = static_cast<double>(it - vocab.begin());
      }
      t.vocabularies[names[c]] = std::move(vocab);
    }
    t.kinds.push_back(kind);
    t.columns.push_back(std::move(values));
  }
  return t;
}

Table load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file " + path.string());
  return parse_csv(in, schema, path.string());
}

void write_csv(std::ostream& out, const Table& table) {
  const bool ts = !table.timestamps.empty();
  if (ts) out << table.timestamp_name;
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (c || ts) out << ',';
    out << table.names[c];
  }
  out << '\n';
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (ts) out << table.timestamps[r];
    for (std::size_t c = 0; c < table.names.size(); ++c) {
      if (c || ts) out << ',';
      const double v = table.columns[c][r];
      if (std::isnan(v)) continue;
      if (table.kinds[c] == ColumnKind::kCategorical) {
        out << table.vocabularies.at(table.names[c]).at(static_cast<std::size_t>(v));
      } else {
        out << format_number(v);
      }
    }
    out << '\n';
  }
}

Table interpolate_missing(Table table) {
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    auto& col = table.columns[c];
    std::vector<std::size_t> observed;
    for (std::size_t r = 0; r < col.size(); ++r) {
      if (!std::isnan(col[r])) observed.push_back(r);
    }
    if (observed.empty()) {
      if (col.empty()) continue;
      throw DataError("column '" + table.names[c] + "' has no observed values to interpolate from");
    }
    if (observed.size() == col.size()) continue;
    const bool categorical = table.kinds[c] == ColumnKind::kCategorical;
    for (std::size_t r = 0; r < observed.front(); ++r) col[r] = col[observed.front()];
    for (std::size_t r = observed.back() + 1; r < col.size(); ++r) col[r] = col[observed.back()];
    for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
      const std::size_t a = observed[k];
      const std::size_t b = observed[k + 1];
      for (std::size_t r = a + 1; r < b; ++r) {
        if (categorical) {
          col[r] = col[a];
        } else {
          const double w = static_cast<double>(r - a) / static_cast<double>(b - a);
          col[r] = col[a] + w * (col[b] - col[a]);
        }
      }
    }
  }
  return table;
}

std::array<RowRange, 3> split_rows(std::size_t rows, std::array<double, 3> fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const auto n = static_cast<double>(rows);
  const auto b1 = static_cast<std::size_t>(std::llround(fractions[0] * n));
  const auto b2 = std::max(b1, static_cast<std::size_t>(std::llround((fractions[0] + fractions[1]) * n)));
  std::array<RowRange, 3> r{RowRange{0, b1}, RowRange{b1, std::min(b2, rows)},
                            RowRange{std::min(b2, rows), rows}};
  static constexpr const char* kNames[] = {"train", "validation", "test"};
  for (int i = 0; i < 3; ++i) {
    if (r[static_cast<std::size_t>(i)].size() == 0) {
      throw ConfigError(std::string("split leaves the ") + kNames[i] + " segment empty");
    }
  }
  return r;
}

TableSplit chrono_split(const Table& table, std::array<double, 3> fractions) {
  const auto r = split_rows(table.rows(), fractions);
  return {table.slice_rows(r[0].begin, r[0].end), table.slice_rows(r[1].begin, r[1].end),
          table.slice_rows(r[2].begin, r[2].end), r};
}

std::string to_string(NormScheme scheme) {
  return scheme == NormScheme::kZScore ? "zscore" : "minmax";
}

NormScheme parse_norm_scheme(std::string_view text) {
  if (text == "zscore") return NormScheme::kZScore;
  if (text == "minmax") return NormScheme::kMinMax;
  throw ConfigError("unknown normalization '" + std::string(text) + "' (expected zscore or minmax)");
}

const ChannelStats& NormMeta::channel(std::string_view name) const {
  const auto it = std::find(channels.begin(), channels.end(), name);
  if (it == channels.end()) {
    throw DataError("normalization metadata has no channel '" + std::string(name) + "'");
  }
  return stats[static_cast<std::size_t>(it - channels.begin())];
}

nlohmann::json NormMeta::to_json() const {
  nlohmann::json j;
  j["scheme"] = to_string(scheme);
  j["channels"] = nlohmann::json::array();
  for (std::size_t i = 0; i < channels.size(); ++i) {
    j["channels"].push_back(
        {{"name", channels[i]}, {"shift", stats[i].shift}, {"scale", stats[i].scale}});
  }
  j["target"] = target ? nlohmann::json{{"shift", target->shift}, {"scale", target->scale}}
                       : nlohmann::json(nullptr);
  j["warnings"] = warnings;
  return j;
}

NormMeta NormMeta::from_json(const nlohmann::json& j) {
  NormMeta m;
  m.scheme = parse_norm_scheme(j.at("scheme").get<std::string>());
  for (const auto& c : j.at("channels")) {
    m.channels.push_back(c.at("name").get<std::string>());
    m.stats.push_back({c.at("shift").get<double>(), c.at("scale").get<double>()});
  }
  if (!j.at("target").is_null()) {
    m.target = ChannelStats{j["target"].at("shift").get<double>(),
                            j["target"].at("scale").get<double>()};
  }
  m.warnings = j.value("warnings", std::vector<std::string>{});
  return m;
}

namespace {

ChannelStats fit_stats(const std::vector<double>& v, NormScheme scheme, const std::string& name,
                       std::vector<std::string>& warnings) {
  if (v.empty()) throw DataError("cannot normalize '" + name + "' from an empty training split");
  double shift = 0.0;
  double spread = 0.0;
  if (scheme == NormScheme::kZScore) {
    shift = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - shift) * (x - shift);
    spread = std::sqrt(ss / static_cast<double>(v.size()));
  } else {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    shift = *lo;
    spread = *hi - *lo;
  }
  if (!(spread > 1e-12)) {
    warnings.push_back("channel '" + name + "' is constant on the training split; left unscaled");
    return {};
  }
  return {shift, spread};
}

}  // namespace

NormMeta fit_normalization(const Table& train, std::span<const std::string> channels,
                           const std::optional<std::string>& target, NormScheme scheme) {
  NormMeta m;
  m.scheme = scheme;
  for (const auto& name : channels) {
    m.channels.push_back(name);
    m.stats.push_back(fit_stats(train.column(name), scheme, name, m.warnings));
  }
  if (target) m.target = fit_stats(train.column(*target), scheme, *target, m.warnings);
  return m;
}

namespace {

Table apply_norm(Table table, const NormMeta& meta, const std::string& target_name, bool forward) {
  auto apply = [forward](std::vector<double>& col, const ChannelStats& s) {
    for (double& x : col) x = forward ? s.normalize(x) : s.denormalize(x);
  };
  for (std::size_t i = 0; i < meta.channels.size(); ++i) {
    apply(table.columns[table.column_index(meta.channels[i])], meta.stats[i]);
  }
  const bool target_is_channel =
      std::find(meta.channels.begin(), meta.channels.end(), target_name) != meta.channels.end();
  if (meta.target && !target_is_channel && !target_name.empty()) {
    apply(table.columns[table.column_index(target_name)], *meta.target);
  }
  return table;
}

}  // namespace

Table normalize(Table table, const NormMeta& meta, const std::string& target_name) {
  return apply_norm(std::move(table), meta, target_name, true);
}

Table denormalize(Table table, const NormMeta& meta, const std::string& target_name) {
  return apply_norm(std::move(table), meta, target_name, false);
}

SeriesDataset SeriesDataset::subset(std::span<const Index> samples) const {
  SeriesDataset out;
  out.channel_names = channel_names;
  out.feature_names = feature_names;
  out.target_name = target_name;
  out.window = window;
  out.inputs.resize(static_cast<Index>(samples.size()), inputs.cols());
  out.targets.resize(static_cast<Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    out.inputs.row(static_cast<Index>(k)) = inputs.row(samples[k]);
    out.targets[static_cast<Index>(k)] = targets[samples[k]];
    out.target_rows.push_back(target_rows[static_cast<std::size_t>(samples[k])]);
  }
  return out;
}

std::vector<std::string> flattened_feature_names(std::span<const std::string> channels,
                                                 Index window_length) {
  std::vector<std::string> names;
  for (Index lag = 0; lag < window_length; ++lag) {
    for (const auto& c : channels) names.push_back(c + "_t" + std::to_string(lag));
  }
  return names;
}

SeriesDataset window(const Table& table, Index window_length, const std::string& target,
                     std::span<const std::string> channels, Index horizon) {
  if (window_length < 1) throw ConfigError("window length must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (channels.empty()) throw ConfigError("at least one input channel is required");
  const auto rows = static_cast<Index>(table.rows());
  if (rows < window_length + horizon) {
    throw DataError("table has " + std::to_string(rows) + " rows; window " +
                    std::to_string(window_length) + " with horizon " + std::to_string(horizon) +
                    " needs at least " + std::to_string(window_length + horizon));
  }
  std::vector<const std::vector<double>*> cols;
  for (const auto& c : channels) cols.push_back(&table.column(c));
  const auto& y = table.column(target);
  const auto d = static_cast<Index>(channels.size());
  const Index n = rows - window_length - horizon + 1;

  SeriesDataset ds;
  ds.channel_names.assign(channels.begin(), channels.end());
  ds.feature_names = flattened_feature_names(channels, window_length);
  ds.target_name = target;
  ds.window = window_length;
  ds.inputs.resize(n, window_length * d);
  ds.targets.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index lag = 0; lag < window_length; ++lag) {
      for (Index c = 0; c < d; ++c) {
        const double v = (*cols[static_cast<std::size_t>(c)])[static_cast<std::size_t>(i + lag)];
        if (std::isnan(v)) {
          throw DataError("missing value in column '" + ds.channel_names[static_cast<std::size_t>(c)] +
                          "' row " + std::to_string(i + lag) + "; interpolate first");
        }
        ds.inputs(i, lag * d + c) = v;
      }
    }
    const auto target_row = static_cast<std::size_t>(i + window_length - 1 + horizon);
    if (std::isnan(y[target_row])) {
      throw DataError("missing target at row " + std::to_string(target_row));
    }
    ds.targets[i] = y[target_row];
    ds.target_rows.push_back(target_row);
  }
  return ds;
}

nlohmann::json DataManifest::to_json() const {
  nlohmann::json j;
  j["format"] = "amn-data-manifest";
  j["version"] = version;
  j["schema"] = schema.to_json();
  j["task"] = to_string(task);
  j["target"] = target;
  j["channels"] = channels;
  j["feature_names"] = feature_names;
  j["window"] = window;
  j["horizon"] = horizon;
  j["fractions"] = fractions;
  j["split_rows"] = nlohmann::json::array();
  for (const auto& r : split_rows) j["split_rows"].push_back({r.begin, r.end});
  j["normalization"] = norm.to_json();
  return j;
}

DataManifest DataManifest::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "amn-data-manifest") {
    throw VersionError("not a data manifest");
  }
  DataManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != 1) {
    throw VersionError("unsupported data manifest version " + std::to_string(m.version));
  }
  m.schema = CsvSchema::from_json(j.at("schema"));
  m.task = parse_task(j.at("task").get<std::string>());
  m.target = j.at("target").get<std::string>();
  m.channels = j.at("channels").get<std::vector<std::string>>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.window = j.at("window").get<Index>();
  m.horizon = j.at("horizon").get<Index>();
  m.fractions = j.at("fractions").get<std::array<double, 3>>();
  const auto& sr = j.at("split_rows");
  for (std::size_t i = 0; i < 3; ++i) {
    m.split_rows[i] = {sr.at(i).at(0).get<std::size_t>(), sr.at(i).at(1).get<std::size_t>()};
  }
  m.norm = NormMeta::from_json(j.at("normalization"));
  return m;
}

namespace {

constexpr const char* kTargetColumn = "__target__";

// Normalized copy of `table` with the (normalized) target in kTargetColumn.
Table working_table(const Table& table, const DataManifest& m) {
  for (const auto& c : m.channels) {
    if (std::find(table.names.begin(), table.names.end(), c) == table.names.end()) {
      throw DataError("data does not match the normalization metadata: missing channel '" + c + "'");
    }
  }
  Table t = table;
  std::vector<double> y = table.column(m.target);
  if (m.norm.target) {
    for (double& v : y) v = m.norm.target->normalize(v);
  }
  t = normalize(std::move(t), m.norm, "");
  t.names.push_back(kTargetColumn);
  t.kinds.push_back(ColumnKind::kNumeric);
  t.columns.push_back(std::move(y));
  return t;
}

SeriesDataset window_segment(const Table& work, const DataManifest& m, RowRange r) {
  SeriesDataset ds = window(work.slice_rows(r.begin, r.end), m.window, kTargetColumn, m.channels,
                            m.horizon);
  ds.target_name = m.target;
  for (auto& row : ds.target_rows) row += r.begin;
  return ds;
}

void check_classification_targets(const Table& table, const std::string& target) {
  for (double v : table.column(target)) {
    if (v != 0.0 && v != 1.0) {
      throw DataError("classification target '" + target + "' must be 0 or 1");
    }
  }
}

}  // namespace

PreparedData prepare_data(const Table& raw, const CsvSchema& schema, const DataSpec& spec,
                          Task task) {
  if (spec.target.empty()) throw ConfigError("no target column configured");
  const Table table = interpolate_missing(raw);
  table.column_index(spec.target);
  if (task == Task::kClassification) check_classification_targets(table, spec.target);

  DataManifest m;
  m.schema = schema;
  m.schema.vocabularies = table.vocabularies;
  m.task = task;
  m.target = spec.target;
  if (spec.channels.empty()) {
    for (const auto& name : table.names) {
      if (name != spec.target || spec.include_target) m.channels.push_back(name);
    }
  } else {
    m.channels = spec.channels;
    for (const auto& c : m.channels) table.column_index(c);
    if (spec.include_target &&
        std::find(m.channels.begin(), m.channels.end(), spec.target) == m.channels.end()) {
      m.channels.push_back(spec.target);
    }
  }
  if (m.channels.empty()) throw ConfigError("no input channels left after removing the target");
  m.window = spec.window;
  m.feature_names = flattened_feature_names(m.channels, spec.window);
  m.fractions = spec.fractions;
  m.split_rows = split_rows(table.rows(), spec.fractions);

  const Table train_rows = table.slice_rows(m.split_rows[0].begin, m.split_rows[0].end);
  std::optional<std::string> target_for_stats;
  if (task == Task::kRegression) target_for_stats = spec.target;
  m.norm = fit_normalization(train_rows, m.channels, target_for_stats, spec.scheme);

  const Table work = working_table(table, m);
  return {window_segment(work, m, m.split_rows[0]), window_segment(work, m, m.split_rows[1]),
          window_segment(work, m, m.split_rows[2]), m};
}

PreparedData prepare_with_manifest(const Table& raw, const DataManifest& manifest) {
  const Table table = interpolate_missing(raw);
  DataManifest m = manifest;
  m.split_rows = split_rows(table.rows(), m.fractions);
  const Table work = working_table(table, m);
  return {window_segment(work, m, m.split_rows[0]), window_segment(work, m, m.split_rows[1]),
          window_segment(work, m, m.split_rows[2]), m};
}

SeriesDataset window_with_manifest(const Table& raw, const DataManifest& manifest) {
  const Table table = interpolate_missing(raw);
  const Table work = working_table(table, manifest);
  return window_segment(work, manifest, {0, table.rows()});
}

Vector original_targets(const SeriesDataset& ds, const DataManifest& manifest) {
  Vector y = ds.targets;
  if (manifest.norm.target) {
    for (Index i = 0; i < y.size(); ++i) y[i] = manifest.norm.target->denormalize(y[i]);
  }
  return y;
}

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kIdentity: return "identity";
    case ShapeKind::kSine: return "sine";
    case ShapeKind::kQuadratic: return "quadratic";
    case ShapeKind::kStep: return "step";
    case ShapeKind::kCubic: return "cubic";
    case ShapeKind::kAbs: return "abs";
  }
  return "?";
}

ShapeKind parse_shape_kind(std::string_view text) {
  for (ShapeKind k : {ShapeKind::kIdentity, ShapeKind::kSine, ShapeKind::kQuadratic,
                      ShapeKind::kStep, ShapeKind::kCubic, ShapeKind::kAbs}) {
    if (text == to_string(k)) return k;
  }
  throw ConfigError("unknown shape '" + std::string(text) + "'");
}

double apply_shape(ShapeKind kind, double x) { return shape_value(kind, x); }

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "relevant") s.relevant = value.get<Index>();
    else if (key == "irrelevant") s.irrelevant = value.get<Index>();
    else if (key == "noise_std") s.noise_std = value.get<double>();
    else if (key == "length") s.length = value.get<Index>();
    else if (key == "task") s.task = parse_task(value.get<std::string>());
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else if (key == "shapes") {
      s.shapes.clear();
      for (const auto& v : value) s.shapes.push_back(parse_shape_kind(v.get<std::string>()));
    } else {
      throw ConfigError("unknown synthetic key '" + key + "'");
    }
  }
  return s;
}

nlohmann::json SyntheticSpec::to_json() const {
  nlohmann::json j;
  j["relevant"] = relevant;
  j["irrelevant"] = irrelevant;
  j["noise_std"] = noise_std;
  j["length"] = length;
  j["task"] = to_string(task);
  j["seed"] = seed;
  j["shapes"] = nlohmann::json::array();
  for (ShapeKind k : shapes) j["shapes"].push_back(to_string(k));
  return j;
}

nlohmann::json SyntheticData::ground_truth() const {
  nlohmann::json j;
  j["target"] = target;
  j["relevant"] = nlohmann::json::array();
  for (std::size_t i = 0; i < relevant_channels.size(); ++i) {
    j["relevant"].push_back({{"channel", relevant_channels[i]}, {"shape", to_string(shapes[i])}});
  }
  j["spec"] = spec.to_json();
  return j;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.relevant < 0 || spec.irrelevant < 0 || spec.relevant + spec.irrelevant < 1) {
    throw ConfigError("synthetic data needs at least one channel");
  }
  if (spec.length < 2) throw ConfigError("synthetic length must be >= 2");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  std::vector<ShapeKind> shapes = spec.shapes;
  if (shapes.empty()) {
    static constexpr ShapeKind kCycle[] = {ShapeKind::kSine, ShapeKind::kQuadratic,
                                           ShapeKind::kStep, ShapeKind::kIdentity};
    for (Index i = 0; i < spec.relevant; ++i) shapes.push_back(kCycle[i % 4]);
  }
  if (static_cast<Index>(shapes.size()) != spec.relevant) {
    throw ConfigError("need one shape per relevant channel");
  }

  const Index channels = spec.relevant + spec.irrelevant;
  const auto len = static_cast<std::size_t>(spec.length);
  Rng rng(spec.seed);
  std::vector<Index> order(static_cast<std::size_t>(channels));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> relevant(order.begin(), order.begin() + spec.relevant);
  std::vector<ShapeKind> shape_of(static_cast<std::size_t>(channels), ShapeKind::kIdentity);
  {
    // Shapes follow the channel order of the relevant set.
    std::vector<Index> sorted = relevant;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      shape_of[static_cast<std::size_t>(sorted[i])] = shapes[i];
    }
    relevant = sorted;
  }

  SyntheticData out;
  out.spec = spec;
  out.spec.shapes = shapes;
  out.shapes = shapes;
  Table& t = out.table;
  char name[32];
  for (Index c = 0; c < channels; ++c) {
    std::snprintf(name, sizeof name, "x%02lld", static_cast<long long>(c));
    t.names.emplace_back(name);
    t.kinds.push_back(ColumnKind::kNumeric);
    t.columns.emplace_back(len);
  }
  for (Index c : relevant) out.relevant_channels.push_back(t.names[static_cast<std::size_t>(c)]);

  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t r = 0; r < len; ++r) {
    for (Index c = 0; c < channels; ++c) t.columns[static_cast<std::size_t>(c)][r] = uni(rng);
  }
  std::vector<double> y(len, 0.0);
  for (std::size_t r = 0; r < len; ++r) {
    double latent = 0.0;
    if (r > 0) {
      for (Index c : relevant) {
        latent += shape_value(shape_of[static_cast<std::size_t>(c)],
                              t.columns[static_cast<std::size_t>(c)][r - 1]);
      }
    }
    y[r] = latent + spec.noise_std * noise(rng);
  }
  if (spec.task == Task::kClassification) {
    std::vector<double> sorted(y.begin() + 1, y.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    for (double& v : y) v = v > median ? 1.0 : 0.0;
  }
  t.names.push_back(out.target);
  t.kinds.push_back(ColumnKind::kNumeric);
  t.columns.push_back(std::move(y));
  return out;
}

}  // namespace amn
