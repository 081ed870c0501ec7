#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tempgp/error.hpp"

namespace tempgp {

// Integer sampling slot, e.g. one 10-minute interval.
using TimeIndex = std::int64_t;

/// Regression data collected sequentially in time.
///
/// `X` holds the model covariates (after any circular embedding and
/// standardization). `raw` keeps the covariates as ingested so baselines can
/// work on physical units; by convention raw column 0 is wind speed.
/// Instances are immutable once constructed.
class TimeSeriesDataset {
 public:
  TimeSeriesDataset() = default;

  TimeSeriesDataset(Eigen::VectorXd y, Eigen::MatrixXd X, std::vector<TimeIndex> t,
                    std::vector<std::string> covariate_names,
                    Eigen::MatrixXd raw = {}, std::vector<std::string> raw_names = {},
                    std::string response_name = "y")
      : y_(std::move(y)),
        X_(std::move(X)),
        t_(std::move(t)),
        names_(std::move(covariate_names)),
        raw_(std::move(raw)),
        raw_names_(std::move(raw_names)),
        response_name_(std::move(response_name)) {
    if (raw_.size() == 0 && raw_names_.empty()) {
      raw_ = X_;
      raw_names_ = names_;
    }
    validate();
  }

  Eigen::Index size() const { return y_.size(); }
  Eigen::Index dim() const { return X_.cols(); }

  const Eigen::VectorXd &y() const { return y_; }
  const Eigen::MatrixXd &X() const { return X_; }
  const std::vector<TimeIndex> &t() const { return t_; }
  const std::vector<std::string> &covariate_names() const { return names_; }
  const Eigen::MatrixXd &raw() const { return raw_; }
  const std::vector<std::string> &raw_names() const { return raw_names_; }
  const std::string &response_name() const { return response_name_; }

  std::optional<Eigen::Index> covariate_index(std::string_view name) const {
    return find_name(names_, name);
  }
  std::optional<Eigen::Index> raw_index(std::string_view name) const {
    return find_name(raw_names_, name);
  }

  TimeSeriesDataset subset(std::span<const Eigen::Index> rows) const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    Eigen::MatrixXd X(y.size(), X_.cols());
    Eigen::MatrixXd raw(y.size(), raw_.cols());
    std::vector<TimeIndex> t(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i];
      y(static_cast<Eigen::Index>(i)) = y_(r);
      X.row(static_cast<Eigen::Index>(i)) = X_.row(r);
      raw.row(static_cast<Eigen::Index>(i)) = raw_.row(r);
      t[i] = t_[static_cast<std::size_t>(r)];
    }
    return TimeSeriesDataset(std::move(y), std::move(X), std::move(t), names_, std::move(raw),
                             raw_names_, response_name_);
  }

  TimeSeriesDataset with_covariates(Eigen::MatrixXd X, std::vector<std::string> names) const {
    return TimeSeriesDataset(y_, std::move(X), t_, std::move(names), raw_, raw_names_,
                             response_name_);
  }

  TimeSeriesDataset with_response(Eigen::VectorXd y) const {
    return TimeSeriesDataset(std::move(y), X_, t_, names_, raw_, raw_names_, response_name_);
  }

 private:
  static std::optional<Eigen::Index> find_name(const std::vector<std::string> &names,
                                               std::string_view name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<Eigen::Index>(i);
    }
    return std::nullopt;
  }

  void validate() const {
    const auto n = y_.size();
    if (n < 1) throw DataError("dataset must contain at least one row");
    if (X_.rows() != n || static_cast<Eigen::Index>(t_.size()) != n) {
      throw DataError("dataset length mismatch between y, X and t");
    }
    if (raw_.rows() != n) throw DataError("raw covariate rows do not match y");
    if (static_cast<Eigen::Index>(names_.size()) != X_.cols()) {
      throw DataError("covariate name count does not match X columns");
    }
    if (static_cast<Eigen::Index>(raw_names_.size()) != raw_.cols()) {
      throw DataError("raw name count does not match raw columns");
    }
    for (std::size_t i = 1; i < t_.size(); ++i) {
      if (t_[i] <= t_[i - 1]) throw DataError("non-monotone time index");
    }
    if (!y_.allFinite() || !X_.allFinite() || !raw_.allFinite()) {
      throw DataError("dataset contains non-finite values");
    }
  }

  Eigen::VectorXd y_;
  Eigen::MatrixXd X_;
  std::vector<TimeIndex> t_;
  std::vector<std::string> names_;
  Eigen::MatrixXd raw_;
  std::vector<std::string> raw_names_;
  std::string response_name_ = "y";
};

// ---------------------------------------------------------------------------
// Standardization

struct StandardizationParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  Eigen::MatrixXd apply(const Eigen::MatrixXd &X) const {
    check(X.cols());
    return (X.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd &Z) const {
    check(Z.cols());
    return (Z.array().rowwise() * sd.transpose().array()).matrix().rowwise() +
           mean.transpose();
  }

  Eigen::VectorXd apply(const Eigen::VectorXd &x) const {
    check(x.size());
    return (x - mean).cwiseQuotient(sd);
  }

 private:
  void check(Eigen::Index d) const {
    if (d != mean.size() || d != sd.size()) {
      throw std::invalid_argument("standardization dimension mismatch");
    }
  }
};

/// Centers each covariate on its sample mean and scales by the sample
/// standard deviation (n - 1 denominator).
inline std::pair<TimeSeriesDataset, StandardizationParams> standardize(
    const TimeSeriesDataset &data) {
  const auto n = data.size();
  const auto d = data.dim();
  if (n < 2) throw DataError("standardize needs at least two rows");
  StandardizationParams params{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto col = data.X().col(j);
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0) || sd <= 1e-14 * std::max(1.0, std::abs(mean))) {
      throw DataError("covariate '" + data.covariate_names()[static_cast<std::size_t>(j)] +
                      "' is constant and cannot be standardized");
    }
    params.mean(j) = mean;
    params.sd(j) = sd;
  }
  auto out = data.with_covariates(params.apply(data.X()), data.covariate_names());
  return {std::move(out), std::move(params)};
}

// ---------------------------------------------------------------------------
// Circular covariates

/// Replaces a column of angles in degrees by its (sin, cos) embedding. The two
/// new columns take the position of the original one.
inline TimeSeriesDataset embed_circular(const TimeSeriesDataset &data, std::string_view column,
                                        bool wrap = true) {
  const auto idx = data.covariate_index(column);
  if (!idx) throw DataError("circular column '" + std::string(column) + "' not found");
  const auto n = data.size();
  const auto d = data.dim();
  Eigen::MatrixXd X(n, d + 1);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(d + 1));
  Eigen::Index out = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto &name = data.covariate_names()[static_cast<std::size_t>(j)];
    if (j != *idx) {
      X.col(out++) = data.X().col(j);
      names.push_back(name);
      continue;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double deg = data.X()(i, j);
      if (wrap) {
        deg = std::fmod(deg, 360.0);
        if (deg < 0.0) deg += 360.0;
      } else if (deg < 0.0 || deg >= 360.0) {
        throw DataError("circular column '" + name + "' has value outside [0, 360)");
      }
      const double rad = deg * std::numbers::pi / 180.0;
      X(i, out) = std::sin(rad);
      X(i, out + 1) = std::cos(rad);
    }
    names.push_back(name + "_sin");
    names.push_back(name + "_cos");
    out += 2;
  }
  return data.with_covariates(std::move(X), std::move(names));
}

/// Model-space transformation recorded at training time so that new data can
/// be mapped identically before prediction.
struct Preprocessing {
  std::vector<std::string> raw_covariates;
  std::vector<std::string> circular;
  StandardizationParams standardization;

  TimeSeriesDataset apply(const TimeSeriesDataset &raw) const {
    TimeSeriesDataset out = raw;
    for (const auto &c : circular) out = embed_circular(out, c);
    return out.with_covariates(standardization.apply(out.X()), out.covariate_names());
  }

  static std::pair<TimeSeriesDataset, Preprocessing> fit(const TimeSeriesDataset &raw,
                                                         std::vector<std::string> circular) {
    TimeSeriesDataset out = raw;
    for (const auto &c : circular) out = embed_circular(out, c);
    auto [std_data, params] = standardize(out);
    return {std::move(std_data),
            Preprocessing{raw.covariate_names(), std::move(circular), std::move(params)}};
  }
};

// ---------------------------------------------------------------------------
// Temporal partitions

/// Splits [t_min, t_max] into T1 = {t <= first_end}, T2 = {first_end < t <=
/// second_end}, T3 = {t > second_end}.
struct TemporalPartition {
  TimeIndex first_end = 0;
  TimeIndex second_end = 0;

  int span_of(TimeIndex t) const { return t <= first_end ? 0 : (t <= second_end ? 1 : 2); }
};

struct TemporalSplit {
  TimeSeriesDataset train;
  TimeSeriesDataset test2;
  TimeSeriesDataset test3;
};

inline TemporalSplit partition_temporal(const TimeSeriesDataset &data,
                                        const TemporalPartition &boundaries) {
  const TimeIndex tmin = data.t().front();
  const TimeIndex tmax = data.t().back();
  if (boundaries.first_end < tmin || boundaries.second_end > tmax ||
      boundaries.first_end >= boundaries.second_end) {
    throw DataError("partition boundaries must satisfy t_min <= b1 < b2 <= t_max");
  }
  std::vector<Eigen::Index> rows[3];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    rows[boundaries.span_of(data.t()[static_cast<std::size_t>(i)])].push_back(i);
  }
  for (int s = 0; s < 3; ++s) {
    if (rows[s].empty()) {
      throw DataError("temporal partition T" + std::to_string(s + 1) + " is empty");
    }
  }
  return {data.subset(rows[0]), data.subset(rows[1]), data.subset(rows[2])};
}

/// Boundaries placed at the given fractions of the observed time range.
inline TemporalPartition partition_by_fractions(const TimeSeriesDataset &data, double first,
                                                double second) {
  if (!(0.0 < first && first < second && second < 1.0)) {
    throw ConfigError("partition fractions must satisfy 0 < f1 < f2 < 1");
  }
  const auto tmin = static_cast<double>(data.t().front());
  const auto span = static_cast<double>(data.t().back() - data.t().front());
  return {static_cast<TimeIndex>(std::floor(tmin + first * span)),
          static_cast<TimeIndex>(std::floor(tmin + second * span))};
}

// ---------------------------------------------------------------------------
// Timestamps

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::int64_t epoch_seconds(int y, unsigned mo, unsigned d, int h, int mi, int sec) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec;
}

}  // namespace detail

/// Parses "YYYY-MM-DD[ T]HH:MM[:SS]", "YYYY-MM-DD" or "M/D/YYYY H:MM[:SS]" into
/// seconds since the Unix epoch (UTC, no zone handling).
inline std::optional<std::int64_t> parse_timestamp_seconds(std::string_view text) {
  const std::string s(detail::trim(text));
  struct Fields {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  };
  // Each parser returns true only when the whole string was consumed.
  int used = 0;
  auto whole = [&](int matched, int expected) {
    return matched == expected && used == static_cast<int>(s.size());
  };
  Fields f;
  char sep = ' ';
  bool ok = false;
  if (whole(std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d%n", &f.y, &f.mo, &f.d, &sep, &f.h,
                        &f.mi, &f.sec, &used),
            7)) {
    ok = true;
  } else if (f = Fields{}, used = 0;
             whole(std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d%n", &f.y, &f.mo, &f.d, &sep, &f.h,
                               &f.mi, &used),
                   6)) {
    ok = true;
  } else if (f = Fields{}, used = 0, sep = ' ';
             whole(std::sscanf(s.c_str(), "%d-%d-%d%n", &f.y, &f.mo, &f.d, &used), 3)) {
    ok = true;
  } else if (f = Fields{}, used = 0;
             whole(std::sscanf(s.c_str(), "%d/%d/%d %d:%d:%d%n", &f.mo, &f.d, &f.y, &f.h,
                               &f.mi, &f.sec, &used),
                   6)) {
    ok = true;
  } else if (f = Fields{}, used = 0;
             whole(std::sscanf(s.c_str(), "%d/%d/%d %d:%d%n", &f.mo, &f.d, &f.y, &f.h, &f.mi,
                               &used),
                   5)) {
    ok = true;
  }
  if (!ok || (sep != 'T' && sep != ' ')) return std::nullopt;
  if (f.mo < 1 || f.d < 1 || f.h < 0 || f.h > 23 || f.mi < 0 || f.mi > 59 || f.sec < 0 ||
      f.sec > 60) {
    return std::nullopt;
  }
  return detail::epoch_seconds(f.y, static_cast<unsigned>(f.mo), static_cast<unsigned>(f.d),
                               f.h, f.mi, f.sec);
}

/// Integer tokens are taken as slot indices directly; timestamps are divided
/// by the sampling interval and rounded to the nearest slot.
inline std::optional<TimeIndex> parse_time_slot(std::string_view text,
                                                std::int64_t interval_seconds) {
  if (auto v = detail::parse_int(text)) return *v;
  if (auto secs = parse_timestamp_seconds(text)) {
    const auto half = interval_seconds / 2;
    const auto shifted = *secs + half;
    auto q = shifted / interval_seconds;
    if (shifted % interval_seconds < 0) --q;
    return q;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
  std::string response;
  std::string time;
  std::vector<std::string> covariates;  // empty: every other column
  char delimiter = ',';
  std::int64_t interval_seconds = 600;
  bool response_optional = false;  // prediction inputs may omit it (y reads as 0)
};

struct IngestResult {
  TimeSeriesDataset data;
  std::size_t dropped_rows = 0;
  bool has_response = true;
};

namespace detail {

inline std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  bool quoted = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') quoted = !quoted;
    if (c == delim && !quoted) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(line.substr(start));
  return out;
}

}  // namespace detail

inline IngestResult ingest_csv(const std::string &path, const CsvSchema &schema) {
  if (schema.response.empty() || schema.time.empty()) {
    throw ConfigError("schema needs a response and a time column");
  }
  if (schema.interval_seconds <= 0) throw ConfigError("sampling interval must be positive");
  std::ifstream in(path);
  if (!in) throw DataError("cannot read file '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw DataError("file '" + path + "' has no header row");
  if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header.erase(0, 3);
  const auto fields = detail::split_line(header, schema.delimiter);
  auto find = [&](const std::string &name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (detail::trim(fields[i]) == name) return i;
    }
    return std::nullopt;
  };
  auto column = [&](const std::string &name) -> std::size_t {
    if (auto i = find(name)) return *i;
    throw DataError("unknown column '" + name + "' in '" + path + "'");
  };
  const auto y_found = find(schema.response);
  const bool has_response = y_found.has_value();
  if (!has_response && !schema.response_optional) column(schema.response);
  const auto y_col = y_found.value_or(0);
  const auto t_col = column(schema.time);
  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names = schema.covariates;
  if (x_names.empty()) {
    for (const auto &f : fields) {
      const std::string name(detail::trim(f));
      if (name != schema.response && name != schema.time) x_names.push_back(name);
    }
    if (x_names.empty()) throw DataError("no covariate columns in '" + path + "'");
  }
  for (const auto &c : x_names) x_cols.push_back(column(c));

  struct Row {
    TimeIndex t;
    double y;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  std::size_t dropped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_line(line, schema.delimiter);
    auto cell = [&](std::size_t i) { return i < cells.size() ? cells[i] : std::string_view{}; };
    Row row;
    auto t = parse_time_slot(cell(t_col), schema.interval_seconds);
    auto y = has_response ? detail::parse_double(cell(y_col)) : std::optional<double>(0.0);
    bool ok = t.has_value() && y.has_value();
    for (std::size_t k = 0; ok && k < x_cols.size(); ++k) {
      auto v = detail::parse_double(cell(x_cols[k]));
      if (!v) ok = false;
      else row.x.push_back(*v);
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    row.t = *t;
    row.y = *y;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no usable rows in '" + path + "'");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row &a, const Row &b) { return a.t < b.t; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].t == rows[i - 1].t) {
      throw DataError("non-monotone time: duplicate time slot " + std::to_string(rows[i].t));
    }
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(x_cols.size());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X(n, d);
  std::vector<TimeIndex> t(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto &r = rows[static_cast<std::size_t>(i)];
    y(i) = r.y;
    t[static_cast<std::size_t>(i)] = r.t;
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = r.x[static_cast<std::size_t>(j)];
  }
  return {TimeSeriesDataset(std::move(y), std::move(X), std::move(t), std::move(x_names), {}, {},
                            schema.response),
          dropped, has_response};
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes time (integer slot), response and model covariates with round-trip
/// precision. Re-ingesting with integer time recovers the numeric payload.
inline void export_csv(const TimeSeriesDataset &data, const std::string &path,
                       char delimiter = ',') {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file '" + path + "'");
  out << "time" << delimiter << data.response_name();
  for (const auto &n : data.covariate_names()) out << delimiter << n;
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << data.t()[static_cast<std::size_t>(i)] << delimiter << format_double(data.y()(i));
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      out << delimiter << format_double(data.X()(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace tempgp
