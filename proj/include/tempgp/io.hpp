#pragma once

// Text persistence for trained models.
//
// Format "tempgp-model 1": one "key value..." record per line, then a "rows"
// table with one training row per line (t, y, x_1..x_d, alpha, residual).
// Floating-point values are written as C99 hex floats so a reload is
// bit-exact. Names must not contain whitespace.
//
//   tempgp-model 1
//   kernel Matern32
//   time_kernel Matern32
//   T 9
//   approximate_alpha 0
//   beta <a>
//   sigma_f_sq <a>
//   sigma_u_sq <a>
//   theta <a> ... (d values)
//   response y
//   covariates name_1 ... name_d
//   preprocessing 0 | 1
//   [raw_covariates name ...]     only when preprocessing is 1
//   [circular name ...]
//   [standardization_mean <a> ...]
//   [standardization_sd <a> ...]
//   rows N
//   <t> <y> <x_1> ... <x_d> <alpha> <residual>
//   end

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tempgp/dataset.hpp"
#include "tempgp/error.hpp"
#include "tempgp/tempgp.hpp"

namespace tempgp {

inline constexpr const char *kModelMagic = "tempgp-model";
inline constexpr int kModelVersion = 1;

namespace detail {

inline std::string hexf(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexf(const std::string &s) {
  char *end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError("model file: bad number '" + s + "'");
  return v;
}

struct ModelReader {
  std::istream &in;
  std::size_t line_no = 0;

  std::vector<std::string> record(const std::string &key) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::vector<std::string> tok;
      for (std::string w; ss >> w;) tok.push_back(w);
      if (tok.empty() || tok[0] != key) {
        throw DataError("model file line " + std::to_string(line_no) + ": expected '" + key + "'");
      }
      tok.erase(tok.begin());
      return tok;
    }
    throw DataError("model file truncated before '" + key + "'");
  }

  std::string single(const std::string &key) {
    auto tok = record(key);
    if (tok.size() != 1) throw DataError("model file: '" + key + "' takes one value");
    return tok[0];
  }

  Eigen::VectorXd vec(const std::string &key, std::size_t expected) {
    auto tok = record(key);
    if (tok.size() != expected) throw DataError("model file: '" + key + "' has wrong length");
    Eigen::VectorXd v(static_cast<Eigen::Index>(expected));
    for (std::size_t i = 0; i < expected; ++i) v(static_cast<Eigen::Index>(i)) = parse_hexf(tok[i]);
    return v;
  }
};

template <typename Range>
void write_list(std::ostream &out, const char *key, const Range &values) {
  out << key;
  for (const auto &v : values) out << ' ' << v;
  out << '\n';
}

inline void write_vec(std::ostream &out, const char *key, const Eigen::VectorXd &v) {
  out << key;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << hexf(v(i));
  out << '\n';
}

}  // namespace detail

inline void write_model(std::ostream &out, const TempGPModel &m) {
  const auto &p = m.params();
  const auto &tr = m.train();
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "kernel " << to_string(m.kernel()) << '\n';
  out << "time_kernel " << to_string(m.time_kernel()) << '\n';
  out << "T " << m.thinning_number() << '\n';
  out << "approximate_alpha " << (m.approximate_alpha() ? 1 : 0) << '\n';
  out << "beta " << detail::hexf(p.beta) << '\n';
  out << "sigma_f_sq " << detail::hexf(p.sigma_f_sq) << '\n';
  out << "sigma_u_sq " << detail::hexf(p.sigma_u_sq) << '\n';
  detail::write_vec(out, "theta", p.theta);
  out << "response " << tr.response_name() << '\n';
  detail::write_list(out, "covariates", tr.covariate_names());
  const auto &pre = m.preprocessing();
  out << "preprocessing " << (pre ? 1 : 0) << '\n';
  if (pre) {
    detail::write_list(out, "raw_covariates", pre->raw_covariates);
    detail::write_list(out, "circular", pre->circular);
    detail::write_vec(out, "standardization_mean", pre->standardization.mean);
    detail::write_vec(out, "standardization_sd", pre->standardization.sd);
  }
  out << "rows " << tr.size() << '\n';
  for (Eigen::Index i = 0; i < tr.size(); ++i) {
    out << tr.t()[static_cast<std::size_t>(i)] << ' ' << detail::hexf(tr.y()(i));
    for (Eigen::Index j = 0; j < tr.dim(); ++j) out << ' ' << detail::hexf(tr.X()(i, j));
    out << ' ' << detail::hexf(m.alpha()(i)) << ' ' << detail::hexf(m.residuals()(i)) << '\n';
  }
  out << "end\n";
}

inline TempGPModel read_model(std::istream &in) {
  detail::ModelReader r{in};
  const auto version = r.single(kModelMagic);
  if (version != std::to_string(kModelVersion)) {
    throw DataError("unsupported model file version '" + version + "'");
  }
  const auto kernel = parse_kernel_family(r.single("kernel"));
  const auto time_kernel = parse_kernel_family(r.single("time_kernel"));
  const auto T = static_cast<std::size_t>(std::stoull(r.single("T")));
  const bool approximate = r.single("approximate_alpha") == "1";
  FHyperparams p;
  p.beta = detail::parse_hexf(r.single("beta"));
  p.sigma_f_sq = detail::parse_hexf(r.single("sigma_f_sq"));
  p.sigma_u_sq = detail::parse_hexf(r.single("sigma_u_sq"));
  auto theta_tok = r.record("theta");
  const auto d = theta_tok.size();
  if (d == 0) throw DataError("model file: empty theta");
  p.theta.resize(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) p.theta(static_cast<Eigen::Index>(j)) = detail::parse_hexf(theta_tok[j]);
  const auto response = r.single("response");
  auto names = r.record("covariates");
  if (names.size() != d) throw DataError("model file: covariate count does not match theta");

  std::optional<Preprocessing> pre;
  if (r.single("preprocessing") == "1") {
    Preprocessing pp;
    pp.raw_covariates = r.record("raw_covariates");
    pp.circular = r.record("circular");
    pp.standardization.mean = r.vec("standardization_mean", d);
    pp.standardization.sd = r.vec("standardization_sd", d);
    pre = std::move(pp);
  }
  const auto n = static_cast<Eigen::Index>(std::stoll(r.single("rows")));
  if (n < 1) throw DataError("model file: no training rows");
  Eigen::VectorXd y(n), alpha(n), res(n);
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(d));
  std::vector<TimeIndex> t(static_cast<std::size_t>(n));
  std::string line;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw DataError("model file truncated in rows");
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string w; ss >> w;) tok.push_back(w);
    if (tok.size() != d + 4) throw DataError("model file: malformed row " + std::to_string(i));
    t[static_cast<std::size_t>(i)] = std::stoll(tok[0]);
    y(i) = detail::parse_hexf(tok[1]);
    for (std::size_t j = 0; j < d; ++j) X(i, static_cast<Eigen::Index>(j)) = detail::parse_hexf(tok[2 + j]);
    alpha(i) = detail::parse_hexf(tok[d + 2]);
    res(i) = detail::parse_hexf(tok[d + 3]);
  }
  r.record("end");
  TimeSeriesDataset train(std::move(y), std::move(X), std::move(t), std::move(names), {}, {},
                          response);
  return TempGPModel(std::move(train), std::move(p), kernel, time_kernel, T, std::move(alpha),
                     std::move(res), approximate, std::move(pre));
}

inline void save_model(const TempGPModel &m, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  write_model(out, m);
  if (!out) throw DataError("failed writing model file '" + path + "'");
}

inline TempGPModel load_model(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read model file '" + path + "'");
  return read_model(in);
}

}  // namespace tempgp
