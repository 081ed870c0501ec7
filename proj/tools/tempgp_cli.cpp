// tempgp: command-line driver for ingesting, simulating, training and
// evaluating temporal GP models.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "tempgp/harness.hpp"
#include "tempgp/io.hpp"

namespace {

using namespace tempgp;

/// Config assembled from defaults, then --config, then flags, then --set.
struct ConfigSource {
  std::string file;
  std::vector<std::pair<std::string, std::string>> flags;
  std::vector<std::string> assignments;

  Config build() const {
    Config c;
    if (!file.empty()) c.merge_file(file);
    for (const auto &[k, v] : flags) c.set(k, v);
    for (const auto &a : assignments) c.set_assignment(a);
    return c;
  }
};

void flag(CLI::App *sub, ConfigSource &src, const std::string &name, const std::string &key,
          const std::string &help) {
  sub->add_option_function<std::string>(
      name, [&src, key](const std::string &v) { src.flags.emplace_back(key, v); }, help);
}

void common_options(CLI::App *sub, ConfigSource &src) {
  sub->add_option("--config", src.file, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", src.assignments, "override any config key (key=value)");
  flag(sub, src, "--data", "data.path", "input CSV (omit to simulate)");
  flag(sub, src, "--response", "data.response", "response column");
  flag(sub, src, "--time", "data.time", "time column (ISO-8601 or integer slot)");
  flag(sub, src, "--covariates", "data.covariates", "comma-separated covariate columns");
  flag(sub, src, "--circular", "data.circular", "covariates in degrees to embed on the circle");
  flag(sub, src, "--delimiter", "data.delimiter", "CSV delimiter");
  flag(sub, src, "--interval", "data.interval", "sampling interval in seconds");
  flag(sub, src, "--preset", "sim.preset", "simulation preset: temporal | fig2");
  flag(sub, src, "--n", "sim.n", "simulated sample size");
  flag(sub, src, "--seed", "seed", "random seed");
  flag(sub, src, "--kernel", "kernel.family", "covariate kernel family");
  flag(sub, src, "--override-T", "thinning.T", "thinning number, or 'adaptive'");
  flag(sub, src, "--max-lag", "thinning.max_lag", "largest PACF lag considered");
  flag(sub, src, "--restarts", "optimizer.restarts", "optimizer starts");
  flag(sub, src, "--out-dir", "output.dir", "directory for report files");
}

std::string truth_path(const std::string &out) {
  std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + ".truth.csv")).string();
}

int cmd_ingest(const Config &c, const std::string &out) {
  if (c.get("data.path").empty()) throw ConfigError("ingest needs --data");
  CsvSchema schema;
  schema.response = c.get("data.response");
  schema.time = c.get("data.time");
  schema.covariates = c.get_list("data.covariates");
  schema.delimiter = c.get("data.delimiter").at(0);
  schema.interval_seconds = c.get_int("data.interval");
  const auto res = ingest_csv(c.get("data.path"), schema);
  std::cout << "rows " << res.data.size() << "  dropped " << res.dropped_rows << '\n';
  if (!out.empty()) export_csv(res.data, out);
  return exit_code::kSuccess;
}

int cmd_simulate(const Config &c, const std::string &out) {
  const auto seed = static_cast<std::uint64_t>(c.get_int("seed"));
  SimOutput sim;
  const auto &preset = c.get("sim.preset");
  if (preset == "temporal") {
    auto sc = temporal_preset(c.get_int("sim.n"), seed);
    sc.sigma_g_sq = c.get_double("sim.sigma_g_sq");
    sc.phi = c.get_double("sim.phi");
    sc.sigma_eps_sq = c.get_double("sim.sigma_eps_sq");
    sc.missing_fraction = c.get_double("sim.missing");
    sim = simulate_temporal(sc);
  } else if (preset == "fig2") {
    Fig2Config fc;
    fc.N = c.get_int("sim.n");
    fc.seed = seed;
    sim = simulate_fig2(fc);
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  export_csv(sim.data, out);
  std::ofstream truth(truth_path(out));
  if (!truth) throw DataError("cannot write '" + truth_path(out) + "'");
  truth << "time,f,g,eps\n";
  for (Eigen::Index i = 0; i < sim.data.size(); ++i) {
    truth << sim.data.t()[static_cast<std::size_t>(i)] << ',' << format_double(sim.f(i)) << ','
          << format_double(sim.g(i)) << ',' << format_double(sim.eps(i)) << '\n';
  }
  std::cout << "wrote " << sim.data.size() << " rows to " << out << " and " << truth_path(out)
            << '\n';
  return exit_code::kSuccess;
}

int cmd_thin(const Config &c) {
  const auto data = load_dataset(c, static_cast<std::uint64_t>(c.get_int("seed")));
  const auto [model_space, pre] = Preprocessing::fit(data, c.get_list("data.circular"));
  const auto max_lag = static_cast<std::size_t>(c.get_int("thinning.max_lag"));
  const auto sel = select_thinning(model_space, max_lag);
  for (std::size_t j = 0; j < sel.per_covariate.size(); ++j) {
    std::cout << "pacf cutoff " << model_space.covariate_names()[j] << ' ' << sel.per_covariate[j]
              << '\n';
  }
  std::cout << "adaptive T " << sel.T << '\n';
  const auto T = resolve_thinning(c, model_space);
  const auto bins = thin_dataset(static_cast<std::size_t>(model_space.size()), T);
  std::size_t lo = bins.bins.front().size(), hi = lo;
  for (const auto &b : bins.bins) {
    lo = std::min(lo, b.size());
    hi = std::max(hi, b.size());
  }
  std::cout << "T " << T << "  bins " << bins.bins.size() << "  bin size " << lo << ".." << hi
            << '\n';
  return exit_code::kSuccess;
}

int cmd_train(const Config &c, const std::string &model_name, const std::string &model_out) {
  const auto e = prepare_data(c, static_cast<std::uint64_t>(c.get_int("seed")));
  const auto fc = fit_config_from(c);
  const auto max_lag = static_cast<std::size_t>(c.get_int("thinning.max_lag"));
  std::optional<TempGPModel> model;
  if (model_name == "tempgp" || model_name == "reggp") {
    const std::size_t T = model_name == "reggp" ? 1 : resolve_thinning(c, e.train);
    auto res = train_tempgp(e.train, fc, T, max_lag, e.preprocessing);
    const auto &d = res.diagnostics;
    std::cout << "termination " << to_string(d.termination) << "  iterations " << d.iterations
              << "  objective " << d.objective << "  gradient " << d.gradient_norm << '\n';
    model.emplace(std::move(res.model));
  } else if (model_name == "jointgp") {
    const auto fit = fit_joint(e.train, fc);
    model.emplace(TempGPModel::build(e.train, fit.f_params(), 1, fc, e.preprocessing));
  } else {
    throw ConfigError("train supports tempgp, reggp and jointgp, not '" + model_name + "'");
  }
  const auto &p = model->params();
  std::cout << "T " << model->thinning_number() << "  beta " << p.beta << "  sigma_f_sq "
            << p.sigma_f_sq << "  sigma_u_sq " << p.sigma_u_sq << "  theta "
            << p.theta.transpose() << '\n';
  save_model(*model, model_out);
  return exit_code::kSuccess;
}

int cmd_predict(const Config &c, const std::string &model_file, const std::string &out,
                bool with_g) {
  const auto model = load_model(model_file);
  if (c.get("data.path").empty()) throw ConfigError("predict needs --data");
  const auto &pre = model.preprocessing();
  CsvSchema schema;
  schema.response = model.train().response_name();
  schema.time = c.get("data.time");
  schema.covariates = pre ? pre->raw_covariates : model.train().covariate_names();
  schema.delimiter = c.get("data.delimiter").at(0);
  schema.interval_seconds = c.get_int("data.interval");
  schema.response_optional = true;
  const auto in = ingest_csv(c.get("data.path"), schema);
  const auto data = pre ? pre->apply(in.data) : in.data;
  const Eigen::VectorXd f = model.predict_f_batch(data.X());
  GPredictor gp(model, fit_config_from(c));
  std::ofstream o(out);
  if (!o) throw DataError("cannot write '" + out + "'");
  o << "time,f_hat" << (with_g ? ",g_hat,y_hat" : "") << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto t = data.t()[static_cast<std::size_t>(i)];
    o << t << ',' << format_double(f(i));
    if (with_g) {
      const double g = gp.fit_predict(t).value;
      o << ',' << format_double(g) << ',' << format_double(f(i) + g);
    }
    o << '\n';
  }
  if (in.has_response) std::cout << "rmse(f_hat) " << rmse(f, in.data.y()) << '\n';
  std::cout << "wrote " << data.size() << " predictions to " << out << '\n';
  return exit_code::kSuccess;
}

int run(int argc, char **argv) {
  CLI::App app{"Temporal Gaussian process regression with thinning-based inference"};
  app.require_subcommand(1);
  ConfigSource src;
  std::string out, model_out, model_file, model_name = "tempgp";
  bool with_g = false;

  auto *ingest = app.add_subcommand("ingest", "parse a CSV and write it in canonical form");
  common_options(ingest, src);
  ingest->add_option("--out", out, "canonical CSV output");

  auto *simulate = app.add_subcommand("simulate", "write a synthetic dataset and its truth");
  common_options(simulate, src);
  simulate->add_option("--out", out, "output CSV (truth goes to <stem>.truth.csv)")->required();

  auto *thin = app.add_subcommand("thin", "PACF cutoffs, thinning number and bins");
  common_options(thin, src);

  auto *train = app.add_subcommand("train", "fit a model on T1 and save it");
  common_options(train, src);
  train->add_option("--model", model_name, "tempgp | reggp | jointgp");
  train->add_option("--model-out", model_out, "model file")->required();

  auto *predict = app.add_subcommand("predict", "predict f (and optionally g) for a CSV");
  common_options(predict, src);
  predict->add_option("--model", model_file, "model file from train")->required();
  predict->add_option("--out", out, "prediction CSV")->required();
  predict->add_flag("--with-g", with_g, "add the local temporal component");

  auto *evaluate = app.add_subcommand("evaluate", "train on T1, score on T2 and T3");
  common_options(evaluate, src);
  flag(evaluate, src, "--model", "models", "comma list: binning,knn,tsknn,tempgp,reggp,jointgp");
  flag(evaluate, src, "--cv", "knn.cv", "kNN cross-validation: random | timesplit");

  auto *sweep = app.add_subcommand("sweep-thinning", "relative RMSE against thinning number");
  common_options(sweep, src);
  flag(sweep, src, "--T-list", "sweep.T_list", "comma list of T values and 'adaptive'");

  auto *joint = app.add_subcommand("compare-joint", "joint likelihood fit against thinning");
  common_options(joint, src);
  flag(joint, src, "--replicates", "compare.replicates", "simulated replicates");
  flag(joint, src, "--predictor", "joint.predictor", "plugin | posterior");

  auto *repro = app.add_subcommand("reproduce-paper", "four-turbine checks (needs the data)");
  common_options(repro, src);
  flag(repro, src, "--dataset-dir", "reproduce.dir", "directory with WT1.csv .. WT4.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::kSuccess : exit_code::kConfig;
  }

  const Config c = src.build();
  if (ingest->parsed()) return cmd_ingest(c, out);
  if (simulate->parsed()) return cmd_simulate(c, out);
  if (thin->parsed()) return cmd_thin(c);
  if (train->parsed()) return cmd_train(c, model_name, model_out);
  if (predict->parsed()) return cmd_predict(c, model_file, out, with_g);
  if (evaluate->parsed() || sweep->parsed()) {
    const auto report = evaluate->parsed() ? run_experiment(c) : sweep_thinning(c);
    std::cout << format_report_table(report);
    write_outputs(report, c.get("output.dir"));
    for (const auto &row : report.rows) {
      if (row.status != "ok") std::cerr << row.model << ' ' << row.label << ": " << row.status << '\n';
    }
    return exit_code::kSuccess;
  }
  if (joint->parsed()) {
    const auto report = compare_joint(c);
    std::cout << format_joint_table(report);
    write_outputs(report, c.get("output.dir"));
    return exit_code::kSuccess;
  }
  if (repro->parsed()) {
    const auto r = reproduce_turbines(c);
    if (r.skipped) {
      std::cout << "skipped: " << r.reason << '\n';
      return exit_code::kSuccess;
    }
    std::cout << r.log;
    return exit_code::kSuccess;
  }
  return exit_code::kConfig;
}

}  // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return exit_code::kData;
  } catch (const NumericalError &e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_code::kNumerical;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::kData;
  }
}
