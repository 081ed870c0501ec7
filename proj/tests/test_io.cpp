#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "support.hpp"
#include "tempgp/io.hpp"

using namespace tempgp;

namespace {

TempGPModel small_model(std::uint64_t seed, bool with_pre) {
  std::mt19937_64 rng(seed);
  auto raw = testkit::random_dataset(80, 3, rng);
  std::optional<Preprocessing> pre;
  TimeSeriesDataset train = raw;
  if (with_pre) {
    auto [d, p] = Preprocessing::fit(raw, {});
    train = std::move(d);
    pre = std::move(p);
  }
  FHyperparams p;
  p.beta = 0.3;
  p.sigma_f_sq = 1.7;
  p.theta = Eigen::Vector3d(0.9, 1.3, 2.1);
  p.sigma_u_sq = 0.2;
  return TempGPModel::build(train, p, 4, FitConfig{}, pre);
}

}  // namespace

TEST(ModelIO, RoundTripIsBitIdentical) {
  for (bool with_pre : {false, true}) {
    const auto m = small_model(3, with_pre);
    std::stringstream ss;
    write_model(ss, m);
    const auto back = read_model(ss);
    EXPECT_EQ(back.thinning_number(), 4u);
    EXPECT_EQ(back.preprocessing().has_value(), with_pre);
    EXPECT_EQ(back.train().covariate_names(), m.train().covariate_names());
    EXPECT_TRUE((back.alpha().array() == m.alpha().array()).all());
    EXPECT_TRUE((back.residuals().array() == m.residuals().array()).all());

    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::Vector3d x(normal(rng), normal(rng), normal(rng));
      EXPECT_EQ(back.predict_f(x), m.predict_f(x));
    }
    for (TimeIndex t : {TimeIndex{7}, TimeIndex{100}, TimeIndex{400}}) {
      FitConfig cfg;
      cfg.g_cache = false;
      EXPECT_EQ(fit_predict_g(back, t, cfg).value, fit_predict_g(m, t, cfg).value);
    }
  }
}

TEST(ModelIO, SaveLoadThroughFile) {
  const auto m = small_model(5, true);
  const auto path = (testkit::temp_dir("io") / "model.txt").string();
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_EQ(back.params().beta, m.params().beta);
  EXPECT_TRUE((back.params().theta.array() == m.params().theta.array()).all());
  EXPECT_EQ(back.preprocessing()->standardization.sd, m.preprocessing()->standardization.sd);
  EXPECT_THROW(load_model(path + ".missing"), DataError);
}

TEST(ModelIO, MalformedFilesRaiseDataError) {
  const auto m = small_model(6, false);
  std::stringstream ss;
  write_model(ss, m);
  const std::string good = ss.str();

  auto parse = [](const std::string &text) {
    std::istringstream in(text);
    return read_model(in);
  };
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("not-a-model 1\n"), DataError);
  EXPECT_THROW(parse("tempgp-model 99\n"), DataError);
  // Truncated in the rows table.
  EXPECT_THROW(parse(good.substr(0, good.size() / 2)), DataError);
  // Corrupt a hex float.
  std::string bad = good;
  const auto pos = bad.find("beta ");
  bad.replace(pos + 5, 4, "zz!!");
  EXPECT_THROW(parse(bad), DataError);
  // Missing end marker.
  EXPECT_THROW(parse(good.substr(0, good.rfind("end"))), DataError);
}
