#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ctrkit/analysis.h"
#include "ctrkit/gradcheck.h"
#include "test_support.h"

namespace ctrkit {
namespace {

TEST(MeanEmbedding, Examples) {
  EXPECT_EQ(mean_embedding(Tensor::matrix({{1, 0}, {0, 1}})), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(mean_embedding(Tensor::matrix({{0.3, -2}})), (std::vector<double>{0.3, -2}));
  EXPECT_EQ(mean_embedding(Tensor::matrix({{1, 1}, {2, 2}, {3, 3}})), (std::vector<double>{2, 2}));
  EXPECT_THROW(mean_embedding(Tensor(0, 2)), Error);
}

ModelSpec spec_of(Family f, std::size_t k) {
  ModelSpec s;
  s.family = f;
  s.k = k;
  return s;
}

TEST(Heatmap, FmExample) {
  Model m(spec_of(Family::kFm, 2), {2, 1, 1}, 1);
  m.params().at("embed.0").value = Tensor::matrix({{2, 0}, {0, 0}});
  m.params().at("embed.1").value = Tensor::matrix({{0, 1}});
  m.params().at("embed.2").value = Tensor::matrix({{1, 1}});
  const Heatmap h = heatmap(m, {"WEEKDAY", "GENDER", "CITY"});
  EXPECT_EQ(h.family, "fm");
  EXPECT_EQ(h.values, Tensor::matrix({{0, 0, 1}, {0, 0, 1}, {1, 1, 0}}));
  for (auto& p : m.params()) p->value.fill(0);
  EXPECT_EQ(heatmap(m).values, Tensor(3, 3));
  EXPECT_EQ(heatmap(m).field_names, (std::vector<std::string>{"f0", "f1", "f2"}));
}

TEST(Heatmap, FfmUsesFieldAwareCenters) {
  const std::vector<std::size_t> sizes{3, 2, 4};
  Model m(spec_of(Family::kFfm, 2), sizes, 2);
  testing::randomize(m.params(), 1, 5);
  const Heatmap h = heatmap(m);
  // Center of field i's block aimed at field j.
  const auto center = [&](std::size_t i, std::size_t j) {
    const Tensor& t = m.params().at(Model::ffm_name(i)).value;
    const std::size_t block = j < i ? j : j - 1;
    std::vector<double> c(2);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t s = 0; s < 2; ++s) c[s] += t(r, block * 2 + s) / t.rows();
    }
    return c;
  };
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(h.values(i, i), 0);
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      const auto a = center(i, j), b = center(j, i);
      EXPECT_NEAR(h.values(i, j), a[0] * b[0] + a[1] * b[1], 1e-12);
      EXPECT_NEAR(h.values(i, j), h.values(j, i), 1e-12);
    }
  }
}

TEST(Heatmap, KfmWithIdentityKernelsEqualsFm) {
  const std::vector<std::size_t> sizes{3, 2, 4, 5};
  Model fm(spec_of(Family::kFm, 3), sizes, 1);
  Model kfm(spec_of(Family::kKfm, 3), sizes, 2);
  testing::randomize(fm.params(), 1, 6);
  for (auto& p : fm.params()) kfm.params().at(p->name).value = p->value;
  const Tensor a = heatmap(fm).values, b = heatmap(kfm).values;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  kfm.params().at(Model::kernel_name(0, 2)).value = Tensor::matrix({{0, 2, 0}, {0, 0, 0}, {0, 0, 0}});
  const auto c0 = mean_embedding(kfm.params().at("embed.0").value);
  const auto c2 = mean_embedding(kfm.params().at("embed.2").value);
  const Tensor k = heatmap(kfm).values;
  EXPECT_NEAR(k(0, 2), 2 * c0[0] * c2[1], 1e-12);
  EXPECT_EQ(k(0, 2), k(2, 0));
}

TEST(Heatmap, UnsupportedFamily) {
  Model m(spec_of(Family::kLr, 2), {2, 2}, 1);
  EXPECT_THROW(heatmap(m), Error);
  Model fm(spec_of(Family::kFm, 2), {2, 2}, 1);
  EXPECT_THROW(heatmap(fm, {"only-one"}), Error);
}

TEST(Heatmap, CsvAndImage) {
  Heatmap h{"fm", {"a", "b"}, Tensor::matrix({{0, 0.5}, {0.5, 0}})};
  std::ostringstream csv;
  write_heatmap_csv(csv, h);
  EXPECT_EQ(csv.str(), "a,b\n0,0.5\n0.5,0\n");
  std::ostringstream pgm;
  const auto [lo, hi] = write_heatmap_pgm(pgm, h);
  EXPECT_EQ(lo, 0);
  EXPECT_EQ(hi, 0.5);
  const std::string bytes = pgm.str();
  ASSERT_EQ(bytes.substr(0, 11), "P5\n2 2\n255\n");
  ASSERT_EQ(bytes.size(), 15u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 255);
}

TEST(Kl, Properties) {
  const std::vector<double> q{0.1, 0.2, 0.7};
  EXPECT_EQ(smoothed_kl(q, q), 0);
  const std::vector<double> p{0.0, 0.5, 0.5};
  EXPECT_GT(smoothed_kl(q, p), 0);
  EXPECT_TRUE(std::isfinite(smoothed_kl(q, p)));
  EXPECT_THROW(smoothed_kl(q, std::vector<double>{1, 0}), Error);
}

TEST(DropoutBias, Trends) {
  DropoutBiasConfig c;
  c.batch_sizes = {100, 300, 1000};
  c.trials = 30;
  c.seed = 5;
  const auto rows = dropout_bias_experiment(c);
  ASSERT_EQ(rows.size(), 6u);
  const auto kl = [&](std::size_t bs, double rate) {
    for (const auto& r : rows) {
      if (r.batch_size == bs && r.rate == rate) return r.mean_kl;
    }
    ADD_FAILURE() << "missing row";
    return 0.0;
  };
  EXPECT_GT(kl(100, 0), kl(300, 0));
  EXPECT_GT(kl(300, 0), kl(1000, 0));
  for (std::size_t bs : c.batch_sizes) EXPECT_GT(kl(bs, 0.5), kl(bs, 0));
  for (const auto& r : rows) EXPECT_GE(r.mean_kl, 0);
  c.rates = {1.0};
  EXPECT_THROW(dropout_bias_experiment(c), Error);
}

TEST(DropoutBias, LargeBatchesConverge) {
  DropoutBiasConfig c;
  c.categories = 20;
  c.values_per_sample = 2;
  c.batch_sizes = {50, 50000};
  c.rates = {0};
  c.trials = 5;
  const auto rows = dropout_bias_experiment(c);
  EXPECT_LT(rows[1].mean_kl, 1e-3);
  EXPECT_LT(rows[1].mean_kl, rows[0].mean_kl / 100);
}

TEST(Poly2, ScoreMatchesDefinition) {
  Poly2Options o;
  o.num_fields = 3;
  o.total_categories = 12;
  const Poly2Spec s = make_poly2(o, 3);
  ASSERT_EQ(s.v.size(), 3u);
  std::size_t total = 0;
  for (auto n : s.field_sizes) {
    EXPECT_GE(n, 1u);
    EXPECT_LE(n, 8u);
    total += n;
  }
  EXPECT_EQ(s.w.size(), total);
  const std::vector<std::uint32_t> x{0, static_cast<std::uint32_t>(s.field_sizes[1] - 1), 0};
  const std::size_t off1 = s.field_sizes[0], off2 = off1 + s.field_sizes[1];
  const double expected = s.w[x[0]] + s.w[off1 + x[1]] + s.w[off2 + x[2]] + s.v[0](x[0], x[1]) +
                          s.v[1](x[0], x[2]) + s.v[2](x[1], x[2]) + s.b;
  EXPECT_NEAR(s.score(x), expected, 1e-12);
}

TEST(Poly2, DegenerateLabelsRejected) {
  Poly2Options o;
  o.num_fields = 3;
  o.total_categories = 12;
  Poly2Spec s = make_poly2(o, 3);
  std::fill(s.w.begin(), s.w.end(), 0.0);
  for (auto& t : s.v) t.fill(0);
  s.b = 0;
  s.noise_std = 0;
  s.threshold = 0;
  EXPECT_EQ(s.score(std::vector<std::uint32_t>{0, 0, 0}), 0);
  EXPECT_THROW(poly2_generate(s, 100, 1), Error);  // every label is 1
  s = make_poly2(o, 3);
  s.noise_std = 0;
  s.threshold = 1e9;
  EXPECT_THROW(poly2_generate(s, 100, 1), Error);  // every label is 0
}

TEST(Poly2, BalancedAtAutoThreshold) {
  Poly2Options o;
  o.num_fields = 40;
  o.total_categories = 400;
  const Poly2Spec s = make_poly2(o, 11);
  const Dataset d = poly2_generate(s, 100000, 12);
  EXPECT_NEAR(d.positive_ratio(), 0.5, 0.02);
  d.validate(s.field_sizes);
}

TEST(Poly2, UnbalancedTarget) {
  Poly2Options o;
  o.positive_ratio = 0.05;
  const Poly2Spec s = make_poly2(o, 2);
  EXPECT_NEAR(poly2_generate(s, 50000, 3).positive_ratio(), 0.05, 0.01);
}

TEST(Poly2, DeterministicPerSeed) {
  Poly2Options o;
  o.num_fields = 5;
  o.total_categories = 30;
  const auto bytes = [&](std::uint64_t spec_seed, std::uint64_t data_seed) {
    std::ostringstream out;
    poly2_generate(make_poly2(o, spec_seed), 500, data_seed).save(out);
    return out.str();
  };
  EXPECT_EQ(bytes(1, 2), bytes(1, 2));
  EXPECT_NE(bytes(1, 2), bytes(1, 3));
  EXPECT_NE(bytes(1, 2), bytes(4, 2));
}

TEST(Poly2Regressor, RecoversItsOwnFunction) {
  Poly2Options o;
  o.num_fields = 4;
  o.total_categories = 24;
  o.noise_scale = 0;
  const Poly2Spec s = make_poly2(o, 21);
  const Dataset train_data = poly2_generate(s, 20000, 22);
  const Dataset valid = poly2_generate(s, 5000, 23);
  Poly2Regressor reg(s.field_sizes);
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 100;
  c.optimizer.lr = 0.02;
  c.keep_best = false;
  train(reg, train_data, nullptr, c);
  EXPECT_GT(evaluate(reg, valid, 1000).auc, 0.99);
}

TEST(Poly2Regressor, ScoreEqualsGeneratorWhenWeightsCopied) {
  Poly2Options o;
  o.num_fields = 3;
  o.total_categories = 12;
  const Poly2Spec s = make_poly2(o, 5);
  Poly2Regressor reg(s.field_sizes);
  reg.params().at("linear.w").value = Tensor(s.w.size(), 1, s.w);
  std::vector<double> flat;
  for (const auto& t : s.v) flat.insert(flat.end(), t.values().begin(), t.values().end());
  reg.params().at("poly2.v").value = Tensor(flat.size(), 1, flat);
  reg.params().at("linear.b").value = Tensor::row({s.b});
  const Dataset d = poly2_generate(s, 50, 6);
  const auto logits = reg.logits(EncodedBatch(d));
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<std::uint32_t> x;
    for (std::size_t f = 0; f < 3; ++f) x.push_back(d.values(i, f)[0]);
    EXPECT_NEAR(logits[i], s.score(x), 1e-12);
  }
}

TEST(OneHotNetworks, GradientsMatchFiniteDifferences) {
  const std::vector<std::size_t> sizes{3, 4, 2};
  const Dataset data = testing::random_dataset(sizes, 8, 3);
  const EncodedBatch batch(data);
  const auto labels = batch.labels();
  OneHotDnn dnn(sizes, {4, 3}, Activation::kTanh, 2);
  Poly2Regressor reg(sizes);
  testing::randomize(reg.params(), 0.5, 4);
  for (Network* net : std::initializer_list<Network*>{&dnn, &reg}) {
    const auto report = grad_check(
        [&](Graph& g) { return g.logloss(net->forward(g, batch), labels); }, net->params(), 1e-5,
        1e-4);
    EXPECT_TRUE(report.passed) << net->name() << " " << report.worst_parameter << " "
                               << report.max_relative_error;
  }
}

TEST(Poly2Experiment, ProducesNamedCurves) {
  Poly2ExperimentConfig c;
  c.data.num_fields = 4;
  c.data.total_categories = 20;
  c.train_size = 2000;
  c.valid_size = 500;
  c.dnn_shapes = {{8, 8}, {16}};
  c.train.batch_size = 100;
  c.train.eval_every = 10;
  const auto curves = poly2_experiment(c);
  ASSERT_EQ(curves.size(), 3u);
  EXPECT_EQ(curves[0].name, "dnn-8x8");
  EXPECT_EQ(curves[1].name, "dnn-16");
  EXPECT_EQ(curves[2].name, "poly2");
  for (const auto& curve : curves) {
    ASSERT_FALSE(curve.auc.empty());
    EXPECT_EQ(curve.final_auc, curve.auc.back().second);
    EXPECT_EQ(curve.auc.back().first, 20u);
  }
  std::ostringstream out;
  write_curve_csv(out, curves[2]);
  EXPECT_EQ(out.str().rfind("# poly2\nstep,auc\n", 0), 0u);
}

}  // namespace
}  // namespace ctrkit
