#include <gsl/gsl_integration.h>
#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>

#include "test_util.hpp"
#include "viba/error.hpp"
#include "viba/gradient_check.hpp"
#include "viba/iba/attribution.hpp"
#include "viba/iba/bottleneck.hpp"
#include "viba/log.hpp"
#include "viba/nn/architectures.hpp"
#include "viba/nn/train.hpp"
#include "viba/rng.hpp"
#include "viba/synth/synth.hpp"
#include "viba/video/pipeline.hpp"

using namespace viba;
using namespace viba::iba;
using viba::test::random_tensor;
using viba::test::TempDir;

namespace {

struct KlParams {
  double mp, sp, mq, sq;
};

double kl_integrand(double x, void* p) {
  const auto* k = static_cast<const KlParams*>(p);
  const double zp = (x - k->mp) / k->sp, zq = (x - k->mq) / k->sq;
  const double log_p = -0.5 * zp * zp - std::log(k->sp), log_q = -0.5 * zq * zq - std::log(k->sq);
  return std::exp(log_p) / std::sqrt(2.0 * std::numbers::pi) * (log_p - log_q);
}

// KL(P(Z|R) || Q(Z)) in bits by adaptive quadrature over +-14 sd of P.
double kl_bits_numeric(double lambda, double r, double mu, double sigma) {
  KlParams k{lambda * r + (1.0 - lambda) * mu, (1.0 - lambda) * sigma, mu, sigma};
  gsl_integration_workspace* ws = gsl_integration_workspace_alloc(2000);
  gsl_function f{&kl_integrand, &k};
  double result = 0.0, err = 0.0;
  gsl_integration_qag(&f, k.mp - 14.0 * k.sp, k.mp + 14.0 * k.sp, 1e-14, 1e-12, 2000, GSL_INTEG_GAUSS61, ws, &result,
                      &err);
  gsl_integration_workspace_free(ws);
  return result / std::numbers::ln2;
}

ActivationStats simple_stats(std::size_t channels, float mean = 0.0f, float sd = 1.0f) {
  ActivationStats s;
  s.mean.assign(channels, mean);
  s.std.assign(channels, sd);
  s.sample_count = 1;
  return s;
}

Tensor frame_tensor(const synth::LabeledSample& s) { return video::normalize_for_model(s.frames[0]); }

// Toy-xception trained briefly on a small synthetic set, shared by the suite.
class TrainedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    synth::SynthConfig cfg;
    cfg.count = 96;
    cfg.seed = 21;
    samples_ = new std::vector<synth::LabeledSample>(synth::gen_spatial_dataset(cfg));
    nn::Dataset train, val;
    for (std::size_t i = 0; i < samples_->size(); ++i)
      (i < 80 ? train : val).push_back({frame_tensor((*samples_)[i]), (*samples_)[i].label});
    model_ = new nn::Model(nn::Model::build(nn::toy_xception_spec(), 21));
    nn::TrainConfig tc;
    tc.max_epochs = 4;
    tc.patience = 3;
    tc.seed = 21;
    nn::train_model(*model_, train, val, tc);
    std::vector<Tensor> calib;
    for (const auto& s : *samples_) calib.push_back(frame_tensor(s));
    ScopedWarningCapture quiet;
    stats_ = new std::map<std::string, ActivationStats>();
    for (const auto& id : model_->spec().injection_points) (*stats_)[id] = estimate_stats(*model_, id, calib);
  }
  static void TearDownTestSuite() {
    delete samples_;
    delete model_;
    delete stats_;
  }

  static const nn::Model& model() { return *model_; }
  static const ActivationStats& stats(const std::string& id = "block2") { return stats_->at(id); }
  static Tensor frame(std::size_t i) { return frame_tensor((*samples_)[i]); }
  static const synth::LabeledSample& sample(std::size_t i) { return (*samples_)[i]; }

  static std::vector<synth::LabeledSample>* samples_;
  static nn::Model* model_;
  static std::map<std::string, ActivationStats>* stats_;
};

std::vector<synth::LabeledSample>* TrainedModel::samples_ = nullptr;
nn::Model* TrainedModel::model_ = nullptr;
std::map<std::string, ActivationStats>* TrainedModel::stats_ = nullptr;

}  // namespace

TEST(Capacity, ZeroLambdaIsExactlyZero) {
  for (double z : {-3.0, 0.0, 0.5, 10.0}) EXPECT_EQ(capacity_bits(0.0, z), 0.0);
}

TEST(Capacity, HalfLambdaAtMean) {
  const double expected = (std::log(2.0) - 0.375) / std::log(2.0);
  EXPECT_NEAR(capacity_bits(0.5, 0.0), expected, 1e-12);
  EXPECT_NEAR(capacity_bits(0.5, 0.0), 0.4590, 5e-5);
  EXPECT_NEAR(kl_bits_numeric(0.5, 1.0, 1.0, 2.0), expected, 1e-9);
}

TEST(Capacity, MatchesNumericalKl) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lam(0.0, 0.99), rr(-3.0, 3.0), mu(-1.0, 1.0), sd(0.1, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double l = lam(rng), r = rr(rng), m = mu(rng), s = sd(rng);
    EXPECT_NEAR(capacity_bits(l, (r - m) / s), kl_bits_numeric(l, r, m, s), 1e-6) << l << " " << r << " " << m << " " << s;
  }
}

TEST(Capacity, MonotoneInLambdaAtMean) {
  double prev = capacity_bits(0.0, 0.0);
  for (int i = 1; i <= 990; ++i) {
    const double c = capacity_bits(i / 1000.0, 0.0);
    EXPECT_GE(c, prev) << i;
    prev = c;
  }
}

TEST(Capacity, NonNegativeAndClamped) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lam(0.0, 1.0), z(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(capacity_bits(lam(rng), z(rng)), 0.0);
  EXPECT_TRUE(std::isfinite(capacity_bits(1.0, 0.0)));
  EXPECT_EQ(capacity_bits(1.0, 0.3), capacity_bits(1.0 - 1e-6, 0.3));
  EXPECT_THROW(capacity_bits(-0.1, 0.0), Error);
}

TEST(Capacity, TensorFormUsesPerChannelStats) {
  ActivationStats st = simple_stats(2);
  st.mean = {1.0f, -2.0f};
  st.std = {0.5f, 2.0f};
  const Tensor r({1, 2, 1, 2}, {1.5f, 1.0f, -2.0f, 2.0f});
  const Tensor lam({2, 1, 2}, {0.3f, 0.6f, 0.9f, 0.0f});
  const Tensor cap = capacity(lam, r, st);
  EXPECT_NEAR(cap[0], capacity_bits(0.3f, 1.0), 1e-6);
  EXPECT_NEAR(cap[1], capacity_bits(0.6f, 0.0), 1e-6);
  EXPECT_NEAR(cap[2], capacity_bits(0.9f, 0.0), 1e-6);
  EXPECT_EQ(cap[3], 0.0f);
  EXPECT_THROW(capacity(Tensor({2, 2, 1}), r, st), Error);
}

TEST(Stats, IdenticalFramesGiveTheFloor) {
  const Tensor a({2, 3, 2, 2}, 0.7f);
  const ActivationStats s = stats_from_activations({a, a}, 0.1f);
  ASSERT_EQ(s.channels(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_FLOAT_EQ(s.mean[c], 0.7f);
    EXPECT_FLOAT_EQ(s.std[c], 0.1f);
  }
  EXPECT_EQ(s.sample_count, 4u);
}

TEST(Stats, MatchesDirectMeanAndStd) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({1, 2, 3, 3}, rng, -2.0f, 2.0f), b = random_tensor({1, 2, 3, 3}, rng, -2.0f, 2.0f);
  const ActivationStats s = stats_from_activations({a, b}, 1e-3f);
  for (std::size_t c = 0; c < 2; ++c) {
    long double sum = 0, sq = 0;
    for (const Tensor* t : {&a, &b})
      for (std::size_t i = 0; i < 9; ++i) sum += (*t)[c * 9 + i];
    const long double m = sum / 18;
    for (const Tensor* t : {&a, &b})
      for (std::size_t i = 0; i < 9; ++i) sq += ((*t)[c * 9 + i] - m) * ((*t)[c * 9 + i] - m);
    EXPECT_NEAR(s.mean[c], (double)m, 1e-6);
    EXPECT_NEAR(s.std[c], std::sqrt((double)(sq / 18)), 1e-6);
  }
}

TEST(Stats, Errors) {
  EXPECT_THROW(stats_from_activations({}, 0.1f), Error);
  EXPECT_THROW(stats_from_activations({Tensor({1, 2, 2, 2})}, 0.0f), Error);
  const nn::Model m = nn::Model::build(nn::toy_xception_spec(), 1);
  EXPECT_THROW(estimate_stats(m, "block2", {}), Error);
}

TEST(Stats, FileRoundTrip) {
  TempDir dir("stats");
  std::mt19937_64 rng(4);
  const ActivationStats s = stats_from_activations({random_tensor({3, 5, 2, 2}, rng)}, 0.05f, "block2");
  write_stats(dir / "s.txt", s);
  const ActivationStats back = read_stats(dir / "s.txt");
  EXPECT_EQ(back.layer_id, "block2");
  EXPECT_EQ(back.mean, s.mean);
  EXPECT_EQ(back.std, s.std);
  EXPECT_EQ(back.sample_count, s.sample_count);
  std::ofstream(dir / "bad.txt") << "layer = x\nsamples = 1\nchannel,mean,std\n0,abc,1\n";
  EXPECT_THROW(read_stats(dir / "bad.txt"), Error);
}

TEST(SampleBottleneck, PassThroughLimit) {
  std::mt19937_64 rng(5);
  const Tensor r = random_tensor({1, 2, 3, 3}, rng);
  const Tensor z = sample_bottleneck(r, LambdaField::constant({2, 3, 3}, 40.0f), simple_stats(2), rng);
  for (std::size_t i = 0; i < r.numel(); ++i) EXPECT_NEAR(z[i], r[i], 1e-6);
}

TEST(SampleBottleneck, FullNoiseLimitIgnoresR) {
  std::mt19937_64 rng(6);
  const Tensor r1 = random_tensor({1, 2, 3, 3}, rng), r2 = random_tensor({1, 2, 3, 3}, rng, 5.0f, 9.0f);
  const auto field = LambdaField::constant({2, 3, 3}, -40.0f);
  std::mt19937_64 a(99), b(99), c(99);
  const Tensor z1 = sample_bottleneck(r1, field, simple_stats(2), a);
  const Tensor z2 = sample_bottleneck(r2, field, simple_stats(2), b);
  EXPECT_EQ(z1, z2);
  const Tensor eps = draw_noise({2, 3, 3}, simple_stats(2), 1, c);
  EXPECT_EQ(z1.data().size(), eps.data().size());
  for (std::size_t i = 0; i < eps.numel(); ++i) EXPECT_EQ(z1[i], eps[i]);
}

TEST(SampleBottleneck, HalfLambdaComposition) {
  std::mt19937_64 rng(7);
  const Tensor r = random_tensor({1, 2, 2, 2}, rng);
  ActivationStats st = simple_stats(2);
  st.mean = {0.5f, -1.0f};
  st.std = {2.0f, 0.3f};
  std::mt19937_64 a(5), b(5);
  const Tensor z = sample_bottleneck(r, LambdaField::constant({2, 2, 2}, 0.0f), st, a);
  const Tensor eps = draw_noise({2, 2, 2}, st, 1, b);
  for (std::size_t i = 0; i < r.numel(); ++i) EXPECT_NEAR(z[i], 0.5 * r[i] + 0.5 * eps[i], 1e-6);
  EXPECT_THROW(sample_bottleneck(r, LambdaField::constant({2, 2, 3}, 0.0f), st, a), Error);
}

TEST(SampleBottleneck, NoiseHasChannelStatistics) {
  ActivationStats st = simple_stats(2);
  st.mean = {3.0f, -1.0f};
  st.std = {0.5f, 2.0f};
  std::mt19937_64 rng(8);
  const Tensor eps = draw_noise({2, 20, 20}, st, 50, rng);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, sq = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < 50; ++k)
      for (std::size_t i = 0; i < 400; ++i, ++n) {
        const double v = eps[(k * 2 + c) * 400 + i];
        s += v;
        sq += v * v;
      }
    const double m = s / n;
    EXPECT_NEAR(m, st.mean[c], 0.02 * st.std[c] * 3);
    EXPECT_NEAR(std::sqrt(sq / n - m * m), st.std[c], 0.02 * st.std[c]);
  }
}

TEST(AttributionMap, ZeroLambdaGivesZeroMap) {
  std::mt19937_64 rng(9);
  const Tensor r = random_tensor({1, 3, 4, 4}, rng);
  const CapacityMap m = attribution_map(Tensor({3, 4, 4}), r, simple_stats(3), 16, 16);
  for (float v : m.map.values) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(m.total_bits, 0.0);
}

TEST(AttributionMap, SumsEqualChannelSumOracle) {
  std::mt19937_64 rng(10);
  const Tensor r = random_tensor({1, 4, 5, 3}, rng);
  Tensor lam = random_tensor({4, 5, 3}, rng, 0.0f, 0.95f);
  const ActivationStats st = simple_stats(4, 0.1f, 0.7f);
  const CapacityMap m = attribution_map(lam, r, st, 12, 20);
  EXPECT_EQ(m.raw.width, 3u);
  EXPECT_EQ(m.raw.height, 5u);
  EXPECT_EQ(m.map.width, 12u);
  EXPECT_EQ(m.map.height, 20u);
  double total = 0.0;
  for (std::size_t i = 0; i < 15; ++i) {
    double cell = 0.0;
    for (std::size_t c = 0; c < 4; ++c) cell += capacity_bits(lam[c * 15 + i], (r[c * 15 + i] - 0.1) / 0.7);
    EXPECT_NEAR(m.raw.values[i], cell, 1e-5);
    total += cell;
  }
  EXPECT_NEAR(m.total_bits, total, 1e-5);
}

TEST(AttributionMap, SingleCellConcentratesInItsFootprint) {
  const std::size_t cells = 4, side = 32, scale = side / cells;
  for (std::size_t cy = 0; cy < cells; ++cy)
    for (std::size_t cx = 0; cx < cells; ++cx) {
      Tensor lam({2, cells, cells});
      lam[cy * cells + cx] = 0.8f;
      const Tensor r({1, 2, cells, cells}, 0.0f);
      const CapacityMap m = attribution_map(lam, r, simple_stats(2), side, side);
      const auto it = std::max_element(m.map.values.begin(), m.map.values.end());
      const std::size_t idx = static_cast<std::size_t>(it - m.map.values.begin());
      const std::size_t x = idx % side, y = idx / side;
      EXPECT_EQ(x / scale, cx);
      EXPECT_EQ(y / scale, cy);
    }
}

TEST(Overlay, Examples) {
  std::mt19937_64 rng(11);
  const RgbImage frame = viba::test::random_rgb(2, 2, rng);
  Plane hot(2, 2);
  hot.at(1, 0) = 1.0f;  // row 0, column 1
  EXPECT_EQ(overlay_heatmap(frame, hot, 0.0), frame);

  const RgbImage flat = overlay_heatmap(frame, Plane(2, 2, 0.3f), 1.0);
  const auto floor = colormap(0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(flat.pixels[3 * i + c], floor[c]);

  const RgbImage o = overlay_heatmap(frame, hot, 1.0);
  const auto top = colormap(1.0);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(o.at(1, 0, c), top[c]);
  EXPECT_GT(top[0], top[2]);
  EXPECT_LT(floor[0], floor[2]);
  EXPECT_THROW(overlay_heatmap(frame, hot, 1.5), Error);
}

TEST(CapacityFile, RoundTripAndLayout) {
  TempDir dir("vcap");
  CapacityMap m;
  m.map = Plane(3, 2);
  for (std::size_t i = 0; i < 6; ++i) m.map.values[i] = 0.125f * static_cast<float>(i);
  m.total_bits = 1.875;
  write_capacity(dir / "m.vcap", m);
  const std::string bytes = viba::test::read_file(dir / "m.vcap");
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 6 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "VCAP");
  const CapacityMap back = read_capacity(dir / "m.vcap");
  EXPECT_EQ(back.map, m.map);
  EXPECT_EQ(back.total_bits, m.total_bits);
  std::ofstream(dir / "t.vcap", std::ios::binary).write(bytes.data(), 30);
  EXPECT_THROW(read_capacity(dir / "t.vcap"), Error);
}

TEST(CapacityFile, PgmExportWithMeta) {
  TempDir dir("vcap_pgm");
  Plane p(2, 1);
  p.values = {0.5f, 2.5f};
  export_capacity_pgm(dir / "m.pgm", p);
  const GrayImage g = read_pgm(dir / "m.pgm");
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 255}));
  const std::string meta = viba::test::read_file(dir / "m.meta");
  EXPECT_NE(meta.find("min = 0.5"), std::string::npos) << meta;
  EXPECT_NE(meta.find("max = 2.5"), std::string::npos) << meta;
}

TEST(BottleneckConfig, DefaultsAndValidation) {
  const BottleneckConfig c;
  EXPECT_EQ(c.beta, 10.0);
  EXPECT_EQ(c.steps, 10u);
  EXPECT_EQ(c.step_size, 1.0);
  EXPECT_EQ(c.noise_samples, 10u);
  EXPECT_FLOAT_EQ(c.sigma_floor, 0.1f);
  EXPECT_FLOAT_EQ(c.initial_alpha, 5.0f);
  EXPECT_EQ(nn::default_injection_point(nn::kToyXception), "block2");
  EXPECT_EQ(nn::default_injection_point(nn::kToyVgg), "layer9");
  BottleneckConfig bad;
  bad.beta = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = BottleneckConfig{};
  bad.steps = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = BottleneckConfig{};
  bad.noise_samples = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST_F(TrainedModel, StatsChannelCountMatchesLayer) {
  EXPECT_EQ(stats("block2").channels(), model().output_shape_of("block2")[0]);
  for (float s : stats("block2").std) EXPECT_GE(s, 0.1f);
}

TEST_F(TrainedModel, FewCalibrationFramesWarn) {
  ScopedWarningCapture w;
  estimate_stats(model(), "block2", {frame(0), frame(1)});
  ASSERT_EQ(w.messages().size(), 1u);
}

TEST_F(TrainedModel, PassThroughInjectionKeepsLogits) {
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor x = frame(i);
    const Tensor plain = model().logits(x.reshaped({1, 3, 64, 64}));
    const Shape s = model().output_shape_of("block2");
    std::mt19937_64 rng(1);
    const Tensor inj = injected_logits(model(), x, "block2", Tensor(s, 1.0f), stats(), 3, rng);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(inj[k * 2 + j], plain[j], 1e-6);
  }
}

TEST_F(TrainedModel, FullNoiseInjectionIndependentOfInput) {
  const Shape s = model().output_shape_of("block2");
  std::mt19937_64 a(3), b(3);
  const Tensor l1 = injected_logits(model(), frame(0), "block2", Tensor(s, 0.0f), stats(), 2, a);
  const Tensor l2 = injected_logits(model(), frame(1), "block2", Tensor(s, 0.0f), stats(), 2, b);
  EXPECT_EQ(l1, l2);
}

TEST_F(TrainedModel, ObjectiveGradientMatchesFiniteDifferences) {
  const Tensor x = frame(2);
  const std::size_t li = model().spec().index_of("block2");
  const Tensor r = model().forward_capture(x.reshaped({1, 3, 64, 64}), {"block2"}).second.at("block2");
  const Shape s = model().output_shape_of("block2");
  std::mt19937_64 rng(4);
  const Tensor eps = draw_noise(s, stats(), 4, rng);
  std::mt19937_64 arng(5);
  const Tensor alpha = random_tensor(s, arng, -3.0f, 3.0f);
  const double err = gradient_check(
      [&](Tape& t, Var a) { return bottleneck_objective(t, model(), li, a, r, eps, 1, stats(), 10.0); }, alpha,
      {1e-3f, 64, 6});
  EXPECT_LT(err, 1e-3);
}

TEST_F(TrainedModel, HugeBetaCrushesInformation) {
  BottleneckConfig c;
  c.beta = 1e6;
  c.seed = 1;
  std::mt19937_64 rng(1);
  const OptimizeResult r = optimize_lambda(model(), frame(3), 0, stats(), c, rng);
  const Tensor lam = r.field.lambda();
  double mean = 0.0;
  for (float v : lam.data()) mean += v;
  EXPECT_LT(mean / lam.numel(), 0.05);
}

TEST_F(TrainedModel, TinyBetaReducesCrossEntropy) {
  BottleneckConfig c;
  c.beta = 1e-12;
  std::mt19937_64 rng(2);
  const OptimizeResult r = optimize_lambda(model(), frame(4), 1, stats(), c, rng);
  ASSERT_EQ(r.trace.size(), c.steps + 1);
  EXPECT_LE(r.trace.back(), r.trace.front());
}

TEST_F(TrainedModel, DefaultOptimizationIsFiniteAndImproves) {
  for (std::size_t i = 0; i < 3; ++i) {
    const FrameAttribution a = attribute_frame(model(), frame(i), BottleneckConfig{}, stats(), i);
    for (double v : a.trace) EXPECT_TRUE(std::isfinite(v));
    EXPECT_LT(a.trace.back(), a.trace.front());
    for (float v : a.map.map.values) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0f);
    }
    EXPECT_EQ(a.map.map.width, 64u);
    EXPECT_NEAR(a.injected_probabilities[0] + a.injected_probabilities[1], 1.0, 1e-5);
  }
}

TEST_F(TrainedModel, AttributionIsDeterministic) {
  const FrameAttribution a = attribute_frame(model(), frame(5), BottleneckConfig{}, stats(), 7);
  const FrameAttribution b = attribute_frame(model(), frame(5), BottleneckConfig{}, stats(), 7);
  EXPECT_EQ(a.map, b.map);
  EXPECT_EQ(a.trace, b.trace);
}

TEST_F(TrainedModel, SequenceIndependentOfWorkerCount) {
  std::vector<Tensor> frames;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < 4; ++i) {
    frames.push_back(frame(i));
    ids.push_back(i);
  }
  const auto one = attribute_sequence(model(), frames, ids, BottleneckConfig{}, stats(), 1);
  const auto four = attribute_sequence(model(), frames, ids, BottleneckConfig{}, stats(), 4);
  omp_set_num_threads(1);
  ASSERT_EQ(one.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(one[i].map, four[i].map);
    EXPECT_EQ(one[i].map.frame_id, i);
  }
  const FrameAttribution single = attribute_frame(model(), frames[2], BottleneckConfig{}, stats(), 2);
  EXPECT_EQ(single.map, one[2].map);
  EXPECT_THROW(attribute_sequence(model(), {}, {}, BottleneckConfig{}, stats()), Error);
}

TEST_F(TrainedModel, StatsLayerMustMatchBottleneck) {
  BottleneckConfig c;
  c.layer = "block3";
  EXPECT_THROW(attribute_frame(model(), frame(0), c, stats("block2")), Error);
}

TEST_F(TrainedModel, LayerSweep) {
  const std::vector<std::string> layers{"block1", "block2", "block3", "post_conv3"};
  const auto sweep = layer_sweep(model(), frame(6), layers, BottleneckConfig{}, *stats_);
  ASSERT_EQ(sweep.size(), 4u);
  std::size_t prev_h = 1000, prev_w = 1000;
  for (const auto& [id, a] : sweep) {
    for (float v : a.map.map.values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(a.map.map.width, 64u);
    EXPECT_LE(a.map.raw.height, prev_h) << id;
    EXPECT_LE(a.map.raw.width, prev_w) << id;
    const Shape s = model().output_shape_of(id);
    EXPECT_EQ(a.map.raw.height, s[1]);
    prev_h = a.map.raw.height;
    prev_w = a.map.raw.width;
  }
  BottleneckConfig c;
  c.layer = "block3";
  const auto one = layer_sweep(model(), frame(6), {"block3"}, BottleneckConfig{}, *stats_);
  EXPECT_EQ(one[0].second.map, attribute_frame(model(), frame(6), c, stats("block3")).map);
  EXPECT_THROW(layer_sweep(model(), frame(6), {"nope"}, BottleneckConfig{}, *stats_), Error);
}
