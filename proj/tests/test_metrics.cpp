#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "viba/error.hpp"
#include "viba/log.hpp"
#include "viba/metrics/agreement.hpp"
#include "viba/metrics/calibration.hpp"
#include "viba/metrics/masks.hpp"

using namespace viba;
using namespace viba::metrics;
using viba::test::TempDir;

namespace {

BinaryMask mask_from(std::size_t w, std::size_t h, std::initializer_list<std::pair<std::size_t, std::size_t>> on) {
  BinaryMask m(w, h);
  for (auto [x, y] : on) m.set(x, y, true);
  return m;
}

BinaryMask random_mask(std::size_t w, std::size_t h, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution d(p);
  BinaryMask m(w, h);
  for (auto& b : m.bits) b = d(rng) ? 1 : 0;
  return m;
}

double brute_iou(const BinaryMask& a, const BinaryMask& b) {
  int inter = 0, uni = 0;
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 0; x < a.width; ++x) {
      inter += a.at(x, y) && b.at(x, y);
      uni += a.at(x, y) || b.at(x, y);
    }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double brute_rpi(const std::vector<BinaryMask>& ms) {
  std::vector<std::optional<std::pair<double, double>>> c;
  for (const auto& m : ms) {
    double sx = 0, sy = 0;
    int n = 0;
    for (std::size_t y = 0; y < m.height; ++y)
      for (std::size_t x = 0; x < m.width; ++x)
        if (m.at(x, y)) {
          sx += x;
          sy += y;
          ++n;
        }
    c.push_back(n ? std::optional(std::make_pair(sx / n, sy / n)) : std::nullopt);
  }
  double sum = 0;
  int pairs = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c[i] && c[i - 1]) {
      sum += std::hypot(c[i]->first - c[i - 1]->first, c[i]->second - c[i - 1]->second);
      ++pairs;
    }
  const double diag = std::hypot(double(ms[0].width), double(ms[0].height));
  return pairs ? sum / pairs / diag : 0.0;
}

// Bins are (b/B, (b+1)/B]; a confidence of exactly 0 goes to the first bin.
double brute_ece(const std::vector<double>& conf, const std::vector<int>& pred, const std::vector<int>& lab,
                 std::size_t bins) {
  double total = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = double(b) / bins, hi = double(b + 1) / bins;
    double cs = 0, acc = 0;
    int n = 0;
    for (std::size_t i = 0; i < conf.size(); ++i)
      if ((conf[i] > lo && conf[i] <= hi) || (b == 0 && conf[i] == 0.0)) {
        cs += conf[i];
        acc += pred[i] == lab[i];
        ++n;
      }
    if (n) total += double(n) / conf.size() * std::abs(acc / n - cs / n);
  }
  return total;
}

}  // namespace

TEST(Binarize, HundredDistinctValues) {
  std::mt19937_64 rng(1);
  Plane p(10, 10);
  for (std::size_t i = 0; i < 100; ++i) p.values[i] = static_cast<float>(i) * 0.37f + 1.0f;
  std::shuffle(p.values.begin(), p.values.end(), rng);
  const BinaryMask m = binarize_map(p);
  EXPECT_TRUE(m.count() == 15 || m.count() == 16) << m.count();
  std::vector<float> sorted = p.values;
  std::sort(sorted.begin(), sorted.end());
  const float thr = sorted[static_cast<std::size_t>(std::floor(0.85 * 99))];
  EXPECT_EQ(quantile_threshold(p, 0.85), thr);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(m.bits[i] != 0, p.values[i] >= thr);
}

TEST(Binarize, DegenerateMaps) {
  EXPECT_EQ(binarize_map(Plane(5, 4, 0.7f)).count(), 20u);
  std::mt19937_64 rng(2);
  Plane p(6, 6);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& v : p.values) v = d(rng);
  EXPECT_EQ(binarize_map(p, 1e-9).count(), 36u);
  EXPECT_THROW(binarize_map(p, 0.0), Error);
  EXPECT_THROW(binarize_map(p, 1.0), Error);
}

TEST(Iou, Examples) {
  const BinaryMask a = mask_from(2, 2, {{0, 0}, {1, 0}}), b = mask_from(2, 2, {{1, 0}, {1, 1}});
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, mask_from(2, 2, {{0, 1}})), 0.0);
  EXPECT_EQ(iou(BinaryMask(2, 2), BinaryMask(2, 2)), 1.0);
  EXPECT_THROW(iou(a, BinaryMask(3, 2)), Error);
}

TEST(Iou, RandomFixturesMatchBruteForce) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const std::size_t w = 2 + t % 7, h = 3 + t % 5;
    std::vector<BinaryMask> ms;
    for (int i = 0; i < 4; ++i) ms.push_back(random_mask(w, h, 0.1 + 0.2 * (t % 4), rng));
    double consecutive = 0, pairwise = 0;
    int np = 0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      for (std::size_t j = i + 1; j < ms.size(); ++j, ++np) {
        const double v = iou(ms[i], ms[j]);
        EXPECT_NEAR(v, brute_iou(ms[i], ms[j]), 1e-9);
        EXPECT_EQ(v, iou(ms[j], ms[i]));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        pairwise += v;
      }
      if (i) consecutive += brute_iou(ms[i - 1], ms[i]);
    }
    EXPECT_NEAR(mean_consecutive_iou(ms), consecutive / 3, 1e-9);
    EXPECT_NEAR(mean_pairwise_iou(ms), pairwise / np, 1e-9);
  }
  EXPECT_EQ(mean_pairwise_iou({BinaryMask(2, 2)}), 1.0);
}

TEST(Tcs, Examples) {
  EXPECT_EQ(tcs({BinaryMask(3, 3, true), BinaryMask(3, 3, true)}), 1.0);
  EXPECT_EQ(tcs({BinaryMask(3, 3), BinaryMask(3, 3)}), 0.0);
  EXPECT_DOUBLE_EQ(tcs({mask_from(2, 2, {{0, 0}}), mask_from(2, 2, {{0, 0}, {1, 0}, {0, 1}})}), 0.5);
  EXPECT_THROW(tcs({}), Error);
  EXPECT_THROW(tcs({BinaryMask(2, 2), BinaryMask(3, 2)}), Error);
}

TEST(Tcs, LinearInTruePixelCounts) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const std::size_t w = 3 + t % 4, h = 2 + t % 6, n = 1 + t % 5;
    std::vector<BinaryMask> ms;
    double oracle = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ms.push_back(random_mask(w, h, 0.4, rng));
      int c = 0;
      for (auto b : ms.back().bits) c += b;
      oracle += double(c) / double(w * h);
    }
    EXPECT_NEAR(tcs(ms), oracle / n, 1e-9);
    // Superposition: turning on one extra pixel in one frame adds 1/(N W H).
    const double before = tcs(ms);
    auto it = std::find(ms[0].bits.begin(), ms[0].bits.end(), 0);
    if (it != ms[0].bits.end()) {
      *it = 1;
      EXPECT_NEAR(tcs(ms) - before, 1.0 / double(n * w * h), 1e-12);
    }
  }
}

TEST(Rpi, Examples) {
  const BinaryMask s = mask_from(10, 10, {{2, 3}, {4, 5}});
  EXPECT_EQ(rpi({s, s, s}), 0.0);
  EXPECT_NEAR(rpi({mask_from(10, 10, {{1, 1}}), mask_from(10, 10, {{4, 5}})}), 5.0 / std::sqrt(200.0), 1e-12);
  EXPECT_NEAR(rpi({mask_from(10, 10, {{0, 0}}), mask_from(10, 10, {{1, 0}}), mask_from(10, 10, {{1, 1}})}),
              1.0 / std::sqrt(200.0), 1e-12);
  EXPECT_NEAR(1.0 / std::sqrt(200.0), 0.07071, 1e-5);
  EXPECT_EQ(rpi({BinaryMask(4, 4), BinaryMask(4, 4)}), 0.0);
  EXPECT_THROW(rpi({s}), Error);
}

TEST(Rpi, SkipsPairsWithEmptyMasks) {
  const BinaryMask a = mask_from(10, 10, {{0, 0}}), b = mask_from(10, 10, {{3, 4}});
  EXPECT_NEAR(rpi({a, BinaryMask(10, 10), b, a}), 5.0 / std::sqrt(200.0), 1e-12);
}

TEST(Rpi, RandomFixturesAndTranslationInvariance) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t w = 6 + t % 5, h = 5 + t % 4;
    std::vector<BinaryMask> ms, shifted;
    for (int i = 0; i < 5; ++i) {
      BinaryMask m = random_mask(w, h, t % 3 == 0 ? 0.05 : 0.3, rng);
      // Keep the last column and row empty so a (1, 1) shift stays inside the frame.
      for (std::size_t y = 0; y < h; ++y) m.set(w - 1, y, false);
      for (std::size_t x = 0; x < w; ++x) m.set(x, h - 1, false);
      BinaryMask s(w, h);
      for (std::size_t y = 0; y + 1 < h; ++y)
        for (std::size_t x = 0; x + 1 < w; ++x) s.set(x + 1, y + 1, m.at(x, y));
      ms.push_back(m);
      shifted.push_back(s);
    }
    const double r = rpi(ms);
    EXPECT_NEAR(r, brute_rpi(ms), 1e-9);
    EXPECT_NEAR(rpi(shifted), r, 1e-12);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Centroid, Values) {
  const auto c = centroid(mask_from(5, 5, {{0, 0}, {2, 0}, {1, 3}}));
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(c->first, 1.0);
  EXPECT_DOUBLE_EQ(c->second, 1.0);
  EXPECT_FALSE(centroid(BinaryMask(3, 3)));
}

TEST(Ece, Examples) {
  const std::vector<double> one(8, 1.0);
  const std::vector<int> p(8, 1), l(8, 1);
  EXPECT_EQ(ece(one, p, l), 0.0);
  const std::vector<double> c(10, 0.9);
  const std::vector<int> pred(10, 1), lab{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  EXPECT_NEAR(ece(c, pred, lab), 0.4, 1e-12);
  EXPECT_THROW(ece(c, pred, std::vector<int>(3, 0)), Error);
  EXPECT_THROW(ece(c, pred, lab, 0), Error);
}

TEST(Ece, ZeroWhenAccuracyMatchesConfidencePerBin) {
  // Bin of confidence 0.75 with 3 of 4 correct, bin of 0.55 with 11 of 20 correct.
  std::vector<double> c(4, 0.75);
  std::vector<int> pred(4, 1), lab{1, 1, 1, 0};
  for (int i = 0; i < 20; ++i) {
    c.push_back(0.55);
    pred.push_back(0);
    lab.push_back(i < 11 ? 0 : 1);
  }
  EXPECT_NEAR(ece(c, pred, lab), 0.0, 1e-12);
}

TEST(Ece, RandomFixturesMatchDirectBinning) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> conf(0.5, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 5 + 7 * t, bins = 1 + t % 15;
    std::vector<double> c(n);
    std::vector<int> p(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = conf(rng);
      p[i] = coin(rng);
      l[i] = coin(rng);
    }
    const double e = ece(c, p, l, bins);
    EXPECT_NEAR(e, brute_ece(c, p, l, bins), 1e-9) << t;
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(Ece, FromProbabilityRows) {
  const Tensor probs({3, 2}, {0.2f, 0.8f, 0.6f, 0.4f, 0.3f, 0.7f});
  const std::vector<int> labels{1, 1, 0};
  std::vector<double> conf;
  std::vector<int> pred;
  for (std::size_t i = 0; i < 3; ++i) {
    pred.push_back(probs[2 * i + 1] > probs[2 * i] ? 1 : 0);
    conf.push_back(std::max(probs[2 * i], probs[2 * i + 1]));
  }
  EXPECT_NEAR(ece(probs, labels), brute_ece(conf, pred, labels, 10), 1e-9);
}

TEST(Classification, Examples) {
  const std::vector<int> y{1, 0, 1, 0};
  const auto perfect = classification_report(y, y);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.macro_f1, 1.0);

  const auto all_fake = classification_report(std::vector<int>(4, 1), y);
  EXPECT_EQ(all_fake.recall, 1.0);
  EXPECT_EQ(all_fake.precision, 0.5);

  std::vector<int> pred, lab;
  auto add = [&](int p, int l, int n) {
    for (int i = 0; i < n; ++i) {
      pred.push_back(p);
      lab.push_back(l);
    }
  };
  add(1, 1, 9);
  add(1, 0, 3);
  add(0, 1, 1);
  add(0, 0, 7);
  const auto r = classification_report(pred, lab);
  EXPECT_EQ(r.tp, 9u);
  EXPECT_EQ(r.fp, 3u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.tn, 7u);
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.9);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.8);
  EXPECT_THROW(classification_report(pred, y), Error);
}

TEST(Classification, ZeroDivisionWarnsAndGivesZero) {
  ScopedWarningCapture w;
  const auto r = classification_report(std::vector<int>{0, 0}, std::vector<int>{0, 0});
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_FALSE(w.messages().empty());
}

TEST(Classification, RandomFixturesMatchBruteForce) {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.5);
  auto f1 = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
  ScopedWarningCapture quiet;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 3 + 5 * t;
    std::vector<int> p(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = coin(rng);
      l[i] = coin(rng);
    }
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) (p[i] ? (l[i] ? tp : fp) : (l[i] ? fn : tn)) += 1;
    const double prec = tp + fp ? tp / (tp + fp) : 0, rec = tp + fn ? tp / (tp + fn) : 0;
    const double nprec = tn + fn ? tn / (tn + fn) : 0, nrec = tn + fp ? tn / (tn + fp) : 0;
    const auto r = classification_report(p, l);
    EXPECT_NEAR(r.accuracy, (tp + tn) / n, 1e-9);
    EXPECT_NEAR(r.precision, prec, 1e-9);
    EXPECT_NEAR(r.recall, rec, 1e-9);
    EXPECT_NEAR(r.f1, f1(prec, rec), 1e-9);
    EXPECT_NEAR(r.macro_f1, (f1(prec, rec) + f1(nprec, nrec)) / 2, 1e-9);
  }
}

TEST(Overlap, Examples) {
  EXPECT_EQ(overlap_coefficient({'L', 'B'}, {'L', 'B', 'N'}), 1.0);
  EXPECT_EQ(overlap_coefficient({'L'}, {'E'}), 0.0);
  EXPECT_DOUBLE_EQ(overlap_coefficient({'L', 'B', 'N'}, {'B', 'N', 'C', 'E'}), 2.0 / 3.0);
  EXPECT_THROW(overlap_coefficient({}, {'L'}), Error);
}

TEST(Overlap, RandomFixturesMatchBruteForce) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 20; ++t) {
    std::set<char> a, b;
    while (a.empty() || b.empty()) {
      a.clear();
      b.clear();
      for (char c : kRegionCodes) {
        if (coin(rng)) a.insert(c);
        if (coin(rng)) b.insert(c);
      }
    }
    int inter = 0;
    for (char c : kRegionCodes) inter += a.count(c) && b.count(c);
    EXPECT_NEAR(overlap_coefficient(a, b), double(inter) / double(std::min(a.size(), b.size())), 1e-9);
    EXPECT_EQ(overlap_coefficient(a, b), overlap_coefficient(b, a));
  }
}

TEST(Regions, TopThreeWithTieOrder) {
  EXPECT_EQ(human_regions({'C', 'E', 'N', 'C', 'O'}), (std::vector<char>{'C', 'E', 'N'}));
  GrayImage tax(4, 1);
  tax.pixels = {1, 2, 3, 0};
  Plane mass(4, 1);
  mass.values = {1.0f, 1.0f, 0.0f, 9.0f};
  EXPECT_EQ(model_regions(mass, tax), (std::vector<char>{'L', 'E'}));
  EXPECT_THROW(model_regions(Plane(3, 1), tax), Error);
  EXPECT_EQ(region_from_pixel(0), 0);
  EXPECT_EQ(region_from_pixel(6), 'C');
  EXPECT_EQ(region_pixel_value('L'), 1);
}

TEST(Regions, AgreementOnTwoVideoFixture) {
  VideoRegionInput a;
  a.video_id = "a";
  a.taxonomy = GrayImage(4, 1);
  a.taxonomy.pixels = {1, 2, 3, 0};
  a.mass = Plane(4, 1);
  a.mass.values = {3.0f, 2.0f, 1.0f, 10.0f};
  a.annotations = {'L', 'L', 'E', 'N'};
  VideoRegionInput b;
  b.video_id = "b";
  b.taxonomy = GrayImage(4, 1);
  b.taxonomy.pixels = {4, 5, 6, 0};
  b.mass = Plane(4, 1);
  b.mass.values = {0.0f, 0.0f, 0.0f, 5.0f};
  b.annotations = {'C', 'C', 'O'};

  const AgreementReport r = region_agreement({a, b});
  ASSERT_EQ(r.videos.size(), 2u);
  EXPECT_EQ(r.videos[0].model_set, (std::vector<char>{'L', 'E', 'B'}));
  EXPECT_EQ(r.videos[0].human_set, (std::vector<char>{'L', 'E', 'N'}));
  EXPECT_DOUBLE_EQ(r.videos[0].f1, 2.0 / 3.0);
  EXPECT_TRUE(r.videos[0].top1_match);
  EXPECT_TRUE(r.videos[1].model_set.empty());
  EXPECT_EQ(r.videos[1].recall, 0.0);
  EXPECT_FALSE(r.videos[1].top1_match);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.precision, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.overlap, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.top1_rate, 0.5);
  const std::vector<std::size_t> model{1, 1, 1, 0, 0, 0}, human{1, 1, 0, 1, 1, 1}, votes{2, 1, 0, 1, 1, 2};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.frequencies[i].region, kRegionCodes[i]);
    EXPECT_EQ(r.frequencies[i].model_top3, model[i]) << i;
    EXPECT_EQ(r.frequencies[i].human_top3, human[i]) << i;
    EXPECT_EQ(r.frequencies[i].human_votes, votes[i]) << i;
  }
}

TEST(Regions, PerfectAgreement) {
  VideoRegionInput v;
  v.video_id = "v";
  v.taxonomy = GrayImage(3, 1);
  v.taxonomy.pixels = {2, 4, 6};
  v.mass = Plane(3, 1);
  v.mass.values = {3.0f, 2.0f, 1.0f};
  v.annotations = {'E', 'E', 'E', 'N', 'N', 'C'};
  const auto r = region_agreement({v, v});
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.top1_rate, 1.0);
  EXPECT_EQ(r.overlap, 1.0);
  VideoRegionInput missing = v;
  missing.taxonomy = GrayImage();
  EXPECT_THROW(region_agreement({missing}), Error);
}

TEST(MetricsIo, MaskPgmRoundTrip) {
  TempDir dir("masks");
  std::mt19937_64 rng(9);
  const BinaryMask m = random_mask(7, 5, 0.3, rng);
  write_mask_pgm(dir / "m.pgm", m);
  EXPECT_EQ(read_mask_pgm(dir / "m.pgm"), m);
  const GrayImage g = read_pgm(dir / "m.pgm");
  for (std::size_t i = 0; i < g.pixels.size(); ++i) EXPECT_EQ(g.pixels[i], m.bits[i] ? 255 : 0);
}

TEST(MetricsIo, AnnotationsAndTaxonomy) {
  TempDir dir("ann");
  const std::vector<AnnotationRecord> recs{{"v1", "a1", 'L'}, {"v1", "a2", 'C'}, {"v2", "a1", 'O'}};
  write_annotations_csv(dir / "a.csv", recs);
  const auto back = read_annotations_csv(dir / "a.csv");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].video_id, recs[i].video_id);
    EXPECT_EQ(back[i].annotator_id, recs[i].annotator_id);
    EXPECT_EQ(back[i].region, recs[i].region);
  }
  std::ofstream(dir / "bad.csv") << "video_id,annotator_id,region_code\nv1,a1,Z\n";
  EXPECT_THROW(read_annotations_csv(dir / "bad.csv"), Error);

  GrayImage t(2, 1);
  t.pixels = {6, 7};
  write_pgm(dir / "t.pgm", t);
  EXPECT_THROW(read_taxonomy_pgm(dir / "t.pgm"), Error);
  t.pixels = {0, 6};
  write_pgm(dir / "t.pgm", t);
  EXPECT_EQ(read_taxonomy_pgm(dir / "t.pgm").pixels, t.pixels);
}
