#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "viba/error.hpp"
#include "viba/flow/farneback.hpp"
#include "viba/metrics/agreement.hpp"
#include "viba/synth/synth.hpp"
#include "viba/video/pipeline.hpp"

using namespace viba;
using namespace viba::synth;
using viba::test::TempDir;

namespace {

SynthConfig small(std::size_t count, std::uint64_t seed = 3) {
  SynthConfig c;
  c.count = count;
  c.seed = seed;
  return c;
}

// Squared response of luma minus its 5x5 box mean; a crude band-pass.
Plane band_energy(const RgbImage& img) {
  const Plane l = to_luma(img);
  Plane e(l.width, l.height);
  for (std::size_t y = 2; y + 2 < l.height; ++y)
    for (std::size_t x = 2; x + 2 < l.width; ++x) {
      double m = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) m += l.at(x + dx, y + dy);
      const double r = l.at(x, y) - m / 25.0;
      e.at(x, y) = static_cast<float>(r * r);
    }
  return e;
}

bool near_mask_edge(const metrics::BinaryMask& m, std::size_t x, std::size_t y, int r) {
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const long xx = long(x) + dx, yy = long(y) + dy;
      if (xx < 0 || yy < 0 || xx >= long(m.width) || yy >= long(m.height)) continue;
      if (m.at(xx, yy) != m.at(x, y)) return true;
    }
  return false;
}

}  // namespace

TEST(Synth, SpatialDeterministic) {
  const auto a = gen_spatial_dataset(small(12)), b = gen_spatial_dataset(small(12));
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].frames[0], b[i].frames[0]);
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_EQ(a[i].region, b[i].region);
  }
  const auto c = gen_spatial_dataset(small(12, 4));
  bool differs = false;
  for (std::size_t i = 0; i < c.size(); ++i) differs |= !(c[i].frames[0] == a[i].frames[0]);
  EXPECT_TRUE(differs);
}

TEST(Synth, ExactClassBalance) {
  const auto d = gen_spatial_dataset(small(200));
  std::size_t fakes = 0;
  for (const auto& s : d) fakes += s.label == kFake;
  EXPECT_EQ(fakes, 100u);
  SynthConfig c = small(20);
  c.fake_fraction = 0.25;
  fakes = 0;
  for (const auto& s : gen_temporal_dataset(c)) fakes += s.label == kFake;
  EXPECT_EQ(fakes, 5u);
}

TEST(Synth, LabelMaskConsistency) {
  for (const auto& d : {gen_spatial_dataset(small(40)), gen_temporal_dataset(small(20))})
    for (const auto& s : d) {
      EXPECT_EQ(s.mask.width, s.frames[0].width);
      EXPECT_EQ(s.mask.height, s.frames[0].height);
      EXPECT_EQ(s.label == kFake, !s.mask.empty()) << s.id;
      EXPECT_EQ(s.label == kFake, s.region != 0) << s.id;
      if (s.label == kFake) EXPECT_EQ(ground_truth_mask(s), s.mask);
      else EXPECT_THROW(ground_truth_mask(s), Error);
    }
}

TEST(Synth, FixedPatchSizeGivesExactMaskArea) {
  SynthConfig c = small(30);
  c.patch_min = c.patch_max = 16;
  for (const auto& s : gen_spatial_dataset(c)) {
    if (s.label != kFake) continue;
    EXPECT_EQ(s.mask.count(), 256u);
    std::size_t minx = 1000, miny = 1000, maxx = 0, maxy = 0;
    for (std::size_t y = 0; y < s.mask.height; ++y)
      for (std::size_t x = 0; x < s.mask.width; ++x)
        if (s.mask.at(x, y)) {
          minx = std::min(minx, x);
          maxx = std::max(maxx, x);
          miny = std::min(miny, y);
          maxy = std::max(maxy, y);
        }
    EXPECT_EQ(maxx - minx, 15u);
    EXPECT_EQ(maxy - miny, 15u);
  }
}

TEST(Synth, FakePatchesCarryHighFrequencyEnergy) {
  const auto d = gen_spatial_dataset(small(60));
  double inside = 0, outside = 0;
  std::size_t ni = 0, no = 0, argmax_hits = 0, fakes = 0;
  for (const auto& s : d) {
    if (s.label != kFake) continue;
    ++fakes;
    const Plane e = band_energy(s.frames[0]);
    std::size_t best = 0;
    for (std::size_t i = 0; i < e.values.size(); ++i)
      if (e.values[i] > e.values[best]) best = i;
    argmax_hits += s.mask.bits[best];
    for (std::size_t y = 2; y + 2 < e.height; ++y)
      for (std::size_t x = 2; x + 2 < e.width; ++x) {
        if (near_mask_edge(s.mask, x, y, 2)) continue;
        (s.mask.at(x, y) ? inside : outside) += e.at(x, y);
        ++(s.mask.at(x, y) ? ni : no);
      }
  }
  EXPECT_GT(inside / ni, 3.0 * outside / no);
  EXPECT_EQ(argmax_hits, fakes);
}

TEST(Synth, TemporalFlowDivergesInsideFakeRegion) {
  SynthConfig c = small(12, 5);
  const auto d = gen_temporal_dataset(c);
  const flow::PyramidConfig fc;
  std::size_t fakes = 0, reals = 0;
  for (const auto& s : d) {
    ASSERT_EQ(s.frames.size(), 2u);
    const auto f = flow::farneback_flow(to_luma(s.frames[0]), to_luma(s.frames[1]), fc);
    double in = 0, out = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
    std::size_t ni = 0, no = 0;
    // Skip a border where the drift brings in unseen content.
    for (std::size_t y = 6; y + 6 < f.height; ++y)
      for (std::size_t x = 6; x + 6 < f.width; ++x) {
        const double dx = f.dx(x, y), dy = f.dy(x, y);
        const double dev = std::hypot(dx - s.drift_x, dy - s.drift_y);
        if (s.label == kFake) {
          if (near_mask_edge(s.mask, x, y, 3)) continue;
          (s.mask.at(x, y) ? in : out) += dev;
          ++(s.mask.at(x, y) ? ni : no);
        } else {
          sx += dx;
          sy += dy;
          sxx += dx * dx;
          syy += dy * dy;
          ++no;
        }
      }
    if (s.label == kFake) {
      ++fakes;
      EXPECT_GT(in / ni, 2.0 * out / no) << s.id;
    } else {
      ++reals;
      const double mx = sx / no, my = sy / no;
      EXPECT_LT(std::sqrt(sxx / no - mx * mx + syy / no - my * my), 0.5) << s.id;
    }
  }
  EXPECT_GT(fakes, 0u);
  EXPECT_GT(reals, 0u);
}

TEST(Synth, TemporalDeterministic) {
  SynthConfig c = small(6);
  c.sequence_length = 4;
  const auto a = gen_temporal_dataset(c), b = gen_temporal_dataset(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].frames.size(), 4u);
    for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(a[i].frames[t], b[i].frames[t]);
    EXPECT_EQ(a[i].drift_x, b[i].drift_x);
  }
}

TEST(Synth, ConfigValidation) {
  SynthConfig c;
  c.patch_max = 80;
  EXPECT_THROW(gen_spatial_dataset(c), Error);
  c = SynthConfig{};
  c.sequence_length = 1;
  EXPECT_THROW(gen_temporal_dataset(c), Error);
  EXPECT_NO_THROW(c.validate(false));
  c = SynthConfig{};
  c.patch_min = 30;
  c.patch_max = 20;
  EXPECT_THROW(c.validate(false), Error);
  c = SynthConfig{};
  c.fake_fraction = 1.5;
  EXPECT_THROW(c.validate(false), Error);
}

TEST(Synth, RegionTemplate) {
  EXPECT_EQ(template_region(0.5, 0.74), 'L');
  EXPECT_EQ(template_region(0.38, 0.35), 'B');
  EXPECT_EQ(template_region(0.5, 0.55), 'N');
  EXPECT_EQ(template_region(0.02, 0.02), 'O');
  const GrayImage t = region_taxonomy(64, 64);
  std::set<std::uint8_t> seen(t.pixels.begin(), t.pixels.end());
  EXPECT_EQ(seen.count(0), 0u);
  for (std::uint8_t v : seen) {
    EXPECT_GE(v, 1);
    EXPECT_LE(v, 6);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Synth, PatchRegionIsTemplateAtCentre) {
  for (const auto& s : gen_spatial_dataset(small(40))) {
    if (s.label != kFake) continue;
    const auto c = metrics::centroid(s.mask);
    ASSERT_TRUE(c);
    EXPECT_EQ(s.region, template_region((c->first + 0.5) / 64.0, (c->second + 0.5) / 64.0)) << s.id;
  }
}

TEST(Synth, WriteDatasetLayout) {
  TempDir dir("synth");
  SynthConfig c = small(4);
  c.sequence_length = 3;
  const auto d = gen_temporal_dataset(c);
  write_dataset(dir.path(), d);
  const auto rows = read_labels_csv(dir / "labels.csv");
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].sample_id, d[i].id);
    EXPECT_EQ(rows[i].label, d[i].label);
    EXPECT_EQ(rows[i].region, d[i].region);
    const auto sdir = dir / d[i].id;
    const auto seq = video::load_frame_sequence(sdir);
    ASSERT_EQ(seq.frames.size(), 3u);
    EXPECT_EQ(seq.frames[2], d[i].frames[2]);
    EXPECT_EQ(video::read_roi_csv(sdir / "roi.csv").size(), 3u);
    EXPECT_EQ(read_pgm(sdir / "taxonomy.pgm"), region_taxonomy(64, 64));
    EXPECT_EQ(std::filesystem::exists(sdir / "mask.pgm"), d[i].label == kFake);
    if (d[i].label == kFake) EXPECT_EQ(metrics::read_mask_pgm(sdir / "mask.pgm"), d[i].mask);
  }
  std::ofstream(dir / "bad.csv") << "sample_id,label,region_code\ns1,maybe,\n";
  EXPECT_THROW(read_labels_csv(dir / "bad.csv"), Error);
  EXPECT_EQ(label_name(kFake), "fake");
  EXPECT_EQ(label_name(kReal), "real");
}
