#include <gtest/gtest.h>

#include "fixture.hpp"
#include "wmg/stats.hpp"

#include <algorithm>
#include <map>

using namespace wmg;
using wmg::testing::default_canvas;
using wmg::testing::shared_frontend;

TEST(stimulus, rendering_is_deterministic) {
  const auto& c = default_canvas();
  const stimulus_spec s{2, 1, 3, 60.0, {}};
  const image a = render_stimulus(s, c);
  const image b = render_stimulus(s, c);
  EXPECT_TRUE((a.array() == b.array()).all());
  EXPECT_GE(a.minCoeff(), 0.f);
  EXPECT_LE(a.maxCoeff(), 1.f);
}

TEST(stimulus, quadrants_are_translates) {
  const auto& c = default_canvas();
  const image a = render_stimulus({1, 0, 0, 30.0, {}}, c);
  const image b = render_stimulus({1, 0, 3, 30.0, {}}, c);
  const int qh = c.height / 2;
  const int qw = c.width / 2;
  EXPECT_TRUE((a.block(0, 0, qh, qw).array() == b.block(qh, qw, qh, qw).array()).all());
  EXPECT_GT(a.block(0, 0, qh, qw).sum(), 0.f);
  EXPECT_EQ(a.block(qh, qw, qh, qw).sum(), 0.f);
}

TEST(stimulus, all_objects_are_distinct) {
  const auto& c = default_canvas();
  std::vector<image> imgs;
  for (int cat = 0; cat < c.n_cat; ++cat)
    for (int id = 0; id < c.n_id + c.n_novel_id; ++id) imgs.push_back(render_stimulus({cat, id, 0, 0.0, {}}, c));
  for (std::size_t i = 0; i < imgs.size(); ++i)
    for (std::size_t j = 0; j < imgs.size(); ++j) {
      const double d = (imgs[i] - imgs[j]).norm();
      if (i == j)
        EXPECT_EQ(d, 0.0);
      else
        EXPECT_GT(d, 0.0) << i << " vs " << j;
    }
}

TEST(stimulus, texture_background_is_seeded) {
  auto c = default_canvas();
  c.textured = true;
  const stimulus_spec s{0, 0, 1, 90.0, {background_kind::texture, 5}};
  const image a = render_stimulus(s, c);
  const image b = render_stimulus(s, c);
  EXPECT_TRUE((a.array() == b.array()).all());
  auto other = s;
  other.bg.seed = 6;
  EXPECT_GT((a - render_stimulus(other, c)).norm(), 0.0);
  auto blank = s;
  blank.bg = {};
  EXPECT_GT((a - render_stimulus(blank, c)).norm(), 0.0);
}

TEST(stimulus, invalid_attributes_rejected) {
  const auto& c = default_canvas();
  EXPECT_THROW(render_stimulus({c.n_cat, 0, 0, 0.0, {}}, c), domain_error);
  EXPECT_THROW(render_stimulus({0, c.n_id + c.n_novel_id, 0, 0.0, {}}, c), domain_error);
  EXPECT_THROW(render_stimulus({0, 0, 4, 0.0, {}}, c), domain_error);
  EXPECT_THROW(render_stimulus({0, 0, 0, 360.0, {}}, c), domain_error);
}

TEST(stimulus, split_membership) {
  const auto& c = default_canvas();
  rng_t rng(9);
  auto in = [](const std::vector<double>& v, double x) { return std::find(v.begin(), v.end(), x) != v.end(); };
  for (double a : c.novel_angles) EXPECT_FALSE(in(c.train_angles, a));
  for (int i = 0; i < 2000; ++i) {
    const auto tr = sample_split(rng, split_kind::train, c);
    EXPECT_TRUE(in(c.train_angles, tr.view_angle));
    EXPECT_LT(tr.identity, c.n_id);
    const auto na = sample_split(rng, split_kind::novel_angle, c);
    EXPECT_FALSE(in(c.train_angles, na.view_angle));
    EXPECT_LT(na.identity, c.n_id);
    const auto ni = sample_split(rng, split_kind::novel_identity, c);
    EXPECT_TRUE(in(c.train_angles, ni.view_angle));
    EXPECT_GE(ni.identity, c.n_id);
  }
}

TEST(stimulus, split_marginals_uniform) {
  const auto& c = default_canvas();
  rng_t rng(101);
  for (auto split : {split_kind::train, split_kind::novel_angle, split_kind::novel_identity}) {
    std::vector<std::size_t> cat(static_cast<std::size_t>(c.n_cat), 0);
    std::vector<std::size_t> loc(4, 0);
    std::map<double, std::size_t> ang;
    for (int i = 0; i < 10000; ++i) {
      const auto s = sample_split(rng, split, c);
      ++cat[static_cast<std::size_t>(s.category)];
      ++loc[static_cast<std::size_t>(s.location)];
      ++ang[s.view_angle];
    }
    std::vector<std::size_t> angles;
    for (auto [a, n] : ang) angles.push_back(n);
    for (const auto* counts : {&cat, &loc, &angles}) {
      EXPECT_GT(chi_square_uniform_p(*counts), 1e-3) << to_string(split);
      for (auto n : *counts) EXPECT_NEAR(static_cast<double>(n) * static_cast<double>(counts->size()) / 10000.0, 1.0, 0.03 * static_cast<double>(counts->size()));
    }
  }
}

TEST(stimulus, pretrained_frontend_passes_gate) {
  const auto& c = default_canvas();
  const auto& f = shared_frontend();
  EXPECT_TRUE(f.frozen());
  EXPECT_EQ(f.out_dim(), 256);
  const auto gate = decodability_gate(f, gate_dataset(c), c);
  EXPECT_GE(gate.category, 0.99);
  EXPECT_GE(gate.identity, 0.99);
  EXPECT_GE(gate.location, 0.99);
  EXPECT_TRUE(gate.passed);
}

TEST(stimulus, frozen_embedding_is_deterministic) {
  const auto& c = default_canvas();
  const auto& f = shared_frontend();
  const image img = render_stimulus({3, 1, 2, 150.0, {}}, c);
  const auto a = f.embed(img);
  const auto b = f.embed(img);
  EXPECT_TRUE((a.array() == b.array()).all());
  EXPECT_EQ(a.size(), f.out_dim());
  EXPECT_THROW(f.embed(image::Zero(16, 16)), domain_error);
  auto copy = f;
  EXPECT_THROW(copy.stages(), domain_error);
}

TEST(stimulus, feature_norms_are_sane) {
  const auto& c = default_canvas();
  const auto& f = shared_frontend();
  rng_t rng(4);
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto v = f.embed(render_stimulus(sample_split(rng, split_kind::train, c), c));
    ASSERT_TRUE(v.allFinite());
    sum += v.norm();
  }
  const double mean = sum / 1000.0;
  EXPECT_GE(mean, 0.1);
  EXPECT_LE(mean, 100.0);
}

TEST(stimulus, untrained_frontend_recovers_location) {
  const auto& c = default_canvas();
  rng_t rng(8);
  perceptual_frontend f({}, c.height, rng);
  const auto gate = decodability_gate(f, gate_dataset(c), c);
  EXPECT_GE(gate.location, 0.9);
}

TEST(stimulus, shuffled_labels_decode_at_chance) {
  const auto& c = default_canvas();
  const auto data = gate_dataset(c);
  const matrix x = embed_all(shared_frontend(), data);
  auto y = labels_of(data.specs, c).location;
  rng_t rng(77);
  std::shuffle(y.begin(), y.end(), rng);
  svm_options opt;
  opt.folds = 2;
  EXPECT_NEAR(fit_decoder_set(x, y, 4, opt).cv_accuracy, 0.25, 0.05);
}

TEST(stimulus, gate_requires_enough_samples) {
  const auto& c = default_canvas();
  auto specs = enumerate_split(split_kind::train, c);
  specs.resize(60);
  EXPECT_THROW(decodability_gate(shared_frontend(), render_all(specs, c), c), domain_error);
}

TEST(stimulus, single_category_pretraining_fails) {
  const auto& c = default_canvas();
  std::vector<stimulus_spec> specs;
  for (const auto& s : enumerate_split(split_kind::train, c))
    if (s.category == 0) specs.push_back(s);
  frontend_config cfg;
  cfg.epochs_max = 1;
  EXPECT_THROW(pretrain_frontend(render_all(specs, c), gate_dataset(c), c, cfg), training_failure);
}

TEST(stimulus, frontend_file_round_trip) {
  const auto dir = wmg::testing::temp_dir("frontend");
  const auto path = (dir / "frontend.bin").string();
  shared_frontend().save_file(path);
  const auto loaded = perceptual_frontend::load_file(path);
  EXPECT_EQ(loaded.content_hash(), shared_frontend().content_hash());
  EXPECT_TRUE(loaded.frozen());

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 7);
  EXPECT_THROW(perceptual_frontend::load_file(path), integrity_error);
}

TEST(stimulus, image_blob_and_attribute_table_round_trip) {
  auto c = default_canvas();
  c.textured = true;
  rng_t rng(12);
  std::vector<stimulus_spec> specs;
  for (int i = 0; i < 20; ++i) specs.push_back(sample_split(rng, split_kind::train, c));
  const auto data = render_all(specs, c);
  const auto dir = wmg::testing::temp_dir("blob");
  write_image_blob((dir / "images.bin").string(), data.images, c.height, c.width);
  const auto back = read_image_blob((dir / "images.bin").string());
  ASSERT_EQ(back.size(), data.images.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_TRUE((back[i].array() == data.images[i].array()).all());

  std::istringstream csv(attribute_csv(specs));
  EXPECT_EQ(parse_attribute_csv(csv), specs);

  std::filesystem::resize_file(dir / "images.bin", 100);
  EXPECT_THROW(read_image_blob((dir / "images.bin").string()), integrity_error);
}
