#include <gtest/gtest.h>

#include "wmg/linear_svm.hpp"

#include <cmath>

using namespace wmg;

namespace {

struct labeled {
  matrix x;
  std::vector<int> y;
};

labeled blobs(int n_per, double sep, std::uint64_t seed, int dim = 5) {
  rng_t rng(seed);
  labeled d{matrix(2 * n_per, dim), {}};
  for (int i = 0; i < 2 * n_per; ++i) {
    const int cls = i < n_per ? 0 : 1;
    for (int j = 0; j < dim; ++j) d.x(i, j) = normal(rng) + (j == 0 ? (cls == 1 ? sep : -sep) : 0.0);
    d.y.push_back(cls);
  }
  return d;
}

// margin of the best separating line with normal (cos t, sin t), bias free
double margin_at(const matrix& x, const std::vector<int>& y, double t) {
  double lo_pos = 1e300;
  double hi_neg = -1e300;
  for (index_t i = 0; i < x.rows(); ++i) {
    const double p = std::cos(t) * x(i, 0) + std::sin(t) * x(i, 1);
    if (y[static_cast<std::size_t>(i)] == 1)
      lo_pos = std::min(lo_pos, p);
    else
      hi_neg = std::max(hi_neg, p);
  }
  return (lo_pos - hi_neg) / 2.0;
}

}  // namespace

TEST(linear_svm, separable_blobs_decode_perfectly) {
  const auto d = blobs(60, 4.0, 1);
  const auto dec = fit_decoder(d.x, d.y);
  EXPECT_DOUBLE_EQ(dec.cv_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(dec.accuracy(d.x, d.y), 1.0);
}

TEST(linear_svm, xor_is_not_linearly_decodable) {
  rng_t rng(2);
  matrix x(400, 2);
  std::vector<int> y;
  for (int i = 0; i < 400; ++i) {
    const int a = i % 2;
    const int b = (i / 2) % 2;
    x(i, 0) = (a ? 3.0 : -3.0) + 0.3 * normal(rng);
    x(i, 1) = (b ? 3.0 : -3.0) + 0.3 * normal(rng);
    y.push_back(a ^ b);
  }
  // no line classifies more than three of the four clusters
  const auto dec = fit_decoder(x, y);
  EXPECT_LE(dec.cv_accuracy, 0.76);
  EXPECT_LE(dec.accuracy(x, y), 0.76);
}

TEST(linear_svm, matches_brute_force_max_margin_direction) {
  rng_t rng(3);
  matrix x(80, 2);
  std::vector<int> y;
  for (int i = 0; i < 80; ++i) {
    const int cls = i % 2;
    x(i, 0) = normal(rng) + (cls ? 2.5 : -2.5);
    x(i, 1) = 1.5 * normal(rng) + (cls ? 1.0 : -1.0);
    y.push_back(cls);
  }
  x.rowwise() -= x.colwise().mean();

  double best_t = 0.0;
  double best_m = -1e300;
  for (int k = 0; k < 36000; ++k) {
    const double t = 2.0 * M_PI * k / 36000.0;
    const double m = margin_at(x, y, t);
    if (m > best_m) {
      best_m = m;
      best_t = t;
    }
  }
  ASSERT_GT(best_m, 0.0) << "fixture must be separable";
  for (int k = -1000; k <= 1000; ++k) {
    const double t = best_t + k * 2e-7;
    const double m = margin_at(x, y, t);
    if (m > best_m) {
      best_m = m;
      best_t = t;
    }
  }

  svm_options opt;
  opt.max_epochs = 20000;
  opt.tolerance = 1e-8;
  opt.bias_scale = 10.0;
  opt.balanced = false;
  const auto [w, b] = solve_hinge_dcd(x, y, 1e4, opt);
  const double cosine = (w(0) * std::cos(best_t) + w(1) * std::sin(best_t)) / w.norm();
  EXPECT_GE(cosine, 0.999);
  // the geometric margin of the solution matches the oracle
  EXPECT_NEAR(1.0 / w.norm(), best_m, 0.02 * best_m);
}

TEST(linear_svm, decision_rule_matches_manual_formula) {
  const auto d = blobs(40, 1.0, 4);
  const auto dec = fit_decoder(d.x, d.y);
  const vector got = dec.decision(d.x);
  for (index_t i = 0; i < d.x.rows(); ++i) {
    double manual = dec.b;
    for (index_t j = 0; j < d.x.cols(); ++j)
      manual += (d.x(i, j) - dec.transform.mean(j)) / dec.transform.scale(j) * dec.w(j);
    EXPECT_NEAR(got(i), manual, 1e-10);
  }
  const vector raw = dec.raw_normal();
  for (index_t j = 0; j < raw.size(); ++j) EXPECT_NEAR(raw(j) * dec.transform.scale(j), dec.w(j), 1e-12);
}

TEST(linear_svm, set_accuracy_is_argmax_over_margins) {
  rng_t rng(5);
  const int k = 4;
  matrix x(240, 6);
  std::vector<int> y;
  for (int i = 0; i < 240; ++i) {
    const int cls = i % k;
    for (int j = 0; j < 6; ++j) x(i, j) = normal(rng) + (j == cls ? 1.2 : 0.0);
    y.push_back(cls);
  }
  const auto set = fit_decoder_set(x, y, k);
  ASSERT_EQ(set.classes(), k);
  const matrix m = set.margins(x);
  std::vector<std::vector<int>> confusion(k, std::vector<int>(k, 0));
  for (index_t i = 0; i < m.rows(); ++i) {
    int arg = 0;
    for (int c = 1; c < k; ++c)
      if (m(i, c) > m(i, arg)) arg = c;
    ++confusion[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])][static_cast<std::size_t>(arg)];
  }
  int diag = 0;
  for (int c = 0; c < k; ++c) diag += confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  EXPECT_DOUBLE_EQ(set.accuracy(x, y), diag / 240.0);
  for (const auto& dec : set.decoders) EXPECT_EQ(dec.c, set.decoders.front().c);
}

TEST(linear_svm, permuted_labels_decode_at_chance) {
  auto d = blobs(150, 3.0, 6, 10);
  rng_t rng(60);
  std::shuffle(d.y.begin(), d.y.end(), rng);
  const double sigma = std::sqrt(0.25 / 300.0);
  EXPECT_NEAR(fit_decoder(d.x, d.y).cv_accuracy, 0.5, 3.0 * sigma + 0.02);
}

TEST(linear_svm, balanced_weighting_on_rare_class) {
  rng_t rng(7);
  matrix x(440, 3);
  std::vector<int> y;
  for (int i = 0; i < 440; ++i) {
    const int cls = i < 40 ? 1 : 0;
    for (int j = 0; j < 3; ++j) x(i, j) = normal(rng) + (cls && j == 0 ? 2.0 : 0.0);
    y.push_back(cls);
  }
  svm_options opt;
  opt.c_grid = {0.001};
  const auto dec = fit_decoder(x, y, opt);
  const vector d = dec.decision(x);
  int pos = 0;
  for (index_t i = 0; i < d.size(); ++i) pos += d(i) >= 0.0;
  EXPECT_GT(pos, 0);
}

TEST(linear_svm, rejects_degenerate_labels) {
  const auto d = blobs(30, 2.0, 8);
  const std::vector<int> one_class(60, 1);
  EXPECT_THROW(fit_decoder(d.x, one_class), domain_error);

  std::vector<int> few(60, 0);
  for (int i = 0; i < 10; ++i) few[static_cast<std::size_t>(i)] = 1;
  EXPECT_THROW(fit_decoder(d.x, few), domain_error);

  EXPECT_THROW(fit_decoder(d.x.topRows(10), d.y), domain_error);
  std::vector<int> bad = d.y;
  bad[0] = 5;
  EXPECT_THROW(fit_decoder_set(d.x, bad, 2), domain_error);
}

TEST(linear_svm, folds_are_stratified_and_seeded) {
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) y.push_back(i % 4);
  const auto a = stratified_folds(y, 10, 3);
  EXPECT_EQ(a, stratified_folds(y, 10, 3));
  for (int f = 0; f < 10; ++f)
    for (int cls = 0; cls < 4; ++cls) {
      int n = 0;
      for (std::size_t i = 0; i < y.size(); ++i) n += a[i] == f && y[i] == cls;
      EXPECT_EQ(n, 5);
    }
}

TEST(linear_svm, refit_keeps_selected_regularization) {
  const auto d = blobs(50, 2.0, 9);
  const auto set = fit_decoder_set(d.x, d.y, 2);
  const auto again = refit_decoder_set(set, d.x, d.y);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(again.decoders[static_cast<std::size_t>(k)].c, set.decoders[static_cast<std::size_t>(k)].c);
    EXPECT_LT((again.decoders[static_cast<std::size_t>(k)].w - set.decoders[static_cast<std::size_t>(k)].w).norm(),
              1e-9);
  }
}
