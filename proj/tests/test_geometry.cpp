#include <gtest/gtest.h>

#include "fixture.hpp"
#include "wmg/geometry.hpp"

#include <Eigen/SVD>

using namespace wmg;
using wmg::testing::shared_cache;
using wmg::testing::small_model;

namespace {

matrix random_rotation(index_t d, rng_t& rng) {
  matrix g(d, d);
  for (index_t i = 0; i < d; ++i)
    for (index_t j = 0; j < d; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<matrix> qr(g);
  matrix q = qr.householderQ();
  // fix column signs so the draw is Haar distributed
  const matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (index_t k = 0; k < d; ++k)
    if (r(k, k) < 0) q.col(k) *= -1.0;
  return q;
}

matrix random_matrix(index_t r, index_t c, rng_t& rng) {
  matrix m(r, c);
  for (index_t i = 0; i < r; ++i)
    for (index_t j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

const activation_bank& location_bank() {
  static const activation_bank bank = record(small_model(arch::gru, 32, 1500), shared_cache(),
                                             make_diet(diet_mode::stsf, 1, feature::location), split_kind::train, 400, 8);
  return bank;
}

svm_options quick() {
  svm_options o;
  o.folds = 5;
  return o;
}

}  // namespace

TEST(geometry, ortho_index_reference_cases) {
  EXPECT_NEAR(ortho_index_value(matrix::Identity(3, 3)), 1.0, 1e-15);
  matrix same(3, 2);
  same << 1, 2, 2, 4, -1, -2;
  EXPECT_NEAR(ortho_index_value(same), 0.0, 1e-15);
  matrix sixty(2, 2);
  sixty << 1, 0, 0.5, std::sqrt(3.0) / 2.0;
  EXPECT_NEAR(ortho_index_value(sixty), 0.5, 1e-15);
  EXPECT_THROW(ortho_index_value(matrix::Identity(1, 3)), domain_error);
  matrix zero = matrix::Identity(2, 2);
  zero.row(1).setZero();
  EXPECT_THROW(ortho_index_value(zero), domain_error);
}

TEST(geometry, ortho_index_invariances) {
  rng_t rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const matrix w = random_matrix(4, 6, rng);
    const double base = ortho_index_value(w);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);
    EXPECT_NEAR(ortho_index_value(w * random_rotation(6, rng)), base, 1e-12);
    matrix scaled = w;
    scaled.row(0) *= -3.5;
    scaled.row(2) *= 0.01;
    EXPECT_NEAR(ortho_index_value(scaled), base, 1e-12);
  }
}

TEST(geometry, ortho_bootstrap) {
  rng_t rng(2);
  const auto o = ortho_from_normals(matrix::Identity(4, 4), 100, rng);
  EXPECT_EQ(o.samples.size(), 100u);
  for (double s : o.samples) EXPECT_NEAR(s, 1.0, 1e-15);

  const auto& b = location_bank();
  const auto s = slice(b, space_query::perceptual(0, feature::location));
  const auto set = fit_decoder_set(s.x, s.y, 4, quick());
  const auto ob = ortho_from_slice(set, s.x, s.y, 10, rng, quick());
  EXPECT_EQ(ob.samples.size(), 10u);
  for (double v : ob.samples) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(geometry, compare_ortho_direction) {
  rng_t rng(3);
  std::vector<double> p;
  std::vector<double> e;
  for (int i = 0; i < 30; ++i) {
    p.push_back(0.9 + 1e-3 * normal(rng));
    e.push_back(0.5 + 1e-3 * normal(rng));
  }
  const auto c = compare_ortho(p, e);
  EXPECT_LT(c.test.p, 1e-6);
  EXPECT_EQ(c.direction, -1);
  EXPECT_THROW(compare_ortho(std::span<const double>(p).first(4), e), domain_error);
}

TEST(geometry, pca_full_dim_preserves_distances) {
  rng_t rng(4);
  const matrix x = random_matrix(50, 5, rng);
  const auto p = fit_pca(x, 5);
  const matrix z = p.project(x);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) EXPECT_NEAR((z.row(i) - z.row(j)).norm(), (x.row(i) - x.row(j)).norm(), 1e-10);
  for (index_t k = 1; k < 5; ++k) EXPECT_GE(p.variances(k - 1), p.variances(k));
}

TEST(geometry, pca_on_a_plane_is_lossless) {
  rng_t rng(5);
  const matrix basis = random_rotation(6, rng).leftCols(2);
  const matrix x = random_matrix(40, 2, rng) * basis.transpose();
  const auto p = fit_pca(x, 2);
  const matrix back = (p.project(x) * p.axes.transpose()).rowwise() + p.mean.transpose();
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(fit_pca(x, 3), domain_error);
}

TEST(geometry, pca_recovers_anisotropic_axes) {
  rng_t rng(6);
  matrix x = random_matrix(20000, 3, rng);
  x.col(0) *= 5.0;
  x.col(1) *= 2.0;
  const auto p = fit_pca(x, 3);
  EXPECT_NEAR(std::abs(p.axes(0, 0)), 1.0, 1e-3);
  EXPECT_NEAR(std::abs(p.axes(1, 1)), 1.0, 1e-3);
  EXPECT_NEAR(p.variances(0), 25.0, 1.0);
  const auto [a, b] = pca_equalize(x, x.leftCols(2), 2);
  EXPECT_EQ(a.cols(), 2);
  EXPECT_EQ(b.cols(), 2);
}

TEST(geometry, jacobi_svd_matches_reference) {
  rng_t rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const matrix a = random_matrix(7, 4, rng);
    const auto r = jacobi_svd(a);
    Eigen::JacobiSVD<matrix> ref(a);
    EXPECT_LT((r.sigma - ref.singularValues()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.u * r.sigma.asDiagonal() * r.v.transpose() - a).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.u.transpose() * r.u - matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.v.transpose() * r.v - matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(geometry, jacobi_svd_rank_deficient_completion) {
  rng_t rng(8);
  const matrix a = random_matrix(5, 2, rng) * random_matrix(2, 4, rng);
  const auto r = jacobi_svd(a);
  EXPECT_NEAR(r.sigma(2), 0.0, 1e-10);
  EXPECT_LT((r.u.transpose() * r.u - matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((r.u * r.sigma.asDiagonal() * r.v.transpose() - a).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(jacobi_svd(matrix::Zero(2, 3)), domain_error);
}

TEST(geometry, procrustes_recovers_a_known_similarity) {
  rng_t rng(9);
  const matrix src = random_matrix(4, 6, rng);
  const matrix rot = random_rotation(6, rng);
  vector shift(6);
  for (index_t k = 0; k < 6; ++k) shift(k) = normal(rng);
  matrix tgt = 2.5 * src * rot;
  tgt.rowwise() += shift.transpose();
  const auto al = procrustes_align(src, tgt);
  EXPECT_LT(al.residual(), 1e-10);
  EXPECT_NEAR(al.s, 1.0, 1e-10);
  EXPECT_LT((reconstruct_normals(al) - tgt).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_FALSE(al.rank_deficient);
}

TEST(geometry, procrustes_identity_alignment) {
  rng_t rng(10);
  const matrix w = random_matrix(4, 8, rng);
  const auto al = procrustes_align(w, w);
  EXPECT_LT((al.r - matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(al.s, 1.0, 1e-12);
}

TEST(geometry, procrustes_monte_carlo_orthogonality) {
  rng_t rng(11);
  double worst_orth = 0.0;
  double worst_res = 0.0;
  for (int rep = 0; rep < 10000; ++rep) {
    const matrix src = random_matrix(4, 5, rng);
    const matrix tgt = src * random_rotation(5, rng);
    const auto al = procrustes_align(src, tgt);
    worst_orth = std::max(worst_orth, (al.r.transpose() * al.r - matrix::Identity(5, 5)).cwiseAbs().maxCoeff());
    worst_res = std::max(worst_res, al.residual());
  }
  EXPECT_LT(worst_orth, 1e-8);
  EXPECT_LT(worst_res, 1e-8);
}

TEST(geometry, procrustes_is_optimal_against_random_rotations) {
  rng_t rng(12);
  const matrix src = random_matrix(4, 5, rng);
  const matrix tgt = random_matrix(4, 5, rng);
  const auto al = procrustes_align(src, tgt);
  const double best = (al.source_std * al.r - al.target_std).norm();
  for (int rep = 0; rep < 500; ++rep) {
    const matrix q = random_rotation(5, rng);
    EXPECT_LE(best, (al.source_std * q - al.target_std).norm() + 1e-12);
  }
}

TEST(geometry, procrustes_input_errors) {
  EXPECT_THROW(procrustes_align(matrix::Ones(3, 4), matrix::Ones(3, 4)), domain_error);
  EXPECT_THROW(procrustes_align(matrix::Identity(3, 4), matrix::Identity(4, 4)), domain_error);
  matrix collinear(3, 4);
  collinear << 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0;
  EXPECT_TRUE(procrustes_align(collinear, matrix::Identity(3, 4)).rank_deficient);
}

TEST(geometry, swap_grid_and_controls) {
  const auto& b = location_bank();
  const task_spec task{feature::location, 1};
  alignment_grid_options opt;
  opt.svm = quick();
  opt.max_lag = 2;
  const auto grid = build_alignment_grid(b, feature::location, task, opt);
  EXPECT_TRUE(grid.contains({0, 1}));
  EXPECT_TRUE(grid.contains({0, 2}));
  EXPECT_FALSE(grid.contains({0, 3}));
  EXPECT_FALSE(grid.contains({1, 1}));

  for (const auto& [key, e] : grid) {
    const double none = swap_accuracy(grid, key.first, key.second, swap_kind::none);
    EXPECT_EQ(swap_accuracy(grid, key.first, key.second, swap_kind::stimulus_shift, 0), none);
    EXPECT_DOUBLE_EQ(none, reconstruct_decoders(e.alignment, e.source, e.target, e.target_slice.x, e.target_slice.y));
  }
  EXPECT_THROW(swap_accuracy(grid, 0, 2, swap_kind::time_shift), domain_error);

  auto shuffled = grid;
  rng_t rng(13);
  for (auto& [key, e] : shuffled) std::shuffle(e.target_slice.y.begin(), e.target_slice.y.end(), rng);
  const auto rep = swap_test(shuffled, 1);
  ASSERT_FALSE(rep.rows.empty());
  EXPECT_NEAR(rep.mean(swap_kind::none), 0.25, 0.06);
}

TEST(geometry, causal_perturbation_controls) {
  const auto& net = small_model(arch::gru, 32, 1500);
  const task_spec task{feature::location, 1};
  const auto set = fit_set(location_bank(), space_query::encoding(0, feature::location).with_task(task), quick());
  const auto& dec = set.decoders[2];
  const std::vector<double> mags{0.0, 1.0, -2.0};
  const auto curve = causal_perturb(net, shared_cache(), dec, task, mags, 1.0, 64, 3);
  ASSERT_EQ(curve.probabilities.size(), 3u);
  for (const auto& p : curve.probabilities) EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-6);

  // magnitude zero reproduces the unperturbed network bit for bit
  const auto again = causal_perturb(net, shared_cache(), dec, task, std::vector<double>{0.0}, 5.0, 64, 3);
  EXPECT_EQ(again.probabilities[0], curve.probabilities[0]);

  EXPECT_THROW(causal_perturb(net, shared_cache(), dec, {feature::location, 2}, mags, 1.0, 8, 3), domain_error);
  auto wrong = dec;
  wrong.w = vector::Zero(5);
  EXPECT_THROW(causal_perturb(net, shared_cache(), wrong, task, mags, 1.0, 8, 3), domain_error);
  EXPECT_EQ(default_magnitudes().size(), 13u);
  EXPECT_DOUBLE_EQ(default_magnitudes().front(), -3.0);
  EXPECT_DOUBLE_EQ(default_magnitudes()[6], 0.0);
}
