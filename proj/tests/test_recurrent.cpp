#include <gtest/gtest.h>

#include "fixture.hpp"

#include <chrono>

using namespace wmg;

namespace {

using dmodel = basic_model<double>;
using dmat = Eigen::MatrixXd;

struct toy_problem {
  sequence_batch<double> in;
  std::vector<std::vector<int>> labels;
};

toy_problem make_toy(index_t input_dim, index_t task_bits, index_t batch, int steps, std::uint64_t seed) {
  rng_t rng(seed);
  toy_problem p;
  for (int t = 0; t < steps; ++t) {
    dmat x(input_dim, batch);
    for (index_t i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    p.in.perceptual.push_back(x);
    std::vector<int> y;
    for (index_t b = 0; b < batch; ++b) y.push_back(uniform_int(rng, 0, 3));
    p.labels.push_back(y);
  }
  p.in.task = dmat::Zero(task_bits, batch);
  for (index_t b = 0; b < batch; ++b) p.in.task(uniform_int(rng, 0, static_cast<int>(task_bits)), b) = 1.0;
  return p;
}

double loss_of(const dmodel& m, const toy_problem& p) {
  const auto fc = forward(m, p.in);
  return cross_entropy(fc.logits, p.labels);
}

double max_relative_gradient_error(arch a, index_t hidden) {
  rng_t rng(42);
  auto m = init_model<double>(a, hidden, 10, 6, rng);
  // non-trivial biases and layer-norm parameters so every path is exercised
  for (auto id : {block_id::reduce_b, block_id::embed_b, block_id::ln_shift, block_id::core_b, block_id::head_b})
    for (index_t i = 0; i < m.block(id).size(); ++i) m.block(id).data()[i] = 0.1 * normal(rng);
  for (index_t i = 0; i < m.block(block_id::ln_gain).size(); ++i) m.block(block_id::ln_gain).data()[i] = 1.0 + 0.2 * normal(rng);

  const auto p = make_toy(10, 6, 3, 5, 7);
  const auto fc = forward(m, p.in);
  std::vector<dmat> dlogits;
  cross_entropy(fc.logits, p.labels, &dlogits);
  const Eigen::VectorXd grad = backward(m, p.in, fc, dlogits);

  const double h = 1e-5;
  double worst = 0.0;
  for (index_t k = 0; k < m.size(); ++k) {
    const double orig = m.params()(k);
    m.params()(k) = orig + h;
    const double up = loss_of(m, p);
    m.params()(k) = orig - h;
    const double down = loss_of(m, p);
    m.params()(k) = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(grad(k)), 1e-6});
    worst = std::max(worst, std::abs(numeric - grad(k)) / denom);
  }
  return worst;
}

}  // namespace

class gradient_check : public ::testing::TestWithParam<arch> {};

TEST_P(gradient_check, bptt_matches_finite_differences) {
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_LT(max_relative_gradient_error(GetParam(), 16), 1e-4);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
}

INSTANTIATE_TEST_SUITE_P(all_archs, gradient_check, ::testing::Values(arch::vanilla, arch::gru, arch::lstm),
                         [](const auto& info) { return to_string(info.param); });

TEST(recurrent, init_is_seeded_and_fan_in_scaled) {
  rng_t a(3);
  rng_t b(3);
  const auto m1 = init_model(arch::gru, 128, 256, 6, a);
  const auto m2 = init_model(arch::gru, 128, 256, 6, b);
  EXPECT_EQ(m1.params(), m2.params());

  const auto w = m1.block(block_id::core_w_hh).topRows(128);
  const double mean = w.cast<double>().mean();
  const double var = (w.cast<double>().array() - mean).square().mean();
  EXPECT_NEAR(var, 2.0 / 128.0, 0.2 * 2.0 / 128.0);
  EXPECT_TRUE((m1.block(block_id::ln_gain).array() == 1.f).all());
  EXPECT_TRUE((m1.block(block_id::core_b).array() == 0.f).all());
  EXPECT_TRUE((m1.block(block_id::ln_shift).array() == 0.f).all());

  rng_t c(1);
  EXPECT_THROW(init_model(arch::gru, 4, 256, 6, c), domain_error);
}

TEST(recurrent, parameter_count_matches_closed_form) {
  rng_t rng(1);
  for (auto a : {arch::vanilla, arch::gru, arch::lstm}) {
    const auto m = init_model(a, 128, 256, 6, rng);
    EXPECT_EQ(m.size(), parameter_count(a, 128, 256, 6));
  }
  // vanilla, hidden 128, input 256, 6 task bits, written out by hand
  const index_t by_hand = 128 * 256 + 128 + 128 * 134 + 128 + 256 + (128 * 128 * 2 + 128) + 3 * 128 + 3;
  EXPECT_EQ(parameter_count(arch::vanilla, 128, 256, 6), by_hand);
}

TEST(recurrent, gru_has_no_lstm_blocks) {
  rng_t rng(1);
  const auto m = init_model(arch::gru, 16, 10, 6, rng);
  for (const auto& b : m.blocks()) EXPECT_EQ(b.name.find("lstm"), std::string::npos) << b.name;
}

TEST(recurrent, vanilla_zero_everything_gives_zero) {
  dmodel m(arch::vanilla, 8, 4, 2);
  const dmat x = dmat::Zero(8, 2);
  const auto s = cell_step(m, x, zero_state(m, 2));
  EXPECT_EQ(s.h.norm(), 0.0);
}

TEST(recurrent, gru_closed_update_gate_preserves_state) {
  rng_t rng(5);
  auto m = init_model<double>(arch::gru, 8, 4, 2, rng);
  m.block(block_id::core_b).middleRows(8, 8).setConstant(-1000.0);  // z -> 0
  hidden_state<double> s;
  s.h = dmat::Random(8, 3) * 0.5;
  const dmat x = dmat::Random(8, 3);
  const auto out = cell_step(m, x, s);
  EXPECT_LT((out.h - s.h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(recurrent, non_finite_state_fails_fast) {
  rng_t rng(5);
  auto m = init_model<double>(arch::vanilla, 8, 4, 2, rng);
  hidden_state<double> s;
  s.h = dmat::Zero(8, 1);
  s.h(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(cell_step(m, dmat(dmat::Zero(8, 1)), s), numeric_error);
}

TEST(recurrent, fresh_model_on_zero_input_is_finite) {
  rng_t rng(2);
  for (auto a : {arch::vanilla, arch::gru, arch::lstm}) {
    const auto m = init_model(a, 16, 10, 6, rng);
    sequence_batch<float> in;
    in.perceptual.assign(6, Eigen::MatrixXf::Zero(10, 2));
    in.task = Eigen::MatrixXf::Zero(6, 2);
    const auto fc = forward(m, in);
    for (const auto& l : fc.logits) EXPECT_TRUE(l.allFinite());
  }
}

TEST(recurrent, forward_is_deterministic_and_checks_shapes) {
  rng_t rng(2);
  const auto m = init_model<double>(arch::lstm, 16, 10, 6, rng);
  const auto p = make_toy(10, 6, 4, 6, 3);
  const auto a = forward(m, p.in);
  const auto b = forward(m, p.in);
  for (int t = 0; t < 6; ++t) {
    EXPECT_EQ(a.logits[static_cast<std::size_t>(t)], b.logits[static_cast<std::size_t>(t)]);
    EXPECT_EQ(a.state[static_cast<std::size_t>(t)].c, b.state[static_cast<std::size_t>(t)].c);
  }
  auto bad = p.in;
  bad.task = dmat::Zero(5, 4);
  EXPECT_THROW(forward(m, bad), domain_error);
  bad = p.in;
  bad.perceptual[2] = dmat::Zero(9, 4);
  EXPECT_THROW(forward(m, bad), domain_error);
}

TEST(recurrent, layer_norm_output_is_standardized) {
  rng_t rng(8);
  const auto m = init_model<double>(arch::gru, 16, 10, 6, rng);
  const auto p = make_toy(10, 6, 5, 6, 9);
  const auto fc = forward(m, p.in);
  for (const auto& xh : fc.xhat)
    for (index_t b = 0; b < xh.cols(); ++b) {
      EXPECT_NEAR(xh.col(b).mean(), 0.0, 1e-5);
      EXPECT_NEAR((xh.col(b).array() - xh.col(b).mean()).square().mean(), 1.0, 1e-5);
    }
}

TEST(recurrent, gradients_scale_linearly_with_loss) {
  rng_t rng(4);
  const auto m = init_model<double>(arch::gru, 16, 10, 6, rng);
  const auto p = make_toy(10, 6, 3, 6, 5);
  const auto fc = forward(m, p.in);
  std::vector<dmat> d;
  cross_entropy(fc.logits, p.labels, &d);
  const auto g1 = backward(m, p.in, fc, d);
  for (auto& x : d) x *= 2.0;
  const auto g2 = backward(m, p.in, fc, d);
  EXPECT_EQ((g2 - 2.0 * g1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(recurrent, cross_entropy_closed_forms) {
  const std::vector<Eigen::MatrixXd> uniform{Eigen::MatrixXd::Zero(3, 1)};
  EXPECT_NEAR(cross_entropy(uniform, std::vector<std::vector<int>>{std::vector<int>{1}}), std::log(3.0), 1e-12);

  Eigen::MatrixXd sure = Eigen::MatrixXd::Zero(3, 1);
  sure(2, 0) = 1000.0;
  EXPECT_LT(cross_entropy(std::vector<Eigen::MatrixXd>{sure}, std::vector<std::vector<int>>{std::vector<int>{2}}), 1e-12);
}

TEST(recurrent, cross_entropy_matches_log_sum_exp_oracle) {
  rng_t rng(13);
  std::vector<Eigen::MatrixXd> logits;
  std::vector<std::vector<int>> labels;
  for (int t = 0; t < 6; ++t) {
    Eigen::MatrixXd z(3, 7);
    for (index_t i = 0; i < z.size(); ++i) z.data()[i] = 5.0 * normal(rng);
    logits.push_back(z);
    std::vector<int> y;
    for (int b = 0; b < 7; ++b) y.push_back(uniform_int(rng, 0, 3));
    labels.push_back(y);
  }
  long double oracle = 0.0L;
  for (int t = 0; t < 6; ++t)
    for (int b = 0; b < 7; ++b) {
      long double s = 0.0L;
      for (int k = 0; k < 3; ++k) s += std::exp(static_cast<long double>(logits[static_cast<std::size_t>(t)](k, b)));
      oracle += std::log(s) - logits[static_cast<std::size_t>(t)](labels[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)], b);
    }
  oracle /= 42.0L;
  EXPECT_NEAR(cross_entropy(logits, labels), static_cast<double>(oracle), 1e-10);
}

TEST(recurrent, hook_modifies_subsequent_steps_only) {
  rng_t rng(6);
  const auto m = init_model<double>(arch::gru, 16, 10, 6, rng);
  const auto p = make_toy(10, 6, 2, 4, 3);
  const auto base = forward(m, p.in);
  state_hook<double> hook = [](int t, hidden_state<double>& s) {
    if (t == 1) s.h.array() += 0.5;
  };
  const auto mod = forward(m, p.in, hook);
  EXPECT_EQ(base.logits[0], mod.logits[0]);
  EXPECT_EQ(base.logits[1], mod.logits[1]);
  EXPECT_GT((base.logits[2] - mod.logits[2]).norm(), 0.0);
}

TEST(recurrent, checkpoint_round_trip_and_truncation) {
  rng_t rng(10);
  const auto m = init_model(arch::lstm, 16, 10, 6, rng);
  const auto dir = wmg::testing::temp_dir("ckpt");
  const auto path = (dir / "m.ckpt").string();
  save_checkpoint(path, m, {123, "rng-state", "abc"}, {1.f, 2.f});
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.net.content_hash(), m.content_hash());
  EXPECT_EQ(back.net.architecture(), arch::lstm);
  EXPECT_EQ(back.meta.iteration, 123);
  EXPECT_EQ(back.meta.rng_state, "rng-state");
  EXPECT_EQ(back.opt_state, (std::vector<float>{1.f, 2.f}));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
  EXPECT_THROW(load_checkpoint(path), integrity_error);
}
