#include <gtest/gtest.h>

#include "fixture.hpp"
#include "wmg/stats.hpp"
#include "wmg/trace.hpp"

using namespace wmg;
using wmg::testing::shared_cache;
using wmg::testing::small_model;

namespace {

const activation_bank& gru_bank() {
  static const activation_bank bank =
      record(small_model(arch::gru), shared_cache(), make_diet(diet_mode::mtmf), split_kind::train, 40, 5);
  return bank;
}

}  // namespace

TEST(trace, row_counts) {
  const auto& b = gru_bank();
  EXPECT_EQ(b.n_trials(), 9u * 40u);
  EXPECT_EQ(b.hidden.rows(), static_cast<index_t>(9 * 40 * 6));
  EXPECT_EQ(b.hidden.cols(), 32);
  EXPECT_FALSE(b.has_cell());
  EXPECT_EQ(b.perceptual_index.size(), static_cast<std::size_t>(9 * 40 * 6));
  EXPECT_EQ(b.distinct_tasks().size(), 9u);
  EXPECT_LE(b.perceptual_table.rows(), b.hidden.rows());
}

TEST(trace, recording_is_reproducible_and_read_only) {
  const auto& net = small_model(arch::gru);
  const auto hash = net.content_hash();
  const auto again = record(net, shared_cache(), make_diet(diet_mode::mtmf), split_kind::train, 40, 5);
  EXPECT_EQ(again.content_hash(), gru_bank().content_hash());
  EXPECT_TRUE((again.hidden.array() == gru_bank().hidden.array()).all());
  EXPECT_EQ(net.content_hash(), hash);
}

TEST(trace, hidden_rows_match_a_direct_forward_pass) {
  const auto& b = gru_bank();
  const auto& net = small_model(arch::gru);
  std::vector<trial> one{{b.stimuli[7], b.tasks[7], b.responses[7]}};
  const auto fc = forward(net, assemble(one, shared_cache(), 3).inputs);
  for (int t = 0; t < b.length; ++t)
    EXPECT_LT((fc.state[static_cast<std::size_t>(t)].h.col(0).transpose() - b.hidden.row(b.row(7, t))).cwiseAbs().maxCoeff(),
              1e-5f);
}

TEST(trace, label_marginals_are_uniform) {
  const auto& b = gru_bank();
  for (auto f : all_features) {
    const auto s = slice(b, space_query::encoding(0, f));
    std::vector<std::size_t> counts(static_cast<std::size_t>(attribute_cardinality(f, b.canvas())), 0);
    for (int v : s.y) ++counts[static_cast<std::size_t>(v)];
    EXPECT_GT(chi_square_uniform_p(counts), 1e-4) << to_string(f);
  }
}

TEST(trace, memory_requires_later_time) {
  const auto& b = gru_bank();
  EXPECT_THROW(slice(b, space_query::memory(0, 0, feature::location)), domain_error);
  EXPECT_THROW(slice(b, space_query::memory(3, 1, feature::location)), domain_error);
  EXPECT_THROW(slice(b, space_query::encoding(6, feature::location)), domain_error);
  EXPECT_THROW(slice(b, space_query::encoding(0, feature::location).with_state(state_kind::c)), domain_error);
}

TEST(trace, memory_labels_follow_the_source_stimulus) {
  const auto& b = gru_bank();
  const auto task = task_spec{feature::category, 2};
  const auto s = slice(b, space_query::memory(2, 4, feature::identity).with_task(task));
  ASSERT_EQ(s.trials.size(), 40u);
  for (std::size_t k = 0; k < s.trials.size(); ++k) {
    const auto tr = s.trials[k];
    EXPECT_EQ(b.tasks[tr], task);
    EXPECT_EQ(s.y[k], identity_label(b.stimuli[tr][2], b.canvas()));
    EXPECT_TRUE((s.x.row(static_cast<index_t>(k)).array() == b.hidden.row(b.row(tr, 4)).cast<double>().array()).all());
  }
}

TEST(trace, encoding_equals_timestep_at_same_index) {
  const auto& b = gru_bank();
  for (int i = 0; i < b.length; ++i) {
    const auto e = slice(b, space_query::encoding(i, feature::location));
    const auto t = slice(b, space_query::timestep(i, feature::location));
    EXPECT_TRUE((e.x.array() == t.x.array()).all());
    EXPECT_EQ(e.y, t.y);
  }
}

TEST(trace, perceptual_rows_match_the_frontend) {
  const auto& b = gru_bank();
  const auto s = slice(b, space_query::perceptual(3, feature::category));
  EXPECT_EQ(s.x.cols(), shared_cache().out_dim());
  for (std::size_t k = 0; k < 20; ++k) {
    const auto v = shared_cache().get(b.stimuli[s.trials[k]][3]);
    EXPECT_TRUE((s.x.row(static_cast<index_t>(k)).transpose().array() == v.cast<double>().array()).all());
  }
}

TEST(trace, response_filter) {
  const auto& b = gru_bank();
  const auto task = task_spec{feature::location, 1};
  const auto s = slice(b, space_query::encoding(0, feature::location).with_task(task).with_response(1, response::match));
  for (auto tr : s.trials) EXPECT_EQ(b.responses[tr][1], response::match);
  EXPECT_LT(s.trials.size(), 40u);
}

TEST(trace, parse_space_round_trip) {
  EXPECT_EQ(parse_space("memory:1:3", feature::category).label(), "memory:1:3/category");
  EXPECT_EQ(parse_space("encoding:2", feature::location).label(), "encoding:2/location");
  EXPECT_THROW(parse_space("memory:1", feature::location), domain_error);
  EXPECT_THROW(parse_space("latent:1", feature::location), domain_error);
}

TEST(trace, lstm_bank_exposes_cell_state) {
  const auto bank = record(small_model(arch::lstm), shared_cache(), make_diet(diet_mode::stmf, 1), split_kind::train, 10, 2);
  ASSERT_TRUE(bank.has_cell());
  const auto hc = slice(bank, space_query::encoding(1, feature::location).with_state(state_kind::hc));
  const auto c = slice(bank, space_query::encoding(1, feature::location).with_state(state_kind::c));
  EXPECT_EQ(hc.x.cols(), 64);
  EXPECT_TRUE((hc.x.rightCols(32).array() == c.x.array()).all());
}

TEST(trace, file_round_trip_and_size) {
  const auto& b = gru_bank();
  const auto dir = wmg::testing::temp_dir("bank");
  const auto path = (dir / "bank.bin").string();
  save_bank(b, path);
  const auto back = load_bank(path);
  EXPECT_EQ(back.content_hash(), b.content_hash());
  EXPECT_EQ(back.tasks, b.tasks);
  EXPECT_EQ(back.stimuli, b.stimuli);
  EXPECT_EQ(back.responses, b.responses);

  const double payload = 4.0 * static_cast<double>(b.hidden.size() + b.perceptual_table.size() + b.perceptual_index.size());
  const double predicted = payload + static_cast<double>(bank_attribute_csv(b).size());
  const auto actual = static_cast<double>(std::filesystem::file_size(path));
  EXPECT_GE(actual, predicted);
  EXPECT_LE(actual, 1.1 * predicted);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 11);
  EXPECT_THROW(load_bank(path), integrity_error);
}
