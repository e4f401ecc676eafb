#pragma once

// AdamW, multi-step learning-rate decay, the on-the-fly training loop over a
// diet, and step-level evaluation on the three stimulus splits.

#include "wmg/recurrent.hpp"
#include "wmg/task.hpp"

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>

namespace wmg {

struct train_config {
  double lr0 = 1e-3;
  int batch_size = 64;
  int max_iters = 20000;
  double decay_gamma = 0.1;
  std::vector<int> decay_milestones{8000, 14000};
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  int checkpoint_every = 1000;
  int early_stop_window = 200;
  double early_stop_target = 0.95;
  int eval_trials_per_task = 128;
  int log_every = 500;
  trial_config trials;

  void validate() const {
    if (lr0 <= 0.0 || batch_size < 1 || max_iters < 1) throw config_error("train: lr0, batch_size and max_iters must be positive");
    for (std::size_t i = 1; i < decay_milestones.size(); ++i)
      if (decay_milestones[i] <= decay_milestones[i - 1]) throw config_error("train: milestones must be strictly increasing");
    if (decay_gamma <= 0.0 || decay_gamma > 1.0) throw config_error("train: decay_gamma must be in (0, 1]");
  }
};

/// lr0 · gamma^(number of milestones <= iter).
inline double lr_schedule(int iter, const train_config& cfg) {
  require(iter >= 0, "lr_schedule: negative iteration");
  int passed = 0;
  for (int m : cfg.decay_milestones) passed += m <= iter;
  return cfg.lr0 * std::pow(cfg.decay_gamma, passed);
}

template <typename T>
struct adamw_state {
  Eigen::Matrix<T, Eigen::Dynamic, 1> m1;
  Eigen::Matrix<T, Eigen::Dynamic, 1> m2;
  std::int64_t step = 0;

  explicit adamw_state(index_t n = 0) : m1(Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(n)), m2(m1) {}
};

struct adamw_hyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled weight decay (p -= lr·wd·p) followed by a bias-corrected Adam update
/// with eps added to the corrected second-moment root.
template <typename T>
void adamw_step(Eigen::Ref<Eigen::Matrix<T, Eigen::Dynamic, 1>> params,
                const Eigen::Ref<const Eigen::Matrix<T, Eigen::Dynamic, 1>>& grads, adamw_state<T>& st,
                const adamw_hyper& hp) {
  if (params.size() != grads.size() || st.m1.size() != params.size()) throw domain_error("adamw: shape mismatch");
  if (!grads.allFinite()) throw numeric_error("adamw: non-finite gradient");
  ++st.step;
  const T b1 = static_cast<T>(hp.beta1);
  const T b2 = static_cast<T>(hp.beta2);
  const T lr = static_cast<T>(hp.lr);
  const T bc1 = static_cast<T>(1.0 - std::pow(hp.beta1, static_cast<double>(st.step)));
  const T bc2 = static_cast<T>(1.0 - std::pow(hp.beta2, static_cast<double>(st.step)));
  params *= T(1) - lr * static_cast<T>(hp.weight_decay);
  st.m1 = b1 * st.m1 + (T(1) - b1) * grads;
  st.m2 = b2 * st.m2 + (T(1) - b2) * grads.cwiseAbs2();
  params.array() -= lr * (st.m1.array() / bc1) / ((st.m2.array() / bc2).sqrt() + static_cast<T>(hp.eps));
}

/// Perceptual inputs, task vectors and labels for a set of trials.
struct assembled_batch {
  sequence_batch<float> inputs;
  std::vector<std::vector<int>> labels;  // [t][b]
};

inline assembled_batch assemble(std::span<const trial> trials, embedding_cache& cache, int max_n) {
  require(!trials.empty(), "assemble: empty batch");
  const auto bsz = static_cast<index_t>(trials.size());
  const std::size_t len = trials.front().stimuli.size();
  assembled_batch ab;
  ab.inputs.perceptual.assign(len, Eigen::MatrixXf(cache.out_dim(), bsz));
  ab.inputs.task = Eigen::MatrixXf::Zero(3 + max_n, bsz);
  ab.labels.assign(len, std::vector<int>(trials.size()));
  for (index_t b = 0; b < bsz; ++b) {
    const auto& tr = trials[static_cast<std::size_t>(b)];
    if (tr.stimuli.size() != len) throw domain_error("assemble: trials of unequal length");
    const auto tv = make_task_vector(tr.task, max_n);
    for (std::size_t k = 0; k < tv.bits.size(); ++k) ab.inputs.task(static_cast<index_t>(k), b) = tv.bits[k];
    for (std::size_t t = 0; t < len; ++t) {
      ab.inputs.perceptual[t].col(b) = cache.get(tr.stimuli[t]);
      ab.labels[t][static_cast<std::size_t>(b)] = static_cast<int>(tr.responses[t]);
    }
  }
  return ab;
}

/// Fraction of (step, trial) pairs whose argmax logit equals the label.
inline double step_accuracy(const std::vector<Eigen::MatrixXf>& logits, const std::vector<std::vector<int>>& labels) {
  std::size_t hit = 0;
  std::size_t total = 0;
  for (std::size_t t = 0; t < logits.size(); ++t)
    for (index_t b = 0; b < logits[t].cols(); ++b) {
      index_t arg = 0;
      logits[t].col(b).maxCoeff(&arg);
      hit += static_cast<int>(arg) == labels[t][static_cast<std::size_t>(b)];
      ++total;
    }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

struct split_accuracy {
  double overall = 0.0;
  std::vector<std::pair<task_spec, double>> per_task;
};

struct eval_report {
  split_accuracy train;
  split_accuracy novel_angle;
  split_accuracy novel_identity;
  std::vector<double> loss_curve;  // one entry per iteration
  int iterations = 0;
  double seconds = 0.0;

  const split_accuracy& at(split_kind s) const {
    return s == split_kind::train ? train : s == split_kind::novel_angle ? novel_angle : novel_identity;
  }
};

/// Step-level response accuracy on freshly generated trials of one split.
inline split_accuracy evaluate(const model& net, embedding_cache& cache, const diet& d, split_kind split,
                               int n_trials_per_task, std::uint64_t seed, const trial_config& tcfg = {},
                               int max_n = 3) {
  require(n_trials_per_task >= 1, "evaluate: n_trials must be positive");
  split_accuracy out;
  rng_t rng(mix_seed(seed, 0xe7a1 + static_cast<std::uint64_t>(split)));
  double weighted = 0.0;
  for (const auto& task : d.tasks) {
    std::vector<trial> trials;
    for (int i = 0; i < n_trials_per_task; ++i) trials.push_back(generate_trial(task, rng, split, cache.canvas(), tcfg));
    double acc = 0.0;
    for (std::size_t start = 0; start < trials.size(); start += 256) {
      const std::size_t end = std::min(trials.size(), start + 256);
      const auto ab = assemble(std::span<const trial>(trials).subspan(start, end - start), cache, max_n);
      const auto fc = forward(net, ab.inputs);
      acc += step_accuracy(fc.logits, ab.labels) * static_cast<double>(end - start);
    }
    acc /= static_cast<double>(trials.size());
    out.per_task.emplace_back(task, acc);
    weighted += acc;
  }
  out.overall = weighted / static_cast<double>(d.tasks.size());
  return out;
}

struct train_progress {
  int iter = 0;
  double loss = 0.0;
  double window_accuracy = 0.0;
  double lr = 0.0;
};

struct train_result {
  model net;
  eval_report report;
};

/// Trains on trials generated on the fly from `d`; stops early when the mean
/// training-batch step accuracy over the last `early_stop_window` iterations
/// reaches `early_stop_target`. The frontend (behind `cache`) is never modified.
inline train_result train(model net, const diet& d, embedding_cache& cache, const train_config& cfg,
                          const std::string& checkpoint_dir = {},
                          const std::function<void(const train_progress&)>& on_progress = {}, int max_n = 3) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  rng_t rng(mix_seed(cfg.seed, 0x7a11));
  adamw_state<float> opt(net.size());
  train_result res;
  std::deque<double> window;
  double window_sum = 0.0;
  std::string last_checkpoint;

  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    std::vector<trial> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(generate_trial(d.sample(rng), rng, split_kind::train, cache.canvas(), cfg.trials));
    const auto ab = assemble(batch, cache, max_n);
    auto fail = [&](const std::string& why) {
      return training_failure("train: " + why + " at iteration " + std::to_string(iter) +
                              (last_checkpoint.empty() ? std::string(" (no checkpoint written)")
                                                       : "; last good checkpoint: " + last_checkpoint));
    };
    double loss = 0.0;
    double acc = 0.0;
    try {
      const auto fc = forward(net, ab.inputs);
      std::vector<Eigen::MatrixXf> dlogits;
      loss = cross_entropy(fc.logits, ab.labels, &dlogits);
      if (!std::isfinite(loss)) throw fail("loss diverged");
      const Eigen::VectorXf grad = backward(net, ab.inputs, fc, dlogits);
      adamw_hyper hp{lr_schedule(iter, cfg), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
      adamw_step<float>(net.params(), grad, opt, hp);
      acc = step_accuracy(fc.logits, ab.labels);
    } catch (const numeric_error& e) {
      throw fail(std::string("non-finite values (") + e.what() + ")");
    }
    res.report.loss_curve.push_back(loss);

    window.push_back(acc);
    window_sum += acc;
    if (static_cast<int>(window.size()) > cfg.early_stop_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    const double wacc = window_sum / static_cast<double>(window.size());
    if (on_progress && cfg.log_every > 0 && (iter + 1) % cfg.log_every == 0)
      on_progress({iter + 1, loss, wacc, lr_schedule(iter, cfg)});
    if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(checkpoint_dir);
      last_checkpoint = checkpoint_dir + "/iter_" + std::to_string(iter + 1) + ".ckpt";
      std::ostringstream rs;
      rs << rng;
      save_checkpoint(last_checkpoint, net, {iter + 1, rs.str(), {}});
    }
    if (static_cast<int>(window.size()) == cfg.early_stop_window && wacc >= cfg.early_stop_target) {
      ++iter;
      break;
    }
  }
  res.report.iterations = iter;
  const std::uint64_t eval_seed = mix_seed(cfg.seed, 0xe7a1);
  res.report.train = evaluate(net, cache, d, split_kind::train, cfg.eval_trials_per_task, eval_seed, cfg.trials, max_n);
  res.report.novel_angle = evaluate(net, cache, d, split_kind::novel_angle, cfg.eval_trials_per_task, eval_seed, cfg.trials, max_n);
  res.report.novel_identity = evaluate(net, cache, d, split_kind::novel_identity, cfg.eval_trials_per_task, eval_seed, cfg.trials, max_n);
  res.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.net = std::move(net);
  return res;
}

struct sweep_row {
  arch architecture = arch::gru;
  index_t hidden = 0;
  index_t parameters = 0;
  eval_report report;
};

/// Trains every (architecture, hidden size) pair on the same diet and config.
inline std::vector<sweep_row> size_sweep(const std::vector<arch>& archs, const std::vector<index_t>& hidden_sizes,
                                         const diet& d, embedding_cache& cache, const train_config& cfg,
                                         int max_n = 3) {
  if (hidden_sizes.size() < 2) throw domain_error("size_sweep: need at least two hidden sizes");
  std::vector<sweep_row> rows;
  for (auto a : archs)
    for (auto h : hidden_sizes) {
      rng_t rng(mix_seed(cfg.seed, 0x1417));
      auto net = init_model(a, h, cache.out_dim(), 3 + max_n, rng);
      auto res = train(std::move(net), d, cache, cfg, {}, {}, max_n);
      rows.push_back({a, h, parameter_count(a, h, cache.out_dim(), 3 + max_n), std::move(res.report)});
    }
  return rows;
}

}  // namespace wmg
