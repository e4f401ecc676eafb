#pragma once

#include "wmg/optimize.hpp"

#include <filesystem>
#include <map>

namespace wmg::testing {

inline const canvas_config& default_canvas() {
  static const canvas_config c;
  return c;
}

/// Frontend pretrained once per test binary.
inline const perceptual_frontend& shared_frontend() {
  static const perceptual_frontend f = [] {
    const auto& c = default_canvas();
    return pretrain_frontend(render_all(enumerate_split(split_kind::train, c), c), gate_dataset(c), c, {}).frontend;
  }();
  return f;
}

inline embedding_cache& shared_cache() {
  static embedding_cache cache(shared_frontend(), default_canvas());
  return cache;
}

/// Small MTMF model trained briefly; good enough for plumbing checks.
inline const model& small_model(arch a, index_t hidden = 32, int iters = 400) {
  static std::map<std::tuple<arch, index_t, int>, model> models;
  const auto key = std::make_tuple(a, hidden, iters);
  auto it = models.find(key);
  if (it == models.end()) {
    rng_t rng(11);
    auto net = init_model(a, hidden, shared_cache().out_dim(), 6, rng);
    train_config cfg;
    cfg.max_iters = iters;
    cfg.eval_trials_per_task = 8;
    cfg.log_every = 0;
    it = models.emplace(key, train(std::move(net), make_diet(diet_mode::mtmf), shared_cache(), cfg).net).first;
  }
  return it->second;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("wmg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace wmg::testing
