#pragma once

// N-back trial generation, ground-truth labeling, task index vectors and diets.

#include "wmg/stimulus.hpp"

#include <optional>
#include <set>

namespace wmg {

enum class feature : std::uint8_t { location = 0, identity = 1, category = 2 };
inline constexpr std::array<feature, 3> all_features{feature::location, feature::identity, feature::category};

inline char feature_code(feature f) { return "LIC"[static_cast<int>(f)]; }

inline std::string to_string(feature f) {
  switch (f) {
    case feature::location:
      return "location";
    case feature::identity:
      return "identity";
    default:
      return "category";
  }
}

inline feature parse_feature(const std::string& s) {
  if (s == "location" || s == "L") return feature::location;
  if (s == "identity" || s == "I") return feature::identity;
  if (s == "category" || s == "C") return feature::category;
  throw domain_error("unknown feature: " + s);
}

enum class response : std::uint8_t { match = 0, non_match = 1, no_action = 2 };
inline constexpr int n_responses = 3;

struct task_spec {
  feature feat = feature::location;
  int n_back = 1;
  friend auto operator<=>(const task_spec&, const task_spec&) = default;
};

inline std::string to_string(const task_spec& t) { return std::to_string(t.n_back) + "back-" + feature_code(t.feat); }

inline task_spec parse_task(const std::string& s) {
  const auto dash = s.find("back-");
  if (dash == std::string::npos || dash == 0) throw domain_error("task must look like '2back-C': " + s);
  return {parse_feature(s.substr(dash + 5)), std::stoi(s.substr(0, dash))};
}

/// Value of the task-relevant attribute; identity compares (category, variant) pairs.
inline int attribute_value(const stimulus_spec& s, feature f, const canvas_config& c) {
  switch (f) {
    case feature::location:
      return s.location;
    case feature::identity:
      return identity_label(s, c);
    default:
      return s.category;
  }
}

inline int attribute_cardinality(feature f, const canvas_config& c) {
  switch (f) {
    case feature::location:
      return n_locations;
    case feature::identity:
      return c.identity_classes();
    default:
      return c.n_cat;
  }
}

/// Ground truth for step t given the per-step attribute values of a trial.
inline response label_step(std::span<const int> values, int t, int n_back) {
  require(t >= 0 && static_cast<std::size_t>(t) < values.size(), "label_step: timestep out of range");
  if (t < n_back) return response::no_action;
  return values[static_cast<std::size_t>(t)] == values[static_cast<std::size_t>(t - n_back)] ? response::match
                                                                                             : response::non_match;
}

/// Task index vector: one-hot feature (L, I, C) followed by one-hot N.
struct task_index_vector {
  std::vector<float> bits;
};

inline task_index_vector make_task_vector(const task_spec& t, int max_n = 3) {
  if (t.n_back < 1 || t.n_back > max_n) throw domain_error("task_index_vector: n_back outside configured range");
  task_index_vector v;
  v.bits.assign(static_cast<std::size_t>(3 + max_n), 0.f);
  v.bits[static_cast<std::size_t>(t.feat)] = 1.f;
  v.bits[static_cast<std::size_t>(3 + t.n_back - 1)] = 1.f;
  return v;
}

struct trial {
  std::vector<stimulus_spec> stimuli;
  task_spec task;
  std::vector<response> responses;
};

inline constexpr int default_sequence_length = 6;

struct trial_config {
  int length = default_sequence_length;
  /// Target fraction of match responses among executive steps; negative disables balancing.
  double match_rate = 0.5;
};

namespace detail {

// Overwrite the task-relevant attribute of `s` so it equals (or differs from) `ref`.
inline void set_relation(stimulus_spec& s, const stimulus_spec& ref, feature f, bool match, rng_t& rng,
                         split_kind split, const canvas_config& c) {
  switch (f) {
    case feature::location:
      if (match) {
        s.location = ref.location;
      } else {
        const int off = uniform_int(rng, 1, n_locations);
        s.location = (ref.location + off) % n_locations;
      }
      break;
    case feature::category:
      if (match) {
        s.category = ref.category;
      } else if (c.n_cat > 1) {
        s.category = (ref.category + uniform_int(rng, 1, c.n_cat)) % c.n_cat;
      }
      break;
    case feature::identity: {
      if (match) {
        s.category = ref.category;
        s.identity = ref.identity;
        break;
      }
      // draw uniformly among (category, variant) pairs of this split that differ from ref
      const int lo = split == split_kind::novel_identity ? c.n_id : 0;
      const int per = split == split_kind::novel_identity ? c.n_novel_id : c.n_id;
      const int total = c.n_cat * per;
      if (total < 2) break;
      const int ref_idx = ref.category * per + (ref.identity - lo);
      const int pick = (ref_idx + uniform_int(rng, 1, total)) % total;
      s.category = pick / per;
      s.identity = lo + pick % per;
      break;
    }
  }
}

}  // namespace detail

/// Generates one trial. With balancing on, each executive step is a match with
/// probability `match_rate`, realized by resampling the task-relevant attribute.
inline trial generate_trial(const task_spec& task, rng_t& rng, split_kind split, const canvas_config& canvas,
                            const trial_config& cfg = {}) {
  require(task.n_back >= 1, "generate_trial: n_back must be >= 1");
  require(cfg.length > task.n_back, "generate_trial: sequence shorter than n_back");
  trial tr;
  tr.task = task;
  for (int t = 0; t < cfg.length; ++t) {
    stimulus_spec s = sample_split(rng, split, canvas);
    if (cfg.match_rate >= 0.0 && t >= task.n_back) {
      const bool match = uniform_real(rng) < cfg.match_rate;
      detail::set_relation(s, tr.stimuli[static_cast<std::size_t>(t - task.n_back)], task.feat, match, rng, split,
                           canvas);
    }
    tr.stimuli.push_back(s);
  }
  std::vector<int> values;
  for (const auto& s : tr.stimuli) values.push_back(attribute_value(s, task.feat, canvas));
  for (int t = 0; t < cfg.length; ++t) tr.responses.push_back(label_step(values, t, task.n_back));
  return tr;
}

enum class diet_mode : std::uint8_t { stsf, stmf, mtmf };

inline std::string to_string(diet_mode m) {
  switch (m) {
    case diet_mode::stsf:
      return "stsf";
    case diet_mode::stmf:
      return "stmf";
    default:
      return "mtmf";
  }
}

inline diet_mode parse_diet(const std::string& s) {
  if (s == "stsf" || s == "STSF") return diet_mode::stsf;
  if (s == "stmf" || s == "STMF") return diet_mode::stmf;
  if (s == "mtmf" || s == "MTMF") return diet_mode::mtmf;
  throw domain_error("unknown diet: " + s);
}

struct diet {
  diet_mode mode = diet_mode::mtmf;
  std::vector<task_spec> tasks;

  const task_spec& sample(rng_t& rng) const {
    return tasks[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(tasks.size())))];
  }
};

inline diet make_diet(diet_mode mode, std::optional<int> base_n = std::nullopt,
                      std::optional<feature> base_feature = std::nullopt, int max_n = 3) {
  diet d;
  d.mode = mode;
  switch (mode) {
    case diet_mode::stsf:
      if (!base_n || !base_feature) throw domain_error("make_diet: STSF needs both n and feature");
      d.tasks.push_back({*base_feature, *base_n});
      break;
    case diet_mode::stmf:
      if (!base_n) throw domain_error("make_diet: STMF needs n");
      for (auto f : all_features) d.tasks.push_back({f, *base_n});
      break;
    case diet_mode::mtmf:
      for (int n = 1; n <= max_n; ++n)
        for (auto f : all_features) d.tasks.push_back({f, n});
      break;
  }
  for (const auto& t : d.tasks)
    if (t.n_back < 1 || t.n_back > max_n) throw domain_error("make_diet: n outside configured range");
  return d;
}

}  // namespace wmg
