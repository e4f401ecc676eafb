#pragma once

// Decoder sets fit on bank slices, and the generalization analyses built on them.

#include "wmg/linear_svm.hpp"
#include "wmg/trace.hpp"

#include <limits>
#include <map>

namespace wmg {

/// Fits one decoder per value of `q.feat` on the slice described by `q`.
inline decoder_set fit_set(const activation_bank& bank, const space_query& q, const svm_options& opt = {}) {
  const auto s = slice(bank, q);
  auto set = fit_decoder_set(s.x, s.y, attribute_cardinality(q.feat, bank.canvas()), opt);
  for (auto& d : set.decoders) {
    d.feature = static_cast<int>(q.feat);
    d.fit_space = q.label();
    d.fit_task = q.task ? to_string(*q.task) : "all";
  }
  return set;
}

/// Memo of fitted sets for one bank and one set of options, keyed by query label.
class fit_cache {
 public:
  const decoder_set& get(const activation_bank& bank, const space_query& q, const svm_options& opt) {
    auto key = q.label();
    if (q.state != state_kind::h) key += q.state == state_kind::c ? "/c" : "/hc";
    if (q.response_at) key += "/r" + std::to_string(q.response_at->first) + ":" + std::to_string(static_cast<int>(q.response_at->second));
    auto it = sets_.find(key);
    if (it == sets_.end()) it = sets_.emplace(key, fit_set(bank, q, opt)).first;
    return it->second;
  }
  std::size_t size() const { return sets_.size(); }

 private:
  std::map<std::string, decoder_set> sets_;
};

inline decoder_set fit_or_reuse(const activation_bank& bank, const space_query& q, const svm_options& opt,
                                fit_cache* memo) {
  return memo ? memo->get(bank, q, opt) : fit_set(bank, q, opt);
}

/// Multi-class argmax accuracy of `set` on the slice described by `q`.
inline double test_set(const decoder_set& set, const activation_bank& bank, const space_query& q) {
  const auto s = slice(bank, q);
  if (s.x.cols() != set.dim()) throw domain_error("test_set: decoder dimension does not match the slice");
  for (int v : s.y)
    if (v < 0 || v >= set.classes()) throw domain_error("test_set: label outside the decoder set's classes");
  return set.accuracy(s.x, s.y);
}

/// Square accuracy table with labeled conditions. Row = fit condition, column =
/// test condition; the diagonal holds cross-validated accuracy.
struct generalization_matrix {
  std::vector<std::string> labels;
  matrix values;
  int chance_classes = 0;

  double chance() const { return chance_classes > 0 ? 1.0 / chance_classes : 0.0; }
  double diagonal_mean() const { return values.diagonal().mean(); }
  double off_diagonal_mean() const {
    const auto n = values.rows();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    return (values.sum() - values.diagonal().sum()) / static_cast<double>(n * (n - 1));
  }
};

// ---------------------------------------------------------------------------
// Feature preservation at stimulus onset.

struct relevance_row {
  std::string model;
  task_spec task;
  feature feat = feature::location;
  bool relevant = false;
  double accuracy = 0.0;
};

/// Per task of the bank and per feature: cross-validated accuracy on E_(0, t=0).
inline std::vector<relevance_row> task_relevance_table(const activation_bank& bank, const std::string& model_label,
                                                       int step = 0, const svm_options& opt = {},
                                                       fit_cache* memo = nullptr) {
  std::vector<relevance_row> out;
  for (const auto& task : bank.distinct_tasks())
    for (auto f : all_features) {
      const auto set = fit_or_reuse(bank, space_query::encoding(step, f).with_task(task), opt, memo);
      out.push_back({model_label, task, f, f == task.feat, set.cv_accuracy});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-task generalization.

inline generalization_matrix cross_task_matrix(const activation_bank& bank, feature f, int step,
                                               std::span<const task_spec> tasks, const svm_options& opt = {},
                                               fit_cache* memo = nullptr) {
  require(!tasks.empty(), "cross_task_matrix: no tasks");
  generalization_matrix g;
  g.chance_classes = attribute_cardinality(f, bank.canvas());
  const auto n = static_cast<index_t>(tasks.size());
  g.values.resize(n, n);
  for (const auto& t : tasks) g.labels.push_back(to_string(t));
  for (index_t a = 0; a < n; ++a) {
    const auto qa = space_query::encoding(step, f).with_task(tasks[static_cast<std::size_t>(a)]);
    const auto set = fit_or_reuse(bank, qa, opt, memo);
    for (index_t b = 0; b < n; ++b)
      g.values(a, b) = a == b ? set.cv_accuracy
                              : test_set(set, bank, space_query::encoding(step, f).with_task(tasks[static_cast<std::size_t>(b)]));
  }
  return g;
}

/// Per fit task: diagonal minus the mean over test tasks whose relevant feature differs.
inline std::vector<double> cross_task_gaps(const generalization_matrix& g, std::span<const task_spec> tasks) {
  require(static_cast<index_t>(tasks.size()) == g.values.rows(), "cross_task_gaps: task count mismatch");
  std::vector<double> gaps;
  for (std::size_t a = 0; a < tasks.size(); ++a) {
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t b = 0; b < tasks.size(); ++b)
      if (tasks[b].feat != tasks[a].feat) {
        sum += g.values(static_cast<index_t>(a), static_cast<index_t>(b));
        ++cnt;
      }
    if (cnt == 0) throw domain_error("cross_task_gaps: no task with a different relevant feature");
    gaps.push_back(g.values(static_cast<index_t>(a), static_cast<index_t>(a)) - sum / cnt);
  }
  return gaps;
}

// ---------------------------------------------------------------------------
// Cross-time generalization of encoding decoders.

struct cross_time_result {
  task_spec task;
  feature feat = feature::location;
  int source = 0;
  std::vector<int> targets;       // t = source .. length-1
  std::vector<double> accuracy;   // accuracy[0] is the validation accuracy
  double validation = 0.0;
  double executive = std::numeric_limits<double>::quiet_NaN();
  double non_executive = std::numeric_limits<double>::quiet_NaN();

  int executive_step() const { return source + task.n_back; }
};

inline cross_time_result cross_time_matrix(const activation_bank& bank, feature f, int source, const task_spec& task,
                                           const svm_options& opt = {}, fit_cache* memo = nullptr) {
  require(source >= 0 && source < bank.length, "cross_time_matrix: source outside the sequence");
  cross_time_result r;
  r.task = task;
  r.feat = f;
  r.source = source;
  const auto set = fit_or_reuse(bank, space_query::encoding(source, f).with_task(task), opt, memo);
  double non_exec_sum = 0.0;
  int non_exec_n = 0;
  for (int t = source; t < bank.length; ++t) {
    const double acc = t == source ? set.cv_accuracy : test_set(set, bank, space_query::memory(source, t, f).with_task(task));
    r.targets.push_back(t);
    r.accuracy.push_back(acc);
    if (t == source) continue;
    if (t == r.executive_step()) {
      r.executive = acc;
    } else {
      non_exec_sum += acc;
      ++non_exec_n;
    }
  }
  r.validation = set.cv_accuracy;
  if (non_exec_n > 0) r.non_executive = non_exec_sum / non_exec_n;
  return r;
}

// ---------------------------------------------------------------------------
// Cross-stimulus generalization between encoding spaces.

struct cross_stimulus_result {
  task_spec task;
  feature feat = feature::location;
  generalization_matrix matrix;  // (i, j): E_i-fit decoders tested on E_j

  double validation_mean() const { return matrix.diagonal_mean(); }
  double generalization_mean() const { return matrix.off_diagonal_mean(); }
};

inline cross_stimulus_result cross_stimulus_encoding(const activation_bank& bank, feature f, const task_spec& task,
                                                     const svm_options& opt = {}, fit_cache* memo = nullptr) {
  if (bank.length < 2) throw domain_error("cross_stimulus_encoding: sequence length must be at least 2");
  cross_stimulus_result r;
  r.task = task;
  r.feat = f;
  r.matrix.chance_classes = attribute_cardinality(f, bank.canvas());
  r.matrix.values.resize(bank.length, bank.length);
  for (int i = 0; i < bank.length; ++i) {
    r.matrix.labels.push_back("E" + std::to_string(i));
    const auto set = fit_or_reuse(bank, space_query::encoding(i, f).with_task(task), opt, memo);
    for (int j = 0; j < bank.length; ++j)
      r.matrix.values(i, j) = i == j ? set.cv_accuracy : test_set(set, bank, space_query::encoding(j, f).with_task(task));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Decoder archives.

inline void write_decoder_set(binary_writer& w, const decoder_set& set) {
  w.put<double>(set.cv_accuracy);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.decoders.size()));
  for (const auto& d : set.decoders) {
    w.put_span(std::span<const double>(d.w.data(), static_cast<std::size_t>(d.w.size())));
    w.put<double>(d.b);
    w.put_span(std::span<const double>(d.transform.mean.data(), static_cast<std::size_t>(d.transform.mean.size())));
    w.put_span(std::span<const double>(d.transform.scale.data(), static_cast<std::size_t>(d.transform.scale.size())));
    w.put<double>(d.c);
    w.put<double>(d.cv_accuracy);
    w.put<std::int32_t>(d.feature);
    w.put<std::int32_t>(d.value);
    w.put_string(d.fit_space);
    w.put_string(d.fit_task);
  }
}

inline decoder_set read_decoder_set(binary_reader& r) {
  auto vec = [&] {
    const auto v = r.get_vector<double>();
    return vector(Eigen::Map<const vector>(v.data(), static_cast<index_t>(v.size())));
  };
  decoder_set set;
  set.cv_accuracy = r.get<double>();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < n; ++k) {
    linear_decoder d;
    d.w = vec();
    d.b = r.get<double>();
    d.transform.mean = vec();
    d.transform.scale = vec();
    d.c = r.get<double>();
    d.cv_accuracy = r.get<double>();
    d.feature = r.get<std::int32_t>();
    d.value = r.get<std::int32_t>();
    d.fit_space = r.get_string();
    d.fit_task = r.get_string();
    if (d.transform.mean.size() != d.w.size() || d.transform.scale.size() != d.w.size())
      throw integrity_error("decoder archive: inconsistent dimensions");
    set.decoders.push_back(std::move(d));
  }
  return set;
}

inline void save_decoder_sets(const std::string& path, const std::vector<decoder_set>& sets) {
  binary_writer w;
  w.put_raw("WMGDECO1");
  w.put<std::uint32_t>(1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(sets.size()));
  for (const auto& s : sets) write_decoder_set(w, s);
  w.seal();
  w.save(path);
}

inline std::vector<decoder_set> load_decoder_sets(const std::string& path) {
  auto r = binary_reader::from_file(path);
  r.verify_seal();
  r.expect_magic("WMGDECO1");
  if (r.get<std::uint32_t>() != 1) throw integrity_error("decoder archive: unsupported version");
  const auto n = r.get<std::uint32_t>();
  std::vector<decoder_set> sets;
  for (std::uint32_t k = 0; k < n; ++k) sets.push_back(read_decoder_set(r));
  if (!r.at_end()) throw integrity_error("decoder archive: trailing bytes");
  return sets;
}

}  // namespace wmg
