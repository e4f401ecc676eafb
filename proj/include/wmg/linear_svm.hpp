#pragma once

// One-vs-rest linear max-margin classifiers: L2-regularized hinge loss solved by
// dual coordinate descent, with stratified k-fold grid search over C.

#include "wmg/core.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

namespace wmg {

/// Per-dimension z-score transform estimated on a fit slice.
struct standardizer {
  vector mean;
  vector scale;

  static standardizer fit(const Eigen::Ref<const matrix>& x) {
    standardizer s;
    const auto n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (index_t j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean(j)).square().sum() / n;
      const double sd = std::sqrt(var);
      s.scale(j) = sd > 1e-12 ? sd : 1.0;  // constant dims pass through centered
    }
    return s;
  }

  static standardizer identity(index_t dim) { return {vector::Zero(dim), vector::Ones(dim)}; }

  matrix apply(const Eigen::Ref<const matrix>& x) const {
    require(x.cols() == mean.size(), "standardizer: dimension mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

struct svm_options {
  std::vector<double> c_grid{0.001, 0.01, 1.0, 10.0};
  int folds = 10;
  int max_epochs = 300;
  double tolerance = 1e-3;
  /// Constant appended to every sample so the bias is learned as a weight;
  /// larger values weaken the implicit penalty on the bias.
  double bias_scale = 10.0;
  bool balanced = true;
  std::uint64_t seed = 7;
};

/// Decision hyperplane d = standardize(x)·w + b; positive class iff d >= 0.
struct linear_decoder {
  vector w;
  double b = 0.0;
  standardizer transform;
  double c = 1.0;
  double cv_accuracy = 0.0;
  // metadata
  int feature = -1;
  int value = -1;
  std::string fit_space;
  std::string fit_task;

  vector decision(const Eigen::Ref<const matrix>& x) const {
    return (transform.apply(x) * w).array() + b;
  }

  double accuracy(const Eigen::Ref<const matrix>& x, std::span<const int> y_binary) const {
    const vector d = decision(x);
    std::size_t hit = 0;
    for (index_t i = 0; i < d.size(); ++i) hit += ((d(i) >= 0.0) == (y_binary[static_cast<std::size_t>(i)] == 1));
    return static_cast<double>(hit) / static_cast<double>(d.size());
  }

  /// Normal of the hyperplane expressed in raw (unstandardized) coordinates.
  vector raw_normal() const { return w.array() / transform.scale.array(); }
};

namespace detail {

inline std::vector<double> class_bounds(std::span<const int> y, double c, bool balanced) {
  const auto n = static_cast<double>(y.size());
  const double n_pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double n_neg = n - n_pos;
  std::vector<double> u(y.size(), c);
  if (balanced) {
    for (std::size_t i = 0; i < y.size(); ++i) u[i] = c * n / (2.0 * (y[i] == 1 ? n_pos : n_neg));
  }
  return u;
}

}  // namespace detail

/// Dual coordinate descent for the L1-loss (hinge) linear SVM.
/// `xs` rows must already be standardized; `y` holds 0/1 labels.
inline std::pair<vector, double> solve_hinge_dcd(const Eigen::Ref<const matrix>& xs, std::span<const int> y,
                                                  double c, const svm_options& opt) {
  const index_t n = xs.rows();
  const index_t d = xs.cols();
  const auto upper = detail::class_bounds(y, c, opt.balanced);
  const double bs = opt.bias_scale;

  vector w = vector::Zero(d);
  double wb = 0.0;  // weight on the appended constant feature
  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
  vector qii = xs.rowwise().squaredNorm().array() + bs * bs;
  std::vector<index_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng_t rng(opt.seed);

  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double pg_max = -1e300;
    double pg_min = 1e300;
    for (index_t i : order) {
      const auto si = static_cast<std::size_t>(i);
      const double yi = y[si] == 1 ? 1.0 : -1.0;
      const double g = yi * (xs.row(i).dot(w) + wb * bs) - 1.0;
      double pg = g;
      if (alpha[si] == 0.0)
        pg = std::min(g, 0.0);
      else if (alpha[si] == upper[si])
        pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg != 0.0) {
        const double old = alpha[si];
        alpha[si] = std::clamp(old - g / qii(i), 0.0, upper[si]);
        const double delta = (alpha[si] - old) * yi;
        if (delta != 0.0) {
          w.noalias() += delta * xs.row(i).transpose();
          wb += delta * bs;
        }
      }
    }
    if (pg_max - pg_min < opt.tolerance) break;
  }
  if (!w.allFinite() || !std::isfinite(wb)) throw numeric_error("svm solver produced non-finite weights");
  return {w, wb * bs};
}

/// Stratified fold assignment; deterministic given the seed.
inline std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), 0);
  const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  rng_t rng(seed);
  for (int cls = 0; cls < k; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
  }
  return fold;
}

template <typename T>
std::vector<T> take(std::span<const T> v, std::span<const index_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

inline matrix take_rows(const Eigen::Ref<const matrix>& x, std::span<const index_t> idx) {
  matrix out(static_cast<index_t>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<index_t>(r)) = x.row(idx[r]);
  return out;
}

namespace detail {

inline void check_binary(std::span<const int> y, std::size_t min_per_class) {
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  const auto neg = y.size() - pos;
  if (pos == 0 || neg == 0) throw domain_error("fit_decoder: labels contain a single class");
  if (pos < min_per_class || neg < min_per_class)
    throw domain_error("fit_decoder: fewer than " + std::to_string(min_per_class) + " samples in a class");
}

}  // namespace detail

/// Out-of-fold decision values for every C of the grid, plus the mean
/// held-out binary accuracy per C.
struct grid_cv_result {
  matrix oof;  // rows x grid
  std::vector<double> mean_accuracy;
};

inline grid_cv_result cross_validate_grid(const Eigen::Ref<const matrix>& xs, std::span<const int> y,
                                          std::span<const int> fold, const svm_options& opt) {
  const index_t n = xs.rows();
  const std::size_t n_grid = opt.c_grid.size();
  require(n_grid > 0, "fit_decoder: empty regularization grid");
  int k = 0;
  for (int f : fold) k = std::max(k, f + 1);

  grid_cv_result out{matrix(n, static_cast<index_t>(n_grid)), std::vector<double>(n_grid, 0.0)};
  int used = 0;
  for (int f = 0; f < k; ++f) {
    std::vector<index_t> tr;
    std::vector<index_t> te;
    for (index_t i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    if (te.empty()) continue;
    ++used;
    const matrix xtr = take_rows(xs, tr);
    const matrix xte = take_rows(xs, te);
    const auto ytr = take<int>(y, tr);
    const auto yte = take<int>(y, te);
    // a fold lacking one class cannot be fit; fall back to the majority label
    const bool degenerate = std::count(ytr.begin(), ytr.end(), 1) == 0 || std::count(ytr.begin(), ytr.end(), 0) == 0;
    for (std::size_t g = 0; g < n_grid; ++g) {
      vector dte;
      if (degenerate) {
        dte = vector::Constant(xte.rows(), ytr.front() == 1 ? 1.0 : -1.0);
      } else {
        const auto [w, b] = solve_hinge_dcd(xtr, ytr, opt.c_grid[g], opt);
        dte = (xte * w).array() + b;
      }
      std::size_t hit = 0;
      for (std::size_t r = 0; r < te.size(); ++r) {
        out.oof(te[r], static_cast<index_t>(g)) = dte(static_cast<index_t>(r));
        hit += ((dte(static_cast<index_t>(r)) >= 0.0) == (yte[r] == 1));
      }
      out.mean_accuracy[g] += static_cast<double>(hit) / static_cast<double>(te.size());
    }
  }
  for (auto& a : out.mean_accuracy) a /= std::max(used, 1);
  return out;
}

inline linear_decoder fit_at(const Eigen::Ref<const matrix>& xs, std::span<const int> y, const standardizer& transform,
                             double c, double cv_accuracy, const svm_options& opt) {
  linear_decoder dec;
  std::tie(dec.w, dec.b) = solve_hinge_dcd(xs, y, c, opt);
  dec.transform = transform;
  dec.c = c;
  dec.cv_accuracy = cv_accuracy;
  return dec;
}

/// Fits a single one-vs-rest decoder on raw rows: standardize, k-fold grid search, refit.
inline linear_decoder fit_decoder(const Eigen::Ref<const matrix>& x, std::span<const int> y_binary,
                                  const svm_options& opt = {}) {
  require(static_cast<std::size_t>(x.rows()) == y_binary.size(), "fit_decoder: row/label count mismatch");
  detail::check_binary(y_binary, 20);
  const auto transform = standardizer::fit(x);
  const matrix xs = transform.apply(x);
  const auto fold = stratified_folds(y_binary, opt.folds, opt.seed);
  const auto cv = cross_validate_grid(xs, y_binary, fold, opt);
  const auto best = static_cast<std::size_t>(std::max_element(cv.mean_accuracy.begin(), cv.mean_accuracy.end()) -
                                             cv.mean_accuracy.begin());
  return fit_at(xs, y_binary, transform, opt.c_grid[best], cv.mean_accuracy[best], opt);
}

/// Refit at a fixed C with no cross-validation (used by bootstrap resampling).
inline linear_decoder fit_decoder_fixed(const Eigen::Ref<const matrix>& x, std::span<const int> y_binary, double c,
                                        const svm_options& opt = {}) {
  detail::check_binary(y_binary, 1);
  linear_decoder dec;
  dec.transform = standardizer::fit(x);
  const auto [w, b] = solve_hinge_dcd(dec.transform.apply(x), y_binary, c, opt);
  dec.w = w;
  dec.b = b;
  dec.c = c;
  return dec;
}

/// Complete one-vs-rest family over the values of one attribute.
struct decoder_set {
  std::vector<linear_decoder> decoders;
  /// Cross-validated multi-class accuracy from out-of-fold margin argmax.
  double cv_accuracy = 0.0;

  int classes() const { return static_cast<int>(decoders.size()); }
  index_t dim() const { return decoders.empty() ? 0 : decoders.front().w.size(); }

  /// Margin matrix: rows = samples, cols = decoder values.
  matrix margins(const Eigen::Ref<const matrix>& x) const {
    matrix m(x.rows(), classes());
    for (int k = 0; k < classes(); ++k) m.col(k) = decoders[static_cast<std::size_t>(k)].decision(x);
    return m;
  }

  std::vector<int> predict(const Eigen::Ref<const matrix>& x) const {
    const matrix m = margins(x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (index_t i = 0; i < m.rows(); ++i) {
      index_t arg = 0;
      m.row(i).maxCoeff(&arg);
      out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
  }

  /// Multi-class accuracy via argmax over one-vs-rest margins.
  double accuracy(const Eigen::Ref<const matrix>& x, std::span<const int> y) const {
    const auto pred = predict(x);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == y[i];
    return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
  }

  /// Stacked normals, one row per decoder value.
  matrix normals() const {
    matrix m(classes(), dim());
    for (int k = 0; k < classes(); ++k) m.row(k) = decoders[static_cast<std::size_t>(k)].w.transpose();
    return m;
  }
};

inline std::vector<int> one_vs_rest(std::span<const int> y, int value) {
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] == value ? 1 : 0;
  return out;
}

/// Fits one decoder per class value of `y` (values 0..n_classes-1), all on the same rows.
inline decoder_set fit_decoder_set(const Eigen::Ref<const matrix>& x, std::span<const int> y, int n_classes,
                                   const svm_options& opt = {}) {
  require(static_cast<std::size_t>(x.rows()) == y.size(), "fit_decoder_set: row/label count mismatch");
  require(n_classes >= 2, "fit_decoder_set: need at least two classes");
  for (int v : y) require(v >= 0 && v < n_classes, "fit_decoder_set: label out of range");
  const auto transform = standardizer::fit(x);
  const matrix xs = transform.apply(x);
  const auto fold = stratified_folds(y, opt.folds, opt.seed);

  // one C shared by the family, chosen by out-of-fold multi-class accuracy so
  // that margins stay comparable under the argmax readout
  std::vector<grid_cv_result> cvs;
  std::vector<std::vector<int>> ybs;
  for (int k = 0; k < n_classes; ++k) {
    ybs.push_back(one_vs_rest(y, k));
    detail::check_binary(ybs.back(), 20);
    cvs.push_back(cross_validate_grid(xs, ybs.back(), fold, opt));
  }
  std::size_t best = 0;
  double best_acc = -1.0;
  for (std::size_t g = 0; g < opt.c_grid.size(); ++g) {
    std::size_t hit = 0;
    for (index_t i = 0; i < x.rows(); ++i) {
      int arg = 0;
      for (int k = 1; k < n_classes; ++k)
        if (cvs[static_cast<std::size_t>(k)].oof(i, static_cast<index_t>(g)) >
            cvs[static_cast<std::size_t>(arg)].oof(i, static_cast<index_t>(g)))
          arg = k;
      hit += arg == y[static_cast<std::size_t>(i)];
    }
    const double acc = static_cast<double>(hit) / static_cast<double>(x.rows());
    if (acc > best_acc) {
      best_acc = acc;
      best = g;
    }
  }
  decoder_set set;
  for (int k = 0; k < n_classes; ++k) {
    auto dec = fit_at(xs, ybs[static_cast<std::size_t>(k)], transform, opt.c_grid[best],
                      cvs[static_cast<std::size_t>(k)].mean_accuracy[best], opt);
    dec.value = k;
    set.decoders.push_back(std::move(dec));
  }
  set.cv_accuracy = best_acc;
  return set;
}

/// Refit every decoder of `reference` on new rows at its previously selected C.
inline decoder_set refit_decoder_set(const decoder_set& reference, const Eigen::Ref<const matrix>& x,
                                     std::span<const int> y, const svm_options& opt = {}) {
  decoder_set out;
  const auto transform = standardizer::fit(x);
  const matrix xs = transform.apply(x);
  for (const auto& ref : reference.decoders) {
    const auto yb = one_vs_rest(y, ref.value);
    detail::check_binary(yb, 1);
    linear_decoder dec = ref;
    dec.transform = transform;
    std::tie(dec.w, dec.b) = solve_hinge_dcd(xs, yb, ref.c, opt);
    out.decoders.push_back(std::move(dec));
  }
  out.cv_accuracy = reference.cv_accuracy;
  return out;
}

}  // namespace wmg
