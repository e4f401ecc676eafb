#pragma once

// Decoder geometry: orthogonalization index, PCA equalization, orthogonal
// Procrustes alignment of decoder sets, rotation swaps and the causal
// perturbation of hidden states along a decoder normal.

#include "wmg/decode.hpp"
#include "wmg/stats.hpp"

#include <Eigen/Eigenvalues>

namespace wmg {

// ---------------------------------------------------------------------------
// Orthogonalization index.

/// Mean of 1 - |cos| over all unordered pairs of rows.
inline double ortho_index_value(const Eigen::Ref<const matrix>& normals) {
  const index_t n = normals.rows();
  if (n < 2) throw domain_error("ortho_index: need at least two normals");
  vector norms = normals.rowwise().norm();
  for (index_t i = 0; i < n; ++i)
    if (!(norms(i) > 0.0)) throw domain_error("ortho_index: zero-norm normal");
  double sum = 0.0;
  for (index_t i = 0; i < n; ++i)
    for (index_t j = i + 1; j < n; ++j) sum += 1.0 - std::abs(normals.row(i).dot(normals.row(j))) / (norms(i) * norms(j));
  return sum / static_cast<double>(n * (n - 1) / 2);
}

struct ortho_index {
  double value = 0.0;
  std::vector<double> samples;
  std::string space;
};

/// Bootstrap over pairs when only raw normals are available.
inline ortho_index ortho_from_normals(const Eigen::Ref<const matrix>& normals, int bootstrap_n, rng_t& rng,
                                      std::string space = {}) {
  ortho_index o;
  o.value = ortho_index_value(normals);
  o.space = std::move(space);
  const index_t n = normals.rows();
  std::vector<std::pair<index_t, index_t>> pairs;
  for (index_t i = 0; i < n; ++i)
    for (index_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  for (int b = 0; b < bootstrap_n; ++b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [i, j] = pairs[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pairs.size())))];
      sum += 1.0 - std::abs(normals.row(i).normalized().dot(normals.row(j).normalized()));
    }
    o.samples.push_back(sum / static_cast<double>(pairs.size()));
  }
  return o;
}

/// Bootstrap over rows of the slice: each replicate refits the set at its selected C.
inline ortho_index ortho_from_slice(const decoder_set& set, const Eigen::Ref<const matrix>& x, std::span<const int> y,
                                    int bootstrap_n, rng_t& rng, const svm_options& opt = {}, std::string space = {}) {
  ortho_index o;
  o.value = ortho_index_value(set.normals());
  o.space = std::move(space);
  const auto n = static_cast<int>(x.rows());
  for (int b = 0; b < bootstrap_n; ++b) {
    std::vector<index_t> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = uniform_int(rng, 0, n);
    const matrix xb = take_rows(x, idx);
    const auto yb = take<int>(y, idx);
    o.samples.push_back(ortho_index_value(refit_decoder_set(set, xb, yb, opt).normals()));
  }
  return o;
}

struct ortho_comparison {
  t_test_result test;
  double mean_perceptual = 0.0;
  double mean_encoding = 0.0;
  int direction = 0;  // sign(mean(encoding) - mean(perceptual))
};

inline ortho_comparison compare_ortho(std::span<const double> perceptual, std::span<const double> encoding) {
  if (perceptual.size() < 5 || encoding.size() < 5) throw domain_error("compare_ortho: need at least five samples each");
  ortho_comparison c;
  c.test = welch_t_test(perceptual, encoding);
  c.mean_perceptual = mean_of(perceptual);
  c.mean_encoding = mean_of(encoding);
  const double diff = c.mean_encoding - c.mean_perceptual;
  c.direction = (diff > 0) - (diff < 0);
  return c;
}

// ---------------------------------------------------------------------------
// PCA.

struct pca_basis {
  vector mean;
  matrix axes;  // D x dim, columns are principal axes in decreasing variance order
  vector variances;

  matrix project(const Eigen::Ref<const matrix>& x) const { return (x.rowwise() - mean.transpose()) * axes; }
};

inline pca_basis fit_pca(const Eigen::Ref<const matrix>& x, index_t dim) {
  require(x.rows() >= 2, "fit_pca: need at least two rows");
  pca_basis p;
  p.mean = x.colwise().mean().transpose();
  const matrix xc = x.rowwise() - p.mean.transpose();
  const matrix cov = (xc.transpose() * xc) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<matrix> es(cov);
  if (es.info() != Eigen::Success) throw numeric_error("fit_pca: eigendecomposition failed");
  const vector ev = es.eigenvalues().reverse();
  const double tol = std::max(ev(0), 0.0) * 1e-10 * static_cast<double>(x.cols());
  const auto rank = static_cast<index_t>((ev.array() > tol).count());
  if (dim < 1 || dim > rank) throw domain_error("fit_pca: dim exceeds the rank of the data");
  p.axes = es.eigenvectors().rowwise().reverse().leftCols(dim);
  p.variances = ev.head(dim);
  return p;
}

/// Projects each space onto its own top-`dim` principal axes.
inline std::pair<matrix, matrix> pca_equalize(const Eigen::Ref<const matrix>& xa, const Eigen::Ref<const matrix>& xb,
                                              index_t dim) {
  return {fit_pca(xa, dim).project(xa), fit_pca(xb, dim).project(xb)};
}

// ---------------------------------------------------------------------------
// One-sided Jacobi SVD.

struct svd_result {
  matrix u;  // m x n, orthonormal columns
  vector sigma;
  matrix v;  // n x n orthogonal
  int sweeps = 0;
};

/// A = U diag(sigma) V^T for m >= n. Columns of U for zero singular values are
/// completed to an orthonormal set.
inline svd_result jacobi_svd(const Eigen::Ref<const matrix>& a, double tol = 1e-12, int max_sweeps = 100) {
  const index_t m = a.rows();
  const index_t n = a.cols();
  if (m < n) throw domain_error("jacobi_svd: requires rows >= cols");
  matrix w = a;
  matrix v = matrix::Identity(n, n);
  svd_result r;
  for (; r.sweeps < max_sweeps; ++r.sweeps) {
    bool rotated = false;
    for (index_t p = 0; p < n - 1; ++p)
      for (index_t q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const vector wp = w.col(p);
        w.col(p) = c * wp - s * w.col(q);
        w.col(q) = s * wp + c * w.col(q);
        const vector vp = v.col(p);
        v.col(p) = c * vp - s * v.col(q);
        v.col(q) = s * vp + c * v.col(q);
      }
    if (!rotated) break;
  }
  if (r.sweeps == max_sweeps) throw numeric_error("jacobi_svd: no convergence");

  // order by decreasing singular value
  vector sig = w.colwise().norm().transpose();
  std::vector<index_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](index_t x, index_t y) { return sig(x) > sig(y); });
  r.sigma.resize(n);
  r.u.resize(m, n);
  r.v.resize(n, n);
  const double floor = (sig.size() ? sig.maxCoeff() : 0.0) * 1e-14;
  std::vector<index_t> missing;
  for (index_t k = 0; k < n; ++k) {
    const index_t src = order[static_cast<std::size_t>(k)];
    r.sigma(k) = sig(src);
    r.v.col(k) = v.col(src);
    if (sig(src) > floor && sig(src) > 0.0) {
      r.u.col(k) = w.col(src) / sig(src);
    } else {
      r.sigma(k) = 0.0;
      missing.push_back(k);
    }
  }
  // complete U with Gram-Schmidt against the canonical basis
  std::vector<bool> filled(static_cast<std::size_t>(n), true);
  for (index_t k : missing) filled[static_cast<std::size_t>(k)] = false;
  index_t e = 0;
  for (index_t k : missing) {
    for (; e < m; ++e) {
      vector cand = vector::Unit(m, e);
      for (int pass = 0; pass < 2; ++pass)
        for (index_t j = 0; j < n; ++j)
          if (filled[static_cast<std::size_t>(j)]) cand -= r.u.col(j).dot(cand) * r.u.col(j);
      if (cand.norm() > 1e-6) {
        r.u.col(k) = cand.normalized();
        filled[static_cast<std::size_t>(k)] = true;
        ++e;
        break;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Orthogonal Procrustes.

struct shape_stats {
  vector centroid;
  double norm = 0.0;
};

inline std::pair<matrix, shape_stats> standardize_shape(const Eigen::Ref<const matrix>& w) {
  shape_stats st;
  st.centroid = w.colwise().mean().transpose();
  matrix c = w.rowwise() - st.centroid.transpose();
  st.norm = c.norm();
  if (!(st.norm > 0.0)) throw domain_error("procrustes: normals have zero spread around their centroid");
  c /= st.norm;
  return {c, st};
}

struct procrustes_alignment {
  matrix r;  // D x D, orthogonal
  double s = 0.0;
  shape_stats source;
  shape_stats target;
  matrix source_std;  // N x D standardized source shape
  matrix target_std;
  bool rank_deficient = false;

  double residual() const { return (source_std * r * s - target_std).norm(); }
};

inline procrustes_alignment procrustes_align(const Eigen::Ref<const matrix>& w_source,
                                             const Eigen::Ref<const matrix>& w_target) {
  if (w_source.rows() != w_target.rows() || w_source.cols() != w_target.cols())
    throw domain_error("procrustes_align: source and target shapes differ");
  if (w_source.rows() < 2) throw domain_error("procrustes_align: need at least two normals");
  procrustes_alignment al;
  std::tie(al.source_std, al.source) = standardize_shape(w_source);
  std::tie(al.target_std, al.target) = standardize_shape(w_target);
  const index_t n = w_source.rows();
  const index_t d = w_source.cols();

  // orthonormal basis Q of the joint row space; R acts as the identity on its complement
  matrix stacked(d, 2 * n);
  stacked << al.source_std.transpose(), al.target_std.transpose();
  Eigen::ColPivHouseholderQR<matrix> qr(stacked);
  qr.setThreshold(1e-12);
  const index_t rank = qr.rank();
  const matrix q = matrix(qr.householderQ()).leftCols(rank);

  const index_t expected = std::min<index_t>(n - 1, d);
  Eigen::FullPivLU<matrix> lu_s(al.source_std);
  Eigen::FullPivLU<matrix> lu_t(al.target_std);
  lu_s.setThreshold(1e-10);
  lu_t.setThreshold(1e-10);
  al.rank_deficient = lu_s.rank() < expected || lu_t.rank() < expected;

  const matrix small = q.transpose() * al.source_std.transpose() * al.target_std * q;
  const auto svd = jacobi_svd(small);
  al.s = svd.sigma.sum();
  al.r = q * (svd.u * svd.v.transpose()) * q.transpose() + (matrix::Identity(d, d) - q * q.transpose());
  return al;
}

/// Rotates the standardized source shape with `r` (the alignment's own rotation
/// unless swapped) and undoes the target standardization.
inline matrix reconstruct_normals(const procrustes_alignment& al, const Eigen::Ref<const matrix>& r) {
  if (r.rows() != al.r.rows() || r.cols() != al.r.cols()) throw domain_error("reconstruct: rotation dimension mismatch");
  matrix out = al.source_std * r * al.s * al.target.norm;
  out.rowwise() += al.target.centroid.transpose();
  return out;
}

inline matrix reconstruct_normals(const procrustes_alignment& al) { return reconstruct_normals(al, al.r); }

enum class bias_source : std::uint8_t { source, target };

/// Decoder set whose normals are reconstructed from `source`; standardizers come
/// from the target set, biases from the chosen side.
inline decoder_set reconstructed_set(const procrustes_alignment& al, const Eigen::Ref<const matrix>& r,
                                     const decoder_set& source, const decoder_set& target,
                                     bias_source bias = bias_source::source) {
  if (source.classes() != target.classes()) throw domain_error("reconstruct: decoder sets differ in size");
  if (source.dim() != al.r.rows() || target.dim() != al.r.rows())
    throw domain_error("reconstruct: decoder dimension does not match the alignment");
  const matrix w = reconstruct_normals(al, r);
  decoder_set out;
  out.cv_accuracy = target.cv_accuracy;
  for (int k = 0; k < target.classes(); ++k) {
    linear_decoder d = target.decoders[static_cast<std::size_t>(k)];
    d.w = w.row(k).transpose();
    d.b = bias == bias_source::source ? source.decoders[static_cast<std::size_t>(k)].b : d.b;
    out.decoders.push_back(std::move(d));
  }
  return out;
}

/// Standardized-space normals of a set, one row per decoder.
inline matrix set_weights(const decoder_set& set) {
  matrix m(set.classes(), set.dim());
  for (int k = 0; k < set.classes(); ++k) m.row(k) = set.decoders[static_cast<std::size_t>(k)].w.transpose();
  return m;
}

inline procrustes_alignment align_sets(const decoder_set& source, const decoder_set& target) {
  return procrustes_align(set_weights(source), set_weights(target));
}

inline double reconstruct_decoders(const procrustes_alignment& al, const decoder_set& source, const decoder_set& target,
                                   const Eigen::Ref<const matrix>& x, std::span<const int> y,
                                   bias_source bias = bias_source::source) {
  if (x.cols() != al.r.rows()) throw domain_error("reconstruct_decoders: slice dimension mismatch");
  return reconstructed_set(al, al.r, source, target, bias).accuracy(x, y);
}

// ---------------------------------------------------------------------------
// Rotation swaps.

/// Source decoders fit on E_i, target decoders of stimulus i fit at time j, the
/// alignment between them, and the target slice used for evaluation.
struct alignment_entry {
  decoder_set source;
  decoder_set target;
  procrustes_alignment alignment;
  labeled_slice target_slice;
};

using alignment_grid = std::map<std::pair<int, int>, alignment_entry>;

enum class swap_kind : std::uint8_t { none, time_shift, stimulus_shift };

inline std::string to_string(swap_kind k) {
  switch (k) {
    case swap_kind::none:
      return "none";
    case swap_kind::time_shift:
      return "time_shift";
    default:
      return "stimulus_shift";
  }
}

/// Accuracy at (i, j) using the rotation of (i, j+1) for a time shift or of
/// (i+k, j+k) for a stimulus shift; everything else stays that of (i, j).
inline double swap_accuracy(const alignment_grid& grid, int i, int j, swap_kind kind, int k = 1,
                            bias_source bias = bias_source::source) {
  const auto own = grid.find({i, j});
  if (own == grid.end()) throw domain_error("swap: no alignment at (" + std::to_string(i) + "," + std::to_string(j) + ")");
  std::pair<int, int> donor{i, j};
  if (kind == swap_kind::time_shift) donor = {i, j + 1};
  if (kind == swap_kind::stimulus_shift) donor = {i + k, j + k};
  const auto it = grid.find(donor);
  if (it == grid.end())
    throw domain_error("swap: no alignment at (" + std::to_string(donor.first) + "," + std::to_string(donor.second) + ")");
  const auto& e = own->second;
  return reconstructed_set(e.alignment, it->second.alignment.r, e.source, e.target, bias)
      .accuracy(e.target_slice.x, e.target_slice.y);
}

struct swap_row {
  int i = 0;
  int j = 0;
  double none = 0.0;
  double time_shift = 0.0;
  double stimulus_shift = 0.0;
};

struct swap_report {
  std::vector<swap_row> rows;

  double mean(swap_kind k) const {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (const auto& r : rows) s += k == swap_kind::none ? r.none : k == swap_kind::time_shift ? r.time_shift : r.stimulus_shift;
    return s / static_cast<double>(rows.size());
  }
};

/// Every (i, j) for which both donors exist.
inline swap_report swap_test(const alignment_grid& grid, int k = 1, bias_source bias = bias_source::source) {
  swap_report rep;
  for (const auto& [key, entry] : grid) {
    const auto [i, j] = key;
    if (!grid.contains({i, j + 1}) || !grid.contains({i + k, j + k})) continue;
    rep.rows.push_back({i, j, swap_accuracy(grid, i, j, swap_kind::none, k, bias),
                        swap_accuracy(grid, i, j, swap_kind::time_shift, k, bias),
                        swap_accuracy(grid, i, j, swap_kind::stimulus_shift, k, bias)});
  }
  return rep;
}

struct alignment_grid_options {
  int max_lag = -1;  // j - i upper bound; negative means the task's n_back
  svm_options svm;
};

/// Alignments E_i -> M_(i,j) for 0 < j - i <= max_lag on the trials of `task`.
inline alignment_grid build_alignment_grid(const activation_bank& bank, feature f, const task_spec& task,
                                           const alignment_grid_options& opt = {}, fit_cache* memo = nullptr) {
  const int lag = opt.max_lag < 0 ? task.n_back : opt.max_lag;
  alignment_grid grid;
  std::map<int, decoder_set> sources;
  for (int i = 0; i < bank.length; ++i) {
    for (int j = i + 1; j < bank.length && j - i <= lag; ++j) {
      if (!sources.contains(i)) sources.emplace(i, fit_or_reuse(bank, space_query::encoding(i, f).with_task(task), opt.svm, memo));
      const auto q = space_query::memory(i, j, f).with_task(task);
      alignment_entry e;
      e.source = sources.at(i);
      e.target = fit_or_reuse(bank, q, opt.svm, memo);
      e.alignment = align_sets(e.source, e.target);
      e.target_slice = slice(bank, q);
      grid.emplace(std::make_pair(i, j), std::move(e));
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Causal perturbation.

struct perturbation_curve {
  std::vector<double> magnitudes;
  std::vector<std::array<double, n_responses>> probabilities;  // (match, non_match, no_action)
  double unit = 1.0;
  int n_trials = 0;
};

/// 13 magnitudes evenly spaced over [-3, 3].
inline std::vector<double> default_magnitudes(int points = 13, double extent = 3.0) {
  require(points >= 2, "default_magnitudes: need at least two points");
  std::vector<double> m;
  for (int k = 0; k < points; ++k) m.push_back(-extent + 2.0 * extent * k / (points - 1));
  return m;
}

/// Mean Euclidean norm of the rows of a slice.
inline double mean_row_norm(const Eigen::Ref<const matrix>& x) { return x.rowwise().norm().mean(); }

/// Shifts the hidden state after the first stimulus by magnitude * unit along the
/// unit decoder normal, on 1-back match trials whose first stimulus lies on the
/// negative side of the decoder, and averages the action probabilities at the
/// second step.
inline perturbation_curve causal_perturb(const model& net, embedding_cache& cache, const linear_decoder& dec,
                                         const task_spec& task, std::span<const double> magnitudes, double unit,
                                         int n_trials, std::uint64_t seed, int max_n = 3) {
  if (task.n_back != 1) throw domain_error("causal_perturb: only defined for 1-back tasks");
  if (dec.w.size() != net.hidden_size()) throw domain_error("causal_perturb: decoder dimension mismatch");
  require(n_trials >= 1, "causal_perturb: n_trials must be positive");
  require(dec.feature >= 0 && dec.feature < 3, "causal_perturb: decoder has no feature");
  const auto feat = static_cast<feature>(dec.feature);

  rng_t rng(mix_seed(seed, 0xca05a1));
  std::vector<trial> trials;
  const trial_config tcfg{2, 1.0};
  for (int attempts = 0; static_cast<int>(trials.size()) < n_trials; ++attempts) {
    if (attempts > 1000 * n_trials) throw domain_error("causal_perturb: could not sample matched trials");
    auto tr = generate_trial(task, rng, split_kind::train, cache.canvas(), tcfg);
    if (tr.responses[1] == response::match && attribute_value(tr.stimuli[0], feat, cache.canvas()) != dec.value)
      trials.push_back(std::move(tr));
  }
  const auto ab = assemble(trials, cache, max_n);
  const vector_f dir = (dec.raw_normal().normalized() * unit).cast<float>();

  perturbation_curve curve;
  curve.unit = unit;
  curve.n_trials = n_trials;
  for (double m : magnitudes) {
    state_hook<float> hook;
    if (m != 0.0)
      hook = [&](int t, hidden_state<float>& st) {
        if (t == 0) st.h.colwise() += dir * static_cast<float>(m);
      };
    const auto fc = forward(net, ab.inputs, hook);
    std::array<double, n_responses> p{};
    for (index_t b = 0; b < fc.logits[1].cols(); ++b) {
      const auto sm = softmax(fc.logits[1].col(b));
      for (int k = 0; k < n_responses; ++k) p[static_cast<std::size_t>(k)] += sm(k);
    }
    for (auto& v : p) v /= static_cast<double>(n_trials);
    curve.magnitudes.push_back(m);
    curve.probabilities.push_back(p);
  }
  return curve;
}

/// Curve averaged over every decoder of a set.
inline perturbation_curve causal_perturb_set(const model& net, embedding_cache& cache, const decoder_set& set,
                                             const task_spec& task, std::span<const double> magnitudes, double unit,
                                             int n_trials, std::uint64_t seed, int max_n = 3) {
  require(set.classes() >= 1, "causal_perturb_set: empty decoder set");
  perturbation_curve avg;
  for (int k = 0; k < set.classes(); ++k) {
    const auto c = causal_perturb(net, cache, set.decoders[static_cast<std::size_t>(k)], task, magnitudes, unit, n_trials,
                                  mix_seed(seed, static_cast<std::uint64_t>(k)), max_n);
    if (k == 0) {
      avg = c;
      continue;
    }
    for (std::size_t m = 0; m < c.probabilities.size(); ++m)
      for (std::size_t r = 0; r < c.probabilities[m].size(); ++r) avg.probabilities[m][r] += c.probabilities[m][r];
  }
  for (auto& p : avg.probabilities)
    for (auto& v : p) v /= static_cast<double>(set.classes());
  return avg;
}

// ---------------------------------------------------------------------------
// Orthogonalization pooled over features.

/// O of one space averaged over the three features. Rows are resampled jointly
/// (the same trials for every feature) and each feature's set is refit at its
/// selected C. With `pca_dim` > 0 the space is first projected onto its own top
/// principal axes.
inline ortho_index pooled_ortho(const activation_bank& bank, space_kind kind, int step, int bootstrap_n,
                                std::uint64_t seed, const svm_options& opt = {}, index_t pca_dim = 0,
                                std::optional<task_spec> task = std::nullopt) {
  require(kind == space_kind::perceptual || kind == space_kind::encoding, "pooled_ortho: perceptual or encoding only");
  std::vector<labeled_slice> slices;
  std::vector<decoder_set> sets;
  for (auto f : all_features) {
    space_query q = kind == space_kind::perceptual ? space_query::perceptual(step, f) : space_query::encoding(step, f);
    if (task) q = q.with_task(*task);
    auto s = slice(bank, q);
    if (pca_dim > 0) s.x = fit_pca(s.x, pca_dim).project(s.x);
    sets.push_back(fit_decoder_set(s.x, s.y, attribute_cardinality(f, bank.canvas()), opt));
    slices.push_back(std::move(s));
  }
  ortho_index o;
  o.space = kind == space_kind::perceptual ? "perceptual" : "encoding";
  for (const auto& set : sets) o.value += ortho_index_value(set.normals()) / static_cast<double>(sets.size());
  rng_t rng(mix_seed(seed, 0x0b0b + static_cast<std::uint64_t>(kind)));
  const auto n = static_cast<int>(slices.front().x.rows());
  for (int b = 0; b < bootstrap_n; ++b) {
    std::vector<index_t> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = uniform_int(rng, 0, n);
    double sum = 0.0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const matrix xb = take_rows(slices[k].x, idx);
      const auto yb = take<int>(slices[k].y, idx);
      sum += ortho_index_value(refit_decoder_set(sets[k], xb, yb, opt).normals());
    }
    o.samples.push_back(sum / static_cast<double>(sets.size()));
  }
  return o;
}

}  // namespace wmg
