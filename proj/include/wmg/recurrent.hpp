#pragma once

// Trainable cognitive stage: linear reduction of perceptual features, task-vector
// concatenation, affine embedding with layer normalization, a recurrent core
// (vanilla tanh RNN, GRU or LSTM) and a 3-way readout, with exact BPTT.
//
// Batches are column-major: every activation matrix is (units x batch).

#include "wmg/core.hpp"

#include <array>
#include <functional>
#include <optional>

namespace wmg {

enum class arch : std::uint8_t { vanilla = 0, gru = 1, lstm = 2 };

inline std::string to_string(arch a) {
  switch (a) {
    case arch::vanilla:
      return "vanilla";
    case arch::gru:
      return "gru";
    default:
      return "lstm";
  }
}

inline arch parse_arch(const std::string& s) {
  if (s == "vanilla" || s == "rnn") return arch::vanilla;
  if (s == "gru") return arch::gru;
  if (s == "lstm") return arch::lstm;
  throw domain_error("unknown architecture: " + s);
}

/// Number of stacked gate blocks in the recurrent core.
inline int gate_count(arch a) { return a == arch::vanilla ? 1 : a == arch::gru ? 3 : 4; }

enum class block_id : std::uint8_t {
  reduce_w,
  reduce_b,
  embed_w,
  embed_b,
  ln_gain,
  ln_shift,
  core_w_ih,
  core_w_hh,
  core_b,
  head_w,
  head_b,
  count
};

struct param_block {
  std::string name;
  index_t offset = 0;
  index_t rows = 0;
  index_t cols = 0;
  index_t size() const { return rows * cols; }
};

inline constexpr double layer_norm_eps = 1e-6;

/// Closed-form trainable parameter count.
inline index_t parameter_count(arch a, index_t hidden, index_t input_dim, index_t task_bits) {
  const index_t g = gate_count(a);
  return hidden * input_dim + hidden               // reduce
         + hidden * (hidden + task_bits) + hidden  // embed
         + 2 * hidden                              // layer norm
         + 2 * g * hidden * hidden + g * hidden    // core
         + 3 * hidden + 3;                         // head
}

template <typename T>
class basic_model {
 public:
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  basic_model() = default;

  basic_model(arch a, index_t hidden, index_t input_dim, index_t task_bits)
      : arch_(a), hidden_(hidden), input_dim_(input_dim), task_bits_(task_bits) {
    if (hidden < 1 || input_dim < 1 || task_bits < 0) throw domain_error("model: invalid sizes");
    const index_t g = gate_count(a);
    const std::string core = to_string(a);
    add("reduce.w", hidden, input_dim);
    add("reduce.b", hidden, 1);
    add("embed.w", hidden, hidden + task_bits);
    add("embed.b", hidden, 1);
    add("layernorm.gain", hidden, 1);
    add("layernorm.shift", hidden, 1);
    add(core + ".w_ih", g * hidden, hidden);
    add(core + ".w_hh", g * hidden, hidden);
    add(core + ".b", g * hidden, 1);
    add("head.w", n_out, hidden);
    add("head.b", n_out, 1);
    params_ = vec::Zero(size_);
  }

  static constexpr index_t n_out = 3;

  arch architecture() const { return arch_; }
  index_t hidden_size() const { return hidden_; }
  index_t input_dim() const { return input_dim_; }
  index_t task_bits() const { return task_bits_; }
  index_t size() const { return size_; }
  const std::vector<param_block>& blocks() const { return blocks_; }

  vec& params() { return params_; }
  const vec& params() const { return params_; }

  Eigen::Map<mat> block(block_id id) { return view(params_, id); }
  Eigen::Map<const mat> block(block_id id) const { return view(params_, id); }

  Eigen::Map<mat> view(vec& flat, block_id id) const {
    const auto& b = blocks_[static_cast<std::size_t>(id)];
    return Eigen::Map<mat>(flat.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<const mat> view(const vec& flat, block_id id) const {
    const auto& b = blocks_[static_cast<std::size_t>(id)];
    return Eigen::Map<const mat>(flat.data() + b.offset, b.rows, b.cols);
  }

  template <typename U>
  basic_model<U> cast() const {
    basic_model<U> m(arch_, hidden_, input_dim_, task_bits_);
    m.params() = params_.template cast<U>();
    return m;
  }

  std::string content_hash() const {
    fnv1a h;
    h.update_value(static_cast<std::uint8_t>(arch_));
    h.update_value(hidden_);
    h.update_value(input_dim_);
    h.update_value(task_bits_);
    h.update(params_.data(), static_cast<std::size_t>(params_.size()) * sizeof(T));
    return hex64(h.digest());
  }

 private:
  void add(std::string name, index_t rows, index_t cols) {
    blocks_.push_back({std::move(name), size_, rows, cols});
    size_ += rows * cols;
  }

  arch arch_ = arch::gru;
  index_t hidden_ = 0;
  index_t input_dim_ = 0;
  index_t task_bits_ = 0;
  index_t size_ = 0;
  std::vector<param_block> blocks_;
  vec params_;
};

using model = basic_model<float>;

/// Fan-in scaled normal initialization (variance 2/fan_in) for every weight
/// matrix; biases and layer-norm shift zero, layer-norm gain one.
template <typename T = float>
basic_model<T> init_model(arch a, index_t hidden, index_t input_dim, index_t task_bits, rng_t& rng) {
  if (hidden < 8) throw domain_error("init_model: hidden_size must be >= 8");
  basic_model<T> m(a, hidden, input_dim, task_bits);
  for (auto id : {block_id::reduce_w, block_id::embed_w, block_id::core_w_ih, block_id::core_w_hh, block_id::head_w}) {
    auto w = m.block(id);
    const double sd = std::sqrt(2.0 / static_cast<double>(w.cols()));
    for (index_t j = 0; j < w.cols(); ++j)
      for (index_t i = 0; i < w.rows(); ++i) w(i, j) = static_cast<T>(sd * normal(rng));
  }
  m.block(block_id::ln_gain).setOnes();
  return m;
}

template <typename T>
struct hidden_state {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> h;
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> c;  // lstm only
};

namespace detail {

template <typename D>
auto sigmoid(const Eigen::MatrixBase<D>& x) {
  using S = typename D::Scalar;
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

}  // namespace detail

/// Intermediate values of one cell update, kept for the backward pass.
template <typename T>
struct cell_cache {
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  mat gates;   // post-nonlinearity gate activations, stacked (G*H x B)
  mat hr;      // gru: r ⊙ h_prev
  mat tanh_c;  // lstm: tanh(c')
};

/// One recurrent update. Vanilla: h' = tanh(W x + U h + b). GRU (candidate-gated):
/// r, z = σ(...), n = tanh(W_n x + U_n (r⊙h) + b_n), h' = (1-z)⊙h + z⊙n.
/// LSTM: i, f, o = σ(...), g = tanh(...), c' = f⊙c + i⊙g, h' = o⊙tanh(c').
template <typename T>
hidden_state<T> cell_step(const basic_model<T>& m, const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& x,
                          const hidden_state<T>& s, cell_cache<T>* cache = nullptr) {
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  const index_t hs = m.hidden_size();
  if (x.rows() != hs || s.h.rows() != hs || x.cols() != s.h.cols()) throw domain_error("cell_step: dimension mismatch");
  const auto w_ih = m.block(block_id::core_w_ih);
  const auto w_hh = m.block(block_id::core_w_hh);
  const auto bias = m.block(block_id::core_b);
  hidden_state<T> out;
  cell_cache<T> local;
  cell_cache<T>& cc = cache ? *cache : local;

  switch (m.architecture()) {
    case arch::vanilla: {
      mat a = w_ih * x + w_hh * s.h;
      a.colwise() += bias.col(0);
      out.h = a.array().tanh().matrix();
      cc.gates = out.h;
      break;
    }
    case arch::gru: {
      mat gi = w_ih * x;
      gi.colwise() += bias.col(0);
      mat rz = gi.topRows(2 * hs) + w_hh.topRows(2 * hs) * s.h;
      rz = detail::sigmoid(rz);
      cc.hr = rz.topRows(hs).cwiseProduct(s.h);
      mat n = gi.bottomRows(hs) + w_hh.bottomRows(hs) * cc.hr;
      n = n.array().tanh().matrix();
      const auto z = rz.bottomRows(hs);
      out.h = (mat::Ones(hs, x.cols()) - z).cwiseProduct(s.h) + z.cwiseProduct(n);
      cc.gates.resize(3 * hs, x.cols());
      cc.gates.topRows(2 * hs) = rz;
      cc.gates.bottomRows(hs) = n;
      break;
    }
    case arch::lstm: {
      if (s.c.rows() != hs || s.c.cols() != x.cols()) throw domain_error("cell_step: lstm requires a cell state");
      mat a = w_ih * x + w_hh * s.h;
      a.colwise() += bias.col(0);
      cc.gates.resize(4 * hs, x.cols());
      cc.gates.topRows(2 * hs) = detail::sigmoid(a.topRows(2 * hs));           // i, f
      cc.gates.middleRows(2 * hs, hs) = a.middleRows(2 * hs, hs).array().tanh().matrix();  // g
      cc.gates.bottomRows(hs) = detail::sigmoid(a.bottomRows(hs));             // o
      const auto i = cc.gates.topRows(hs);
      const auto f = cc.gates.middleRows(hs, hs);
      const auto g = cc.gates.middleRows(2 * hs, hs);
      const auto o = cc.gates.bottomRows(hs);
      out.c = f.cwiseProduct(s.c) + i.cwiseProduct(g);
      cc.tanh_c = out.c.array().tanh().matrix();
      out.h = o.cwiseProduct(cc.tanh_c);
      break;
    }
  }
  if (!out.h.allFinite() || (out.c.size() && !out.c.allFinite())) throw numeric_error("cell_step: non-finite state");
  return out;
}

template <typename T>
hidden_state<T> zero_state(const basic_model<T>& m, index_t batch) {
  hidden_state<T> s;
  s.h = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>::Zero(m.hidden_size(), batch);
  if (m.architecture() == arch::lstm) s.c = s.h;
  return s;
}

/// Inputs for a batch of equal-length trials.
template <typename T>
struct sequence_batch {
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<mat> perceptual;  // one (input_dim x B) matrix per timestep
  mat task;                     // task_bits x B

  index_t steps() const { return static_cast<index_t>(perceptual.size()); }
  index_t batch() const { return task.cols(); }
};

/// Everything recorded during a forward pass (one entry per timestep).
template <typename T>
struct forward_cache {
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  std::vector<mat> embed_in;   // [reduced; task]
  std::vector<mat> xhat;       // normalized pre-gain embedding
  std::vector<vec> inv_std;    // per column
  std::vector<mat> x;          // layer-norm output fed to the cell (input embedding)
  std::vector<hidden_state<T>> state;  // state after consuming step t
  std::vector<cell_cache<T>> cell;
  std::vector<mat> logits;     // 3 x B
  hidden_state<T> initial;
};

/// Called after step t with the post-update state; may modify it in place.
template <typename T>
using state_hook = std::function<void(int t, hidden_state<T>& state)>;

template <typename T>
forward_cache<T> forward(const basic_model<T>& m, const sequence_batch<T>& in, const state_hook<T>& hook = {}) {
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  const index_t hs = m.hidden_size();
  const index_t bsz = in.batch();
  if (in.task.rows() != m.task_bits()) throw domain_error("forward: task vector length mismatch");
  for (const auto& p : in.perceptual)
    if (p.rows() != m.input_dim() || p.cols() != bsz) throw domain_error("forward: perceptual input shape mismatch");

  forward_cache<T> fc;
  fc.initial = zero_state(m, bsz);
  hidden_state<T> state = fc.initial;
  const auto reduce_w = m.block(block_id::reduce_w);
  const auto reduce_b = m.block(block_id::reduce_b);
  const auto embed_w = m.block(block_id::embed_w);
  const auto embed_b = m.block(block_id::embed_b);
  const auto gain = m.block(block_id::ln_gain);
  const auto shift = m.block(block_id::ln_shift);
  const auto head_w = m.block(block_id::head_w);
  const auto head_b = m.block(block_id::head_b);

  for (index_t t = 0; t < in.steps(); ++t) {
    mat e_in(hs + m.task_bits(), bsz);
    e_in.topRows(hs).noalias() = reduce_w * in.perceptual[static_cast<std::size_t>(t)];
    e_in.topRows(hs).colwise() += reduce_b.col(0);
    e_in.bottomRows(m.task_bits()) = in.task;
    mat a = embed_w * e_in;
    a.colwise() += embed_b.col(0);
    const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = a.colwise().mean();
    a.rowwise() -= mean;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> var = a.array().square().colwise().mean();
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv = (var.array() + T(layer_norm_eps)).rsqrt().transpose();
    mat xhat = a * inv.asDiagonal();
    mat x = gain.col(0).asDiagonal() * xhat;
    x.colwise() += shift.col(0);

    cell_cache<T> cc;
    state = cell_step(m, x, state, &cc);
    mat logits = head_w * state.h;
    logits.colwise() += head_b.col(0);

    fc.embed_in.push_back(std::move(e_in));
    fc.xhat.push_back(std::move(xhat));
    fc.inv_std.push_back(std::move(inv));
    fc.x.push_back(std::move(x));
    fc.cell.push_back(std::move(cc));
    fc.logits.push_back(std::move(logits));
    if (hook) hook(static_cast<int>(t), state);
    fc.state.push_back(state);
  }
  return fc;
}

/// Exact gradients of a loss whose per-step logit gradients are `dlogits`.
template <typename T>
typename basic_model<T>::vec backward(const basic_model<T>& m, const sequence_batch<T>& in,
                                      const forward_cache<T>& fc,
                                      const std::vector<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>& dlogits) {
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using vec = typename basic_model<T>::vec;
  const index_t hs = m.hidden_size();
  const index_t bsz = in.batch();
  const auto steps = static_cast<index_t>(fc.logits.size());
  if (static_cast<index_t>(dlogits.size()) != steps) throw domain_error("backward: dlogits length mismatch");

  vec grad = vec::Zero(m.size());
  auto g_reduce_w = m.view(grad, block_id::reduce_w);
  auto g_reduce_b = m.view(grad, block_id::reduce_b);
  auto g_embed_w = m.view(grad, block_id::embed_w);
  auto g_embed_b = m.view(grad, block_id::embed_b);
  auto g_gain = m.view(grad, block_id::ln_gain);
  auto g_shift = m.view(grad, block_id::ln_shift);
  auto g_w_ih = m.view(grad, block_id::core_w_ih);
  auto g_w_hh = m.view(grad, block_id::core_w_hh);
  auto g_b = m.view(grad, block_id::core_b);
  auto g_head_w = m.view(grad, block_id::head_w);
  auto g_head_b = m.view(grad, block_id::head_b);

  const auto w_ih = m.block(block_id::core_w_ih);
  const auto w_hh = m.block(block_id::core_w_hh);
  const auto head_w = m.block(block_id::head_w);
  const auto embed_w = m.block(block_id::embed_w);
  const auto gain = m.block(block_id::ln_gain);
  const bool is_lstm = m.architecture() == arch::lstm;

  mat dh_next = mat::Zero(hs, bsz);
  mat dc_next = is_lstm ? mat::Zero(hs, bsz) : mat();
  const mat ones = mat::Ones(hs, bsz);

  for (index_t t = steps - 1; t >= 0; --t) {
    const auto st = static_cast<std::size_t>(t);
    const auto& cur = fc.state[st];
    const auto& prev = t > 0 ? fc.state[st - 1] : fc.initial;
    const auto& x = fc.x[st];
    const auto& cc = fc.cell[st];

    g_head_w.noalias() += dlogits[st] * cur.h.transpose();
    g_head_b.col(0) += dlogits[st].rowwise().sum();
    mat dh = dh_next;
    dh.noalias() += head_w.transpose() * dlogits[st];

    mat dpre;  // gradient at gate pre-activations
    mat dx;
    switch (m.architecture()) {
      case arch::vanilla: {
        dpre = dh.cwiseProduct((ones.array() - cc.gates.array().square()).matrix());
        dh_next.noalias() = w_hh.transpose() * dpre;
        g_w_hh.noalias() += dpre * prev.h.transpose();
        break;
      }
      case arch::gru: {
        const auto r = cc.gates.topRows(hs);
        const auto z = cc.gates.middleRows(hs, hs);
        const auto n = cc.gates.bottomRows(hs);
        dpre.resize(3 * hs, bsz);
        const mat dn = dh.cwiseProduct(z);
        const mat dz = dh.cwiseProduct(n - prev.h);
        mat dh_prev = dh.cwiseProduct(ones - z);
        const mat dpre_n = dn.cwiseProduct((ones.array() - n.array().square()).matrix());
        const mat dhr = w_hh.bottomRows(hs).transpose() * dpre_n;
        const mat dr = dhr.cwiseProduct(prev.h);
        dh_prev += dhr.cwiseProduct(r);
        dpre.topRows(hs) = dr.cwiseProduct(r.cwiseProduct(ones - r));
        dpre.middleRows(hs, hs) = dz.cwiseProduct(z.cwiseProduct(ones - z));
        dpre.bottomRows(hs) = dpre_n;
        dh_prev.noalias() += w_hh.topRows(2 * hs).transpose() * dpre.topRows(2 * hs);
        g_w_hh.topRows(2 * hs).noalias() += dpre.topRows(2 * hs) * prev.h.transpose();
        g_w_hh.bottomRows(hs).noalias() += dpre_n * cc.hr.transpose();
        dh_next = std::move(dh_prev);
        break;
      }
      case arch::lstm: {
        const auto i = cc.gates.topRows(hs);
        const auto f = cc.gates.middleRows(hs, hs);
        const auto g = cc.gates.middleRows(2 * hs, hs);
        const auto o = cc.gates.bottomRows(hs);
        const mat dc = dc_next + dh.cwiseProduct(o).cwiseProduct((ones.array() - cc.tanh_c.array().square()).matrix());
        dpre.resize(4 * hs, bsz);
        dpre.topRows(hs) = dc.cwiseProduct(g).cwiseProduct(i.cwiseProduct(ones - i));
        dpre.middleRows(hs, hs) = dc.cwiseProduct(prev.c).cwiseProduct(f.cwiseProduct(ones - f));
        dpre.middleRows(2 * hs, hs) = dc.cwiseProduct(i).cwiseProduct((ones.array() - g.array().square()).matrix());
        dpre.bottomRows(hs) = dh.cwiseProduct(cc.tanh_c).cwiseProduct(o.cwiseProduct(ones - o));
        dc_next = dc.cwiseProduct(f);
        dh_next.noalias() = w_hh.transpose() * dpre;
        g_w_hh.noalias() += dpre * prev.h.transpose();
        break;
      }
    }
    g_w_ih.noalias() += dpre * x.transpose();
    g_b.col(0) += dpre.rowwise().sum();
    dx.noalias() = w_ih.transpose() * dpre;

    // layer norm
    const auto& xhat = fc.xhat[st];
    g_gain.col(0) += dx.cwiseProduct(xhat).rowwise().sum();
    g_shift.col(0) += dx.rowwise().sum();
    const mat dxhat = gain.col(0).asDiagonal() * dx;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> mean_d = dxhat.colwise().mean();
    const Eigen::Matrix<T, Eigen::Dynamic, 1> mean_dx = dxhat.cwiseProduct(xhat).colwise().mean().transpose();
    mat da = dxhat;
    da.rowwise() -= mean_d;
    da -= xhat * mean_dx.asDiagonal();
    da = da * fc.inv_std[st].asDiagonal();

    g_embed_w.noalias() += da * fc.embed_in[st].transpose();
    g_embed_b.col(0) += da.rowwise().sum();
    const mat du = embed_w.leftCols(hs).transpose() * da;
    g_reduce_w.noalias() += du * in.perceptual[st].transpose();
    g_reduce_b.col(0) += du.rowwise().sum();
  }
  return grad;
}

/// Mean softmax cross-entropy over all (step, trial) pairs; fills per-step logit
/// gradients when `dlogits` is non-null. `labels[t][b]` is the response index.
template <typename T>
double cross_entropy(const std::vector<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>& logits,
                     const std::vector<std::vector<int>>& labels,
                     std::vector<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>* dlogits = nullptr) {
  using mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  require(logits.size() == labels.size(), "cross_entropy: one label row per step required");
  std::size_t count = 0;
  for (const auto& l : logits) count += static_cast<std::size_t>(l.cols());
  const double scale = 1.0 / static_cast<double>(count);
  double loss = 0.0;
  if (dlogits) dlogits->clear();
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const auto& z = logits[t];
    mat d(z.rows(), z.cols());
    for (index_t b = 0; b < z.cols(); ++b) {
      const double mx = static_cast<double>(z.col(b).maxCoeff());
      double sum = 0.0;
      for (index_t k = 0; k < z.rows(); ++k) sum += std::exp(static_cast<double>(z(k, b)) - mx);
      const double lse = mx + std::log(sum);
      const int y = labels[t][static_cast<std::size_t>(b)];
      loss -= (static_cast<double>(z(y, b)) - lse) * scale;
      for (index_t k = 0; k < z.rows(); ++k)
        d(k, b) = static_cast<T>((std::exp(static_cast<double>(z(k, b)) - lse) - (k == y ? 1.0 : 0.0)) * scale);
    }
    if (dlogits) dlogits->push_back(std::move(d));
  }
  return loss;
}

template <typename D>
Eigen::VectorXd softmax(const Eigen::MatrixBase<D>& z) {
  Eigen::VectorXd v = z.template cast<double>();
  v.array() -= v.maxCoeff();
  v = v.array().exp();
  return v / v.sum();
}

// ---------------------------------------------------------------------------
// Checkpoints.

struct checkpoint_meta {
  std::int64_t iteration = 0;
  std::string rng_state;
  std::string manifest_hash;
};

template <typename T>
void save_checkpoint(const std::string& path, const basic_model<T>& m, const checkpoint_meta& meta,
                     const std::vector<float>& opt_state = {}) {
  binary_writer w;
  w.put_raw("WMGCKPT1");
  w.put<std::uint32_t>(1);  // version
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.architecture()));
  w.put<std::int64_t>(m.hidden_size());
  w.put<std::int64_t>(m.input_dim());
  w.put<std::int64_t>(m.task_bits());
  const Eigen::VectorXf p = m.params().template cast<float>();
  w.put_span(std::span<const float>(p.data(), static_cast<std::size_t>(p.size())));
  w.put<std::int64_t>(meta.iteration);
  w.put_string(meta.rng_state);
  w.put_string(meta.manifest_hash);
  w.put_span(std::span<const float>(opt_state));
  w.seal();
  w.save(path);
}

struct loaded_checkpoint {
  model net;
  checkpoint_meta meta;
  std::vector<float> opt_state;
};

inline loaded_checkpoint load_checkpoint(const std::string& path) {
  auto r = binary_reader::from_file(path);
  r.verify_seal();
  r.expect_magic("WMGCKPT1");
  if (r.get<std::uint32_t>() != 1) throw integrity_error("checkpoint: unsupported version");
  const auto a = static_cast<arch>(r.get<std::uint8_t>());
  const auto h = r.get<std::int64_t>();
  const auto in = r.get<std::int64_t>();
  const auto k = r.get<std::int64_t>();
  loaded_checkpoint out;
  out.net = model(a, h, in, k);
  const auto p = r.get_vector<float>();
  if (static_cast<index_t>(p.size()) != out.net.size()) throw integrity_error("checkpoint: parameter count mismatch");
  out.net.params() = Eigen::Map<const Eigen::VectorXf>(p.data(), static_cast<index_t>(p.size()));
  out.meta.iteration = r.get<std::int64_t>();
  out.meta.rng_state = r.get_string();
  out.meta.manifest_hash = r.get_string();
  out.opt_state = r.get_vector<float>();
  return out;
}

}  // namespace wmg
