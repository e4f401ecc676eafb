#pragma once

// Procedural object renderer and the frozen convolutional perceptual frontend.
//
// Categories are shape families (triangle, square, ellipse, cross); identities
// are aspect/fill variants within a family. Each 32x32 canvas has four 16x16
// quadrants, one per location index (0 top-left, 1 top-right, 2 bottom-left,
// 3 bottom-right).

#include "wmg/core.hpp"
#include "wmg/linear_svm.hpp"

#include <array>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <utility>
#include <tuple>

namespace wmg {

enum class background_kind : std::uint8_t { blank, texture };

struct background {
  background_kind kind = background_kind::blank;
  std::uint64_t seed = 0;
  friend bool operator==(const background&, const background&) = default;
};

struct stimulus_spec {
  int category = 0;
  int identity = 0;
  int location = 0;
  double view_angle = 0.0;
  background bg;
  friend bool operator==(const stimulus_spec&, const stimulus_spec&) = default;
};

inline constexpr int n_locations = 4;
inline constexpr int n_shape_families = 4;

struct canvas_config {
  int height = 32;
  int width = 32;
  int n_cat = 4;
  int n_id = 2;
  /// Extra held-out variants per family, only drawn by the novel_identity split.
  int n_novel_id = 1;
  std::vector<double> train_angles{0, 30, 60, 90, 120, 150, 180, 210, 240, 270, 300, 330};
  std::vector<double> novel_angles{15, 105, 195, 285};
  bool textured = false;
  /// Texture seeds are drawn from [0, texture_pool).
  int texture_pool = 16;

  int identity_classes() const { return n_cat * n_id; }

  void validate() const {
    require(height == 32 && width == 32, "canvas: only 32x32 canvases are supported");
    require(n_cat >= 1 && n_cat <= 8, "canvas: n_cat must be in [1, 8]");
    require(n_id >= 1 && n_id + n_novel_id <= 6, "canvas: at most 6 identity variants per family");
    require(!train_angles.empty() && !novel_angles.empty(), "canvas: empty angle set");
    for (double a : train_angles)
      for (double b : novel_angles) require(a != b, "canvas: training and novel angle sets overlap");
    require(texture_pool >= 1, "canvas: texture_pool must be positive");
  }
};

/// Global identity label used by decoders: trained variants map to
/// [0, n_cat*n_id), held-out variants to [n_cat*n_id, ...).
inline int identity_label(const stimulus_spec& s, const canvas_config& c) {
  if (s.identity < c.n_id) return s.category * c.n_id + s.identity;
  return c.identity_classes() + s.category * c.n_novel_id + (s.identity - c.n_id);
}

inline void validate_spec(const stimulus_spec& s, const canvas_config& c) {
  if (s.category < 0 || s.category >= c.n_cat) throw domain_error("stimulus: category index out of range");
  if (s.identity < 0 || s.identity >= c.n_id + c.n_novel_id) throw domain_error("stimulus: identity index out of range");
  if (s.location < 0 || s.location >= n_locations) throw domain_error("stimulus: location index out of range");
  if (!(s.view_angle >= 0.0 && s.view_angle < 360.0)) throw domain_error("stimulus: view angle outside [0, 360)");
}

/// Grayscale image, values in [0, 1], row-major height x width.
using image = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct variant_params {
  double aspect;
  bool hollow;
};

inline constexpr std::array<variant_params, 6> variants{
    {{1.0, false}, {1.0, true}, {0.6, false}, {0.6, true}, {0.8, false}, {0.8, true}}};

// Inside test for the unit-radius family outline at local coordinates (u, v).
inline bool inside_family(int family, double u, double v) {
  switch (family % n_shape_families) {
    case 0: {  // triangle, apex up
      constexpr double r = 1.0;
      const double y = -v;
      return y >= -0.5 * r && std::sqrt(3.0) * u + y <= r && -std::sqrt(3.0) * u + y <= r;
    }
    case 1:
      return std::abs(u) <= 0.75 && std::abs(v) <= 0.75;
    case 2:
      return u * u + v * v <= 0.85 * 0.85;
    default:
      return (std::abs(u) <= 0.3 && std::abs(v) <= 0.95) || (std::abs(v) <= 0.3 && std::abs(u) <= 0.95);
  }
}

// Categories beyond four reuse the families with a fixed extra rotation.
inline double family_offset_deg(int category) { return 45.0 * (category / n_shape_families); }

inline bool inside_object(int category, int identity, double u, double v) {
  const auto& p = variants[static_cast<std::size_t>(identity)];
  const double vs = v / p.aspect;
  const bool outer = inside_family(category, u, vs);
  if (!p.hollow || !outer) return outer;
  constexpr double inner = 0.55;
  return !inside_family(category, u / inner, vs / inner);
}

inline image texture_field(std::uint64_t seed, int h, int w) {
  rng_t rng(mix_seed(seed, 0x7e47));
  image f(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) f(i, j) = static_cast<float>(uniform_real(rng));
  for (int pass = 0; pass < 2; ++pass) {  // two 5x5 box blurs, wrap-around
    image g(h, w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        float acc = 0.f;
        for (int di = -2; di <= 2; ++di)
          for (int dj = -2; dj <= 2; ++dj) acc += f((i + di + h) % h, (j + dj + w) % w);
        g(i, j) = acc / 25.f;
      }
    f = g;
  }
  const float lo = f.minCoeff();
  const float hi = f.maxCoeff();
  const float span = hi > lo ? hi - lo : 1.f;
  return ((f.array() - lo) / span * 0.6f).matrix();
}

}  // namespace detail

/// Renders one object: family silhouette for (category, identity), rotated by
/// view_angle about its own centre, placed in quadrant `location`.
inline image render_stimulus(const stimulus_spec& spec, const canvas_config& canvas) {
  validate_spec(spec, canvas);
  const int h = canvas.height;
  const int w = canvas.width;
  image img = spec.bg.kind == background_kind::texture ? detail::texture_field(spec.bg.seed, h, w)
                                                       : image::Zero(h, w);
  const int qh = h / 2;
  const int qw = w / 2;
  const int row0 = (spec.location / 2) * qh;
  const int col0 = (spec.location % 2) * qw;
  const double cy = qh / 2.0;
  const double cx = qw / 2.0;
  constexpr double radius = 7.0;
  constexpr int ss = 4;  // supersampling per axis
  const double theta = (spec.view_angle + detail::family_offset_deg(spec.category)) * std::numbers::pi / 180.0;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  for (int i = 0; i < qh; ++i) {
    for (int j = 0; j < qw; ++j) {
      int hits = 0;
      for (int a = 0; a < ss; ++a) {
        for (int b = 0; b < ss; ++b) {
          const double dy = (i + (a + 0.5) / ss - cy) / radius;
          const double dx = (j + (b + 0.5) / ss - cx) / radius;
          // rotate the sample point by -theta into object coordinates
          const double u = ct * dx + st * dy;
          const double v = -st * dx + ct * dy;
          hits += detail::inside_object(spec.category, spec.identity, u, v);
        }
      }
      const float alpha = static_cast<float>(hits) / (ss * ss);
      float& px = img(row0 + i, col0 + j);
      px = alpha + (1.f - alpha) * px;
    }
  }
  return img;
}

enum class split_kind : std::uint8_t { train, novel_angle, novel_identity };

inline std::string to_string(split_kind s) {
  switch (s) {
    case split_kind::train:
      return "train";
    case split_kind::novel_angle:
      return "novel_angle";
    default:
      return "novel_identity";
  }
}

inline split_kind parse_split(const std::string& s) {
  if (s == "train") return split_kind::train;
  if (s == "novel_angle") return split_kind::novel_angle;
  if (s == "novel_identity") return split_kind::novel_identity;
  throw domain_error("unknown split: " + s);
}

inline double sample_angle(rng_t& rng, split_kind split, const canvas_config& c) {
  const auto& set = split == split_kind::novel_angle ? c.novel_angles : c.train_angles;
  return set[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(set.size())))];
}

inline int sample_identity(rng_t& rng, split_kind split, const canvas_config& c) {
  if (split == split_kind::novel_identity) return c.n_id + uniform_int(rng, 0, c.n_novel_id);
  return uniform_int(rng, 0, c.n_id);
}

inline background sample_background(rng_t& rng, const canvas_config& c) {
  if (!c.textured) return {};
  return {background_kind::texture, static_cast<std::uint64_t>(uniform_int(rng, 0, c.texture_pool))};
}

/// Draws one stimulus uniformly over the attribute values admitted by the split.
inline stimulus_spec sample_split(rng_t& rng, split_kind split, const canvas_config& c) {
  stimulus_spec s;
  s.category = uniform_int(rng, 0, c.n_cat);
  s.identity = sample_identity(rng, split, c);
  s.location = uniform_int(rng, 0, n_locations);
  s.view_angle = sample_angle(rng, split, c);
  s.bg = sample_background(rng, c);
  return s;
}

/// Every distinct stimulus a split can produce (texture seeds enumerated too).
inline std::vector<stimulus_spec> enumerate_split(split_kind split, const canvas_config& c) {
  std::vector<stimulus_spec> out;
  const auto& angles = split == split_kind::novel_angle ? c.novel_angles : c.train_angles;
  const int id_lo = split == split_kind::novel_identity ? c.n_id : 0;
  const int id_hi = split == split_kind::novel_identity ? c.n_id + c.n_novel_id : c.n_id;
  const int n_bg = c.textured ? c.texture_pool : 1;
  for (int cat = 0; cat < c.n_cat; ++cat)
    for (int id = id_lo; id < id_hi; ++id)
      for (int loc = 0; loc < n_locations; ++loc)
        for (double a : angles)
          for (int bgi = 0; bgi < n_bg; ++bgi) {
            stimulus_spec s{cat, id, loc, a, {}};
            if (c.textured) s.bg = {background_kind::texture, static_cast<std::uint64_t>(bgi)};
            out.push_back(s);
          }
  return out;
}

// ---------------------------------------------------------------------------
// Perceptual frontend: three conv(3x3, pad 1) + ReLU + 2x2 max-pool stages.

struct conv_stage {
  int in_ch = 0;
  int out_ch = 0;
  int size = 0;  // input spatial size (square)
  matrix_f w;    // out_ch x (in_ch*9)
  vector_f b;    // out_ch
};

struct frontend_config {
  std::array<int, 3> channels{8, 16, 16};
  int epochs_max = 300;
  int check_every = 10;
  int batch = 32;
  double lr = 3e-3;
  double gate_threshold = 0.99;
  int gate_folds = 2;
  std::uint64_t seed = 1;
};

class perceptual_frontend {
 public:
  perceptual_frontend() = default;

  perceptual_frontend(const frontend_config& cfg, int image_size, rng_t& rng) {
    int in_ch = 1;
    int size = image_size;
    for (int c : cfg.channels) {
      conv_stage st;
      st.in_ch = in_ch;
      st.out_ch = c;
      st.size = size;
      const double sd = std::sqrt(2.0 / (in_ch * 9));
      st.w.resize(c, in_ch * 9);
      for (index_t i = 0; i < st.w.size(); ++i) st.w.data()[i] = static_cast<float>(sd * normal(rng));
      st.b = vector_f::Zero(c);
      stages_.push_back(std::move(st));
      in_ch = c;
      size /= 2;
    }
    out_dim_ = in_ch * size * size;
    image_size_ = image_size;
  }

  int out_dim() const { return out_dim_; }
  int image_size() const { return image_size_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  std::vector<conv_stage>& stages() {
    if (frozen_) throw domain_error("frontend is frozen");
    return stages_;
  }
  const std::vector<conv_stage>& stages() const { return stages_; }

  /// Activations of every stage, kept for backpropagation during pretraining.
  struct trace {
    std::vector<matrix_f> cols;   // im2col per stage: (in_ch*9) x (size*size)
    std::vector<matrix_f> pre;    // conv output after ReLU: out_ch x (size*size)
    std::vector<std::vector<int>> argmax;
    vector_f features;
  };

  trace forward(const image& img) const {
    if (img.rows() != image_size_ || img.cols() != image_size_) throw domain_error("embed: image shape mismatch");
    trace tr;
    matrix_f act = Eigen::Map<const matrix_f>(img.data(), 1, img.size());  // 1 x (H*W), row-major pixels
    for (const auto& st : stages_) {
      matrix_f cols = im2col(act, st.in_ch, st.size);
      matrix_f out = (st.w * cols).colwise() + st.b;
      out = out.cwiseMax(0.f);
      std::vector<int> arg;
      act = maxpool(out, st.out_ch, st.size, arg);
      tr.cols.push_back(std::move(cols));
      tr.pre.push_back(std::move(out));
      tr.argmax.push_back(std::move(arg));
    }
    tr.features = Eigen::Map<const vector_f>(act.data(), act.size());
    return tr;
  }

  vector_f embed(const image& img) const { return forward(img).features; }

  /// Accumulates parameter gradients given d(loss)/d(features).
  void backward(const trace& tr, const vector_f& dfeat, std::vector<matrix_f>& dw, std::vector<vector_f>& db) const {
    matrix_f dact = Eigen::Map<const matrix_f>(dfeat.data(), stages_.back().out_ch,
                                               dfeat.size() / stages_.back().out_ch);
    for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
      const auto& st = stages_[static_cast<std::size_t>(s)];
      const auto& pre = tr.pre[static_cast<std::size_t>(s)];
      matrix_f dout = matrix_f::Zero(pre.rows(), pre.cols());
      const auto& arg = tr.argmax[static_cast<std::size_t>(s)];
      for (index_t i = 0; i < dact.size(); ++i) dout.data()[arg[static_cast<std::size_t>(i)]] += dact.data()[i];
      dout = (pre.array() > 0.f).select(dout, 0.f);
      dw[static_cast<std::size_t>(s)].noalias() += dout * tr.cols[static_cast<std::size_t>(s)].transpose();
      db[static_cast<std::size_t>(s)] += dout.rowwise().sum();
      if (s > 0) {
        const matrix_f dcols = st.w.transpose() * dout;
        dact = col2im(dcols, st.in_ch, st.size);
      }
    }
  }

  void save(binary_writer& out) const {
    out.put_raw("WMGFRNT1");
    out.put<std::int32_t>(image_size_);
    out.put<std::int32_t>(static_cast<std::int32_t>(stages_.size()));
    for (const auto& st : stages_) {
      out.put<std::int32_t>(st.in_ch);
      out.put<std::int32_t>(st.out_ch);
      out.put<std::int32_t>(st.size);
      out.put_span(std::span<const float>(st.w.data(), static_cast<std::size_t>(st.w.size())));
      out.put_span(std::span<const float>(st.b.data(), static_cast<std::size_t>(st.b.size())));
    }
    out.put<std::uint8_t>(frozen_ ? 1 : 0);
  }

  static perceptual_frontend load(binary_reader& in) {
    in.expect_magic("WMGFRNT1");
    perceptual_frontend f;
    f.image_size_ = in.get<std::int32_t>();
    const int n = in.get<std::int32_t>();
    int out_ch = 1;
    int size = f.image_size_;
    for (int i = 0; i < n; ++i) {
      conv_stage st;
      st.in_ch = in.get<std::int32_t>();
      st.out_ch = in.get<std::int32_t>();
      st.size = in.get<std::int32_t>();
      const auto w = in.get_vector<float>();
      const auto b = in.get_vector<float>();
      if (w.size() != static_cast<std::size_t>(st.out_ch * st.in_ch * 9) || b.size() != static_cast<std::size_t>(st.out_ch))
        throw integrity_error("frontend: parameter shape mismatch");
      st.w = Eigen::Map<const matrix_f>(w.data(), st.out_ch, st.in_ch * 9);
      st.b = Eigen::Map<const vector_f>(b.data(), st.out_ch);
      out_ch = st.out_ch;
      size = st.size / 2;
      f.stages_.push_back(std::move(st));
    }
    f.out_dim_ = out_ch * size * size;
    f.frozen_ = in.get<std::uint8_t>() != 0;
    return f;
  }

  void save_file(const std::string& path) const {
    binary_writer w;
    save(w);
    w.seal();
    w.save(path);
  }

  static perceptual_frontend load_file(const std::string& path) {
    auto r = binary_reader::from_file(path);
    r.verify_seal();
    return load(r);
  }

  std::string content_hash() const {
    binary_writer w;
    save(w);
    fnv1a h;
    h.update(w.bytes().data(), w.bytes().size());
    return hex64(h.digest());
  }

 private:
  // act: in_ch x (size*size) -> (in_ch*9) x (size*size), zero padding 1.
  static matrix_f im2col(const matrix_f& act, int in_ch, int size) {
    matrix_f cols = matrix_f::Zero(in_ch * 9, size * size);
    for (int c = 0; c < in_ch; ++c)
      for (int ki = 0; ki < 3; ++ki)
        for (int kj = 0; kj < 3; ++kj) {
          const int r = c * 9 + ki * 3 + kj;
          for (int i = 0; i < size; ++i) {
            const int si = i + ki - 1;
            if (si < 0 || si >= size) continue;
            for (int j = 0; j < size; ++j) {
              const int sj = j + kj - 1;
              if (sj < 0 || sj >= size) continue;
              cols(r, i * size + j) = act(c, si * size + sj);
            }
          }
        }
    return cols;
  }

  static matrix_f col2im(const matrix_f& cols, int in_ch, int size) {
    matrix_f act = matrix_f::Zero(in_ch, size * size);
    for (int c = 0; c < in_ch; ++c)
      for (int ki = 0; ki < 3; ++ki)
        for (int kj = 0; kj < 3; ++kj) {
          const int r = c * 9 + ki * 3 + kj;
          for (int i = 0; i < size; ++i) {
            const int si = i + ki - 1;
            if (si < 0 || si >= size) continue;
            for (int j = 0; j < size; ++j) {
              const int sj = j + kj - 1;
              if (sj < 0 || sj >= size) continue;
              act(c, si * size + sj) += cols(r, i * size + j);
            }
          }
        }
    return act;
  }

  // Column-major storage of the pooled map is channel-minor; `argmax` holds the
  // flat index into `out` (column-major) for every pooled element.
  static matrix_f maxpool(const matrix_f& out, int ch, int size, std::vector<int>& argmax) {
    const int half = size / 2;
    matrix_f pooled(ch, half * half);
    argmax.assign(static_cast<std::size_t>(ch * half * half), 0);
    for (int c = 0; c < ch; ++c)
      for (int i = 0; i < half; ++i)
        for (int j = 0; j < half; ++j) {
          float best = -1.f;
          int best_idx = 0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
              const int col = (2 * i + a) * size + (2 * j + b);
              const float v = out(c, col);
              if (v > best) {
                best = v;
                best_idx = col * ch + c;
              }
            }
          const int pcol = i * half + j;
          pooled(c, pcol) = best;
          argmax[static_cast<std::size_t>(pcol * ch + c)] = best_idx;
        }
    return pooled;
  }

  std::vector<conv_stage> stages_;
  int out_dim_ = 0;
  int image_size_ = 0;
  bool frozen_ = false;
};

/// Images with their generating attributes.
struct labeled_images {
  std::vector<stimulus_spec> specs;
  std::vector<image> images;

  std::size_t size() const { return specs.size(); }
};

inline labeled_images render_all(const std::vector<stimulus_spec>& specs, const canvas_config& c) {
  labeled_images out;
  out.specs = specs;
  for (const auto& s : specs) out.images.push_back(render_stimulus(s, c));
  return out;
}

/// Attribute labels used by the gate and the pretraining heads.
struct attribute_labels {
  std::vector<int> category;
  std::vector<int> identity;
  std::vector<int> location;
};

inline attribute_labels labels_of(const std::vector<stimulus_spec>& specs, const canvas_config& c) {
  attribute_labels l;
  for (const auto& s : specs) {
    l.category.push_back(s.category);
    l.identity.push_back(identity_label(s, c));
    l.location.push_back(s.location);
  }
  return l;
}

struct gate_report {
  double category = 0.0;
  double identity = 0.0;
  double location = 0.0;
  bool passed = false;
};

inline matrix embed_all(const perceptual_frontend& f, const labeled_images& data) {
  matrix x(static_cast<index_t>(data.size()), f.out_dim());
  for (std::size_t i = 0; i < data.size(); ++i) x.row(static_cast<index_t>(i)) = f.embed(data.images[i]).cast<double>().transpose();
  return x;
}

/// k-fold cross-validated linear one-vs-rest decodability of each attribute
/// from frontend features.
inline gate_report decodability_gate(const perceptual_frontend& f, const labeled_images& data, const canvas_config& c,
                                     int folds = 2, double threshold = 0.99) {
  const auto lab = labels_of(data.specs, c);
  auto check_counts = [](const std::vector<int>& y, const char* name) {
    std::map<int, int> counts;
    for (int v : y) ++counts[v];
    for (auto [v, n] : counts)
      if (n < 50) throw domain_error(std::string("decodability gate: fewer than 50 samples for a ") + name + " value");
    return static_cast<int>(counts.size());
  };
  const int n_cat = check_counts(lab.category, "category");
  const int n_id = check_counts(lab.identity, "identity");
  const int n_loc = check_counts(lab.location, "location");
  if (n_cat < 2 || n_id < 2 || n_loc < 2) throw domain_error("decodability gate: an attribute has a single value");

  const matrix x = embed_all(f, data);
  svm_options opt;
  opt.folds = folds;
  gate_report r;
  r.category = fit_decoder_set(x, lab.category, n_cat, opt).cv_accuracy;
  r.identity = fit_decoder_set(x, lab.identity, n_id, opt).cv_accuracy;
  r.location = fit_decoder_set(x, lab.location, n_loc, opt).cv_accuracy;
  r.passed = r.category >= threshold && r.identity >= threshold && r.location >= threshold;
  return r;
}

/// Dataset for gate evaluation: every train and novel-angle stimulus.
inline labeled_images gate_dataset(const canvas_config& c) {
  auto specs = enumerate_split(split_kind::train, c);
  auto novel = enumerate_split(split_kind::novel_angle, c);
  specs.insert(specs.end(), novel.begin(), novel.end());
  return render_all(specs, c);
}

struct pretrain_result {
  perceptual_frontend frontend;
  gate_report gate;
  int epochs = 0;
};

/// Trains the conv stack jointly with three linear attribute heads (discarded
/// afterwards) until the decodability gate passes, then freezes it.
inline pretrain_result pretrain_frontend(const labeled_images& dataset, const labeled_images& gate_data,
                                         const canvas_config& canvas, const frontend_config& cfg) {
  require(dataset.size() > 0, "pretrain: empty dataset");
  const auto lab = labels_of(dataset.specs, canvas);
  auto distinct = [](const std::vector<int>& y) { return std::set<int>(y.begin(), y.end()).size(); };
  if (distinct(lab.category) < 2) throw training_failure("pretrain: category head has a degenerate (single-valued) label");
  if (distinct(lab.identity) < 2) throw training_failure("pretrain: identity head has a degenerate (single-valued) label");
  if (distinct(lab.location) < 2) throw training_failure("pretrain: location head has a degenerate (single-valued) label");

  rng_t rng(cfg.seed);
  perceptual_frontend f(cfg, canvas.height, rng);
  const int d = f.out_dim();
  const std::array<int, 3> n_out{canvas.n_cat, canvas.identity_classes(), n_locations};
  const std::array<const std::vector<int>*, 3> ys{&lab.category, &lab.identity, &lab.location};
  std::array<matrix_f, 3> head_w;
  std::array<vector_f, 3> head_b;
  for (int h = 0; h < 3; ++h) {
    head_w[static_cast<std::size_t>(h)] = matrix_f::Zero(n_out[static_cast<std::size_t>(h)], d);
    head_b[static_cast<std::size_t>(h)] = vector_f::Zero(n_out[static_cast<std::size_t>(h)]);
  }

  // Adam state over conv params followed by head params.
  struct slot {
    float* p;
    index_t n;
  };
  std::vector<slot> slots;
  for (auto& st : f.stages()) {
    slots.push_back({st.w.data(), st.w.size()});
    slots.push_back({st.b.data(), st.b.size()});
  }
  for (int h = 0; h < 3; ++h) {
    slots.push_back({head_w[static_cast<std::size_t>(h)].data(), head_w[static_cast<std::size_t>(h)].size()});
    slots.push_back({head_b[static_cast<std::size_t>(h)].data(), head_b[static_cast<std::size_t>(h)].size()});
  }
  std::vector<vector_f> m1;
  std::vector<vector_f> m2;
  for (auto& s : slots) {
    m1.push_back(vector_f::Zero(s.n));
    m2.push_back(vector_f::Zero(s.n));
  }
  long step = 0;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  pretrain_result res;
  for (int epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const auto& stages = std::as_const(f).stages();
      std::vector<matrix_f> dw;
      std::vector<vector_f> db;
      for (const auto& st : stages) {
        dw.push_back(matrix_f::Zero(st.w.rows(), st.w.cols()));
        db.push_back(vector_f::Zero(st.b.size()));
      }
      std::array<matrix_f, 3> dhw;
      std::array<vector_f, 3> dhb;
      for (int h = 0; h < 3; ++h) {
        dhw[static_cast<std::size_t>(h)] = matrix_f::Zero(head_w[static_cast<std::size_t>(h)].rows(), d);
        dhb[static_cast<std::size_t>(h)] = vector_f::Zero(head_b[static_cast<std::size_t>(h)].size());
      }
      const float inv = 1.f / static_cast<float>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const auto tr = f.forward(dataset.images[idx]);
        vector_f dfeat = vector_f::Zero(d);
        for (std::size_t h = 0; h < 3; ++h) {
          vector_f z = head_w[h] * tr.features + head_b[h];
          z.array() -= z.maxCoeff();
          vector_f p = z.array().exp();
          p /= p.sum();
          p((*ys[h])[idx]) -= 1.f;
          p *= inv;
          dhw[h].noalias() += p * tr.features.transpose();
          dhb[h] += p;
          dfeat.noalias() += head_w[h].transpose() * p;
        }
        f.backward(tr, dfeat, dw, db);
      }
      std::vector<const float*> grads;
      for (std::size_t s = 0; s < dw.size(); ++s) {
        grads.push_back(dw[s].data());
        grads.push_back(db[s].data());
      }
      for (std::size_t h = 0; h < 3; ++h) {
        grads.push_back(dhw[h].data());
        grads.push_back(dhb[h].data());
      }
      ++step;
      const float b1 = 0.9f;
      const float b2 = 0.999f;
      const float bc1 = 1.f - std::pow(b1, static_cast<float>(step));
      const float bc2 = 1.f - std::pow(b2, static_cast<float>(step));
      for (std::size_t s = 0; s < slots.size(); ++s) {
        Eigen::Map<vector_f> p(slots[s].p, slots[s].n);
        Eigen::Map<const vector_f> g(grads[s], slots[s].n);
        m1[s] = b1 * m1[s] + (1.f - b1) * g;
        m2[s] = b2 * m2[s] + (1.f - b2) * g.cwiseAbs2();
        p.array() -= static_cast<float>(cfg.lr) * (m1[s].array() / bc1) / ((m2[s].array() / bc2).sqrt() + 1e-8f);
      }
    }
    if (epoch % cfg.check_every == 0 || epoch == cfg.epochs_max) {
      res.gate = decodability_gate(f, gate_data, canvas, cfg.gate_folds, cfg.gate_threshold);
      res.epochs = epoch;
      if (res.gate.passed) break;
    }
  }
  if (!res.gate.passed) {
    std::ostringstream os;
    os << "pretrain: decodability gate not passed within " << cfg.epochs_max << " epochs (category "
       << res.gate.category << ", identity " << res.gate.identity << ", location " << res.gate.location << ")";
    throw training_failure(os.str());
  }
  f.freeze();
  res.frontend = std::move(f);
  return res;
}

/// Memoized frontend features keyed by stimulus attributes. Rendering and
/// embedding are pure, so a table lookup is equivalent to recomputation.
class embedding_cache {
 public:
  embedding_cache(const perceptual_frontend& f, const canvas_config& c) : frontend_(&f), canvas_(c) {
    if (!f.frozen()) throw domain_error("embedding cache requires a frozen frontend");
  }
  embedding_cache(perceptual_frontend&&, const canvas_config&) = delete;

  const vector_f& get(const stimulus_spec& s) {
    const auto key = std::make_tuple(s.category, s.identity, s.location, std::llround(s.view_angle * 1000.0),
                                     static_cast<int>(s.bg.kind), s.bg.seed);
    auto it = table_.find(key);
    if (it == table_.end()) it = table_.emplace(key, frontend_->embed(render_stimulus(s, canvas_))).first;
    return it->second;
  }

  int out_dim() const { return frontend_->out_dim(); }
  const canvas_config& canvas() const { return canvas_; }
  const perceptual_frontend& frontend() const { return *frontend_; }

 private:
  using key_t = std::tuple<int, int, int, long long, int, std::uint64_t>;
  const perceptual_frontend* frontend_;
  canvas_config canvas_;
  std::map<key_t, vector_f> table_;
};

// ---------------------------------------------------------------------------
// Flat image blob + attribute sidecar.

inline void write_image_blob(const std::string& path, const std::vector<image>& images, int h, int w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  const std::uint32_t hdr[3] = {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w),
                                static_cast<std::uint32_t>(images.size())};
  os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  for (const auto& im : images) os.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size() * sizeof(float)));
}

inline std::vector<image> read_image_blob(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw integrity_error("cannot open: " + path);
  std::uint32_t hdr[3];
  if (!is.read(reinterpret_cast<char*>(hdr), sizeof(hdr))) throw integrity_error("image blob: short header");
  std::vector<image> out;
  for (std::uint32_t i = 0; i < hdr[2]; ++i) {
    image im(hdr[0], hdr[1]);
    if (!is.read(reinterpret_cast<char*>(im.data()), static_cast<std::streamsize>(im.size() * sizeof(float))))
      throw integrity_error("image blob: truncated payload");
    out.push_back(std::move(im));
  }
  return out;
}

inline std::string attribute_csv(const std::vector<stimulus_spec>& specs) {
  std::ostringstream os;
  os << "index,category,identity,location,angle,background_seed\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    os << i << ',' << s.category << ',' << s.identity << ',' << s.location << ',' << s.view_angle << ','
       << (s.bg.kind == background_kind::texture ? static_cast<long long>(s.bg.seed) : -1LL) << '\n';
  }
  return os.str();
}

inline std::vector<stimulus_spec> parse_attribute_csv(std::istream& is) {
  std::vector<stimulus_spec> out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 6) throw integrity_error("attribute csv: expected 6 columns");
    stimulus_spec s;
    s.category = std::stoi(f[1]);
    s.identity = std::stoi(f[2]);
    s.location = std::stoi(f[3]);
    s.view_angle = std::stod(f[4]);
    const long long seed = std::stoll(f[5]);
    if (seed >= 0) s.bg = {background_kind::texture, static_cast<std::uint64_t>(seed)};
    out.push_back(s);
  }
  return out;
}

}  // namespace wmg
