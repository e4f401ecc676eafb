#pragma once

// End-to-end experiment pipeline: config parsing and validation, stage caching
// keyed by content hashes, the run manifest and report emission.

#include "wmg/report.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

namespace wmg {

inline constexpr const char* tool_version = "0.1.0";

struct stage_failure : std::runtime_error {
  std::string stage;
  stage_failure(std::string s, const std::string& what)
      : std::runtime_error("stage '" + s + "' failed: " + what), stage(std::move(s)) {}
};

// ---------------------------------------------------------------------------
// Configuration.

struct diet_entry {
  diet_mode mode = diet_mode::mtmf;
  std::optional<int> n;
  std::optional<feature> feat;

  diet make(int max_n) const { return make_diet(mode, n, feat, max_n); }

  /// "mtmf", "stmf:<n>" or "stsf:<n>:<feature>".
  std::string spec() const {
    std::string s = to_string(mode);
    if (n) s += ":" + std::to_string(*n);
    if (feat) s += ":" + to_string(*feat);
    return s;
  }
  /// File-name friendly form.
  std::string label() const {
    std::string s = to_string(mode);
    if (n) s += std::to_string(*n);
    if (feat) s += to_string(*feat);
    return s;
  }
};

inline diet_entry parse_diet_entry(const std::string& s) {
  std::vector<std::string> parts;
  std::istringstream is(s);
  std::string p;
  while (std::getline(is, p, ':')) parts.push_back(p);
  diet_entry d;
  try {
    if (parts.empty()) throw config_error("empty diet");
    d.mode = parse_diet(parts[0]);
    if (parts.size() > 1) d.n = std::stoi(parts[1]);
    if (parts.size() > 2) d.feat = parse_feature(parts[2]);
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& e) {
    throw config_error("invalid diet '" + s + "': " + e.what());
  }
  const bool ok = (d.mode == diet_mode::mtmf && parts.size() == 1) || (d.mode == diet_mode::stmf && parts.size() == 2) ||
                  (d.mode == diet_mode::stsf && parts.size() == 3);
  if (!ok) throw config_error("invalid diet '" + s + "': expected mtmf, stmf:<n> or stsf:<n>:<feature>");
  return d;
}

namespace detail {

/// Strict reader for one JSON object: every key must be consumed.
class config_section {
 public:
  config_section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(where() + "must be an object");
  }

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw config_error(where() + key + ": " + e.what());
    }
  }

  config_section sub(const std::string& key) {
    used_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return config_section(j_.contains(key) ? j_.at(key) : empty, path_ + key + ".");
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.contains(k)) throw config_error("unknown config key: " + path_ + k);
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config " + path_; }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace detail

struct pipeline_config {
  std::uint64_t seed = 1;
  canvas_config canvas;
  frontend_config frontend;
  std::vector<arch> archs{arch::vanilla, arch::gru, arch::lstm};
  std::vector<diet_entry> diets{diet_entry{}};
  index_t hidden = 128;
  int max_n = 3;
  train_config train;
  int record_trials = 400;
  svm_options svm;
  int bootstrap_n = 50;
  index_t pca_dim = 32;
  int perturb_trials = 256;
  int perturb_points = 13;
  double perturb_extent = 3.0;
  std::vector<std::string> analyses{"relevance", "cross_task", "cross_time", "cross_stimulus", "ortho", "swap", "causal"};

  static const std::vector<std::string>& known_analyses() {
    static const std::vector<std::string> k{"relevance", "cross_task", "cross_time", "cross_stimulus", "ortho", "swap", "causal"};
    return k;
  }
  bool enabled(const std::string& a) const { return std::find(analyses.begin(), analyses.end(), a) != analyses.end(); }

  void validate() const {
    try {
      canvas.validate();
    } catch (const domain_error& e) {
      throw config_error(e.what());
    }
    train.validate();
    if (archs.empty()) throw config_error("train.archs must not be empty");
    if (diets.empty()) throw config_error("train.diets must not be empty");
    if (hidden < 8) throw config_error("train.hidden must be at least 8");
    if (max_n < 1 || max_n > 3) throw config_error("train.max_n must be in [1, 3]");
    for (const auto& d : diets) {
      try {
        (void)d.make(max_n);
      } catch (const domain_error& e) {
        throw config_error("diet " + d.spec() + ": " + e.what());
      }
    }
    if (record_trials < 1) throw config_error("record.n_trials_per_task must be positive");
    if (svm.folds < 2 || svm.c_grid.empty()) throw config_error("decode: folds >= 2 and a non-empty c_grid are required");
    for (double c : svm.c_grid)
      if (!(c > 0.0)) throw config_error("decode.c_grid values must be positive");
    if (bootstrap_n < 5) throw config_error("geometry.bootstrap_n must be at least 5");
    if (pca_dim < 0) throw config_error("geometry.pca_dim must be non-negative");
    if (perturb_trials < 1 || perturb_points < 2 || !(perturb_extent > 0.0))
      throw config_error("geometry: perturbation settings must be positive");
    if (frontend.epochs_max < 1 || frontend.batch < 1 || !(frontend.lr > 0.0))
      throw config_error("frontend: epochs_max, batch and lr must be positive");
    for (const auto& a : analyses)
      if (std::find(known_analyses().begin(), known_analyses().end(), a) == known_analyses().end())
        throw config_error("unknown analysis: " + a);
  }

  static pipeline_config from_json(const nlohmann::json& j) {
    pipeline_config c;
    detail::config_section root(j, "");
    c.seed = root.get<std::uint64_t>("seed", c.seed);

    auto cv = root.sub("canvas");
    c.canvas.n_cat = cv.get("n_cat", c.canvas.n_cat);
    c.canvas.n_id = cv.get("n_id", c.canvas.n_id);
    c.canvas.n_novel_id = cv.get("n_novel_id", c.canvas.n_novel_id);
    c.canvas.train_angles = cv.get("train_angles", c.canvas.train_angles);
    c.canvas.novel_angles = cv.get("novel_angles", c.canvas.novel_angles);
    c.canvas.textured = cv.get("textured", c.canvas.textured);
    c.canvas.texture_pool = cv.get("texture_pool", c.canvas.texture_pool);
    cv.finish();

    auto fe = root.sub("frontend");
    c.frontend.channels = fe.get("channels", c.frontend.channels);
    c.frontend.epochs_max = fe.get("epochs_max", c.frontend.epochs_max);
    c.frontend.check_every = fe.get("check_every", c.frontend.check_every);
    c.frontend.batch = fe.get("batch", c.frontend.batch);
    c.frontend.lr = fe.get("lr", c.frontend.lr);
    fe.finish();

    auto tr = root.sub("train");
    std::vector<std::string> archs;
    for (auto a : c.archs) archs.push_back(to_string(a));
    archs = tr.get("archs", archs);
    c.archs.clear();
    for (const auto& a : archs) {
      try {
        c.archs.push_back(parse_arch(a));
      } catch (const std::exception&) {
        throw config_error("unknown architecture: " + a);
      }
    }
    std::vector<std::string> diets{"mtmf"};
    diets = tr.get("diets", diets);
    c.diets.clear();
    for (const auto& d : diets) c.diets.push_back(parse_diet_entry(d));
    c.hidden = tr.get("hidden", c.hidden);
    c.max_n = tr.get("max_n", c.max_n);
    c.train.lr0 = tr.get("lr0", c.train.lr0);
    c.train.batch_size = tr.get("batch_size", c.train.batch_size);
    c.train.max_iters = tr.get("max_iters", c.train.max_iters);
    c.train.decay_gamma = tr.get("decay_gamma", c.train.decay_gamma);
    c.train.decay_milestones = tr.get("decay_milestones", c.train.decay_milestones);
    c.train.weight_decay = tr.get("weight_decay", c.train.weight_decay);
    c.train.early_stop_window = tr.get("early_stop_window", c.train.early_stop_window);
    c.train.early_stop_target = tr.get("early_stop_target", c.train.early_stop_target);
    c.train.eval_trials_per_task = tr.get("eval_trials_per_task", c.train.eval_trials_per_task);
    c.train.checkpoint_every = tr.get("checkpoint_every", c.train.checkpoint_every);
    c.train.log_every = tr.get("log_every", c.train.log_every);
    c.train.trials.length = tr.get("sequence_length", c.train.trials.length);
    c.train.trials.match_rate = tr.get("match_rate", c.train.trials.match_rate);
    tr.finish();

    auto rc = root.sub("record");
    c.record_trials = rc.get("n_trials_per_task", c.record_trials);
    rc.finish();

    auto dc = root.sub("decode");
    c.svm.folds = dc.get("folds", c.svm.folds);
    c.svm.c_grid = dc.get("c_grid", c.svm.c_grid);
    c.svm.max_epochs = dc.get("max_epochs", c.svm.max_epochs);
    c.svm.tolerance = dc.get("tolerance", c.svm.tolerance);
    dc.finish();

    auto ge = root.sub("geometry");
    c.bootstrap_n = ge.get("bootstrap_n", c.bootstrap_n);
    c.pca_dim = ge.get("pca_dim", c.pca_dim);
    c.perturb_trials = ge.get("perturb_trials", c.perturb_trials);
    c.perturb_points = ge.get("perturb_points", c.perturb_points);
    c.perturb_extent = ge.get("perturb_extent", c.perturb_extent);
    ge.finish();

    c.analyses = root.get("analyses", c.analyses);
    root.finish();
    c.train.seed = c.seed;
    c.frontend.seed = mix_seed(c.seed, 0xf0);
    c.validate();
    return c;
  }

  /// Fully expanded snapshot (defaults included); the manifest hashes this.
  nlohmann::json to_json() const {
    std::vector<std::string> a;
    for (auto x : archs) a.push_back(to_string(x));
    std::vector<std::string> d;
    for (const auto& x : diets) d.push_back(x.spec());
    return {{"seed", seed},
            {"canvas",
             {{"n_cat", canvas.n_cat},
              {"n_id", canvas.n_id},
              {"n_novel_id", canvas.n_novel_id},
              {"train_angles", canvas.train_angles},
              {"novel_angles", canvas.novel_angles},
              {"textured", canvas.textured},
              {"texture_pool", canvas.texture_pool}}},
            {"frontend",
             {{"channels", frontend.channels},
              {"epochs_max", frontend.epochs_max},
              {"check_every", frontend.check_every},
              {"batch", frontend.batch},
              {"lr", frontend.lr}}},
            {"train",
             {{"archs", a},
              {"diets", d},
              {"hidden", hidden},
              {"max_n", max_n},
              {"lr0", train.lr0},
              {"batch_size", train.batch_size},
              {"max_iters", train.max_iters},
              {"decay_gamma", train.decay_gamma},
              {"decay_milestones", train.decay_milestones},
              {"weight_decay", train.weight_decay},
              {"early_stop_window", train.early_stop_window},
              {"early_stop_target", train.early_stop_target},
              {"eval_trials_per_task", train.eval_trials_per_task},
              {"checkpoint_every", train.checkpoint_every},
              {"log_every", train.log_every},
              {"sequence_length", train.trials.length},
              {"match_rate", train.trials.match_rate}}},
            {"record", {{"n_trials_per_task", record_trials}}},
            {"decode",
             {{"folds", svm.folds}, {"c_grid", svm.c_grid}, {"max_epochs", svm.max_epochs}, {"tolerance", svm.tolerance}}},
            {"geometry",
             {{"bootstrap_n", bootstrap_n},
              {"pca_dim", pca_dim},
              {"perturb_trials", perturb_trials},
              {"perturb_points", perturb_points},
              {"perturb_extent", perturb_extent}}},
            {"analyses", analyses}};
  }

  std::string manifest_hash() const { return hash_string(to_json().dump() + tool_version); }
};

inline nlohmann::json parse_config_text(const std::string& text) {
  try {
    return nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
}

/// Reads a JSON config; `//` and `/* */` comments are allowed.
inline pipeline_config load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot read config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return pipeline_config::from_json(parse_config_text(ss.str()));
}

/// Small end-to-end configuration for quick checks.
inline pipeline_config smoke_config() {
  auto j = parse_config_text(R"({
    "seed": 1,
    "train": {"archs": ["gru"], "diets": ["mtmf"], "hidden": 16, "max_iters": 200,
              "decay_milestones": [150], "eval_trials_per_task": 64, "checkpoint_every": 0, "log_every": 0},
    "record": {"n_trials_per_task": 192},
    "decode": {"folds": 5},
    "geometry": {"bootstrap_n": 5, "pca_dim": 8, "perturb_trials": 16, "perturb_points": 5}
  })");
  return pipeline_config::from_json(j);
}

// ---------------------------------------------------------------------------
// Stage caching.

inline std::string file_hash(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw integrity_error("cannot read artifact: " + p.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return hash_string(bytes);
}

struct stage_record {
  std::string name;
  std::string key;
  std::filesystem::path dir;
  bool skipped = false;
  std::map<std::string, std::string> artifacts;  // file name -> content hash
  double seconds = 0.0;
};

class stage_runner {
 public:
  stage_runner(std::filesystem::path root, std::ostream* log) : root_(std::move(root)), log_(log) {}

  /// Runs `produce(dir)` unless a stamp with the same key exists and every listed
  /// artifact still matches its recorded hash.
  template <typename F>
  const stage_record& run(const std::string& name, const std::string& key, const std::vector<std::string>& files, F&& produce) {
    stage_record rec;
    rec.name = name;
    rec.key = key;
    rec.dir = root_ / name;
    const auto stamp = rec.dir / "stamp.json";
    const auto t0 = std::chrono::steady_clock::now();
    if (cached(stamp, key, files, rec)) {
      rec.skipped = true;
      if (log_) *log_ << "[skip] " << name << " (" << key << ")\n";
    } else {
      if (log_) *log_ << "[run ] " << name << " (" << key << ")\n";
      std::filesystem::create_directories(rec.dir);
      std::filesystem::remove(stamp);
      try {
        produce(rec.dir);
      } catch (const config_error&) {
        throw;
      } catch (const stage_failure&) {
        throw;
      } catch (const std::exception& e) {
        throw stage_failure(name, e.what());
      }
      nlohmann::json s{{"key", key}, {"artifacts", nlohmann::json::object()}};
      for (const auto& f : files) {
        if (!std::filesystem::exists(rec.dir / f)) throw stage_failure(name, "artifact not produced: " + f);
        rec.artifacts[f] = file_hash(rec.dir / f);
        s["artifacts"][f] = rec.artifacts[f];
      }
      std::ofstream(stamp, std::ios::binary) << s.dump(2) << '\n';
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records_.push_back(std::move(rec));
    return records_.back();
  }

  const std::vector<stage_record>& records() const { return records_; }

 private:
  static bool cached(const std::filesystem::path& stamp, const std::string& key, const std::vector<std::string>& files,
                     stage_record& rec) {
    if (!std::filesystem::exists(stamp)) return false;
    try {
      std::ifstream is(stamp);
      const auto s = nlohmann::json::parse(is);
      if (s.at("key").get<std::string>() != key) return false;
      for (const auto& f : files) {
        const auto p = rec.dir / f;
        if (!std::filesystem::exists(p)) return false;
        const auto want = s.at("artifacts").at(f).get<std::string>();
        if (file_hash(p) != want) return false;
        rec.artifacts[f] = want;
      }
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  std::filesystem::path root_;
  std::ostream* log_;
  std::vector<stage_record> records_;
};

inline std::string stage_key(const nlohmann::json& parts) { return hash_string(parts.dump()); }

// ---------------------------------------------------------------------------
// Analyses on one recorded model.

struct model_artifacts {
  std::string label;  // "<diet>_<arch>"
  arch architecture = arch::gru;
  diet_entry diet_spec;
  std::filesystem::path checkpoint;
  std::filesystem::path bank;
};

namespace detail {

template <typename F>
void attempt(analysis_outputs& out, const std::string& name, F&& body, bool expected = true) {
  if (expected) out.expected.push_back(name);
  try {
    body();
  } catch (const domain_error& e) {
    // not enough data for this analysis: reported as absent, never fabricated
    out.skipped.emplace_back(name, e.what());
  }
}

}  // namespace detail

inline analysis_outputs run_decode_analyses(const pipeline_config& cfg, const activation_bank& bank,
                                            const std::string& label, fit_cache& memo) {
  analysis_outputs out;
  const auto tasks = bank.distinct_tasks();
  if (cfg.enabled("relevance")) {
    out.expected.push_back("relevance_" + label);
    for (const auto& task : tasks)
      for (auto f : all_features)
        detail::attempt(out, "relevance_" + label + "_" + to_string(task) + "_" + to_string(f), [&] {
          const auto& set = memo.get(bank, space_query::encoding(0, f).with_task(task), cfg.svm);
          out.relevance.push_back({label, task, f, f == task.feat, set.cv_accuracy});
        }, false);
  }
  if (cfg.enabled("cross_task") && tasks.size() >= 2)
    for (auto f : all_features)
      detail::attempt(out, "cross_task_" + label + "_" + to_string(f), [&] {
        out.matrices.emplace_back("cross_task_" + label + "_" + to_string(f), cross_task_matrix(bank, f, 0, tasks, cfg.svm, &memo));
      });
  if (cfg.enabled("cross_time"))
    for (const auto& task : tasks)
      for (auto f : all_features) {
        const auto name = "cross_time_" + label + "_" + to_string(task) + "_" + to_string(f);
        detail::attempt(out, name, [&] {
          std::vector<cross_time_result> rs;
          for (int i = 0; i + 1 < bank.length; ++i) rs.push_back(cross_time_matrix(bank, f, i, task, cfg.svm, &memo));
          out.cross_time.emplace_back(name, std::move(rs));
        });
      }
  if (cfg.enabled("cross_stimulus"))
    for (const auto& task : tasks)
      for (auto f : all_features) {
        const auto name = "cross_stimulus_" + label + "_" + to_string(task) + "_" + to_string(f);
        detail::attempt(out, name, [&] { out.matrices.emplace_back(name, cross_stimulus_encoding(bank, f, task, cfg.svm, &memo).matrix); });
      }
  return out;
}

/// Perceptual vs encoding orthogonalization, raw and PCA-equalized.
inline void run_ortho_analysis(const pipeline_config& cfg, const activation_bank& bank, const std::string& label,
                               analysis_outputs& out) {
  detail::attempt(out, "ortho_" + label, [&] {
    const auto perc = pooled_ortho(bank, space_kind::perceptual, 0, cfg.bootstrap_n, cfg.seed, cfg.svm);
    const auto enc = pooled_ortho(bank, space_kind::encoding, 0, cfg.bootstrap_n, cfg.seed, cfg.svm);
    out.ortho.push_back({label, "perceptual", perc});
    out.ortho.push_back({label, "encoding", enc});
    out.ortho_tests.emplace_back(label, compare_ortho(perc.samples, enc.samples));
    if (cfg.pca_dim > 0) {
      const auto pp = pooled_ortho(bank, space_kind::perceptual, 0, cfg.bootstrap_n, cfg.seed, cfg.svm, cfg.pca_dim);
      const auto pe = pooled_ortho(bank, space_kind::encoding, 0, cfg.bootstrap_n, cfg.seed, cfg.svm, cfg.pca_dim);
      out.ortho.push_back({label + "/pca", "perceptual", pp});
      out.ortho.push_back({label + "/pca", "encoding", pe});
      out.ortho_tests.emplace_back(label + "/pca", compare_ortho(pp.samples, pe.samples));
    }
  });
}

inline analysis_outputs run_geometry_analyses(const pipeline_config& cfg, const activation_bank& bank, const model& net,
                                              embedding_cache& cache, const std::string& label, fit_cache& memo) {
  analysis_outputs out;
  const auto tasks = bank.distinct_tasks();
  if (cfg.enabled("ortho")) run_ortho_analysis(cfg, bank, label, out);
  if (cfg.enabled("swap")) {
    swap_report pooled;
    std::vector<reconstruction_row> recon;
    out.expected.push_back("swap_" + label);
    out.expected.push_back("procrustes_" + label);
    for (const auto& task : tasks) {
      detail::attempt(out, "swap_" + label + "_" + to_string(task), [&] {
        alignment_grid_options opt;
        opt.svm = cfg.svm;
        opt.max_lag = task.n_back + 1;
        const auto grid = build_alignment_grid(bank, task.feat, task, opt, &memo);
        for (const auto& [key, e] : grid)
          if (key.second == key.first + 1)
            recon.push_back({task, task.feat, key.first, key.second, e.target.accuracy(e.target_slice.x, e.target_slice.y),
                             reconstruct_decoders(e.alignment, e.source, e.target, e.target_slice.x, e.target_slice.y),
                             e.alignment.rank_deficient});
        for (const auto& r : swap_test(grid, 1).rows) pooled.rows.push_back(r);
      }, false);
    }
    if (!pooled.rows.empty()) out.swaps.emplace_back("swap_" + label, pooled);
    if (!recon.empty()) out.reconstructions.emplace_back("procrustes_" + label, recon);
  }
  if (cfg.enabled("causal"))
    for (const auto& task : tasks) {
      if (task.n_back != 1) continue;
      const auto name = "perturbation_" + label + "_" + to_string(task);
      detail::attempt(out, name, [&] {
        const auto q = space_query::encoding(0, task.feat).with_task(task);
        const auto& set = memo.get(bank, q, cfg.svm);
        const double unit = mean_row_norm(slice(bank, q).x);
        const auto mags = default_magnitudes(cfg.perturb_points, cfg.perturb_extent);
        out.perturbations.emplace_back(
            name, causal_perturb_set(net, cache, set, task, mags, unit, cfg.perturb_trials, cfg.seed, cfg.max_n));
      });
    }
  return out;
}

// ---------------------------------------------------------------------------
// The pipeline.

struct pipeline_result {
  std::string manifest_hash;
  nlohmann::json manifest;
  report_bundle bundle;
  std::vector<stage_record> stages;
  std::vector<model_artifacts> models;
  std::filesystem::path report_dir;
};

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json eval_json(const eval_report& r) {
  auto split = [](const split_accuracy& s) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [t, a] : s.per_task) per[to_string(t)] = a;
    return nlohmann::json{{"overall", s.overall}, {"per_task", per}};
  };
  return {{"iterations", r.iterations},
          {"train", split(r.train)},
          {"novel_angle", split(r.novel_angle)},
          {"novel_identity", split(r.novel_identity)},
          {"final_loss", r.loss_curve.empty() ? 0.0 : r.loss_curve.back()}};
}

/// Stages run in order: stimuli, frontend, train (per diet and architecture),
/// record, decode, geometry, report. Each stage is skipped when its key and
/// artifacts are already on disk.
inline pipeline_result run_pipeline(const pipeline_config& cfg, const std::filesystem::path& out_dir,
                                    std::ostream* log = nullptr) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  pipeline_result res;
  res.manifest_hash = cfg.manifest_hash();
  const std::string started = utc_now();
  stage_runner runner(out_dir, log);
  const auto config_json = cfg.to_json();

  // stimuli
  const auto& st = runner.run("stimuli", stage_key({config_json["canvas"], tool_version}),
                              {"train_images.bin", "train_attributes.csv", "gate_images.bin", "gate_attributes.csv"},
                              [&](const std::filesystem::path& dir) {
                                const auto train_set = render_all(enumerate_split(split_kind::train, cfg.canvas), cfg.canvas);
                                const auto gate = gate_dataset(cfg.canvas);
                                write_image_blob((dir / "train_images.bin").string(), train_set.images, cfg.canvas.height, cfg.canvas.width);
                                std::ofstream(dir / "train_attributes.csv", std::ios::binary) << attribute_csv(train_set.specs);
                                write_image_blob((dir / "gate_images.bin").string(), gate.images, cfg.canvas.height, cfg.canvas.width);
                                std::ofstream(dir / "gate_attributes.csv", std::ios::binary) << attribute_csv(gate.specs);
                              });
  const auto stimuli_dir = st.dir;
  const auto stimuli_hash = stage_key(st.artifacts);

  // frontend
  const auto& fe = runner.run(
      "frontend", stage_key({config_json["frontend"], config_json["canvas"], cfg.seed, stimuli_hash}),
      {"frontend.bin", "gate.json"}, [&](const std::filesystem::path& dir) {
        auto load = [&](const std::string& stem) {
          labeled_images d;
          d.images = read_image_blob((stimuli_dir / (stem + "_images.bin")).string());
          std::ifstream is(stimuli_dir / (stem + "_attributes.csv"));
          d.specs = parse_attribute_csv(is);
          if (d.images.size() != d.specs.size()) throw integrity_error("stimuli: image and attribute counts differ");
          return d;
        };
        const auto pr = pretrain_frontend(load("train"), load("gate"), cfg.canvas, cfg.frontend);
        const nlohmann::json gate{{"category", pr.gate.category}, {"identity", pr.gate.identity},
                                  {"location", pr.gate.location}, {"passed", pr.gate.passed}, {"epochs", pr.epochs}};
        std::ofstream(dir / "gate.json", std::ios::binary) << gate.dump(2) << '\n';
        if (!pr.gate.passed) throw training_failure("decodability gate not met: " + gate.dump());
        pr.frontend.save_file((dir / "frontend.bin").string());
      });
  const auto frontend = perceptual_frontend::load_file((fe.dir / "frontend.bin").string());
  const auto frontend_hash = fe.artifacts.at("frontend.bin");
  embedding_cache cache(frontend, cfg.canvas);

  // train and record
  for (const auto& d : cfg.diets)
    for (auto a : cfg.archs) {
      model_artifacts m;
      m.label = d.label() + "_" + to_string(a);
      m.architecture = a;
      m.diet_spec = d;
      const auto& tr = runner.run(
          "train/" + m.label,
          stage_key({config_json["train"], d.spec(), to_string(a), cfg.seed, frontend_hash, tool_version}),
          {"model.ckpt", "eval.json", "loss.csv"}, [&](const std::filesystem::path& dir) {
            rng_t rng(mix_seed(cfg.seed, 0x5eed + static_cast<std::uint64_t>(a)));
            auto net = init_model(a, cfg.hidden, cache.out_dim(), 3 + cfg.max_n, rng);
            auto progress = [&](const train_progress& p) {
              if (log) *log << "  " << m.label << " iter " << p.iter << " loss " << p.loss << " acc " << p.window_accuracy << '\n';
            };
            const auto ckpt_dir = cfg.train.checkpoint_every > 0 ? (dir / "checkpoints").string() : std::string{};
            auto result = train(std::move(net), d.make(cfg.max_n), cache, cfg.train, ckpt_dir, progress, cfg.max_n);
            save_checkpoint((dir / "model.ckpt").string(), result.net,
                            {result.report.iterations, {}, res.manifest_hash});
            std::ofstream(dir / "eval.json", std::ios::binary) << eval_json(result.report).dump(2) << '\n';
            std::ofstream loss(dir / "loss.csv", std::ios::binary);
            loss << "iteration,loss\n";
            for (std::size_t k = 0; k < result.report.loss_curve.size(); ++k) loss << k << ',' << result.report.loss_curve[k] << '\n';
            std::ofstream(dir / "timing.json") << nlohmann::json{{"seconds", result.report.seconds}}.dump() << '\n';
          });
      m.checkpoint = tr.dir / "model.ckpt";
      const auto model_hash = tr.artifacts.at("model.ckpt");

      const auto& rc = runner.run(
          "record/" + m.label, stage_key({config_json["record"], model_hash, frontend_hash, cfg.seed}), {"bank.bin"},
          [&](const std::filesystem::path& dir) {
            const auto net = load_checkpoint(m.checkpoint.string()).net;
            auto bank = record(net, cache, d.make(cfg.max_n), split_kind::train, cfg.record_trials,
                               mix_seed(cfg.seed, 0xb4c), cfg.train.trials, cfg.max_n);
            bank.manifest_hash = res.manifest_hash;
            save_bank(bank, (dir / "bank.bin").string());
          });
      m.bank = rc.dir / "bank.bin";
      res.models.push_back(m);
    }

  // decode and geometry
  analysis_outputs merged;
  merged.manifest_hash = res.manifest_hash;
  std::vector<std::string> analysis_hashes;
  for (const auto& m : res.models) {
    const auto bank_hash = file_hash(m.bank);
    std::optional<activation_bank> bank;
    std::optional<fit_cache> memo;
    auto need_bank = [&]() -> const activation_bank& {
      if (!bank) {
        bank = load_bank(m.bank.string());
        memo.emplace();
      }
      return *bank;
    };
    const auto& dc = runner.run(
        "decode/" + m.label, stage_key({config_json["decode"], config_json["analyses"], bank_hash, tool_version}),
        {"decode.json", "decoders.bin"}, [&](const std::filesystem::path& dir) {
          const auto& b = need_bank();
          auto out = run_decode_analyses(cfg, b, m.label, *memo);
          out.manifest_hash = res.manifest_hash;
          std::vector<decoder_set> sets;
          for (auto f : all_features) {
            try {
              sets.push_back(memo->get(b, space_query::encoding(0, f), cfg.svm));
            } catch (const domain_error&) {
            }
          }
          save_decoder_sets((dir / "decoders.bin").string(), sets);
          std::ofstream(dir / "decode.json", std::ios::binary) << to_json(out).dump(1) << '\n';
        });
    const auto& ge = runner.run(
        "geometry/" + m.label,
        stage_key({config_json["decode"], config_json["geometry"], config_json["analyses"], bank_hash,
                   file_hash(m.checkpoint), cfg.seed, cfg.max_n, tool_version}),
        {"geometry.json"}, [&](const std::filesystem::path& dir) {
          const auto& b = need_bank();
          const auto net = load_checkpoint(m.checkpoint.string()).net;
          auto out = run_geometry_analyses(cfg, b, net, cache, m.label, *memo);
          out.manifest_hash = res.manifest_hash;
          std::ofstream(dir / "geometry.json", std::ios::binary) << to_json(out).dump(1) << '\n';
        });
    for (const auto* rec : {&dc, &ge}) {
      for (const auto& [f, h] : rec->artifacts) analysis_hashes.push_back(h);
      const auto file = rec->dir / (rec == &dc ? "decode.json" : "geometry.json");
      std::ifstream is(file);
      try {
        merged.merge(analysis_from_json(nlohmann::json::parse(is)));
      } catch (const nlohmann::json::exception& e) {
        throw integrity_error("cannot parse " + file.string() + ": " + e.what());
      }
    }
  }

  // report
  const auto& rp = runner.run("report", stage_key({analysis_hashes, res.manifest_hash, tool_version}), {"summary.json"},
                              [&](const std::filesystem::path& dir) { emit_report(merged).write(dir); });
  res.report_dir = rp.dir;
  res.bundle = emit_report(merged);

  res.stages = runner.records();
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& r : res.stages)
    stages.push_back({{"name", r.name}, {"key", r.key}, {"skipped", r.skipped}, {"artifacts", r.artifacts}, {"seconds", r.seconds}});
  res.manifest = {{"manifest_hash", res.manifest_hash},
                  {"tool_version", tool_version},
                  {"config", config_json},
                  {"seeds", {{"root", cfg.seed}, {"frontend", cfg.frontend.seed}, {"train", cfg.train.seed}}},
                  {"frontend_hash", frontend_hash},
                  {"stages", stages},
                  {"timestamps", {{"started", started}, {"finished", utc_now()}}}};
  std::ofstream(out_dir / "manifest.json", std::ios::binary) << res.manifest.dump(2) << '\n';
  return res;
}

}  // namespace wmg
