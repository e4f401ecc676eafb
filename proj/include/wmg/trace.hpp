#pragma once

// Activation banks: perceptual vectors and recurrent states recorded on held-out
// trials, and the labeled spaces sliced out of them (perceptual, encoding E_i,
// memory M_(i,t), timestep t).

#include "wmg/optimize.hpp"

#include <nlohmann/json.hpp>

namespace wmg {

enum class state_kind : std::uint8_t { h, c, hc };

inline state_kind parse_state_kind(const std::string& s) {
  if (s == "h") return state_kind::h;
  if (s == "c") return state_kind::c;
  if (s == "hc") return state_kind::hc;
  throw domain_error("unknown state kind: " + s);
}

struct activation_bank {
  arch architecture = arch::gru;
  index_t hidden_size = 0;
  index_t out_dim = 0;
  int length = default_sequence_length;
  split_kind split = split_kind::train;
  int n_cat = 4;
  int n_id = 2;
  int n_novel_id = 1;
  std::string model_hash;
  std::string frontend_hash;
  std::string manifest_hash;

  std::vector<task_spec> tasks;                      // per trial
  std::vector<std::vector<stimulus_spec>> stimuli;   // per trial, per step
  std::vector<std::vector<response>> responses;      // per trial, per step
  matrix_f perceptual_table;                         // distinct perceptual vectors (rows)
  std::vector<std::int32_t> perceptual_index;        // row trial*length + t -> table row
  matrix_f hidden;                                   // (n_trials*length) x hidden_size
  matrix_f cell;                                     // lstm only, same shape

  std::size_t n_trials() const { return tasks.size(); }
  index_t row(std::size_t trial, int t) const { return static_cast<index_t>(trial) * length + t; }
  bool has_cell() const { return cell.size() > 0; }

  canvas_config canvas() const {
    canvas_config c;
    c.n_cat = n_cat;
    c.n_id = n_id;
    c.n_novel_id = n_novel_id;
    return c;
  }

  std::vector<task_spec> distinct_tasks() const {
    std::vector<task_spec> out;
    for (const auto& t : tasks)
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    return out;
  }

  std::string content_hash() const;
};

/// Forward passes only; the model is taken by const reference and never modified.
inline activation_bank record(const model& net, embedding_cache& cache, const diet& d, split_kind split,
                              int n_trials_per_task, std::uint64_t seed, const trial_config& tcfg = {},
                              int max_n = 3) {
  require(n_trials_per_task >= 1, "record: n_trials must be positive");
  activation_bank bank;
  bank.architecture = net.architecture();
  bank.hidden_size = net.hidden_size();
  bank.out_dim = cache.out_dim();
  bank.length = tcfg.length;
  bank.split = split;
  bank.n_cat = cache.canvas().n_cat;
  bank.n_id = cache.canvas().n_id;
  bank.n_novel_id = cache.canvas().n_novel_id;
  bank.model_hash = net.content_hash();
  bank.frontend_hash = cache.frontend().content_hash();

  rng_t rng(mix_seed(seed, 0x2ec0 + static_cast<std::uint64_t>(split)));
  std::vector<trial> trials;
  for (const auto& task : d.tasks)
    for (int i = 0; i < n_trials_per_task; ++i) trials.push_back(generate_trial(task, rng, split, cache.canvas(), tcfg));

  const auto rows = static_cast<index_t>(trials.size()) * bank.length;
  bank.hidden.resize(rows, bank.hidden_size);
  if (net.architecture() == arch::lstm) bank.cell.resize(rows, bank.hidden_size);
  bank.perceptual_index.resize(static_cast<std::size_t>(rows));

  std::map<std::tuple<int, int, int, long long, int, std::uint64_t>, std::int32_t> table_rows;
  std::vector<Eigen::VectorXf> table;
  for (std::size_t start = 0; start < trials.size(); start += 256) {
    const std::size_t end = std::min(trials.size(), start + 256);
    const auto chunk = std::span<const trial>(trials).subspan(start, end - start);
    const auto ab = assemble(chunk, cache, max_n);
    const auto fc = forward(net, ab.inputs);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      for (int t = 0; t < bank.length; ++t) {
        const index_t r = bank.row(start + b, t);
        bank.hidden.row(r) = fc.state[static_cast<std::size_t>(t)].h.col(static_cast<index_t>(b)).transpose();
        if (bank.has_cell()) bank.cell.row(r) = fc.state[static_cast<std::size_t>(t)].c.col(static_cast<index_t>(b)).transpose();
        const auto& s = chunk[b].stimuli[static_cast<std::size_t>(t)];
        const auto key = std::make_tuple(s.category, s.identity, s.location, std::llround(s.view_angle * 1000.0),
                                         static_cast<int>(s.bg.kind), s.bg.seed);
        auto it = table_rows.find(key);
        if (it == table_rows.end()) {
          it = table_rows.emplace(key, static_cast<std::int32_t>(table.size())).first;
          table.push_back(cache.get(s));
        }
        bank.perceptual_index[static_cast<std::size_t>(r)] = it->second;
      }
    }
  }
  bank.perceptual_table.resize(static_cast<index_t>(table.size()), bank.out_dim);
  for (std::size_t i = 0; i < table.size(); ++i) bank.perceptual_table.row(static_cast<index_t>(i)) = table[i].transpose();
  for (const auto& tr : trials) {
    bank.tasks.push_back(tr.task);
    bank.stimuli.push_back(tr.stimuli);
    bank.responses.push_back(tr.responses);
  }
  return bank;
}

enum class space_kind : std::uint8_t { perceptual, encoding, memory, timestep };

/// Which rows, states and labels to extract from a bank.
struct space_query {
  space_kind kind = space_kind::encoding;
  int stimulus = 0;  // i: the stimulus whose attribute labels the rows
  int time = 0;      // t: memory and timestep queries
  feature feat = feature::location;
  std::optional<task_spec> task;
  state_kind state = state_kind::h;
  std::optional<std::pair<int, response>> response_at;  // keep trials whose response at step t equals r

  static space_query perceptual(int i, feature f) { return {space_kind::perceptual, i, i, f, {}, state_kind::h, {}}; }
  static space_query encoding(int i, feature f) { return {space_kind::encoding, i, i, f, {}, state_kind::h, {}}; }
  static space_query memory(int i, int t, feature f) { return {space_kind::memory, i, t, f, {}, state_kind::h, {}}; }
  static space_query timestep(int t, feature f) { return {space_kind::timestep, t, t, f, {}, state_kind::h, {}}; }

  space_query with_task(const task_spec& t) const {
    auto q = *this;
    q.task = t;
    return q;
  }
  space_query with_state(state_kind s) const {
    auto q = *this;
    q.state = s;
    return q;
  }
  space_query with_response(int t, response r) const {
    auto q = *this;
    q.response_at = std::make_pair(t, r);
    return q;
  }

  /// Step whose activations are read.
  int read_step() const {
    switch (kind) {
      case space_kind::memory:
      case space_kind::timestep:
        return time;
      default:
        return stimulus;
    }
  }

  std::string label() const {
    std::string s;
    switch (kind) {
      case space_kind::perceptual:
        s = "perceptual:" + std::to_string(stimulus);
        break;
      case space_kind::encoding:
        s = "encoding:" + std::to_string(stimulus);
        break;
      case space_kind::memory:
        s = "memory:" + std::to_string(stimulus) + ":" + std::to_string(time);
        break;
      case space_kind::timestep:
        s = "timestep:" + std::to_string(time);
        break;
    }
    s += "/" + to_string(feat);
    if (task) s += "/" + to_string(*task);
    return s;
  }
};

/// Parses "perceptual:i", "encoding:i", "memory:i:t" or "timestep:t".
inline space_query parse_space(const std::string& s, feature f) {
  std::vector<std::string> parts;
  std::istringstream is(s);
  std::string p;
  while (std::getline(is, p, ':')) parts.push_back(p);
  if (parts.empty()) throw domain_error("empty space spec");
  auto num = [&](std::size_t k) {
    if (parts.size() <= k) throw domain_error("space spec missing index: " + s);
    return std::stoi(parts[k]);
  };
  if (parts[0] == "perceptual") return space_query::perceptual(parts.size() > 1 ? num(1) : 0, f);
  if (parts[0] == "encoding") return space_query::encoding(num(1), f);
  if (parts[0] == "memory") return space_query::memory(num(1), num(2), f);
  if (parts[0] == "timestep") return space_query::timestep(num(1), f);
  throw domain_error("unknown space kind: " + parts[0]);
}

struct labeled_slice {
  matrix x;
  std::vector<int> y;
  std::vector<std::size_t> trials;  // bank trial index per row
};

/// One row per selected trial; label = attribute of the referenced stimulus.
inline labeled_slice slice(const activation_bank& bank, const space_query& q) {
  if (q.kind == space_kind::memory && q.time <= q.stimulus) throw domain_error("slice: memory query requires t > i");
  const int step = q.read_step();
  if (q.stimulus < 0 || q.stimulus >= bank.length || step < 0 || step >= bank.length)
    throw domain_error("slice: index outside the bank's sequence length");
  if (q.state != state_kind::h && !bank.has_cell() && q.kind != space_kind::perceptual)
    throw domain_error("slice: cell state requested from a bank without one");
  if (q.response_at && (q.response_at->first < 0 || q.response_at->first >= bank.length))
    throw domain_error("slice: response filter step out of range");
  const auto canvas = bank.canvas();
  labeled_slice out;
  for (std::size_t tr = 0; tr < bank.n_trials(); ++tr)
    if ((!q.task || bank.tasks[tr] == *q.task) &&
        (!q.response_at || bank.responses[tr][static_cast<std::size_t>(q.response_at->first)] == q.response_at->second))
      out.trials.push_back(tr);
  if (out.trials.empty()) throw domain_error("slice: no trials match the filter");

  const index_t dim = q.kind == space_kind::perceptual ? bank.out_dim
                      : q.state == state_kind::hc      ? 2 * bank.hidden_size
                                                       : bank.hidden_size;
  out.x.resize(static_cast<index_t>(out.trials.size()), dim);
  for (std::size_t k = 0; k < out.trials.size(); ++k) {
    const std::size_t tr = out.trials[k];
    const index_t r = bank.row(tr, step);
    const auto row = static_cast<index_t>(k);
    if (q.kind == space_kind::perceptual) {
      out.x.row(row) = bank.perceptual_table.row(bank.perceptual_index[static_cast<std::size_t>(r)]).cast<double>();
    } else if (q.state == state_kind::h) {
      out.x.row(row) = bank.hidden.row(r).cast<double>();
    } else if (q.state == state_kind::c) {
      out.x.row(row) = bank.cell.row(r).cast<double>();
    } else {
      out.x.row(row).head(bank.hidden_size) = bank.hidden.row(r).cast<double>();
      out.x.row(row).tail(bank.hidden_size) = bank.cell.row(r).cast<double>();
    }
    out.y.push_back(attribute_value(bank.stimuli[tr][static_cast<std::size_t>(q.stimulus)], q.feat, canvas));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence.

inline std::string bank_attribute_csv(const activation_bank& bank) {
  std::ostringstream os;
  os << "trial,t,task,category,identity,location,angle,background_seed,response\n";
  for (std::size_t tr = 0; tr < bank.n_trials(); ++tr)
    for (int t = 0; t < bank.length; ++t) {
      const auto& s = bank.stimuli[tr][static_cast<std::size_t>(t)];
      os << tr << ',' << t << ',' << to_string(bank.tasks[tr]) << ',' << s.category << ',' << s.identity << ','
         << s.location << ',' << s.view_angle << ','
         << (s.bg.kind == background_kind::texture ? static_cast<long long>(s.bg.seed) : -1LL) << ','
         << static_cast<int>(bank.responses[tr][static_cast<std::size_t>(t)]) << '\n';
    }
  return os.str();
}

inline nlohmann::json bank_header(const activation_bank& bank) {
  return {{"arch", to_string(bank.architecture)},
          {"hidden_size", bank.hidden_size},
          {"out_dim", bank.out_dim},
          {"length", bank.length},
          {"n_trials", bank.n_trials()},
          {"split", to_string(bank.split)},
          {"n_cat", bank.n_cat},
          {"n_id", bank.n_id},
          {"n_novel_id", bank.n_novel_id},
          {"model_hash", bank.model_hash},
          {"frontend_hash", bank.frontend_hash},
          {"manifest_hash", bank.manifest_hash},
          {"has_cell", bank.has_cell()},
          {"table_rows", bank.perceptual_table.rows()}};
}

inline void write_bank(binary_writer& w, const activation_bank& bank) {
  w.put_raw("WMGBANK1");
  w.put<std::uint32_t>(1);
  w.put_string(bank_header(bank).dump());
  w.put_string(bank_attribute_csv(bank));
  auto put_matrix = [&](const matrix_f& m) {
    // row-major payload
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    w.put_span(std::span<const float>(rm.data(), static_cast<std::size_t>(rm.size())));
  };
  put_matrix(bank.perceptual_table);
  w.put_span(std::span<const std::int32_t>(bank.perceptual_index));
  put_matrix(bank.hidden);
  if (bank.has_cell()) put_matrix(bank.cell);
}

inline std::string activation_bank::content_hash() const {
  binary_writer w;
  write_bank(w, *this);
  fnv1a h;
  h.update(w.bytes().data(), w.bytes().size());
  return hex64(h.digest());
}

inline void save_bank(const activation_bank& bank, const std::string& path) {
  binary_writer w;
  write_bank(w, bank);
  w.seal();
  w.save(path);
}

inline activation_bank load_bank(const std::string& path) {
  auto r = binary_reader::from_file(path);
  r.verify_seal();
  r.expect_magic("WMGBANK1");
  if (r.get<std::uint32_t>() != 1) throw integrity_error("bank: unsupported version");
  activation_bank bank;
  const auto hdr = nlohmann::json::parse(r.get_string());
  bank.architecture = parse_arch(hdr.at("arch").get<std::string>());
  bank.hidden_size = hdr.at("hidden_size").get<index_t>();
  bank.out_dim = hdr.at("out_dim").get<index_t>();
  bank.length = hdr.at("length").get<int>();
  bank.split = parse_split(hdr.at("split").get<std::string>());
  bank.n_cat = hdr.at("n_cat").get<int>();
  bank.n_id = hdr.at("n_id").get<int>();
  bank.n_novel_id = hdr.at("n_novel_id").get<int>();
  bank.model_hash = hdr.at("model_hash").get<std::string>();
  bank.frontend_hash = hdr.at("frontend_hash").get<std::string>();
  bank.manifest_hash = hdr.at("manifest_hash").get<std::string>();
  const auto n_trials = hdr.at("n_trials").get<std::size_t>();
  const auto table_rows = hdr.at("table_rows").get<index_t>();
  const bool has_cell = hdr.at("has_cell").get<bool>();

  std::istringstream csv(r.get_string());
  std::string line;
  std::getline(csv, line);
  bank.tasks.resize(n_trials);
  bank.stimuli.assign(n_trials, std::vector<stimulus_spec>(static_cast<std::size_t>(bank.length)));
  bank.responses.assign(n_trials, std::vector<response>(static_cast<std::size_t>(bank.length)));
  std::size_t seen = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw integrity_error("bank: malformed attribute row");
    const auto tr = std::stoul(f[0]);
    const auto t = std::stoul(f[1]);
    if (tr >= n_trials || t >= static_cast<std::size_t>(bank.length)) throw integrity_error("bank: attribute row out of range");
    bank.tasks[tr] = parse_task(f[2]);
    auto& s = bank.stimuli[tr][t];
    s.category = std::stoi(f[3]);
    s.identity = std::stoi(f[4]);
    s.location = std::stoi(f[5]);
    s.view_angle = std::stod(f[6]);
    const long long seed = std::stoll(f[7]);
    if (seed >= 0) s.bg = {background_kind::texture, static_cast<std::uint64_t>(seed)};
    bank.responses[tr][t] = static_cast<response>(std::stoi(f[8]));
    ++seen;
  }
  if (seen != n_trials * static_cast<std::size_t>(bank.length)) throw integrity_error("bank: attribute table incomplete");

  const index_t rows = static_cast<index_t>(n_trials) * bank.length;
  auto get_matrix = [&](index_t nr, index_t nc) {
    const auto v = r.get_vector<float>();
    if (static_cast<index_t>(v.size()) != nr * nc) throw integrity_error("bank: payload shape mismatch");
    return matrix_f(Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), nr, nc));
  };
  bank.perceptual_table = get_matrix(table_rows, bank.out_dim);
  bank.perceptual_index = r.get_vector<std::int32_t>();
  if (static_cast<index_t>(bank.perceptual_index.size()) != rows) throw integrity_error("bank: perceptual index length mismatch");
  bank.hidden = get_matrix(rows, bank.hidden_size);
  if (has_cell) bank.cell = get_matrix(rows, bank.hidden_size);
  if (!r.at_end()) throw integrity_error("bank: trailing bytes");
  return bank;
}

}  // namespace wmg
