#pragma once

// Shared plumbing: error types, seeded rng, content hashing and binary io.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace wmg {

/// Invalid argument, index or shape.
struct domain_error : std::domain_error {
  using std::domain_error::domain_error;
};

/// Non-finite value encountered in a numerical routine.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Corrupted, truncated or mismatched persisted artifact.
struct integrity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An optimization procedure failed to reach its goal within budget.
struct training_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using index_t = Eigen::Index;
using matrix = Eigen::MatrixXd;
using vector = Eigen::VectorXd;
using matrix_f = Eigen::MatrixXf;
using vector_f = Eigen::VectorXf;

using rng_t = std::mt19937_64;

inline void require(bool cond, const std::string& what) {
  if (!cond) throw domain_error(what);
}

inline int uniform_int(rng_t& rng, int lo, int hi_exclusive) {
  std::uniform_int_distribution<int> d(lo, hi_exclusive - 1);
  return d(rng);
}

inline double uniform_real(rng_t& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(rng_t& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Derives an independent stream seed from a base seed and a salt.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a, used for artifact content hashes.
class fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void update_value(const T& v) {
    update(&v, sizeof(T));
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void update_span(std::span<const T> v) {
    update(v.data(), v.size_bytes());
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string hash_string(std::string_view s) {
  fnv1a h;
  h.update(s);
  return hex64(h.digest());
}

// Little-endian host assumed; all payloads are written and read on x86-64.
class binary_writer {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_span(std::span<const T> v) {
    put<std::uint64_t>(v.size());
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size_bytes());
  }
  void put_raw(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  const std::vector<char>& bytes() const { return buf_; }

  /// Appends a trailing content hash over everything written so far.
  void seal() {
    fnv1a h;
    h.update(buf_.data(), buf_.size());
    put<std::uint64_t>(h.digest());
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
  }

 private:
  std::vector<char> buf_;
};

class binary_reader {
 public:
  explicit binary_reader(std::vector<char> bytes) : buf_(std::move(bytes)) {}

  static binary_reader from_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw integrity_error("cannot open: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return binary_reader(std::move(bytes));
  }

  /// Checks and strips the trailing content hash written by binary_writer::seal.
  void verify_seal() {
    if (buf_.size() < sizeof(std::uint64_t)) throw integrity_error("file too short for content hash");
    const std::size_t body = buf_.size() - sizeof(std::uint64_t);
    std::uint64_t stored = 0;
    std::memcpy(&stored, buf_.data() + body, sizeof(stored));
    fnv1a h;
    h.update(buf_.data(), body);
    if (h.digest() != stored) throw integrity_error("content hash mismatch (truncated or corrupted file)");
    buf_.resize(body);
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(T));
    std::vector<T> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::string_view(buf_.data() + pos_, magic.size()) != magic) throw integrity_error("bad magic bytes");
    pos_ += magic.size();
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw integrity_error("unexpected end of data");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<float> to_floats(const Eigen::Ref<const matrix>& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  Eigen::Map<matrix_f>(out.data(), m.rows(), m.cols()) = m.cast<float>();
  return out;
}

inline bool all_finite(const Eigen::Ref<const matrix>& m) { return m.allFinite(); }

}  // namespace wmg
