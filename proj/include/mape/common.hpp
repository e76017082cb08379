#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mape {

using Tokens = std::vector<std::string>;

// Error taxonomy. Argument errors are caller bugs, data errors are bad input
// content, config errors are bad setup, io errors carry the offending path.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void log_warn(const std::string& msg) {
  std::fputs(("[warn] " + msg + "\n").c_str(), stderr);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. Fisher-Yates is hand-rolled because std::shuffle does
// not pin the number of engine draws across library versions.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("Rng::below: n must be positive");
    // Rejection sampling keeps the distribution exact and deterministic.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    // Box-Muller, one value per call (cache unused to stay draw-count stable).
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices from [0, n), order randomized.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k) {
    if (k > n)
      throw ArgumentError("sample_without_replacement: k exceeds population");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

// Stable seed derivation so independent pipeline stages get decoupled
// streams: derive_seed(seed, "stage2a") never collides with the base stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

// ---------------------------------------------------------------------------
// Text helpers

inline Tokens split_whitespace(std::string_view line) {
  Tokens out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t j = i;
    while (j < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const Tokens& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

// Detachable punctuation for tokenization: ASCII punctuation plus the
// Devanagari danda/double danda (UTF-8 encoded).
inline bool is_detachable_punct(std::string_view s) {
  if (s.size() == 1) {
    static constexpr std::string_view kAscii = ".,;:!?\"'()[]{}<>";
    return kAscii.find(s[0]) != std::string_view::npos;
  }
  return s == "\xe0\xa5\xa4" || s == "\xe0\xa5\xa5";  // danda, double danda
}

// Splits one UTF-8 code point off the front/back edge of a token if it is
// detachable punctuation. Applied repeatedly until fixed point.
inline void detach_punctuation(const std::string& word, Tokens& out) {
  std::string core = word;
  Tokens leading;
  Tokens trailing;
  auto take_edge = [&](bool front) -> bool {
    if (core.empty()) return false;
    // Try 1-byte then 3-byte candidates (covers ASCII and danda).
    for (std::size_t n : {std::size_t{1}, std::size_t{3}}) {
      if (core.size() < n) continue;
      const std::string piece =
          front ? core.substr(0, n) : core.substr(core.size() - n);
      if (is_detachable_punct(piece) && core.size() > n) {
        if (front) {
          leading.push_back(piece);
          core.erase(0, n);
        } else {
          trailing.insert(trailing.begin(), piece);
          core.erase(core.size() - n);
        }
        return true;
      }
      if (is_detachable_punct(piece) && core.size() == n) {
        // token is pure punctuation; keep as-is
        return false;
      }
    }
    return false;
  };
  while (take_edge(true)) {
  }
  while (take_edge(false)) {
  }
  for (auto& t : leading) out.push_back(std::move(t));
  if (!core.empty()) out.push_back(core);
  for (auto& t : trailing) out.push_back(std::move(t));
}

// Normalization + whitespace tokenization used throughout the corpus layer.
// Unicode NFC is not applied: no Unicode tables are available in this
// toolchain, and the shipped corpora are already composed. Punctuation is
// detached from word edges so edit-rate metrics operate on words.
inline Tokens tokenize(std::string_view line) {
  Tokens out;
  for (const auto& word : split_whitespace(line)) detach_punctuation(word, out);
  return out;
}

// ---------------------------------------------------------------------------
// Line-oriented file IO

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_lines(const std::string& path,
                        const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

// Flat key-value config text: one `key value` or `key = value` per line,
// `#` starts a comment. Duplicate keys are an error so configs stay
// unambiguous.
inline std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (auto& c : line)
      if (c == '=' || c == '\t') c = ' ';
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 2)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected `key value`, got \"" + line + "\"");
    if (!out.emplace(tokens[0], tokens[1]).second)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key " + tokens[0]);
  }
  return out;
}

}  // namespace mape
