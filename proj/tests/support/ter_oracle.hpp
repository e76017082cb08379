#pragma once

// Brute-force TER oracle for tests. Searches every sequence of block shifts
// (breadth-first over arrangements, bounded by the best score seen so far)
// and adds an independently written edit distance at each arrangement. The
// legal move set here is deliberately broader than the production greedy
// search: any contiguous hypothesis span that occurs verbatim in the
// reference may move anywhere, with no misalignment requirement. The greedy
// result can therefore never beat the oracle, and every greedy-vs-oracle gap
// is attributable to the greedy restrictions rather than to the move set.
//
// Complexity is exponential in shift depth; intended for token sequences of
// length <= 10 over small alphabets.

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace terbrute {

using Seq = std::vector<int>;

inline int edit_distance(const Seq& a, const Seq& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<std::vector<int>> d(m + 1, std::vector<int>(n + 1, 0));
  for (std::size_t i = 0; i <= m; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= n; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j) {
      int best = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      if (d[i - 1][j] + 1 < best) best = d[i - 1][j] + 1;
      if (d[i][j - 1] + 1 < best) best = d[i][j - 1] + 1;
      d[i][j] = best;
    }
  return d[m][n];
}

inline std::uint64_t pack(const Seq& s) {
  if (s.size() > 10) throw std::invalid_argument("oracle: sequence too long");
  std::uint64_t code = 1;  // leading 1 guards length
  for (const int t : s) {
    if (t < 0 || t > 62) throw std::invalid_argument("oracle: token id range");
    code = code * 64 + static_cast<std::uint64_t>(t + 1);
  }
  return code;
}

inline bool span_occurs(const Seq& hay, const Seq& cur, std::size_t i,
                        std::size_t len) {
  if (len > hay.size()) return false;
  for (std::size_t p = 0; p + len <= hay.size(); ++p) {
    bool ok = true;
    for (std::size_t k = 0; k < len; ++k)
      if (hay[p + k] != cur[i + k]) {
        ok = false;
        break;
      }
    if (ok) return true;
  }
  return false;
}

// Minimum (shift count + edit distance) over all shift sequences.
inline int min_edits(const Seq& hyp, const Seq& ref) {
  if (ref.empty()) throw std::invalid_argument("oracle: empty reference");
  int best = edit_distance(hyp, ref);
  if (hyp.empty() || best == 0) return best;

  std::unordered_set<std::uint64_t> seen;
  seen.insert(pack(hyp));
  std::vector<Seq> frontier{hyp};
  int depth = 0;
  Seq next_arr;
  while (!frontier.empty() && depth + 1 < best) {
    ++depth;
    std::vector<Seq> next_frontier;
    for (const Seq& cur : frontier) {
      const std::size_t n = cur.size();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
          const std::size_t len = j - i + 1;
          if (!span_occurs(ref, cur, i, len)) break;
          Seq rest;
          rest.reserve(n - len);
          for (std::size_t k = 0; k < n; ++k)
            if (k < i || k > j) rest.push_back(cur[k]);
          for (std::size_t dest = 0; dest + len <= n; ++dest) {
            if (dest == i) continue;
            next_arr.clear();
            next_arr.insert(next_arr.end(), rest.begin(),
                            rest.begin() + static_cast<std::ptrdiff_t>(dest));
            next_arr.insert(next_arr.end(),
                            cur.begin() + static_cast<std::ptrdiff_t>(i),
                            cur.begin() + static_cast<std::ptrdiff_t>(j + 1));
            next_arr.insert(next_arr.end(),
                            rest.begin() + static_cast<std::ptrdiff_t>(dest),
                            rest.end());
            const std::uint64_t code = pack(next_arr);
            if (!seen.insert(code).second) continue;
            const int total = depth + edit_distance(next_arr, ref);
            if (total < best) best = total;
            next_frontier.push_back(next_arr);
          }
        }
      }
    }
    frontier = std::move(next_frontier);
  }
  return best;
}

// String-token convenience wrapper: interns tokens then defers to min_edits.
inline int min_edits_tokens(const std::vector<std::string>& hyp,
                            const std::vector<std::string>& ref) {
  std::map<std::string, int> intern;
  auto to_ids = [&](const std::vector<std::string>& toks) {
    Seq ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) {
      auto [it, _] = intern.emplace(t, static_cast<int>(intern.size()));
      ids.push_back(it->second);
    }
    return ids;
  };
  const Seq h = to_ids(hyp);
  const Seq r = to_ids(ref);
  return min_edits(h, r);
}

// Canonical label for a (ref, hyp) pair: symbols renamed to a, b, c, ... by
// first appearance in ref then hyp. Used to freeze the enumerated greedy-gap
// cases in a representation stable under alphabet relabeling.
inline std::string canonical_pair(const Seq& ref, const Seq& hyp) {
  std::map<int, char> rename;
  auto label = [&](int t) {
    auto it = rename.find(t);
    if (it == rename.end())
      it = rename.emplace(t, static_cast<char>('a' + rename.size())).first;
    return it->second;
  };
  std::string out = "ref=";
  for (const int t : ref) out += label(t);
  out += " hyp=";
  for (const int t : hyp) out += label(t);
  return out;
}

}  // namespace terbrute
