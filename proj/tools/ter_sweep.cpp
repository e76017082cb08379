// Exhaustive comparison of the greedy shift search against the brute-force
// oracle over every hyp/ref token-sequence pair with lengths <= 5 drawn from
// a 4-symbol alphabet. Prints gap statistics and optionally rewrites the
// frozen gap inventory consumed by the acceptance suite.
//
// Usage: ter_sweep [--out FILE] [--max-len N] [--alphabet K]

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mape/metrics.hpp"
#include "ter_oracle.hpp"

namespace {

void enumerate_seqs(int max_len, int alphabet, bool allow_empty,
                    std::vector<std::vector<int>>& out) {
  std::vector<int> cur;
  // iterative counting in base `alphabet` per length
  for (int len = allow_empty ? 0 : 1; len <= max_len; ++len) {
    cur.assign(len, 0);
    while (true) {
      out.push_back(cur);
      int pos = len - 1;
      while (pos >= 0 && cur[pos] == alphabet - 1) {
        cur[pos] = 0;
        --pos;
      }
      if (pos < 0) break;
      ++cur[pos];
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  int max_len = 5;
  int alphabet = 4;
  std::string out_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out" && i + 1 < argc)
      out_path = argv[++i];
    else if (arg == "--max-len" && i + 1 < argc)
      max_len = std::atoi(argv[++i]);
    else if (arg == "--alphabet" && i + 1 < argc)
      alphabet = std::atoi(argv[++i]);
    else {
      std::fprintf(stderr, "unknown argument: %s\n", arg.c_str());
      return 2;
    }
  }

  std::vector<std::vector<int>> refs, hyps;
  enumerate_seqs(max_len, alphabet, false, refs);
  enumerate_seqs(max_len, alphabet, true, hyps);

  const auto t0 = std::chrono::steady_clock::now();
  long long pairs = 0, gaps = 0, violations = 0;
  std::set<std::string> canon;
  std::set<int> gap_sizes;
  for (const auto& ref : refs) {
    for (const auto& hyp : hyps) {
      ++pairs;
      const int greedy = mape::ter_ids(hyp, ref).trace.total_edits();
      const int oracle = terbrute::min_edits(hyp, ref);
      if (greedy < oracle) {
        ++violations;
        std::fprintf(stderr, "VIOLATION greedy<oracle: %s greedy=%d oracle=%d\n",
                     terbrute::canonical_pair(ref, hyp).c_str(), greedy, oracle);
      } else if (greedy > oracle) {
        ++gaps;
        gap_sizes.insert(greedy - oracle);
        canon.insert(terbrute::canonical_pair(ref, hyp) + " gap=" +
                     std::to_string(greedy - oracle));
      }
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();

  std::printf("pairs=%lld gaps=%lld canonical=%zu violations=%lld time=%.1fs\n",
              pairs, gaps, canon.size(), violations, secs);
  for (const int g : gap_sizes) std::printf("gap size present: %d\n", g);

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << "# Pairs where the greedy shift search settles one edit short of\n"
           "# the exhaustive-search optimum, over all hyp/ref pairs with\n"
           "# lengths <= " << max_len << " from a " << alphabet
        << "-symbol alphabet. Symbols are canonicalized by first\n"
           "# appearance in ref then hyp. The acceptance suite re-derives this sweep\n"
           "# and fails on any difference.\n";
    for (const auto& line : canon) out << line << "\n";
  }
  return violations == 0 ? 0 : 1;
}
