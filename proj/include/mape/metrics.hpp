#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>

#include "mape/common.hpp"

namespace mape {

enum class EditKind : std::uint8_t { Match, Substitution, Insertion, Deletion };

// One step of the final hyp/ref alignment. hyp_index is the position of the
// token in the ORIGINAL hypothesis (before any block shifts); -1 for
// deletions, which consume a reference token only. ref_index is -1 for
// insertions.
struct EditLink {
  int hyp_index;
  int ref_index;
  EditKind kind;
};

struct EditTrace {
  int insertions = 0;
  int deletions = 0;
  int substitutions = 0;
  int shifts = 0;
  int ref_len = 0;
  std::vector<EditLink> links;  // in final alignment order

  int total_edits() const {
    return insertions + deletions + substitutions + shifts;
  }
};

struct TerResult {
  double score = 0.0;  // total_edits / ref_len, unscaled
  EditTrace trace;
};

namespace detail {

template <class Tok>
int levenshtein(const std::vector<Tok>& hyp, const std::vector<Tok>& ref) {
  const std::size_t m = hyp.size(), n = ref.size();
  std::vector<int> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= n; ++j) {
      const int sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

struct AlignOutcome {
  std::vector<EditLink> links;
  std::vector<bool> hyp_matched;  // per current-hyp position
  int insertions = 0, deletions = 0, substitutions = 0;
};

// Full alignment with traceback. When several paths are optimal the
// traceback prefers consuming a hypothesis token (insertion), then the
// diagonal, then a deletion. Walking back from the end, this pushes
// insertions toward the right of the hypothesis, so ties resolve in favour
// of matching the leftmost occurrence ("a b b c" vs "a b c" matches the
// first "b").
template <class Tok>
AlignOutcome align_path(const std::vector<Tok>& hyp,
                        const std::vector<int>& hyp_orig_index,
                        const std::vector<Tok>& ref) {
  const int m = static_cast<int>(hyp.size());
  const int n = static_cast<int>(ref.size());
  std::vector<int> dp(static_cast<std::size_t>(m + 1) * (n + 1));
  auto at = [&](int i, int j) -> int& { return dp[i * (n + 1) + j]; };
  for (int j = 0; j <= n; ++j) at(0, j) = j;
  for (int i = 1; i <= m; ++i) {
    at(i, 0) = i;
    for (int j = 1; j <= n; ++j) {
      const int sub = at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1, sub});
    }
  }
  AlignOutcome out;
  out.hyp_matched.assign(hyp.size(), false);
  int i = m, j = n;
  while (i > 0 || j > 0) {
    const int d = at(i, j);
    if (i > 0 && at(i - 1, j) + 1 == d) {
      out.links.push_back({hyp_orig_index[i - 1], -1, EditKind::Insertion});
      ++out.insertions;
      --i;
    } else if (i > 0 && j > 0 &&
               at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1) == d) {
      const bool match = hyp[i - 1] == ref[j - 1];
      out.links.push_back({hyp_orig_index[i - 1], j - 1,
                           match ? EditKind::Match : EditKind::Substitution});
      if (match)
        out.hyp_matched[i - 1] = true;
      else
        ++out.substitutions;
      --i;
      --j;
    } else {
      out.links.push_back({-1, j - 1, EditKind::Deletion});
      ++out.deletions;
      --j;
    }
  }
  std::reverse(out.links.begin(), out.links.end());
  return out;
}

// Does cur[i..i+len) occur as a contiguous span of ref?
template <class Tok>
bool span_in_ref(const std::vector<Tok>& cur, std::size_t i, std::size_t len,
                 const std::vector<Tok>& ref) {
  if (len > ref.size()) return false;
  for (std::size_t p = 0; p + len <= ref.size(); ++p) {
    bool ok = true;
    for (std::size_t k = 0; k < len; ++k) {
      if (!(ref[p + k] == cur[i + k])) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  }
  return false;
}

struct ShiftChoice {
  int reduction = 0;
  std::size_t span_len = 0;
  std::size_t start = 0;
  std::size_t dest = 0;
  int new_dist = 0;
  bool found = false;

  // Preference order: greatest distance reduction, then longest span, then
  // leftmost span start, then smallest move distance.
  bool better_than(const ShiftChoice& o) const {
    if (!o.found) return true;
    if (reduction != o.reduction) return reduction > o.reduction;
    if (span_len != o.span_len) return span_len > o.span_len;
    if (start != o.start) return start < o.start;
    const auto md = [](std::size_t a, std::size_t b) {
      return a > b ? a - b : b - a;
    };
    return md(dest, start) < md(o.dest, o.start);
  }
};

template <class Tok>
TerResult ter_impl(const std::vector<Tok>& hyp, const std::vector<Tok>& ref) {
  if (ref.empty()) throw ArgumentError("ter: reference must be non-empty");

  std::vector<Tok> cur = hyp;
  std::vector<int> orig(hyp.size());
  for (std::size_t i = 0; i < orig.size(); ++i) orig[i] = static_cast<int>(i);

  int shifts = 0;
  int dist = levenshtein(cur, ref);
  std::vector<Tok> candidate;
  std::vector<Tok> rest;

  // Greedy block shifts: repeatedly move the contiguous hypothesis span that
  // (a) occurs verbatim somewhere in the reference and (b) contains at least
  // one currently misaligned token, choosing the move that most reduces the
  // plain edit distance. Each applied shift costs one edit. The destination
  // index addresses the sequence after the span is removed, and the move
  // distance used for tie-breaking is |dest - start|.
  while (dist > 0 && !cur.empty()) {
    const auto align = align_path(cur, orig, ref);
    ShiftChoice best;
    const std::size_t len_cur = cur.size();
    for (std::size_t i = 0; i < len_cur; ++i) {
      bool any_misaligned = false;
      for (std::size_t j = i; j < len_cur; ++j) {
        const std::size_t span_len = j - i + 1;
        // If cur[i..j] matches nowhere in ref, no extension of it can.
        if (!span_in_ref(cur, i, span_len, ref)) break;
        any_misaligned = any_misaligned || !align.hyp_matched[j];
        if (!any_misaligned) continue;

        rest.clear();
        rest.reserve(len_cur - span_len);
        for (std::size_t k = 0; k < len_cur; ++k)
          if (k < i || k > j) rest.push_back(cur[k]);

        for (std::size_t dest = 0; dest + span_len <= len_cur; ++dest) {
          if (dest == i) continue;
          candidate.clear();
          candidate.reserve(len_cur);
          candidate.insert(candidate.end(), rest.begin(),
                           rest.begin() + static_cast<std::ptrdiff_t>(dest));
          candidate.insert(candidate.end(),
                           cur.begin() + static_cast<std::ptrdiff_t>(i),
                           cur.begin() + static_cast<std::ptrdiff_t>(j + 1));
          candidate.insert(candidate.end(),
                           rest.begin() + static_cast<std::ptrdiff_t>(dest),
                           rest.end());
          const int nd = levenshtein(candidate, ref);
          if (nd >= dist) continue;
          ShiftChoice c{dist - nd, span_len, i, dest, nd, true};
          if (!best.found || c.better_than(best)) best = c;
        }
      }
    }
    if (!best.found) break;

    // Apply the chosen move to tokens and original-index bookkeeping alike.
    std::vector<Tok> moved_tok(
        cur.begin() + static_cast<std::ptrdiff_t>(best.start),
        cur.begin() + static_cast<std::ptrdiff_t>(best.start + best.span_len));
    std::vector<int> moved_idx(
        orig.begin() + static_cast<std::ptrdiff_t>(best.start),
        orig.begin() + static_cast<std::ptrdiff_t>(best.start + best.span_len));
    cur.erase(cur.begin() + static_cast<std::ptrdiff_t>(best.start),
              cur.begin() + static_cast<std::ptrdiff_t>(best.start +
                                                        best.span_len));
    orig.erase(orig.begin() + static_cast<std::ptrdiff_t>(best.start),
               orig.begin() + static_cast<std::ptrdiff_t>(best.start +
                                                          best.span_len));
    cur.insert(cur.begin() + static_cast<std::ptrdiff_t>(best.dest),
               moved_tok.begin(), moved_tok.end());
    orig.insert(orig.begin() + static_cast<std::ptrdiff_t>(best.dest),
                moved_idx.begin(), moved_idx.end());
    ++shifts;
    dist = best.new_dist;
  }

  const auto final_align = align_path(cur, orig, ref);
  TerResult res;
  res.trace.insertions = final_align.insertions;
  res.trace.deletions = final_align.deletions;
  res.trace.substitutions = final_align.substitutions;
  res.trace.shifts = shifts;
  res.trace.ref_len = static_cast<int>(ref.size());
  res.trace.links = final_align.links;
  res.score =
      static_cast<double>(res.trace.total_edits()) / static_cast<double>(ref.size());
  return res;
}

}  // namespace detail

// Translation Edit Rate of a single hypothesis against one reference.
// score = (insertions + deletions + substitutions + shifts) / |ref|.
inline TerResult ter(const Tokens& hyp, const Tokens& ref) {
  return detail::ter_impl(hyp, ref);
}

// Integer-token variant used by sweep-style tests and internal callers that
// have already interned their vocabulary.
inline TerResult ter_ids(const std::vector<int>& hyp,
                         const std::vector<int>& ref) {
  return detail::ter_impl(hyp, ref);
}

// Corpus-level TER: summed edits over summed reference lengths (not the mean
// of per-sentence scores).
inline double ter_corpus(const std::vector<Tokens>& hyps,
                         const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size())
    throw ArgumentError("ter_corpus: hyp/ref count mismatch");
  if (hyps.empty()) throw ArgumentError("ter_corpus: empty corpus");
  long long edits = 0, ref_total = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto r = ter(hyps[i], refs[i]);
    edits += r.trace.total_edits();
    ref_total += static_cast<long long>(refs[i].size());
  }
  return static_cast<double>(edits) / static_cast<double>(ref_total);
}

// Corpus BLEU on the 0..100 scale: n-grams up to 4, geometric mean of
// modified precisions, brevity penalty exp(1 - ref_len/hyp_len) when the
// hypothesis side is shorter. A zero match count at order n >= 2 is
// add-one smoothed; a zero unigram match count yields BLEU = 0.
inline double bleu(const std::vector<Tokens>& hyps,
                   const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size())
    throw ArgumentError("bleu: hyp/ref count mismatch");
  if (hyps.empty()) throw ArgumentError("bleu: empty corpus");

  constexpr int kMaxOrder = 4;
  long long matches[kMaxOrder] = {0, 0, 0, 0};
  long long totals[kMaxOrder] = {0, 0, 0, 0};
  long long hyp_len_sum = 0, ref_len_sum = 0;

  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const Tokens& h = hyps[s];
    const Tokens& r = refs[s];
    hyp_len_sum += static_cast<long long>(h.size());
    ref_len_sum += static_cast<long long>(r.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      if (static_cast<int>(h.size()) < n) continue;
      std::map<std::vector<std::string>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i)
        ++ref_counts[std::vector<std::string>(r.begin() + i, r.begin() + i + n)];
      std::map<std::vector<std::string>, int> hyp_counts;
      for (std::size_t i = 0; i + n <= h.size(); ++i)
        ++hyp_counts[std::vector<std::string>(h.begin() + i, h.begin() + i + n)];
      for (const auto& [gram, c] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(c, it->second);
      }
      totals[n - 1] += static_cast<long long>(h.size()) - n + 1;
    }
  }

  if (hyp_len_sum == 0 || matches[0] == 0) return 0.0;

  double log_prec_sum = 0.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    double num = static_cast<double>(matches[n - 1]);
    double den = static_cast<double>(totals[n - 1]);
    if (n >= 2 && matches[n - 1] == 0) {
      num += 1.0;
      den += 1.0;
    }
    if (den <= 0.0) return 0.0;
    log_prec_sum += std::log(num / den);
  }
  const double bp =
      hyp_len_sum >= ref_len_sum
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len_sum) /
                               static_cast<double>(hyp_len_sum));
  return 100.0 * bp * std::exp(log_prec_sum / kMaxOrder);
}

// Per-sentence tallies feeding corpus TER and the significance test.
struct SentenceStats {
  double edits = 0.0;
  double ref_len = 0.0;
};

inline double corpus_ter_from_stats(const std::vector<SentenceStats>& stats) {
  double e = 0.0, l = 0.0;
  for (const auto& s : stats) {
    e += s.edits;
    l += s.ref_len;
  }
  if (l <= 0.0) throw ArgumentError("corpus_ter_from_stats: zero ref length");
  return e / l;
}

// Paired approximate randomization over per-sentence edit tallies. Each
// trial flips every sentence's (a, b) assignment with probability 1/2 and
// recomputes the corpus-TER difference; the returned p-value is the plain
// fraction of trials whose |delta| is at least the observed |delta|.
inline double significance_test(const std::vector<SentenceStats>& a,
                                const std::vector<SentenceStats>& b,
                                int trials, std::uint64_t seed) {
  if (a.size() != b.size())
    throw ArgumentError("significance_test: system size mismatch");
  if (a.empty()) throw ArgumentError("significance_test: empty systems");
  if (trials <= 0) throw ArgumentError("significance_test: trials must be > 0");

  const double observed =
      std::fabs(corpus_ter_from_stats(a) - corpus_ter_from_stats(b));
  Rng rng(seed);
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    double ea = 0.0, la = 0.0, eb = 0.0, lb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool flip = rng.below(2) == 1;
      const SentenceStats& xa = flip ? b[i] : a[i];
      const SentenceStats& xb = flip ? a[i] : b[i];
      ea += xa.edits;
      la += xa.ref_len;
      eb += xb.edits;
      lb += xb.ref_len;
    }
    if (std::fabs(ea / la - eb / lb) >= observed) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace mape
