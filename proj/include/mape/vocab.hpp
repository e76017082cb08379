#pragma once

#include <json.hpp>
#include <map>
#include <set>

#include "mape/common.hpp"

namespace mape {

// Byte-pair-encoded subword vocabulary. Special tokens (padding, sentence
// boundaries, the candidate separator, language-id tokens) are atomic: they
// are never split, never merged into, and round-trip as themselves.
class Vocab {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kWordEnd = "</w>";

  // Learns merge rules from tokenized sentences. `atoms` lists additional
  // indivisible tokens (separator, language ids) beyond the four built-ins.
  static Vocab train(const std::vector<Tokens>& sentences,
                     std::size_t merge_count,
                     const std::vector<std::string>& atoms) {
    Vocab v;
    v.atoms_ = atoms;

    std::map<std::string, long long> word_freq;
    for (const auto& sent : sentences)
      for (const auto& w : sent)
        if (!v.is_atom(w)) ++word_freq[w];

    // Symbol sequences per word; the final character carries the word-end
    // marker so merges can distinguish word-internal from word-final pieces.
    std::map<std::vector<std::string>, long long> seqs;
    for (const auto& [word, freq] : word_freq) {
      auto symbols = utf8_chars(word);
      if (symbols.empty()) continue;
      symbols.back() += kWordEnd;
      seqs[symbols] += freq;
    }

    for (std::size_t step = 0; step < merge_count; ++step) {
      std::map<std::pair<std::string, std::string>, long long> pair_freq;
      for (const auto& [seq, freq] : seqs)
        for (std::size_t i = 0; i + 1 < seq.size(); ++i)
          pair_freq[{seq[i], seq[i + 1]}] += freq;
      if (pair_freq.empty()) break;
      // Highest frequency wins; ties resolve to the lexicographically
      // smallest pair so training is order-independent.
      std::pair<std::string, std::string> best;
      long long best_freq = -1;
      for (const auto& [pair, freq] : pair_freq)
        if (freq > best_freq) {
          best_freq = freq;
          best = pair;
        }
      if (best_freq < 2) break;  // nothing left worth merging
      v.merges_.push_back(best);

      std::map<std::vector<std::string>, long long> next;
      for (const auto& [seq, freq] : seqs) {
        std::vector<std::string> merged;
        merged.reserve(seq.size());
        for (std::size_t i = 0; i < seq.size(); ++i) {
          if (i + 1 < seq.size() && seq[i] == best.first &&
              seq[i + 1] == best.second) {
            merged.push_back(seq[i] + seq[i + 1]);
            ++i;
          } else {
            merged.push_back(seq[i]);
          }
        }
        next[merged] += freq;
      }
      seqs = std::move(next);
    }

    // Piece inventory: every symbol produced by splitting plus merges. Also
    // include bare characters so partially merged words stay encodable.
    std::set<std::string> pieces;
    for (const auto& [word, freq] : word_freq) {
      auto symbols = utf8_chars(word);
      if (symbols.empty()) continue;
      symbols.back() += kWordEnd;
      for (auto& s : v.apply_merges(symbols)) pieces.insert(std::move(s));
      for (const auto& c : utf8_chars(word)) {
        pieces.insert(c);
        pieces.insert(c + kWordEnd);
      }
    }
    v.finalize(std::vector<std::string>(pieces.begin(), pieces.end()));
    return v;
  }

  std::size_t size() const { return id_to_piece_.size(); }
  int pad_id() const { return 0; }
  int bos_id() const { return 1; }
  int eos_id() const { return 2; }
  int unk_id() const { return 3; }

  int piece_id(const std::string& piece) const {
    const auto it = piece_to_id_.find(piece);
    return it == piece_to_id_.end() ? -1 : it->second;
  }

  bool is_atom(const std::string& tok) const {
    if (tok == kPad || tok == kBos || tok == kEos || tok == kUnk) return true;
    return std::find(atoms_.begin(), atoms_.end(), tok) != atoms_.end();
  }

  // Subword ids for one word (no sentence boundaries added).
  std::vector<int> encode_word(const std::string& word) const {
    if (is_atom(word)) return {piece_id(word)};
    auto symbols = utf8_chars(word);
    if (symbols.empty()) return {unk_id()};
    symbols.back() += kWordEnd;
    std::vector<int> ids;
    for (const auto& s : apply_merges(symbols)) {
      const int id = piece_id(s);
      ids.push_back(id < 0 ? unk_id() : id);
    }
    return ids;
  }

  std::vector<int> encode(const Tokens& words) const {
    std::vector<int> ids;
    for (const auto& w : words) {
      const auto wi = encode_word(w);
      ids.insert(ids.end(), wi.begin(), wi.end());
    }
    return ids;
  }

  struct Encoded {
    std::vector<int> ids;
    std::vector<int> word_starts;  // index into ids of each word's first piece
  };

  Encoded encode_with_word_starts(const Tokens& words) const {
    Encoded out;
    for (const auto& w : words) {
      out.word_starts.push_back(static_cast<int>(out.ids.size()));
      const auto wi = encode_word(w);
      out.ids.insert(out.ids.end(), wi.begin(), wi.end());
    }
    return out;
  }

  // Joins subword pieces back into words. Sentence-control ids (pad, bos,
  // eos) are dropped; atoms come through as standalone words.
  Tokens decode(const std::vector<int>& ids) const {
    Tokens words;
    std::string pending;
    auto flush = [&] {
      if (!pending.empty()) {
        words.push_back(pending);
        pending.clear();
      }
    };
    for (const int id : ids) {
      if (id == pad_id() || id == bos_id() || id == eos_id()) continue;
      const std::string& piece = id_to_piece_.at(static_cast<std::size_t>(id));
      if (is_atom(piece)) {
        flush();
        words.push_back(piece);
        continue;
      }
      const std::size_t we = piece.rfind(kWordEnd);
      if (we != std::string::npos && we == piece.size() - 4) {
        pending += piece.substr(0, we);
        flush();
      } else {
        pending += piece;
      }
    }
    flush();
    return words;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["atoms"] = atoms_;
    j["merges"] = nlohmann::json::array();
    for (const auto& [a, b] : merges_) j["merges"].push_back({a, b});
    j["pieces"] = std::vector<std::string>(
        id_to_piece_.begin() + 4 + static_cast<std::ptrdiff_t>(atoms_.size()),
        id_to_piece_.end());
    return j;
  }

  static Vocab from_json(const nlohmann::json& j) {
    Vocab v;
    v.atoms_ = j.at("atoms").get<std::vector<std::string>>();
    for (const auto& m : j.at("merges"))
      v.merges_.emplace_back(m.at(0).get<std::string>(),
                             m.at(1).get<std::string>());
    v.finalize(j.at("pieces").get<std::vector<std::string>>());
    return v;
  }

 private:
  void finalize(const std::vector<std::string>& pieces) {
    id_to_piece_ = {kPad, kBos, kEos, kUnk};
    id_to_piece_.insert(id_to_piece_.end(), atoms_.begin(), atoms_.end());
    id_to_piece_.insert(id_to_piece_.end(), pieces.begin(), pieces.end());
    piece_to_id_.clear();
    for (std::size_t i = 0; i < id_to_piece_.size(); ++i) {
      if (!piece_to_id_.emplace(id_to_piece_[i], static_cast<int>(i)).second)
        throw ConfigError("duplicate vocabulary entry: " + id_to_piece_[i]);
    }
  }

  std::vector<std::string> apply_merges(std::vector<std::string> symbols) const {
    // Merge the lowest-ranked applicable rule until none applies.
    std::map<std::pair<std::string, std::string>, std::size_t> rank;
    for (std::size_t r = 0; r < merges_.size(); ++r)
      rank.emplace(merges_[r], r);
    while (symbols.size() > 1) {
      std::size_t best_rank = merges_.size();
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        const auto it = rank.find({symbols[i], symbols[i + 1]});
        if (it != rank.end() && it->second < best_rank) best_rank = it->second;
      }
      if (best_rank == merges_.size()) break;
      const auto& [a, b] = merges_[best_rank];
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
          next.push_back(a + b);
          ++i;
        } else {
          next.push_back(symbols[i]);
        }
      }
      symbols = std::move(next);
    }
    return symbols;
  }

  static std::vector<std::string> utf8_chars(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
      const auto c = static_cast<unsigned char>(s[i]);
      std::size_t n = 1;
      if ((c & 0xF8) == 0xF0)
        n = 4;
      else if ((c & 0xF0) == 0xE0)
        n = 3;
      else if ((c & 0xE0) == 0xC0)
        n = 2;
      n = std::min(n, s.size() - i);
      out.push_back(s.substr(i, n));
      i += n;
    }
    return out;
  }

  std::vector<std::string> atoms_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> id_to_piece_;
  std::map<std::string, int> piece_to_id_;
};

}  // namespace mape
