#pragma once

#include <array>
#include <cstdio>
#include <memory>

#include "mape/common.hpp"

namespace mape {

// Language identifier, e.g. "hin_Deva" or a toy code like "hin_Toy".
struct LangId {
  std::string code;

  bool operator==(const LangId& o) const { return code == o.code; }
  bool operator<(const LangId& o) const { return code < o.code; }
  bool valid() const { return !code.empty(); }

  // The token form injected in front of source sentences.
  std::string token() const { return code; }
};

// Closed set of language codes a pipeline run is allowed to use.
class LangRegistry {
 public:
  LangRegistry() = default;
  explicit LangRegistry(std::vector<std::string> codes) {
    for (auto& c : codes) codes_.push_back(std::move(c));
  }

  void add(const std::string& code) {
    if (!contains(code)) codes_.push_back(code);
  }
  bool contains(const std::string& code) const {
    return std::find(codes_.begin(), codes_.end(), code) != codes_.end();
  }
  const std::vector<std::string>& codes() const { return codes_; }

  void require(const LangId& lang) const {
    if (!contains(lang.code))
      throw ConfigError("unknown language id: " + lang.code);
  }

 private:
  std::vector<std::string> codes_;
};

// Abstract machine-translation hook used when synthesizing post-editing
// triplets and augmentation quadruples.
class ExternalTranslator {
 public:
  virtual ~ExternalTranslator() = default;
  virtual bool supports(const LangId& from, const LangId& to) const = 0;
  // Returns the translation, or an empty vector when the backend failed for
  // this particular sentence (callers treat that as a skippable failure).
  virtual Tokens translate(const Tokens& sentence, const LangId& from,
                           const LangId& to) const = 0;
};

// Deterministic stand-in translator: maps each token through a seeded
// substitution keyed by (token, from, to). Useful for exercising the
// synthetic-data plumbing without a real MT system.
class CipherTranslator final : public ExternalTranslator {
 public:
  explicit CipherTranslator(std::uint64_t seed) : seed_(seed) {}

  bool supports(const LangId&, const LangId&) const override { return true; }

  Tokens translate(const Tokens& sentence, const LangId& from,
                   const LangId& to) const override {
    Tokens out;
    out.reserve(sentence.size());
    for (const auto& tok : sentence) {
      const auto h =
          derive_seed(seed_, from.code + "\x1f" + to.code + "\x1f" + tok);
      out.push_back(to.code.substr(0, 2) + std::to_string(h % 10000));
    }
    return out;
  }

 private:
  std::uint64_t seed_;
};

// Shells out to an external command reading one sentence per line on stdin
// and writing one translation per line on stdout. The command receives the
// language pair via argv placeholders {from} and {to}.
class CommandTranslator final : public ExternalTranslator {
 public:
  explicit CommandTranslator(std::string command_template)
      : template_(std::move(command_template)) {}

  bool supports(const LangId&, const LangId&) const override { return true; }

  Tokens translate(const Tokens& sentence, const LangId& from,
                   const LangId& to) const override {
    std::string cmd = template_;
    replace_all(cmd, "{from}", from.code);
    replace_all(cmd, "{to}", to.code);
    const std::string line = join(sentence);

    // One process per sentence keeps the contract simple; batch callers that
    // care about throughput should wrap their own pooling around this.
    const std::string full = "printf '%s\\n' \"" + escape(line) + "\" | " + cmd;
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) return {};
    while (fgets(buf.data(), static_cast<int>(buf.size()), pipe))
      out += buf.data();
    const int status = pclose(pipe);
    if (status != 0) return {};
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r'))
      out.pop_back();
    return split_whitespace(out);
  }

 private:
  static void replace_all(std::string& s, std::string_view what,
                          std::string_view with) {
    for (std::size_t pos = 0; (pos = s.find(what, pos)) != std::string::npos;
         pos += with.size())
      s.replace(pos, what.size(), with);
  }
  static std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
      if (c == '"' || c == '\\' || c == '$' || c == '`') out += '\\';
      out += c;
    }
    return out;
  }

  std::string template_;
};

}  // namespace mape
