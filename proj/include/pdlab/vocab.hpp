#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdlab {

struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Word-level vocabulary with four reserved ids. The mapping is a bijection:
// every word gets a unique id from 4 upward in first-seen order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;

  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& words);

  // kUnk for out-of-vocabulary words.
  int id(const std::string& word) const;
  const std::string& token(int id) const;  // throws on out-of-range ids
  bool contains(const std::string& word) const { return word_to_id_.count(word) > 0; }
  int size() const { return static_cast<int>(id_to_word_.size()); }

  void save(const std::filesystem::path& file) const;
  static Vocabulary load(const std::filesystem::path& file);

 private:
  void add_word(const std::string& w);
  std::map<std::string, int> word_to_id_;
  std::vector<std::string> id_to_word_;
};

// Lowercases, splits on whitespace, maps words to ids, truncates to
// max_len - 2 words, and wraps the result as [SOS, words..., EOS] so the
// sequence never exceeds max_len ids. Throws VocabError on a caption that is
// empty after normalization.
std::vector<int> tokenize(const std::string& caption, const Vocabulary& vocab, int max_len);

}  // namespace pdlab
