#include "pdlab/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pdlab {

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  id_to_word_ = {"[PAD]", "[UNK]", "[SOS]", "[EOS]"};
  for (int i = 0; i < 4; ++i) word_to_id_[id_to_word_[i]] = i;
  for (const auto& w : words) add_word(w);
}

void Vocabulary::add_word(const std::string& w) {
  if (word_to_id_.count(w)) return;
  word_to_id_[w] = static_cast<int>(id_to_word_.size());
  id_to_word_.push_back(w);
}

int Vocabulary::id(const std::string& word) const {
  auto it = word_to_id_.find(word);
  return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(size()));
  }
  return id_to_word_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& file) const {
  nlohmann::json j;
  for (const auto& [w, i] : word_to_id_) j[w] = i;
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw VocabError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw VocabError("cannot open " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw VocabError("malformed vocabulary " + file.string() + ": " + e.what());
  }
  std::vector<std::pair<std::string, int>> pairs;
  for (const auto& [w, i] : j.items()) pairs.emplace_back(w, i.get<int>());
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  Vocabulary v;
  v.id_to_word_.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (pairs[k].second != static_cast<int>(k)) {
      throw VocabError("vocabulary ids in " + file.string() + " are not a dense bijection");
    }
    v.word_to_id_[pairs[k].first] = pairs[k].second;
    v.id_to_word_.push_back(pairs[k].first);
  }
  if (v.size() < 4) throw VocabError("vocabulary " + file.string() + " lacks reserved tokens");
  return v;
}

std::vector<int> tokenize(const std::string& caption, const Vocabulary& vocab, int max_len) {
  std::string lowered(caption.size(), '\0');
  std::transform(caption.begin(), caption.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream ss(lowered);
  std::vector<int> ids;
  ids.push_back(Vocabulary::kSos);
  std::string word;
  const int max_words = max_len - 2;
  while (ss >> word && static_cast<int>(ids.size()) - 1 < max_words) {
    ids.push_back(vocab.id(word));
  }
  if (ids.size() == 1) throw VocabError("caption is empty after normalization");
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace pdlab
