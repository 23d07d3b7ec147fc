#pragma once

// Symbol inventories for tags, word forms and letters. Everything is built
// from the training split only.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "brm/corpus.hpp"

namespace brm {

// Feature symbol ids shared by every embedding space. Real symbols start at
// kFirstSymbol.
enum Reserved : int {
  kOutOfBounds = 0,
  kEmptyStack = 1,
  kNoDepGov = 2,
  kNotSeen = 3,
  kErased = 4,
  kNull = 5,     // padding for the action history and short words
  kUnknown = 6,  // out-of-vocabulary form or letter
  kFirstSymbol = 7,
};

// Tag inventory. Id 0 is the reserved UNK tag that "_" and unseen tags map to.
class TagSet {
 public:
  static constexpr int kUnk = 0;

  TagSet() : names_{"_"} { index_.emplace("_", kUnk); }

  static TagSet from_names(const std::vector<std::string>& names) {
    TagSet t;
    for (const auto& n : names) t.add(n);
    return t;
  }

  static TagSet from_corpus(const std::vector<Sentence>& corpus) {
    std::set<std::string> seen;
    for (const auto& s : corpus)
      for (const auto& tok : s.tokens) seen.insert(tok.upos);
    TagSet t;
    for (const auto& n : seen) t.add(n);
    return t;
  }

  int add(const std::string& name) {
    auto [it, inserted] = index_.emplace(name, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }

  int id(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& name(int id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

// Decodes UTF-8 into Unicode scalar values; malformed bytes become U+FFFD.
inline std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0xFFFD;
    std::size_t len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      len = 4;
      cp = c & 0x07;
    }
    if (len > 1) {
      if (i + len > s.size()) {
        cp = 0xFFFD;
        len = 1;
      } else {
        for (std::size_t j = 1; j < len; ++j) {
          unsigned char cc = static_cast<unsigned char>(s[i + j]);
          if ((cc >> 6) != 0x2) {
            cp = 0xFFFD;
            len = 1;
            break;
          }
          cp = (cp << 6) | (cc & 0x3F);
        }
      }
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

class Vocabulary {
 public:
  TagSet tags;

  static Vocabulary build(const std::vector<Sentence>& train) {
    Vocabulary v;
    v.tags = TagSet::from_corpus(train);
    std::set<std::string> forms;
    std::set<char32_t> letters;
    for (const auto& s : train)
      for (const auto& tok : s.tokens) {
        forms.insert(tok.form);
        for (char32_t cp : utf8_decode(tok.form)) letters.insert(cp);
      }
    for (const auto& f : forms) v.add_word(f);
    for (char32_t cp : letters) v.add_letter(cp);
    return v;
  }

  void add_word(const std::string& w) {
    if (word_index_.emplace(w, static_cast<int>(words_.size())).second) words_.push_back(w);
  }
  void add_letter(char32_t cp) {
    if (letter_index_.emplace(cp, static_cast<int>(letters_.size())).second) letters_.push_back(cp);
  }

  // Feature symbol ids.
  int word_symbol(const std::string& w) const {
    auto it = word_index_.find(w);
    return it == word_index_.end() ? kUnknown : kFirstSymbol + it->second;
  }
  int letter_symbol(char32_t cp) const {
    auto it = letter_index_.find(cp);
    return it == letter_index_.end() ? kUnknown : kFirstSymbol + it->second;
  }
  static int tag_symbol(int tag) { return kFirstSymbol + tag; }

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<char32_t>& letters() const { return letters_; }

  int word_space_size() const { return kFirstSymbol + static_cast<int>(words_.size()); }
  int tag_space_size() const { return kFirstSymbol + tags.size(); }
  int letter_space_size() const { return kFirstSymbol + static_cast<int>(letters_.size()); }
  // TAG(p) for every tag, LEFT, RIGHT, SHIFT, REDUCE, BACK, NOBACK.
  int action_space_size() const { return kFirstSymbol + tags.size() + 6; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> word_index_;
  std::vector<char32_t> letters_;
  std::map<char32_t, int> letter_index_;
};

}  // namespace brm
