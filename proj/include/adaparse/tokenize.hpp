#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace adaparse {

// Fixed tokenizer shared by every text metric and the embedding: ASCII
// lowercasing, ASCII punctuation removed, split on whitespace. Byte
// oriented; non-ASCII bytes pass through unchanged so UTF-8 sequences
// stay intact. Deliberately simple -- determinism matters more here than
// linguistic nuance.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
      continue;
    }
    if (c < 0x80 && std::ispunct(c)) continue;
    cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                       : static_cast<char>(c));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::size_t token_count(std::string_view text) {
  return tokenize(text).size();
}

// Documents travel as one string with '\f' page separators (the classic
// pdftotext convention). Empty input is a single empty page.
inline constexpr char kPageSeparator = '\f';

inline std::vector<std::string> split_pages(std::string_view text) {
  std::vector<std::string> pages;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == kPageSeparator) {
      pages.emplace_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return pages;
}

inline std::string join_pages(const std::vector<std::string>& pages) {
  std::string out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (i) out.push_back(kPageSeparator);
    out += pages[i];
  }
  return out;
}

inline bool is_blank(std::string_view s) {
  for (unsigned char c : s) {
    if (!(c < 0x80 && std::isspace(c))) return false;
  }
  return true;
}

}  // namespace adaparse
