#include "testutil.hpp"

#include <string>
#include <vector>

namespace testutil {

bool xml_well_formed(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (text[i] != '<') {
      ++i;
      continue;
    }
    std::size_t close = text.find('>', i);
    if (close == std::string::npos) return false;
    std::string tag = text.substr(i + 1, close - i - 1);
    i = close + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;  // declaration/comment
    bool self_closing = tag.back() == '/';
    if (tag[0] == '/') {
      std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    // quotes must be balanced inside the tag
    int quotes = 0;
    for (char c : tag)
      if (c == '"') ++quotes;
    if (quotes % 2 != 0) return false;
    if (self_closing) continue;
    std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
    stack.push_back(name);
  }
  return stack.empty();
}

}  // namespace testutil
