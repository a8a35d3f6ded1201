#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "dsner/types.hpp"

namespace dsner {

/// All candidate spans (i, j), 1-based inclusive, with length at most
/// max_len, in lexicographic order.
inline std::vector<std::pair<int, int>> enumerate_spans(int n_tokens,
                                                        int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  std::vector<std::pair<int, int>> spans;
  for (int i = 1; i <= n_tokens; ++i)
    for (int j = i; j <= n_tokens && j - i + 1 <= max_len; ++j)
      spans.emplace_back(i, j);
  return spans;
}

inline std::vector<std::pair<int, int>> enumerate_spans(const Sentence& s,
                                                        int max_len) {
  return enumerate_spans(s.size(), max_len);
}

}  // namespace dsner
