#pragma once

#include <vector>

#include "ztok/core/error.hpp"

namespace ztok::data {

// Overlapping sliding windows over [0, n_tokens). Consecutive windows
// overlap by exactly W - S except possibly the last, which is aligned to
// the end of the document; the union always covers every token.
struct WindowSet {
  struct Span {
    int start = 0;
    int end = 0;  // half-open
    int length() const { return end - start; }
  };
  std::vector<Span> windows;
  int W = 0;
  int S = 0;

  // Intersection of windows i and i+1 (possibly empty for the final pair).
  Span overlap(size_t i) const {
    const Span& a = windows[i];
    const Span& b = windows[i + 1];
    return Span{b.start < a.end ? b.start : a.end, a.end};
  }
};

WindowSet make_windows(int n_tokens, int W, int S);

}  // namespace ztok::data
