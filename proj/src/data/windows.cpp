#include "ztok/data/windows.hpp"

namespace ztok::data {

WindowSet make_windows(int n_tokens, int W, int S) {
  ZTOK_CHECK(n_tokens > 0, input, "make_windows: empty document");
  ZTOK_CHECK(W > 0 && S > 0, input, "make_windows: W and S must be positive");
  ZTOK_CHECK(S <= W, input, "make_windows: stride larger than window");
  WindowSet ws;
  ws.W = W;
  ws.S = S;
  if (n_tokens <= W) {
    ws.windows.push_back({0, n_tokens});
    return ws;
  }
  for (int start = 0; start + W < n_tokens; start += S) ws.windows.push_back({start, start + W});
  ws.windows.push_back({n_tokens - W, n_tokens});
  return ws;
}

}  // namespace ztok::data
