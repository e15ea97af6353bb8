#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#if defined(__FMA__) || defined(__AVX512F__)
#include <immintrin.h>
#endif
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "dmrgnn/error.hpp"
#include "dmrgnn/graph.hpp"
#include "dmrgnn/util.hpp"

namespace dmrgnn {

// ---------------------------------------------------------------------------
// Labels

enum class rate_label : std::uint8_t { cer, der, her, ser };

constexpr std::string_view label_name(rate_label l) noexcept {
  switch (l) {
    case rate_label::cer: return "cer";
    case rate_label::der: return "der";
    case rate_label::her: return "her";
    case rate_label::ser: return "ser";
  }
  return "?";
}

inline std::optional<rate_label> label_from_name(std::string_view s) {
  for (auto l : {rate_label::cer, rate_label::der, rate_label::her, rate_label::ser})
    if (s == label_name(l)) return l;
  return std::nullopt;
}

/// y = rate, or y = log10(rate + eps).
struct label_transform {
  bool log = false;
  double eps = 1e-6;

  [[nodiscard]] double apply(double rate) const { return log ? std::log10(rate + eps) : rate; }
  [[nodiscard]] double invert(double y) const { return log ? std::pow(10.0, y) - eps : y; }

  static label_transform default_for(rate_label l) { return {l == rate_label::cer, 1e-6}; }
  bool operator==(const label_transform&) const = default;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix

struct matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  matrix() = default;
  matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  [[nodiscard]] const double* row(std::size_t i) const { return data.data() + i * cols; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    data.assign(r * c, 0.0);
  }
  /// Like resize but leaves the contents unspecified.
  void reshape(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    if (data.size() < r * c) data.resize(r * c);
  }
};

// ---------------------------------------------------------------------------
// Normalized adjacency

/// Ŝ = D̂^-1/2 (A + I) D̂^-1/2 in CSR form, self term included. Each row's
/// terms are ordered by a relabeling-invariant node colour, so the
/// floating-point sum for a node does not depend on node numbering.
struct gcn_graph {
  std::uint32_t n = 0;
  onehot_rows x;
  std::vector<std::uint32_t> start;
  std::vector<std::uint32_t> nbr;
  std::vector<double> coef;
};

namespace gcn_detail {

/// Colour refinement to a stable partition. Equal colours imply equal
/// neighbourhoods at every depth, hence bit-equal embeddings.
inline std::vector<std::uint64_t> stable_colours(const encoded_graph& g,
                                                 const std::vector<std::vector<std::uint32_t>>& adj) {
  const std::size_t n = g.node_count;
  std::vector<std::uint64_t> col(n), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    fnv1a h;
    for (auto c : g.rows[i]) h.add(c);
    h.add(adj[i].size());
    col[i] = h.value();
  }
  auto classes = [](std::vector<std::uint64_t> v) {
    std::sort(v.begin(), v.end());
    return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
  };
  std::size_t count = classes(col);
  std::vector<std::uint64_t> ms;
  for (std::size_t round = 0; round < n; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      ms.clear();
      for (auto j : adj[i]) ms.push_back(col[j]);
      std::sort(ms.begin(), ms.end());
      fnv1a h;
      h.add(col[i]);
      for (auto c : ms) h.add(c);
      next[i] = h.value();
    }
    std::size_t c = classes(next);
    col.swap(next);
    if (c == count) break;
    count = c;
  }
  return col;
}

}  // namespace gcn_detail

inline gcn_graph prepare_graph(const encoded_graph& g) {
  const std::uint32_t n = g.node_count;
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (const auto& [a, b] : g.edges) {
    if (a >= n || b >= n) throw error(errc::dimension_mismatch, "edge endpoint out of range");
    if (a == b) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& l : adj) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  const auto col = gcn_detail::stable_colours(g, adj);
  gcn_graph out;
  out.n = n;
  out.x = g.rows;
  out.start.reserve(n + 1);
  out.start.push_back(0);
  std::vector<std::uint32_t> terms;
  for (std::uint32_t i = 0; i < n; ++i) {
    terms = adj[i];
    terms.push_back(i);
    std::sort(terms.begin(), terms.end(), [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    const double di = static_cast<double>(adj[i].size() + 1);
    for (auto j : terms) {
      out.nbr.push_back(j);
      out.coef.push_back(1.0 / std::sqrt(di * static_cast<double>(adj[j].size() + 1)));
    }
    out.start.push_back(static_cast<std::uint32_t>(out.nbr.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row kernels. Every output row is produced by the same instruction
// sequence, independent of its index.

namespace gcn_detail {

// a * b + c. Fused when the target has FMA; every kernel goes through these,
// so each element sees one rounding sequence whatever the vector width.
#if defined(__FMA__)
inline double madd(double a, double b, double c) { return __builtin_fma(a, b, c); }
#else
inline double madd(double a, double b, double c) { return a * b + c; }
#endif

#if defined(__AVX512F__)
inline constexpr std::size_t lanes = 8;
using vec = double __attribute__((vector_size(64)));
inline vec madd(vec a, vec b, vec c) { return (vec)_mm512_fmadd_pd((__m512d)a, (__m512d)b, (__m512d)c); }
#else
inline constexpr std::size_t lanes = 4;
using vec = double __attribute__((vector_size(32)));
#if defined(__FMA__)
inline vec madd(vec a, vec b, vec c) { return (vec)_mm256_fmadd_pd((__m256d)a, (__m256d)b, (__m256d)c); }
#else
inline vec madd(vec a, vec b, vec c) { return a * b + c; }
#endif
#endif

inline vec load(const double* p) {
  vec v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store(double* p, const vec& v) { std::memcpy(p, &v, sizeof v); }
inline vec splat(double s) { return vec{} + s; }

/// y = x W for one row; zero entries of x are skipped, which leaves the sum
/// bit-identical because the accumulator can never be -0.
inline void row_times(const double* x, const double* w, std::size_t in, std::size_t out, double* y) {
  std::fill(y, y + out, 0.0);
  for (std::size_t k = 0; k < in; ++k) {
    const double a = x[k];
    if (a == 0.0) continue;
    const double* wk = w + k * out;
    for (std::size_t c = 0; c < out; ++c) y[c] = madd(a, wk[c], y[c]);
  }
}

/// y[r] = x[r] W for four rows, sixteen columns per pass, every input term
/// included. A zero input adds a signed zero to an accumulator that is never
/// -0, so each element equals row_times bit for bit; only loads are shared.
inline void rows4_times(const double* const* x, const double* w, std::size_t in, std::size_t out, double* const* y) {
  constexpr std::size_t nv = 16 / lanes;
  for (std::size_t c = 0; c < out; c += 16) {
    vec acc[4][nv] = {};
    for (std::size_t k = 0; k < in; ++k) {
      const double* wk = w + k * out + c;
      vec wv[nv];
      for (std::size_t j = 0; j < nv; ++j) wv[j] = load(wk + lanes * j);
      for (std::size_t r = 0; r < 4; ++r) {
        const vec a = splat(x[r][k]);
        for (std::size_t j = 0; j < nv; ++j) acc[r][j] = madd(a, wv[j], acc[r][j]);
      }
    }
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < nv; ++j) store(y[r] + c + lanes * j, acc[r][j]);
  }
}

/// P = H W for all rows (H is n x in, W is in x out, row-major).
inline void times(const matrix& hm, const double* w, std::size_t out, matrix& p) {
  const std::size_t in = hm.cols, n = hm.rows;
  p.reshape(n, out);
  std::size_t i = 0;
  if (out % 16 == 0)
    for (; i + 4 <= n; i += 4) {
      const double* x[4] = {hm.row(i), hm.row(i + 1), hm.row(i + 2), hm.row(i + 3)};
      double* y[4] = {p.row(i), p.row(i + 1), p.row(i + 2), p.row(i + 3)};
      rows4_times(x, w, in, out, y);
    }
  for (; i < n; ++i) row_times(hm.row(i), w, in, out, p.row(i));
}

/// Z = Ŝ P + b followed by H = ReLU(Z).
inline void aggregate(const gcn_graph& g, const matrix& p, const double* b, matrix& z, matrix& h) {
  const std::size_t d = p.cols;
  z.reshape(g.n, d);
  h.reshape(g.n, d);
  for (std::uint32_t i = 0; i < g.n; ++i) {
    double* zi = z.row(i);
    std::fill(zi, zi + d, 0.0);
    for (std::uint32_t t = g.start[i]; t < g.start[i + 1]; ++t) {
      const double c = g.coef[t];
      const double* pj = p.row(g.nbr[t]);
      for (std::size_t k = 0; k < d; ++k) zi[k] += c * pj[k];
    }
    double* hi = h.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      zi[k] += b[k];
      hi[k] = zi[k] > 0.0 ? zi[k] : 0.0;
    }
  }
}

}  // namespace gcn_detail

/// One graph convolution on dense features: ReLU(Ŝ H W + b).
inline matrix gcn_layer(const gcn_graph& g, const matrix& h, const matrix& w, std::span<const double> b) {
  if (h.rows != g.n || h.cols != w.rows || b.size() != w.cols)
    throw error(errc::dimension_mismatch, "gcn_layer: H " + std::to_string(h.rows) + "x" + std::to_string(h.cols) +
                                              ", W " + std::to_string(w.rows) + "x" + std::to_string(w.cols) +
                                              ", b " + std::to_string(b.size()) + ", nodes " + std::to_string(g.n));
  matrix p, z, out;
  gcn_detail::times(h, w.data.data(), w.cols, p);
  gcn_detail::aggregate(g, p, b.data(), z, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

/// Flat parameter vector: W1 (in x h), b1, W2 (h x h), b2, W3, b3, w_out, b_out.
struct gcn_shape {
  std::size_t in = 0;
  std::size_t h = 0;

  [[nodiscard]] std::size_t w1() const { return 0; }
  [[nodiscard]] std::size_t b1() const { return in * h; }
  [[nodiscard]] std::size_t w2() const { return b1() + h; }
  [[nodiscard]] std::size_t b2() const { return w2() + h * h; }
  [[nodiscard]] std::size_t w3() const { return b2() + h; }
  [[nodiscard]] std::size_t b3() const { return w3() + h * h; }
  [[nodiscard]] std::size_t wo() const { return b3() + h; }
  [[nodiscard]] std::size_t bo() const { return wo() + h; }
  [[nodiscard]] std::size_t size() const { return bo() + 1; }
  bool operator==(const gcn_shape&) const = default;
};

/// Glorot-uniform weights, zero biases.
inline std::vector<double> init_params(const gcn_shape& s, std::uint64_t seed) {
  std::vector<double> p(s.size(), 0.0);
  rng r(seed);
  auto fill = [&](std::size_t off, std::size_t fan_in, std::size_t fan_out) {
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) p[off + i] = r.uniform(-lim, lim);
  };
  fill(s.w1(), s.in, s.h);
  fill(s.w2(), s.h, s.h);
  fill(s.w3(), s.h, s.h);
  fill(s.wo(), s.h, 1);
  return p;
}

/// Per-graph activations kept for the backward pass.
struct gcn_workspace {
  matrix p, z1, h1, z2, h2, z3, h3;
  std::vector<double> pooled;
  std::vector<std::uint32_t> argmax;
  // backward scratch
  matrix da, db;
  std::vector<std::uint8_t> mark;
  std::vector<std::uint32_t> set_a, set_b;
  std::vector<double> tmp;
};

/// Forward pass for one graph; returns the transformed-label prediction.
inline double gcn_forward(const std::vector<double>& prm, const gcn_shape& s, const gcn_graph& g, gcn_workspace& ws) {
  if (g.n == 0) throw error(errc::dimension_mismatch, "graph has no nodes");
  const std::size_t h = s.h;
  ws.p.reshape(g.n, h);
  const double* w1 = prm.data() + s.w1();
  for (std::uint32_t i = 0; i < g.n; ++i) {
    double* pi = ws.p.row(i);
    std::fill(pi, pi + h, 0.0);
    for (auto c : g.x[i]) {
      if (c >= s.in) throw error(errc::dimension_mismatch, "feature index " + std::to_string(c) + " >= " + std::to_string(s.in));
      const double* wc = w1 + static_cast<std::size_t>(c) * h;
      for (std::size_t k = 0; k < h; ++k) pi[k] += wc[k];
    }
  }
  gcn_detail::aggregate(g, ws.p, prm.data() + s.b1(), ws.z1, ws.h1);
  gcn_detail::times(ws.h1, prm.data() + s.w2(), h, ws.p);
  gcn_detail::aggregate(g, ws.p, prm.data() + s.b2(), ws.z2, ws.h2);
  gcn_detail::times(ws.h2, prm.data() + s.w3(), h, ws.p);
  gcn_detail::aggregate(g, ws.p, prm.data() + s.b3(), ws.z3, ws.h3);
  ws.pooled.assign(h, -std::numeric_limits<double>::infinity());
  ws.argmax.assign(h, 0);
  for (std::uint32_t i = 0; i < g.n; ++i) {
    const double* hi = ws.h3.row(i);
    for (std::size_t k = 0; k < h; ++k)
      if (hi[k] > ws.pooled[k]) {
        ws.pooled[k] = hi[k];
        ws.argmax[k] = i;
      }
  }
  double y = 0.0;
  const double* wo = prm.data() + s.wo();
  for (std::size_t k = 0; k < h; ++k) y += ws.pooled[k] * wo[k];
  return y + prm[s.bo()];
}

namespace gcn_detail {

inline void clear_rows(matrix& m, const std::vector<std::uint32_t>& rows) {
  for (auto r : rows) std::fill(m.row(r), m.row(r) + m.cols, 0.0);
}

/// dst rows = Ŝ src rows restricted to `src_rows`; records touched rows.
inline void spread(const gcn_graph& g, const matrix& src, const std::vector<std::uint32_t>& src_rows, matrix& dst,
                   std::vector<std::uint8_t>& mark, std::vector<std::uint32_t>& dst_rows) {
  dst_rows.clear();
  const std::size_t d = src.cols;
  for (auto i : src_rows) {
    const double* si = src.row(i);
    for (std::uint32_t t = g.start[i]; t < g.start[i + 1]; ++t) {
      const std::uint32_t j = g.nbr[t];
      if (!mark[j]) {
        mark[j] = 1;
        dst_rows.push_back(j);
      }
      const double c = g.coef[t];
      double* dj = dst.row(j);
      for (std::size_t k = 0; k < d; ++k) dj[k] += c * si[k];
    }
  }
  for (auto j : dst_rows) mark[j] = 0;
}

/// dw += sum over r of h[r]^T dp[r], rows added in order r = 0..3, which
/// matches four successive rank-1 updates element for element.
inline void rank4_update(const double* const* hr, const double* const* dp, std::size_t h, double* dw) {
  for (std::size_t k = 0; k < h; ++k) {
    if (hr[0][k] == 0.0 && hr[1][k] == 0.0 && hr[2][k] == 0.0 && hr[3][k] == 0.0) continue;
    const vec a0 = splat(hr[0][k]), a1 = splat(hr[1][k]), a2 = splat(hr[2][k]), a3 = splat(hr[3][k]);
    double* dwk = dw + k * h;
    for (std::size_t c = 0; c < h; c += lanes) {
      vec acc = load(dwk + c);
      acc = madd(a0, load(dp[0] + c), acc);
      acc = madd(a1, load(dp[1] + c), acc);
      acc = madd(a2, load(dp[2] + c), acc);
      acc = madd(a3, load(dp[3] + c), acc);
      store(dwk + c, acc);
    }
  }
}

/// Given dP on `rows`: dW += H^T dP, and dZ_prev = (dP W^T) masked by
/// Z_prev > 0, written into dz (zero on `rows` beforehand). `wt` is W^T.
/// Biases handled by caller.
inline void back_linear(const matrix& dp, const std::vector<std::uint32_t>& rows, const matrix& hprev,
                        const matrix& zprev, const double* wt, double* dw, std::size_t h, matrix& dz) {
  auto mask = [&](std::uint32_t j) {
    const double* zj = zprev.row(j);
    double* dzj = dz.row(j);
    for (std::size_t k = 0; k < h; ++k) dzj[k] = zj[k] > 0.0 ? dzj[k] : 0.0;
  };
  std::size_t t = 0;
  if (h % 16 == 0)
    for (; t + 4 <= rows.size(); t += 4) {
      const std::uint32_t* j = rows.data() + t;
      const double* hr[4] = {hprev.row(j[0]), hprev.row(j[1]), hprev.row(j[2]), hprev.row(j[3])};
      const double* dpr[4] = {dp.row(j[0]), dp.row(j[1]), dp.row(j[2]), dp.row(j[3])};
      double* dzr[4] = {dz.row(j[0]), dz.row(j[1]), dz.row(j[2]), dz.row(j[3])};
      rank4_update(hr, dpr, h, dw);
      rows4_times(dpr, wt, h, h, dzr);
      for (std::size_t r = 0; r < 4; ++r) mask(j[r]);
    }
  for (; t < rows.size(); ++t) {
    const std::uint32_t j = rows[t];
    const double* dpj = dp.row(j);
    const double* hj = hprev.row(j);
    for (std::size_t k = 0; k < h; ++k) {
      const double a = hj[k];
      if (a == 0.0) continue;
      double* dwk = dw + k * h;
      for (std::size_t c = 0; c < h; ++c) dwk[c] = madd(a, dpj[c], dwk[c]);
    }
    row_times(dpj, wt, h, h, dz.row(j));
    mask(j);
  }
}

}  // namespace gcn_detail

/// Accumulates d(dy * y)/dθ into grad, using the activations of the last
/// gcn_forward on the same graph. Only rows reachable from the pooled
/// argmax nodes carry gradient.
inline void gcn_backward(const std::vector<double>& prm, const gcn_shape& s, const gcn_graph& g, gcn_workspace& ws,
                         double dy, std::vector<double>& grad) {
  using gcn_detail::clear_rows;
  const std::size_t h = s.h;
  double* gr = grad.data();
  gr[s.bo()] += dy;
  const double* wo = prm.data() + s.wo();
  for (std::size_t k = 0; k < h; ++k) gr[s.wo() + k] += dy * ws.pooled[k];

  // Scratch grows only; every touched row is cleared again before return,
  // so it is all zero on entry.
  if (ws.da.rows < g.n || ws.da.cols != h) {
    ws.da.resize(g.n, h);  // dZ of the current layer
    ws.db.resize(g.n, h);  // dP of the current layer
  }
  if (ws.mark.size() < g.n) ws.mark.assign(g.n, 0);
  auto& rows_z = ws.set_a;
  auto& rows_p = ws.set_b;

  // layer 3: dZ3 only at argmax entries with positive pre-activation
  rows_z.clear();
  for (std::size_t k = 0; k < h; ++k) {
    const std::uint32_t i = ws.argmax[k];
    if (ws.z3(i, k) <= 0.0) continue;
    if (!ws.mark[i]) {
      ws.mark[i] = 1;
      rows_z.push_back(i);
    }
    ws.da(i, k) = dy * wo[k];
  }
  for (auto i : rows_z) ws.mark[i] = 0;

  struct layer_ref {
    std::size_t w, b;
    const matrix* hprev;
    const matrix* zprev;
  };
  const layer_ref layers[2] = {{s.w3(), s.b3(), &ws.h2, &ws.z2}, {s.w2(), s.b2(), &ws.h1, &ws.z1}};
  for (const auto& L : layers) {
    for (auto i : rows_z) {
      const double* dz = ws.da.row(i);
      for (std::size_t k = 0; k < h; ++k) gr[L.b + k] += dz[k];
    }
    gcn_detail::spread(g, ws.da, rows_z, ws.db, ws.mark, rows_p);
    clear_rows(ws.da, rows_z);
    const double* w = prm.data() + L.w;
    ws.tmp.resize(h * h);
    for (std::size_t k = 0; k < h; ++k)
      for (std::size_t c = 0; c < h; ++c) ws.tmp[c * h + k] = w[k * h + c];
    gcn_detail::back_linear(ws.db, rows_p, *L.hprev, *L.zprev, ws.tmp.data(), gr + L.w, h, ws.da);
    clear_rows(ws.db, rows_p);
    rows_z.swap(rows_p);
  }
  // layer 1: inputs are one-hot rows
  for (auto i : rows_z) {
    const double* dz = ws.da.row(i);
    for (std::size_t k = 0; k < h; ++k) gr[s.b1() + k] += dz[k];
  }
  gcn_detail::spread(g, ws.da, rows_z, ws.db, ws.mark, rows_p);
  clear_rows(ws.da, rows_z);
  for (auto j : rows_p) {
    const double* dpj = ws.db.row(j);
    for (auto c : g.x[j]) {
      double* dw = gr + s.w1() + static_cast<std::size_t>(c) * h;
      for (std::size_t k = 0; k < h; ++k) dw[k] += dpj[k];
    }
  }
  clear_rows(ws.db, rows_p);
}

/// Batch-mean squared error and its gradient (overwrites grad).
inline double batch_loss_grad(const std::vector<double>& prm, const gcn_shape& s,
                              const std::vector<const gcn_graph*>& graphs, const std::vector<double>& targets,
                              std::vector<double>& grad, gcn_workspace& ws) {
  grad.assign(prm.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(graphs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const double r = gcn_forward(prm, s, *graphs[i], ws) - targets[i];
    loss += r * r;
    gcn_backward(prm, s, *graphs[i], ws, 2.0 * r * inv, grad);
  }
  return loss * inv;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct adam_state {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<double> m, v;

  void step(std::vector<double>& prm, const std::vector<double>& g, double lr) {
    if (m.size() != prm.size()) {
      m.assign(prm.size(), 0.0);
      v.assign(prm.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < prm.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      prm[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

/// Reduce-on-plateau: after `patience` consecutive epochs without a strict
/// improvement, lr <- max(lr * factor, min_lr) and the counter resets.
struct plateau_schedule {
  double lr = 1e-3;
  double factor = 0.1;
  double min_lr = 1e-6;
  int patience = 10;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  /// Returns true when the learning rate was lowered.
  bool step(double loss) {
    if (loss < best) {
      best = loss;
      bad_epochs = 0;
      return false;
    }
    if (++bad_epochs < patience) return false;
    bad_epochs = 0;
    const double next = std::max(lr * factor, min_lr);
    const bool dropped = next < lr;
    lr = next;
    return dropped;
  }
};

// ---------------------------------------------------------------------------
// Training

struct train_config {
  int k_folds = 5;
  double test_fraction = 0.10;
  int max_epochs = 1000;
  int early_stop_patience = 100;
  int plateau_patience = 10;
  double plateau_factor = 0.1;
  double initial_lr = 1e-3;
  double min_lr = 1e-6;
  int batch_size = 16;
  int hidden = 128;
  std::uint64_t seed = 1;
};

struct epoch_trace {
  int fold = 0;
  int epoch = 0;  // 1-based
  double train_mse = 0;
  double val_mse = 0;
  double lr = 0;  // rate used during this epoch
  bool improved = false;
};

struct fold_result {
  std::vector<double> params;  // best-validation weights
  double best_val_mse = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  double final_train_mse = 0;
};

inline double mean_squared_error(const std::vector<double>& prm, const gcn_shape& s,
                                 const std::vector<const gcn_graph*>& graphs, const std::vector<double>& targets,
                                 gcn_workspace& ws) {
  double acc = 0.0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const double r = gcn_forward(prm, s, *graphs[i], ws) - targets[i];
    acc += r * r;
  }
  return acc / static_cast<double>(graphs.size());
}

/// Trains one model. With an empty validation set this is the single-split
/// debug mode: no early stopping, the final weights are returned and
/// best_val_mse holds the last training MSE.
inline fold_result train_model(const gcn_shape& s, const std::vector<const gcn_graph*>& train,
                               const std::vector<double>& train_y, const std::vector<const gcn_graph*>& val,
                               const std::vector<double>& val_y, const train_config& cfg, std::uint64_t seed,
                               int fold = 0, std::vector<epoch_trace>* trace = nullptr) {
  fold_result out;
  std::vector<double> prm = init_params(s, derive_seed(seed, 0));
  adam_state adam;
  plateau_schedule sched{cfg.initial_lr, cfg.plateau_factor, cfg.min_lr, cfg.plateau_patience};
  gcn_workspace ws;
  std::vector<double> grad;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  rng shuffler(derive_seed(seed, 1));
  std::vector<const gcn_graph*> bg;
  std::vector<double> by;
  const bool has_val = !val.empty();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffler.shuffle(order);
    const double lr = sched.lr;
    double train_acc = 0.0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(cfg.batch_size));
      bg.clear();
      by.clear();
      for (std::size_t i = first; i < last; ++i) {
        bg.push_back(train[order[i]]);
        by.push_back(train_y[order[i]]);
      }
      train_acc += batch_loss_grad(prm, s, bg, by, grad, ws) * static_cast<double>(last - first);
      adam.step(prm, grad, lr);
    }
    out.final_train_mse = train_acc / static_cast<double>(train.size());
    out.epochs_run = epoch;
    if (!has_val) {
      out.best_val_mse = out.final_train_mse;
      out.best_epoch = epoch;
      if (trace) trace->push_back({fold, epoch, out.final_train_mse, out.final_train_mse, lr, false});
      continue;
    }
    const double vm = mean_squared_error(prm, s, val, val_y, ws);
    const bool improved = vm < out.best_val_mse;
    if (improved) {
      out.best_val_mse = vm;
      out.best_epoch = epoch;
      out.params = prm;
    }
    if (trace) trace->push_back({fold, epoch, out.final_train_mse, vm, lr, improved});
    sched.step(vm);
    if (epoch - out.best_epoch >= cfg.early_stop_patience) break;
  }
  if (!has_val) out.params = prm;
  return out;
}

/// 1 - SS_res / SS_tot.
inline double r_squared(const std::vector<double>& preds, const std::vector<double>& truths) {
  if (preds.size() != truths.size() || truths.empty())
    throw error(errc::dimension_mismatch, "r_squared needs equal non-empty inputs");
  const double mean = std::accumulate(truths.begin(), truths.end(), 0.0) / static_cast<double>(truths.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    ss_res += (preds[i] - truths[i]) * (preds[i] - truths[i]);
    ss_tot += (truths[i] - mean) * (truths[i] - mean);
  }
  if (ss_tot == 0.0) throw error(errc::degenerate_truths, "truths have zero variance");
  return 1.0 - ss_res / ss_tot;
}

// ---------------------------------------------------------------------------
// Model

struct gcn_model {
  gcn_shape shape;
  rate_label label = rate_label::cer;
  label_transform transform;
  feature_vocab vocab;
  std::vector<double> params;

  bool operator==(const gcn_model&) const = default;
};

/// Transformed-label output for an already encoded graph.
inline double model_output(const gcn_model& m, const gcn_graph& g) {
  gcn_workspace ws;
  return gcn_forward(m.params, m.shape, g, ws);
}

/// Rate prediction in [0, 1] for a graph extracted from a netlist.
inline double predict(const gcn_model& m, const circuit_graph& g) {
  encoded_graph eg;
  try {
    eg = encode_graph(g, m.vocab);
  } catch (const error& e) {
    if (e.code() == errc::unknown_kind) throw error(errc::vocabulary_mismatch, e.what());
    throw;
  }
  return std::clamp(m.transform.invert(model_output(m, prepare_graph(eg))), 0.0, 1.0);
}

/// Rate prediction for a graph already encoded (for example read from a graph
/// file); its dimension must match the model's vocabulary.
inline double predict(const gcn_model& m, const encoded_graph& eg) {
  if (eg.total_dim != m.vocab.total_dim())
    throw error(errc::vocabulary_mismatch, "graph encoded with dimension " + std::to_string(eg.total_dim) +
                                               ", model expects " + std::to_string(m.vocab.total_dim()));
  return std::clamp(m.transform.invert(model_output(m, prepare_graph(eg))), 0.0, 1.0);
}

struct fold_summary {
  double best_val_mse = 0;
  int best_epoch = 0;
  int epochs_run = 0;
  double test_mse = 0;
  double test_r2 = 0;  // NaN when the test truths are constant
};

struct fold_report {
  rate_label label = rate_label::cer;
  int hidden = 0;
  std::vector<fold_summary> folds;
  std::size_t selected = 0;
  std::vector<std::size_t> test_ids;
  std::vector<std::vector<std::size_t>> val_ids;  // per fold; train = rest minus val
  std::vector<double> test_truth, test_pred;      // transformed space, selected fold
};

struct labeled_graph {
  const encoded_graph* graph = nullptr;
  double rate = 0;
};

/// Seeded shuffle, hold out the test fraction, k contiguous validation folds
/// over the remainder. Returns (test, per-fold validation) index lists.
inline std::pair<std::vector<std::size_t>, std::vector<std::vector<std::size_t>>> kfold_split(std::size_t n,
                                                                                           const train_config& cfg) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng r(derive_seed(cfg.seed, 0x5eed));
  r.shuffle(perm);
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(n))));
  std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::vector<std::vector<std::size_t>> val(static_cast<std::size_t>(cfg.k_folds));
  const std::size_t m = rest.size();
  for (std::size_t f = 0; f < val.size(); ++f) {
    const std::size_t lo = f * m / val.size(), hi = (f + 1) * m / val.size();
    val[f].assign(rest.begin() + static_cast<std::ptrdiff_t>(lo), rest.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return {test, val};
}

inline std::pair<gcn_model, fold_report> train_kfold(const std::vector<labeled_graph>& data, const feature_vocab& vocab,
                                                     rate_label label, const label_transform& transform,
                                                     const train_config& cfg,
                                                     std::vector<epoch_trace>* trace = nullptr) {
  if (data.size() < 20)
    throw error(errc::dataset_too_small, std::to_string(data.size()) + " labeled designs, need at least 20");
  if (cfg.k_folds < 2) throw error(errc::dataset_too_small, "k-fold training needs k >= 2");
  const gcn_shape shape{static_cast<std::size_t>(vocab.total_dim()), static_cast<std::size_t>(cfg.hidden)};
  std::vector<gcn_graph> graphs;
  std::vector<double> y;
  graphs.reserve(data.size());
  for (const auto& d : data) {
    if (d.graph->total_dim != vocab.total_dim())
      throw error(errc::vocabulary_mismatch, "design '" + d.graph->design_id + "' encoded with a different vocabulary");
    graphs.push_back(prepare_graph(*d.graph));
    y.push_back(transform.apply(d.rate));
  }
  auto [test, val] = kfold_split(data.size(), cfg);
  fold_report rep;
  rep.label = label;
  rep.hidden = cfg.hidden;
  rep.test_ids = test;
  rep.val_ids = val;
  auto gather = [&](const std::vector<std::size_t>& ids, std::vector<const gcn_graph*>& gs, std::vector<double>& ys) {
    gs.clear();
    ys.clear();
    for (auto i : ids) {
      gs.push_back(&graphs[i]);
      ys.push_back(y[i]);
    }
  };
  std::vector<const gcn_graph*> test_g;
  std::vector<double> test_y;
  gather(test, test_g, test_y);
  std::vector<fold_result> results;
  gcn_workspace ws;
  for (std::size_t f = 0; f < val.size(); ++f) {
    std::vector<std::size_t> train_ids;
    for (std::size_t g = 0; g < val.size(); ++g)
      if (g != f) train_ids.insert(train_ids.end(), val[g].begin(), val[g].end());
    std::vector<const gcn_graph*> tg, vg;
    std::vector<double> ty, vy;
    gather(train_ids, tg, ty);
    gather(val[f], vg, vy);
    auto res = train_model(shape, tg, ty, vg, vy, cfg, derive_seed(cfg.seed, 100 + f), static_cast<int>(f), trace);
    fold_summary sum{res.best_val_mse, res.best_epoch, res.epochs_run, 0, 0};
    std::vector<double> preds;
    for (const auto* g : test_g) preds.push_back(gcn_forward(res.params, shape, *g, ws));
    double mse = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) mse += (preds[i] - test_y[i]) * (preds[i] - test_y[i]);
    sum.test_mse = mse / static_cast<double>(preds.size());
    try {
      sum.test_r2 = r_squared(preds, test_y);
    } catch (const error&) {
      sum.test_r2 = std::numeric_limits<double>::quiet_NaN();
    }
    rep.folds.push_back(sum);
    if (sum.best_val_mse < rep.folds[rep.selected].best_val_mse) rep.selected = f;
    if (rep.selected == f) rep.test_pred = preds;
    results.push_back(std::move(res));
  }
  rep.test_truth = test_y;
  gcn_model model{shape, label, transform, vocab, std::move(results[rep.selected].params)};
  return {std::move(model), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int checkpoint_version = 1;

inline nlohmann::json to_json(const gcn_model& m) {
  return {{"format", "dmrgnn-gcn"},
          {"version", checkpoint_version},
          {"hidden_dim", m.shape.h},
          {"in_dim", m.shape.in},
          {"target_label", std::string(label_name(m.label))},
          {"label_transform", {{"kind", m.transform.log ? "log10_eps" : "identity"}, {"eps", m.transform.eps}}},
          {"vocab", to_json(m.vocab)},
          {"params", m.params}};
}

inline gcn_model model_from_json(const nlohmann::json& j) {
  gcn_model m;
  try {
    if (j.at("format").get<std::string>() != "dmrgnn-gcn" || j.at("version").get<int>() != checkpoint_version)
      throw error(errc::io_error, "unsupported checkpoint format or version");
    m.shape.h = j.at("hidden_dim").get<std::size_t>();
    m.shape.in = j.at("in_dim").get<std::size_t>();
    auto l = label_from_name(j.at("target_label").get<std::string>());
    if (!l) throw error(errc::io_error, "unknown target_label in checkpoint");
    m.label = *l;
    m.transform.log = j.at("label_transform").at("kind").get<std::string>() == "log10_eps";
    m.transform.eps = j.at("label_transform").at("eps").get<double>();
    m.vocab = vocab_from_json(j.at("vocab"));
    m.params = j.at("params").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io_error, std::string("malformed checkpoint: ") + e.what());
  }
  if (static_cast<std::size_t>(m.vocab.total_dim()) != m.shape.in || m.params.size() != m.shape.size())
    throw error(errc::dimension_mismatch, "checkpoint dimensions do not chain");
  return m;
}

inline nlohmann::json to_json(const fold_report& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    const auto& s = r.folds[f];
    folds.push_back({{"fold", f},
                     {"best_val_mse", s.best_val_mse},
                     {"best_epoch", s.best_epoch},
                     {"epochs_run", s.epochs_run},
                     {"test_mse", s.test_mse},
                     {"test_r2", std::isnan(s.test_r2) ? nlohmann::json(nullptr) : nlohmann::json(s.test_r2)}});
  }
  return {{"architecture", "GCN"},
          {"hidden_dim", r.hidden},
          {"label", std::string(label_name(r.label))},
          {"selected_fold", r.selected},
          {"folds", folds},
          {"test_ids", r.test_ids},
          {"val_ids", r.val_ids}};
}

}  // namespace dmrgnn
