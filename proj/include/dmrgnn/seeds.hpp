#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dmrgnn/error.hpp"
#include "dmrgnn/ir.hpp"

namespace dmrgnn {

// ---------------------------------------------------------------------------
// Composite field GF(((2^2)^2)^2), polynomial basis at every level:
//   GF(4)   = GF(2)[w]/(w^2 + w + 1),      element a1 w + a0  -> bits a1a0
//   GF(16)  = GF(4)[z]/(z^2 + z + N), N=w, element A1 z + A0  -> A1 << 2 | A0
//   GF(256) = GF(16)[y]/(y^2 + y + L),     element B1 y + B0  -> B1 << 4 | B0
// L is the smallest constant making the top polynomial irreducible.

namespace tower {

inline constexpr std::uint8_t gf4_n = 0b10;  // w

constexpr std::uint8_t gf4_mul(std::uint8_t a, std::uint8_t b) noexcept {
  const int a1 = a >> 1 & 1, a0 = a & 1, b1 = b >> 1 & 1, b0 = b & 1;
  const int hi = (a1 & b1) ^ (a1 & b0) ^ (a0 & b1);
  const int lo = (a1 & b1) ^ (a0 & b0);
  return static_cast<std::uint8_t>(hi << 1 | lo);
}

constexpr std::uint8_t gf16_mul(std::uint8_t a, std::uint8_t b) noexcept {
  const std::uint8_t a1 = a >> 2, a0 = a & 3, b1 = b >> 2, b0 = b & 3;
  const std::uint8_t t = gf4_mul(a1, b1);
  const std::uint8_t hi = t ^ gf4_mul(a1, b0) ^ gf4_mul(a0, b1);
  const std::uint8_t lo = gf4_mul(t, gf4_n) ^ gf4_mul(a0, b0);
  return static_cast<std::uint8_t>(hi << 2 | lo);
}

/// Smallest L in GF(16) with y^2 + y + L irreducible (no t with t^2 + t = L).
constexpr std::uint8_t find_lambda() noexcept {
  for (std::uint8_t l = 1; l < 16; ++l) {
    bool root = false;
    for (std::uint8_t t = 0; t < 16; ++t)
      if ((gf16_mul(t, t) ^ t) == l) root = true;
    if (!root) return l;
  }
  return 0;
}

inline constexpr std::uint8_t lambda = find_lambda();

constexpr std::uint8_t gf256_mul(std::uint8_t a, std::uint8_t b) noexcept {
  const std::uint8_t a1 = a >> 4, a0 = a & 15, b1 = b >> 4, b0 = b & 15;
  const std::uint8_t t = gf16_mul(a1, b1);
  const std::uint8_t hi = t ^ gf16_mul(a1, b0) ^ gf16_mul(a0, b1);
  const std::uint8_t lo = gf16_mul(t, lambda) ^ gf16_mul(a0, b0);
  return static_cast<std::uint8_t>(hi << 4 | lo);
}

/// x^8 + x^4 + x^3 + x + 1 evaluated in the tower field.
constexpr std::uint8_t aes_poly_at(std::uint8_t b) noexcept {
  std::uint8_t p[9] = {1};
  for (int i = 1; i <= 8; ++i) p[i] = gf256_mul(p[i - 1], b);
  return static_cast<std::uint8_t>(p[8] ^ p[4] ^ p[3] ^ p[1] ^ p[0]);
}

/// Columns of the GF(2)-linear map taking the AES polynomial basis to the
/// tower basis: column i is beta^i for the smallest root beta.
constexpr std::array<std::uint8_t, 8> aes_to_tower() noexcept {
  std::uint8_t beta = 0;
  for (int b = 2; b < 256; ++b)
    if (aes_poly_at(static_cast<std::uint8_t>(b)) == 0) {
      beta = static_cast<std::uint8_t>(b);
      break;
    }
  std::array<std::uint8_t, 8> cols{};
  std::uint8_t p = 1;
  for (int i = 0; i < 8; ++i) {
    cols[i] = p;
    p = gf256_mul(p, beta);
  }
  return cols;
}

/// Applies an 8x8 GF(2) matrix given by columns.
constexpr std::uint8_t apply(const std::array<std::uint8_t, 8>& cols, std::uint8_t x) noexcept {
  std::uint8_t r = 0;
  for (int i = 0; i < 8; ++i)
    if (x >> i & 1) r ^= cols[i];
  return r;
}

/// Inverse of an invertible 8x8 GF(2) matrix by tabulating the image of
/// every byte.
constexpr std::array<std::uint8_t, 8> invert(const std::array<std::uint8_t, 8>& cols) noexcept {
  std::array<std::uint8_t, 256> pre{};
  for (int x = 0; x < 256; ++x) pre[apply(cols, static_cast<std::uint8_t>(x))] = static_cast<std::uint8_t>(x);
  std::array<std::uint8_t, 8> inv{};
  for (int i = 0; i < 8; ++i) inv[i] = pre[1U << i];
  return inv;
}

/// AES affine matrix: bit i = b_i ^ b_{i+4} ^ b_{i+5} ^ b_{i+6} ^ b_{i+7}.
constexpr std::array<std::uint8_t, 8> aes_affine() noexcept {
  std::array<std::uint8_t, 8> cols{};
  for (int j = 0; j < 8; ++j) {
    std::uint8_t c = 0;
    for (int i = 0; i < 8; ++i)
      for (int k : {0, 4, 5, 6, 7})
        if ((i + k) % 8 == j) c |= static_cast<std::uint8_t>(1U << i);
    cols[j] = c;
  }
  return cols;
}

/// Composition a(b(x)) as columns.
constexpr std::array<std::uint8_t, 8> compose(const std::array<std::uint8_t, 8>& a,
                                              const std::array<std::uint8_t, 8>& b) noexcept {
  std::array<std::uint8_t, 8> c{};
  for (int i = 0; i < 8; ++i) c[i] = apply(a, b[i]);
  return c;
}

}  // namespace tower

// ---------------------------------------------------------------------------
// Circuit helpers over IR bit vectors (LSB first)

namespace seed_detail {

inline ir_bits cat(const ir_bits& lo, const ir_bits& hi) {
  ir_bits r = lo;
  r.insert(r.end(), hi.begin(), hi.end());
  return r;
}
inline ir_bits lo_half(const ir_bits& a) { return ir_bits(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(a.size() / 2)); }
inline ir_bits hi_half(const ir_bits& a) { return ir_bits(a.begin() + static_cast<std::ptrdiff_t>(a.size() / 2), a.end()); }

inline ir_bits add(ir_builder& b, const ir_bits& x, const ir_bits& y) {
  ir_bits r;
  for (std::size_t i = 0; i < x.size(); ++i) r.push_back(b.xor_(x[i], y[i]));
  return r;
}

/// out bit i = XOR of x_j over columns j with bit i set, for an n x n matrix
/// over GF(2) given by column masks.
inline ir_bits linear(ir_builder& b, const ir_bits& x, const std::vector<std::uint32_t>& cols) {
  ir_bits r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ir_bits terms;
    for (std::size_t j = 0; j < x.size(); ++j)
      if (cols[j] >> i & 1) terms.push_back(x[j]);
    r.push_back(b.xor_(terms));
  }
  return r;
}

inline ir_bits gf4_mul(ir_builder& b, const ir_bits& x, const ir_bits& y) {
  const auto t = b.and_(x[1], y[1]);
  const auto hi = b.xor_({t, b.and_(x[1], y[0]), b.and_(x[0], y[1])});
  const auto lo = b.xor_(t, b.and_(x[0], y[0]));
  return {lo, hi};
}
inline ir_bits gf4_sq(ir_builder& b, const ir_bits& x) { return {b.xor_(x[1], x[0]), x[1]}; }
inline ir_bits gf4_scale_n(ir_builder& b, const ir_bits& x) { return {x[1], b.xor_(x[1], x[0])}; }

inline ir_bits gf16_mul(ir_builder& b, const ir_bits& x, const ir_bits& y) {
  const auto x0 = lo_half(x), x1 = hi_half(x), y0 = lo_half(y), y1 = hi_half(y);
  const auto t = gf4_mul(b, x1, y1);
  const auto hi = add(b, add(b, t, gf4_mul(b, x1, y0)), gf4_mul(b, x0, y1));
  const auto lo = add(b, gf4_scale_n(b, t), gf4_mul(b, x0, y0));
  return cat(lo, hi);
}

inline ir_bits gf16_sq(ir_builder& b, const ir_bits& x) {
  const auto s1 = gf4_sq(b, hi_half(x));
  return cat(add(b, gf4_scale_n(b, s1), gf4_sq(b, lo_half(x))), s1);
}

/// Multiplication by the constant lambda, a linear map over GF(2).
inline ir_bits gf16_scale_lambda(ir_builder& b, const ir_bits& x) {
  std::vector<std::uint32_t> cols;
  for (int j = 0; j < 4; ++j) cols.push_back(tower::gf16_mul(static_cast<std::uint8_t>(1U << j), tower::lambda));
  return linear(b, x, cols);
}

/// For a = a1 z + a0: d = a1^2 N + a1 a0 + a0^2, a^-1 = (a1 d^-1) z + (a1 + a0) d^-1.
inline ir_bits gf16_inv(ir_builder& b, const ir_bits& x) {
  const auto x0 = lo_half(x), x1 = hi_half(x);
  const auto d = add(b, add(b, gf4_scale_n(b, gf4_sq(b, x1)), gf4_mul(b, x1, x0)), gf4_sq(b, x0));
  const auto di = gf4_sq(b, d);  // inverse in GF(4) is the square
  return cat(gf4_mul(b, add(b, x1, x0), di), gf4_mul(b, x1, di));
}

}  // namespace seed_detail

inline const std::vector<std::string>& seed_names() {
  static const std::vector<std::string> names = {"sbox_towerfield", "crc8", "alu4", "parity_tree"};
  return names;
}

/// AES SubBytes: tower-field inversion between basis changes, affine map
/// folded into the output basis change.
inline ir_design build_sbox_towerfield() {
  using namespace seed_detail;
  ir_builder b("sbox_towerfield", 8);
  const auto m = tower::aes_to_tower();
  const auto out_map = tower::compose(tower::aes_affine(), tower::invert(m));
  auto cols = [](const std::array<std::uint8_t, 8>& c) { return std::vector<std::uint32_t>(c.begin(), c.end()); };

  b.region("map_in");
  const auto t = linear(b, b.inputs(0, 8), cols(m));
  const auto t0 = lo_half(t), t1 = hi_half(t);
  b.region("norm");
  const auto d = add(b, add(b, gf16_scale_lambda(b, gf16_sq(b, t1)), gf16_mul(b, t1, t0)), gf16_sq(b, t0));
  b.region("inv16");
  const auto di = gf16_inv(b, d);
  b.region("mul_hi");
  const auto hi = gf16_mul(b, t1, di);
  b.region("mul_lo");
  const auto lo = gf16_mul(b, add(b, t1, t0), di);
  b.region("map_out");
  auto s = linear(b, cat(lo, hi), cols(out_map));
  for (int i = 0; i < 8; ++i)
    if (0x63 >> i & 1) s[static_cast<std::size_t>(i)] = b.not_(s[static_cast<std::size_t>(i)]);
  b.outputs(s);
  return b.finish();
}

/// CRC-8 (polynomial 0x07, zero initial value) of a 16-bit message, most
/// significant message bit first.
inline ir_design build_crc8() {
  ir_builder b("crc8", 16);
  constexpr std::uint32_t zero = ~std::uint32_t{0};
  std::array<std::uint32_t, 8> crc;
  crc.fill(zero);
  auto x = [&](std::uint32_t p, std::uint32_t q) {
    if (p == zero) return q;
    if (q == zero) return p;
    return b.xor_(p, q);
  };
  for (int k = 15; k >= 0; --k) {
    b.region(k >= 8 ? "byte_hi" : "byte_lo");
    const std::uint32_t fb = x(crc[7], b.input(static_cast<std::uint32_t>(k)));
    std::array<std::uint32_t, 8> next;
    next[0] = fb;
    next[1] = x(crc[0], fb);
    next[2] = x(crc[1], fb);
    for (int i = 3; i < 8; ++i) next[i] = crc[i - 1];
    crc = next;
  }
  for (auto c : crc) b.output(c == zero ? b.constant(false) : c);
  return b.finish();
}

/// 4-bit ALU: inputs a[0..3], b[4..7], op[8..9]; op 0 add (5-bit result),
/// 1 and, 2 or, 3 xor (bit 4 zero).
inline ir_design build_alu4() {
  ir_builder b("alu4", 10);
  const auto a = b.inputs(0, 4), v = b.inputs(4, 4);
  const auto op0 = b.input(8), op1 = b.input(9);
  b.region("adder");
  ir_bits sum;
  std::uint32_t carry = ~std::uint32_t{0};
  for (int i = 0; i < 4; ++i) {
    const auto p = b.xor_(a[i], v[i]);
    const auto g = b.and_(a[i], v[i]);
    if (i == 0) {
      sum.push_back(p);
      carry = g;
    } else {
      sum.push_back(b.xor_(p, carry));
      carry = b.or_(g, b.and_(p, carry));
    }
  }
  b.region("logic");
  ir_bits land, lor, lxor;
  for (int i = 0; i < 4; ++i) {
    land.push_back(b.and_(a[i], v[i]));
    lor.push_back(b.or_(a[i], v[i]));
    lxor.push_back(b.xor_(a[i], v[i]));
  }
  b.region("select");
  for (int i = 0; i < 4; ++i) b.output(b.mux(op1, b.mux(op0, sum[i], land[i]), b.mux(op0, lor[i], lxor[i])));
  b.output(b.and_({carry, b.not_(op0), b.not_(op1)}));
  return b.finish();
}

inline ir_design build_parity_tree() {
  ir_builder b("parity_tree", 8);
  b.region("tree");
  b.output(b.xor_(b.inputs(0, 8)));
  return b.finish();
}

inline ir_design build_seed(std::string_view name) {
  if (name == "sbox_towerfield") return build_sbox_towerfield();
  if (name == "crc8") return build_crc8();
  if (name == "alu4") return build_alu4();
  if (name == "parity_tree") return build_parity_tree();
  throw error(errc::unknown_seed, "unknown seed circuit '" + std::string(name) + "'");
}

}  // namespace dmrgnn
