#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phidim/common.hpp"

namespace phidim {

// Minimal arbitrary-precision unsigned integer, little-endian 64-bit limbs.
// Only the operations the exact modes need: add, mul, compare, small
// division for decimal printing, and lossy conversion to double via the top
// bits.  Numbers stay unreduced; equality tests cross-multiply instead of
// computing gcds.
class BigUInt {
 public:
  BigUInt() = default;
  BigUInt(uint64_t v) {
    if (v) limbs_.push_back(v);
  }

  static BigUInt pow(uint64_t base, uint64_t exp) {
    BigUInt r(1), b(base);
    while (exp) {
      if (exp & 1) r = r * b;
      b = b * b;
      exp >>= 1;
    }
    return r;
  }

  bool is_zero() const { return limbs_.empty(); }
  std::size_t limb_count() const { return limbs_.size(); }

  friend BigUInt operator+(const BigUInt& a, const BigUInt& b) {
    BigUInt r;
    r.limbs_.resize(std::max(a.limbs_.size(), b.limbs_.size()), 0);
    unsigned __int128 carry = 0;
    for (std::size_t i = 0; i < r.limbs_.size(); ++i) {
      unsigned __int128 s = carry;
      if (i < a.limbs_.size()) s += a.limbs_[i];
      if (i < b.limbs_.size()) s += b.limbs_[i];
      r.limbs_[i] = uint64_t(s);
      carry = s >> 64;
    }
    if (carry) r.limbs_.push_back(uint64_t(carry));
    return r;
  }

  friend BigUInt operator*(const BigUInt& a, const BigUInt& b) {
    BigUInt r;
    if (a.is_zero() || b.is_zero()) return r;
    r.limbs_.assign(a.limbs_.size() + b.limbs_.size(), 0);
    for (std::size_t i = 0; i < a.limbs_.size(); ++i) {
      unsigned __int128 carry = 0;
      uint64_t ai = a.limbs_[i];
      for (std::size_t j = 0; j < b.limbs_.size(); ++j) {
        unsigned __int128 cur = (unsigned __int128)ai * b.limbs_[j] + r.limbs_[i + j] + carry;
        r.limbs_[i + j] = uint64_t(cur);
        carry = cur >> 64;
      }
      std::size_t k = i + b.limbs_.size();
      while (carry) {
        unsigned __int128 cur = (unsigned __int128)r.limbs_[k] + carry;
        r.limbs_[k] = uint64_t(cur);
        carry = cur >> 64;
        ++k;
      }
    }
    r.trim();
    return r;
  }

  // three-way compare
  friend int cmp(const BigUInt& a, const BigUInt& b) {
    if (a.limbs_.size() != b.limbs_.size()) return a.limbs_.size() < b.limbs_.size() ? -1 : 1;
    for (std::size_t i = a.limbs_.size(); i-- > 0;) {
      if (a.limbs_[i] != b.limbs_[i]) return a.limbs_[i] < b.limbs_[i] ? -1 : 1;
    }
    return 0;
  }
  friend bool operator==(const BigUInt& a, const BigUInt& b) { return cmp(a, b) == 0; }
  friend bool operator<(const BigUInt& a, const BigUInt& b) { return cmp(a, b) < 0; }
  friend bool operator<=(const BigUInt& a, const BigUInt& b) { return cmp(a, b) <= 0; }

  // divides in place by a small divisor, returns the remainder
  uint64_t div_small(uint64_t d) {
    unsigned __int128 rem = 0;
    for (std::size_t i = limbs_.size(); i-- > 0;) {
      unsigned __int128 cur = (rem << 64) | limbs_[i];
      limbs_[i] = uint64_t(cur / d);
      rem = cur % d;
    }
    trim();
    return uint64_t(rem);
  }

  std::string to_string() const {
    if (is_zero()) return "0";
    BigUInt t = *this;
    std::string out;
    while (!t.is_zero()) {
      uint64_t r = t.div_small(10000000000000000000ULL);  // 10^19
      char buf[24];
      std::snprintf(buf, sizeof(buf), t.is_zero() ? "%llu" : "%019llu", (unsigned long long)r);
      out.insert(0, buf);
    }
    return out;
  }

  long bit_length() const {
    if (is_zero()) return 0;
    uint64_t top = limbs_.back();
    long b = 64 * long(limbs_.size() - 1);
    while (top) {
      ++b;
      top >>= 1;
    }
    return b;
  }

  // value ~= mantissa * 2^exp2, mantissa in [2^-64, 1)
  void to_double_scaled(double& mantissa, long& exp2) const {
    if (is_zero()) {
      mantissa = 0.0;
      exp2 = 0;
      return;
    }
    unsigned __int128 top = 0;
    int got = 0;
    for (std::size_t i = limbs_.size(); i-- > 0 && got < 2;) {
      top = (top << 64) | limbs_[i];
      ++got;
    }
    long top_bits = 64 * got;
    double m = double(uint64_t(top >> 64)) * 0x1.0p64 + double(uint64_t(top));
    mantissa = std::ldexp(m, int(-top_bits));
    exp2 = long((limbs_.size() - got) * 64) + top_bits;
  }

  double log_value() const {
    double m;
    long e;
    to_double_scaled(m, e);
    if (m == 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(m) + double(e) * kLog2;
  }

 private:
  void trim() {
    while (!limbs_.empty() && limbs_.back() == 0) limbs_.pop_back();
  }
  std::vector<uint64_t> limbs_;
};

// ratio of a BigUInt pair as a double, accurate to ~1 ulp
inline double big_ratio(const BigUInt& num, const BigUInt& den) {
  if (num.is_zero()) return 0.0;
  double mn, md;
  long en, ed;
  num.to_double_scaled(mn, en);
  den.to_double_scaled(md, ed);
  return std::ldexp(mn / md, int(en - ed));
}

// Nonnegative exact rational, unreduced.
struct Rational {
  BigUInt num, den;

  Rational() : num(0), den(1) {}
  Rational(uint64_t n, uint64_t d) : num(n), den(d) { require(d != 0, errc::domain, "rational with zero denominator"); }
  Rational(BigUInt n, BigUInt d) : num(std::move(n)), den(std::move(d)) {
    require(!den.is_zero(), errc::domain, "rational with zero denominator");
  }

  friend Rational operator*(const Rational& a, const Rational& b) { return Rational(a.num * b.num, a.den * b.den); }
  friend Rational operator+(const Rational& a, const Rational& b) {
    return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
  }
  friend bool operator==(const Rational& a, const Rational& b) { return a.num * b.den == b.num * a.den; }
  friend bool operator<(const Rational& a, const Rational& b) { return a.num * b.den < b.num * a.den; }
  friend bool operator<=(const Rational& a, const Rational& b) { return a.num * b.den <= b.num * a.den; }

  double to_double() const { return big_ratio(num, den); }
  double log_value() const { return num.log_value() - den.log_value(); }
};

}  // namespace phidim
