#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace phidim {

// Error taxonomy shared by every module.  The CLI maps kinds onto exit
// codes: spec/argument problems -> 2, numeric failures -> 3, I/O -> 4.
enum class errc {
  domain,         // argument outside the operation's domain
  precondition,   // structural precondition violated
  construction,   // a constructive procedure could not be completed
  inconsistency,  // input data contradicts itself
  resolution,     // query below the trusted scale of a finite set
  depth,          // query beyond stored/generatable depth
  capacity,       // support or node budget exceeded
  range,          // no admissible scales left after filtering
  numeric,        // underflow, failed bracket, lost precision
  io,             // file system problems
};

class error : public std::runtime_error {
 public:
  error(errc k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  errc kind() const { return kind_; }

 private:
  errc kind_;
};

[[noreturn]] inline void fail(errc k, const std::string& msg) { throw error(k, msg); }

inline void require(bool ok, errc k, const std::string& msg) {
  if (!ok) fail(k, msg);
}

// All floating output is printed with 12 significant digits, '.' decimal
// separator (global locale is never touched).
inline std::string fmt_g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

constexpr double kLog2 = 0.6931471805599453094172321214581766;

// Sup over the trailing fraction of a row vector plus its argmax.  Used by
// every profile/summary operation; a limsup is never certified, only the
// tail behaviour is reported.
struct TailSummary {
  double sup = 0.0;
  std::size_t argmax = 0;  // index into the row vector
  std::size_t tail_begin = 0;
};

template <class Rows, class Proj>
TailSummary tail_sup(const Rows& rows, Proj value, double tail_fraction = 0.5) {
  TailSummary s;
  if (rows.empty()) return s;
  double f = std::clamp(tail_fraction, 0.0, 1.0);
  std::size_t n = rows.size();
  std::size_t take = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(f * double(n))));
  s.tail_begin = n - take;
  s.sup = -std::numeric_limits<double>::infinity();
  for (std::size_t i = s.tail_begin; i < n; ++i) {
    double v = value(rows[i]);
    if (v > s.sup) {
      s.sup = v;
      s.argmax = i;
    }
  }
  return s;
}

}  // namespace phidim
