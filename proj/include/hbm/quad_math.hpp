#pragma once

// Overloads that let templated numerics run in __float128.

#include <quadmath.h>

namespace hbm::qmath {

using quad = __float128;

inline quad exp(quad x) { return expq(x); }
inline quad log(quad x) { return logq(x); }
inline quad sin(quad x) { return sinq(x); }
inline quad cos(quad x) { return cosq(x); }
inline quad sinh(quad x) { return sinhq(x); }
inline quad cosh(quad x) { return coshq(x); }
inline quad sqrt(quad x) { return sqrtq(x); }
inline quad pow(quad x, quad y) { return powq(x, y); }
inline quad fabs(quad x) { return fabsq(x); }
inline quad abs(quad x) { return fabsq(x); }

inline const quad kPi = acosq(quad(-1));
// 2^-112
inline constexpr quad kEpsilon =
    quad(1) / (quad(1ull << 56) * quad(1ull << 56));

}  // namespace hbm::qmath
