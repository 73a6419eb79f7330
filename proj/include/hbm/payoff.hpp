#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hbm/drift.hpp"
#include "hbm/geometry.hpp"

namespace hbm {

/// c x^i y^j
struct Monomial {
  double coefficient;
  int px;
  int py;
};

/// Test functions f(x, y) from a fixed registry.
///
/// Text forms accepted by Payoff::parse:
///   x
///   cos_exp           cos(x) exp(-y)
///   box:x0,x1,y0,y1   indicator of [x0,x1] x [y0,y1]
///   poly:<expr>[;cap=C]  polynomial such as "1 - 0.5*x^2*y + y", clamped to [-C, C]
/// "one" is shorthand for poly:1.
class Payoff {
 public:
  enum class Kind { kX, kCosExp, kIndicatorBox, kPolynomial };

  static Payoff x() { return Payoff(Kind::kX, "x"); }
  static Payoff cos_exp() { return Payoff(Kind::kCosExp, "cos_exp"); }
  static Payoff indicator(const Box& box) {
    box.validate();
    Payoff p(Kind::kIndicatorBox, "");
    p.box_ = box;
    std::ostringstream s;
    s.precision(17);
    s << "box:" << box.x_lo << ',' << box.x_hi << ',' << box.y_lo << ',' << box.y_hi;
    p.name_ = s.str();
    return p;
  }
  static Payoff polynomial(std::vector<Monomial> terms,
                           double cap = std::numeric_limits<double>::infinity(),
                           std::string text = "") {
    if (!(cap > 0.0)) {
      throw std::invalid_argument("Payoff: polynomial cap must be > 0");
    }
    Payoff p(Kind::kPolynomial, "");
    p.terms_ = std::move(terms);
    p.cap_ = cap;
    if (text.empty()) {
      std::ostringstream s;
      s.precision(17);
      for (std::size_t i = 0; i < p.terms_.size(); ++i) {
        const auto& m = p.terms_[i];
        s << (i ? " + " : "") << m.coefficient << "*x^" << m.px << "*y^" << m.py;
      }
      text = s.str();
    }
    p.name_ = "poly:" + text;
    if (std::isfinite(cap)) {
      std::ostringstream s;
      s.precision(17);
      s << ";cap=" << cap;
      p.name_ += s.str();
    }
    return p;
  }
  static Payoff one() { return polynomial({{1.0, 0, 0}}, std::numeric_limits<double>::infinity(), "1"); }

  static Payoff parse(const std::string& text);

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

  double operator()(const HyperbolicPoint& z) const {
    switch (kind_) {
      case Kind::kX:
        return z.x();
      case Kind::kCosExp:
        return std::cos(z.x()) * std::exp(-z.y());
      case Kind::kIndicatorBox:
        return (z.x() >= box_.x_lo && z.x() <= box_.x_hi && z.y() >= box_.y_lo &&
                z.y() <= box_.y_hi)
                   ? 1.0
                   : 0.0;
      case Kind::kPolynomial: {
        double v = 0.0;
        for (const auto& m : terms_) {
          v += m.coefficient * std::pow(z.x(), m.px) * std::pow(z.y(), m.py);
        }
        return std::clamp(v, -cap_, cap_);
      }
    }
    return 0.0;
  }

  /// sup |f| over the half-plane; infinity when f is unbounded.
  double sup() const {
    switch (kind_) {
      case Kind::kX:
        return std::numeric_limits<double>::infinity();
      case Kind::kCosExp:
      case Kind::kIndicatorBox:
        return 1.0;
      case Kind::kPolynomial: {
        const bool constant = std::all_of(terms_.begin(), terms_.end(),
                                          [](const Monomial& m) { return m.px == 0 && m.py == 0; });
        if (constant) {
          double c = 0.0;
          for (const auto& m : terms_) c += m.coefficient;
          return std::min(std::fabs(c), cap_);
        }
        return cap_;
      }
    }
    return std::numeric_limits<double>::infinity();
  }

  bool bounded() const { return std::isfinite(sup()); }

 private:
  Payoff(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_;
  std::string name_;
  Box box_{0.0, 1.0, 0.5, 1.0};
  std::vector<Monomial> terms_;
  double cap_ = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Parses "c*x^i*y^j" style polynomial text.
inline std::vector<Monomial> parse_polynomial(const std::string& text) {
  std::vector<Monomial> terms;
  std::size_t i = 0;
  auto skip = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto fail = [&](const std::string& why) -> std::invalid_argument {
    return std::invalid_argument("polynomial '" + text + "' at " + std::to_string(i) + ": " + why);
  };
  skip();
  if (i == text.size()) throw fail("empty");
  bool first = true;
  while (true) {
    skip();
    if (i == text.size()) break;
    double sign = 1.0;
    if (text[i] == '+' || text[i] == '-') {
      sign = text[i] == '-' ? -1.0 : 1.0;
      ++i;
      skip();
    } else if (!first) {
      throw fail("expected + or -");
    }
    first = false;
    Monomial m{sign, 0, 0};
    bool any = false;
    while (true) {
      skip();
      if (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) {
        std::size_t used = 0;
        m.coefficient *= std::stod(text.substr(i), &used);
        i += used;
        any = true;
      } else if (i < text.size() && (text[i] == 'x' || text[i] == 'y')) {
        const char var = text[i++];
        int power = 1;
        skip();
        if (i < text.size() && text[i] == '^') {
          ++i;
          skip();
          std::size_t used = 0;
          power = std::stoi(text.substr(i), &used);
          if (power < 0) throw fail("negative power");
          i += used;
        }
        (var == 'x' ? m.px : m.py) += power;
        any = true;
      } else {
        break;
      }
      skip();
      if (i < text.size() && text[i] == '*') {
        ++i;
      } else {
        skip();
        if (i < text.size() && text[i] != '+' && text[i] != '-') throw fail("unexpected character");
        break;
      }
    }
    if (!any) throw fail("empty term");
    terms.push_back(m);
  }
  return terms;
}

}  // namespace detail

inline Payoff Payoff::parse(const std::string& raw) {
  std::string text = raw;
  text.erase(0, text.find_first_not_of(" \t"));
  text.erase(text.find_last_not_of(" \t") + 1);
  if (text == "x") return x();
  if (text == "cos_exp") return cos_exp();
  if (text == "one") return one();
  if (text.rfind("box:", 0) == 0) {
    std::stringstream ss(text.substr(4));
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 4) throw std::invalid_argument("box payoff needs x0,x1,y0,y1");
    return indicator({v[0], v[1], v[2], v[3]});
  }
  if (text.rfind("poly:", 0) == 0) {
    std::string body = text.substr(5);
    double cap = std::numeric_limits<double>::infinity();
    const auto semi = body.find(';');
    if (semi != std::string::npos) {
      const std::string opt = body.substr(semi + 1);
      if (opt.rfind("cap=", 0) != 0) throw std::invalid_argument("poly payoff: expected ;cap=<value>");
      cap = std::stod(opt.substr(4));
      body = body.substr(0, semi);
    }
    body.erase(body.find_last_not_of(" \t") + 1);
    return polynomial(detail::parse_polynomial(body), cap, body);
  }
  throw std::invalid_argument("unknown payoff '" + raw + "'");
}

}  // namespace hbm
