#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ncquant {

using Rational = boost::multiprecision::cpp_rational;

/// Gaussian rational re + i*im.  All coefficient arithmetic in the engine
/// bottoms out here; there is no floating point outside the repcheck module.
struct Scalar {
    Rational re;
    Rational im;

    Scalar() : re(0), im(0) {}
    Scalar(long r) : re(r), im(0) {}
    Scalar(Rational r) : re(std::move(r)), im(0) {}
    Scalar(Rational r, Rational i) : re(std::move(r)), im(std::move(i)) {}

    static Scalar i() { return Scalar(Rational(0), Rational(1)); }

    bool is_zero() const { return re == 0 && im == 0; }
    bool is_one() const { return re == 1 && im == 0; }
    bool is_real() const { return im == 0; }

    Scalar conj() const { return Scalar(re, -im); }

    Scalar operator-() const { return Scalar(-re, -im); }
    Scalar operator+(const Scalar& o) const { return Scalar(re + o.re, im + o.im); }
    Scalar operator-(const Scalar& o) const { return Scalar(re - o.re, im - o.im); }
    Scalar operator*(const Scalar& o) const {
        return Scalar(re * o.re - im * o.im, re * o.im + im * o.re);
    }
    Scalar inverse() const {
        Rational n = re * re + im * im;
        if (n == 0) throw std::domain_error("Scalar: division by zero");
        return Scalar(re / n, -im / n);
    }
    Scalar operator/(const Scalar& o) const { return *this * o.inverse(); }

    Scalar& operator+=(const Scalar& o) { return *this = *this + o; }
    Scalar& operator-=(const Scalar& o) { return *this = *this - o; }
    Scalar& operator*=(const Scalar& o) { return *this = *this * o; }

    bool operator==(const Scalar& o) const { return re == o.re && im == o.im; }
    bool operator!=(const Scalar& o) const { return !(*this == o); }
    bool operator<(const Scalar& o) const {
        if (re != o.re) return re < o.re;
        return im < o.im;
    }
};

inline std::string to_string(const Rational& r) {
    std::ostringstream os;
    os << r;
    return os.str();
}

/// Renders e.g. "1", "-2/3", "i", "-i", "1/2*i", "3-2*i".
inline std::string to_string(const Scalar& s) {
    if (s.is_zero()) return "0";
    std::string out;
    if (s.re != 0) out += to_string(s.re);
    if (s.im != 0) {
        if (!out.empty() && s.im > 0) out += "+";
        if (s.im == 1)
            out += "i";
        else if (s.im == -1)
            out += "-i";
        else
            out += to_string(s.im) + "*i";
    }
    return out;
}

}  // namespace ncquant
