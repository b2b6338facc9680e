#pragma once

#include <stdexcept>

#include "ncquant/poly.hpp"

namespace ncquant {

struct ZeroDivide : std::domain_error {
    ZeroDivide() : std::domain_error("division by zero") {}
};

/// Quotient of two ParamPoly in canonical form: gcd(num, den) a unit, den
/// nonzero with canonical leading coefficient 1.
class ParamRatio {
  public:
    ParamRatio() : num_(), den_(ParamPoly::one()) {}
    ParamRatio(ParamPoly n) : num_(std::move(n)), den_(ParamPoly::one()) {}
    explicit ParamRatio(Scalar s) : num_(ParamPoly(std::move(s))), den_(ParamPoly::one()) {}
    ParamRatio(ParamPoly n, ParamPoly d) : num_(std::move(n)), den_(std::move(d)) {
        if (den_.is_zero()) throw ZeroDivide();
        reduce();
    }
    static ParamRatio one() { return ParamRatio(ParamPoly::one()); }
    static ParamRatio symbol(int id, unsigned e = 1) { return ParamRatio(ParamPoly::symbol(id, e)); }

    const ParamPoly& num() const { return num_; }
    const ParamPoly& den() const { return den_; }
    bool is_zero() const { return num_.is_zero(); }
    bool is_one() const { return num_ == den_; }
    bool is_polynomial() const { return den_.is_constant(); }

    ParamRatio operator-() const {
        ParamRatio r;
        r.num_ = -num_;
        r.den_ = den_;
        return r;
    }
    ParamRatio operator+(const ParamRatio& o) const {
        return ParamRatio(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
    }
    ParamRatio operator-(const ParamRatio& o) const {
        return ParamRatio(num_ * o.den_ - o.num_ * den_, den_ * o.den_);
    }
    ParamRatio operator*(const ParamRatio& o) const {
        return ParamRatio(num_ * o.num_, den_ * o.den_);
    }
    ParamRatio operator/(const ParamRatio& o) const {
        if (o.is_zero()) throw ZeroDivide();
        return ParamRatio(num_ * o.den_, den_ * o.num_);
    }
    ParamRatio inverse() const { return one() / *this; }
    ParamRatio scaled(const Scalar& s) const {
        ParamRatio r;
        r.num_ = num_.scaled(s);
        r.den_ = s.is_zero() ? ParamPoly::one() : den_;
        return r;
    }

    ParamRatio& operator+=(const ParamRatio& o) { return *this = *this + o; }
    ParamRatio& operator-=(const ParamRatio& o) { return *this = *this - o; }
    ParamRatio& operator*=(const ParamRatio& o) { return *this = *this * o; }

    bool operator==(const ParamRatio& o) const { return num_ == o.num_ && den_ == o.den_; }
    bool operator!=(const ParamRatio& o) const { return !(*this == o); }
    bool operator<(const ParamRatio& o) const {
        if (num_ != o.num_) return num_ < o.num_;
        return den_ < o.den_;
    }

    ParamRatio conj() const { return ParamRatio(num_.conj(), den_.conj()); }

    bool contains_symbol(int id) const {
        return num_.contains_symbol(id) || den_.contains_symbol(id);
    }
    bool den_contains_free_param(const SymbolTable& tab) const {
        return den_.contains_free_param(tab);
    }

  private:
    void reduce() {
        if (num_.is_zero()) {
            den_ = ParamPoly::one();
            return;
        }
        ParamPoly g = poly_gcd(num_, den_);
        if (!g.is_constant() || !g.constant_value().is_one()) {
            num_ = *exact_divide(num_, g);
            den_ = *exact_divide(den_, g);
        }
        Scalar lead = den_.leading().second;
        if (!lead.is_one()) {
            Scalar inv = lead.inverse();
            num_ = num_.scaled(inv);
            den_ = den_.scaled(inv);
        }
    }

    ParamPoly num_;
    ParamPoly den_;
};

enum class RatioOp { Add, Sub, Mul, Div };

/// Arithmetic entry point enforcing the contract that free parameters are
/// never inverted: they parametrize solution families and must stay
/// polynomial.  Use `generic=true` to opt in when a family parameter has
/// been deliberately treated as a generic field element.
inline ParamRatio ratio_arith(const ParamRatio& a, const ParamRatio& b, RatioOp op,
                              const SymbolTable& tab, bool generic = false) {
    switch (op) {
        case RatioOp::Add: return a + b;
        case RatioOp::Sub: return a - b;
        case RatioOp::Mul: return a * b;
        case RatioOp::Div:
            if (b.is_zero()) throw ZeroDivide();
            if (!generic && (b.num().contains_free_param(tab) || b.den().contains_free_param(tab)))
                throw std::domain_error("cannot divide by an expression containing a free parameter");
            return a / b;
    }
    throw std::logic_error("unreachable");
}

/// Substitutes symbol `id` by `value` in a polynomial; the result is rational
/// whenever `value` is.
inline ParamRatio poly_substitute(const ParamPoly& p, int id, const ParamRatio& value) {
    ParamRatio out;
    for (auto& [m, c] : p.terms()) {
        ParamRatio term{ParamPoly(c)};
        ParamRatio pw = ParamRatio::one();
        Mono rest;
        for (auto& [s, e] : m) {
            if (s == id)
                for (unsigned k = 0; k < e; ++k) pw *= value;
            else
                rest.push_back({s, e});
        }
        ParamPoly rp;
        rp.add_term(rest, Scalar(1));
        out += term * pw * ParamRatio(rp);
    }
    return out;
}

inline ParamRatio ratio_substitute(const ParamRatio& r, int id, const ParamRatio& value) {
    if (!r.contains_symbol(id)) return r;
    ParamRatio den = poly_substitute(r.den(), id, value);
    if (den.is_zero()) throw ZeroDivide();
    return poly_substitute(r.num(), id, value) / den;
}

inline std::string to_string(const ParamRatio& r, const SymbolTable& tab) {
    if (r.is_polynomial()) {
        Scalar d = r.den().constant_value();
        if (d.is_one()) return to_string(r.num(), tab);
        return "(" + to_string(r.num(), tab) + ")/(" + to_string(r.den(), tab) + ")";
    }
    return "(" + to_string(r.num(), tab) + ")/(" + to_string(r.den(), tab) + ")";
}

}  // namespace ncquant
