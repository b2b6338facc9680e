#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "ncquant/scalar.hpp"
#include "ncquant/symbols.hpp"

namespace ncquant {

/// Sparse exponent tuple: (symbol id, exponent) pairs sorted by id, no zeros.
using Mono = std::vector<std::pair<int, unsigned>>;

inline unsigned mono_degree(const Mono& m) {
    unsigned d = 0;
    for (auto& [id, e] : m) d += e;
    return d;
}

inline Mono mono_mul(const Mono& a, const Mono& b) {
    Mono out;
    size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].first < b[j].first))
            out.push_back(a[i++]);
        else if (i == a.size() || b[j].first < a[i].first)
            out.push_back(b[j++]);
        else {
            out.emplace_back(a[i].first, a[i].second + b[j].second);
            ++i, ++j;
        }
    }
    return out;
}

/// True if a | b, writing the quotient exponents to q.
inline bool mono_divides(const Mono& a, const Mono& b, Mono& q) {
    q.clear();
    size_t i = 0;
    for (auto& [id, e] : b) {
        unsigned ae = 0;
        while (i < a.size() && a[i].first < id) return false;
        if (i < a.size() && a[i].first == id) ae = a[i].second, ++i;
        if (ae > e) return false;
        if (e > ae) q.emplace_back(id, e - ae);
    }
    return i == a.size();
}

/// Graded lexicographic order; symbols compare by declaration id.
struct MonoCmp {
    bool operator()(const Mono& a, const Mono& b) const {
        unsigned da = mono_degree(a), db = mono_degree(b);
        if (da != db) return da < db;
        // lex: earlier symbol with higher exponent is larger
        size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (a[i].first != b[j].first) return a[i].first > b[j].first;
            if (a[i].second != b[j].second) return a[i].second < b[j].second;
            ++i, ++j;
        }
        return i < a.size() ? false : j < b.size();
    }
};

/// Multivariate polynomial in declared symbols over Gaussian rationals,
/// kept in canonical form (no zero coefficients, fixed term order).
class ParamPoly {
  public:
    using Terms = std::map<Mono, Scalar, MonoCmp>;

    ParamPoly() = default;
    explicit ParamPoly(Scalar c) {
        if (!c.is_zero()) terms_[Mono{}] = std::move(c);
    }
    static ParamPoly symbol(int id, unsigned exp = 1) {
        ParamPoly p;
        if (exp > 0)
            p.terms_[Mono{{id, exp}}] = Scalar(1);
        else
            p.terms_[Mono{}] = Scalar(1);
        return p;
    }
    static ParamPoly one() { return ParamPoly(Scalar(1)); }

    const Terms& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    bool is_constant() const {
        return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.empty());
    }
    Scalar constant_value() const {
        if (terms_.empty()) return Scalar(0);
        auto it = terms_.find(Mono{});
        return it == terms_.end() ? Scalar(0) : it->second;
    }

    unsigned total_degree() const {
        unsigned d = 0;
        for (auto& [m, c] : terms_) d = std::max(d, mono_degree(m));
        return d;
    }

    void add_term(const Mono& m, const Scalar& c) {
        if (c.is_zero()) return;
        auto it = terms_.find(m);
        if (it == terms_.end())
            terms_[m] = c;
        else {
            it->second += c;
            if (it->second.is_zero()) terms_.erase(it);
        }
    }

    ParamPoly operator-() const {
        ParamPoly r;
        for (auto& [m, c] : terms_) r.terms_[m] = -c;
        return r;
    }
    ParamPoly operator+(const ParamPoly& o) const {
        ParamPoly r = *this;
        for (auto& [m, c] : o.terms_) r.add_term(m, c);
        return r;
    }
    ParamPoly operator-(const ParamPoly& o) const {
        ParamPoly r = *this;
        for (auto& [m, c] : o.terms_) r.add_term(m, -c);
        return r;
    }
    ParamPoly operator*(const ParamPoly& o) const {
        ParamPoly r;
        for (auto& [m1, c1] : terms_)
            for (auto& [m2, c2] : o.terms_) r.add_term(mono_mul(m1, m2), c1 * c2);
        return r;
    }
    ParamPoly scaled(const Scalar& s) const {
        ParamPoly r;
        if (s.is_zero()) return r;
        for (auto& [m, c] : terms_) r.terms_[m] = c * s;
        return r;
    }

    bool operator==(const ParamPoly& o) const { return terms_ == o.terms_; }
    bool operator!=(const ParamPoly& o) const { return !(*this == o); }
    bool operator<(const ParamPoly& o) const {
        return std::lexicographical_compare(
            terms_.begin(), terms_.end(), o.terms_.begin(), o.terms_.end(),
            [](const auto& a, const auto& b) {
                MonoCmp cmp;
                if (cmp(a.first, b.first)) return true;
                if (cmp(b.first, a.first)) return false;
                return a.second < b.second;
            });
    }

    ParamPoly conj() const {
        ParamPoly r;
        for (auto& [m, c] : terms_) r.terms_[m] = c.conj();
        return r;
    }

    /// Leading term in the canonical (graded lex) order.
    std::pair<Mono, Scalar> leading() const {
        auto it = terms_.rbegin();
        return {it->first, it->second};
    }

    /// Degree in one symbol.
    unsigned degree_in(int id) const {
        unsigned d = 0;
        for (auto& [m, c] : terms_)
            for (auto& [s, e] : m)
                if (s == id) d = std::max(d, e);
        return d;
    }

    bool contains_symbol(int id) const {
        for (auto& [m, c] : terms_)
            for (auto& [s, e] : m)
                if (s == id) return true;
        return false;
    }

    std::set<int> support() const {
        std::set<int> s;
        for (auto& [m, c] : terms_)
            for (auto& [id, e] : m) s.insert(id);
        return s;
    }

    bool contains_free_param(const SymbolTable& tab) const {
        for (int id : support())
            if (tab.is_free_param(id)) return true;
        return false;
    }

    /// Coefficient of id^k viewed as a univariate polynomial in id.
    ParamPoly coeff_in(int id, unsigned k) const {
        ParamPoly r;
        for (auto& [m, c] : terms_) {
            unsigned e = 0;
            Mono rest;
            for (auto& [s, ex] : m)
                (s == id) ? (void)(e = ex) : rest.push_back({s, ex});
            if (e == k) r.add_term(rest, c);
        }
        return r;
    }

    ParamPoly& operator+=(const ParamPoly& o) { return *this = *this + o; }
    ParamPoly& operator-=(const ParamPoly& o) { return *this = *this - o; }
    ParamPoly& operator*=(const ParamPoly& o) { return *this = *this * o; }

  private:
    Terms terms_;
};

/// Exact division; nullopt when b does not divide a.
inline std::optional<ParamPoly> exact_divide(const ParamPoly& a, const ParamPoly& b) {
    if (b.is_zero()) throw std::domain_error("ParamPoly: division by zero");
    ParamPoly rem = a, quot;
    auto [lb_m, lb_c] = b.leading();
    while (!rem.is_zero()) {
        auto [lm, lc] = rem.leading();
        Mono q;
        if (!mono_divides(lb_m, lm, q)) return std::nullopt;
        Scalar qc = lc / lb_c;
        ParamPoly t;
        t.add_term(q, qc);
        quot += t;
        rem -= t * b;
    }
    return quot;
}

namespace detail {

// a, b as univariate polynomials in x with ParamPoly coefficients
inline std::vector<ParamPoly> univ(const ParamPoly& p, int x) {
    std::vector<ParamPoly> c(p.degree_in(x) + 1);
    for (unsigned k = 0; k < c.size(); ++k) c[k] = p.coeff_in(x, k);
    return c;
}

inline ParamPoly from_univ(const std::vector<ParamPoly>& c, int x) {
    ParamPoly r;
    for (unsigned k = 0; k < c.size(); ++k) r += c[k] * ParamPoly::symbol(x, k);
    return r;
}

}  // namespace detail

ParamPoly poly_gcd(const ParamPoly& a, const ParamPoly& b);

namespace detail {

/// gcd of the coefficients of p viewed as univariate in x (its "content").
inline ParamPoly content(const ParamPoly& p, int x) {
    ParamPoly g;
    for (auto c : univ(p, x)) {
        if (c.is_zero()) continue;
        g = g.is_zero() ? c : poly_gcd(g, c);
        if (g.is_constant()) break;
    }
    return g.is_zero() ? ParamPoly::one() : g;
}

/// Pseudo-remainder of a by b as univariate polynomials in x.
inline ParamPoly pseudo_rem(ParamPoly a, const ParamPoly& b, int x) {
    unsigned db = b.degree_in(x);
    ParamPoly lb = b.coeff_in(x, db);
    while (!a.is_zero() && a.degree_in(x) >= db) {
        unsigned da = a.degree_in(x);
        ParamPoly la = a.coeff_in(x, da);
        a = a * lb - b * la * ParamPoly::symbol(x, da - db);
    }
    return a;
}

}  // namespace detail

/// Multivariate gcd by primitive pseudo-remainder sequences.  The result is
/// normalized so that its canonical leading coefficient is 1.
inline ParamPoly poly_gcd(const ParamPoly& a, const ParamPoly& b) {
    auto normalize = [](ParamPoly p) {
        if (p.is_zero()) return p;
        return p.scaled(p.leading().second.inverse());
    };
    if (a.is_zero()) return normalize(b);
    if (b.is_zero()) return normalize(a);
    if (a.is_constant() || b.is_constant()) return ParamPoly::one();
    std::set<int> vars = a.support();
    for (int v : b.support()) vars.insert(v);
    int x = *vars.begin();
    if (!a.contains_symbol(x) || !b.contains_symbol(x)) {
        // x appears in only one of them: gcd divides the other's content
        const ParamPoly& with = a.contains_symbol(x) ? a : b;
        const ParamPoly& without = a.contains_symbol(x) ? b : a;
        return poly_gcd(detail::content(with, x), without);
    }
    ParamPoly ca = detail::content(a, x), cb = detail::content(b, x);
    ParamPoly g = poly_gcd(ca, cb);
    ParamPoly pa = *exact_divide(a, ca), pb = *exact_divide(b, cb);
    if (pa.degree_in(x) < pb.degree_in(x)) std::swap(pa, pb);
    while (!pb.is_zero()) {
        ParamPoly r = detail::pseudo_rem(pa, pb, x);
        pa = pb;
        if (r.is_zero())
            pb = ParamPoly();
        else
            pb = *exact_divide(r, detail::content(r, x));
    }
    return normalize(g * *exact_divide(pa, detail::content(pa, x)));
}

inline std::string to_string(const Mono& m, const SymbolTable& tab) {
    std::string out;
    for (auto& [id, e] : m) {
        if (!out.empty()) out += "*";
        out += tab.name(id);
        if (e > 1) out += "^" + std::to_string(e);
    }
    return out;
}

inline std::string to_string(const ParamPoly& p, const SymbolTable& tab) {
    if (p.is_zero()) return "0";
    std::string out;
    // print highest-degree terms first
    for (auto it = p.terms().rbegin(); it != p.terms().rend(); ++it) {
        auto& [m, c] = *it;
        std::string cs = to_string(c);
        bool neg = false;
        if (cs.size() > 1 && cs[0] == '-' && cs.find('+', 1) == std::string::npos &&
            cs.find('-', 1) == std::string::npos) {
            neg = true;
            cs = cs.substr(1);
        }
        if (out.empty())
            out += neg ? "-" : "";
        else
            out += neg ? " - " : " + ";
        bool complex_sum = cs.find('+') != std::string::npos ||
                           cs.find('-', 1) != std::string::npos;
        if (m.empty())
            out += complex_sum ? "(" + cs + ")" : cs;
        else if (cs == "1")
            out += to_string(m, tab);
        else if (complex_sum)
            out += "(" + cs + ")*" + to_string(m, tab);
        else
            out += cs + "*" + to_string(m, tab);
    }
    return out;
}

}  // namespace ncquant
