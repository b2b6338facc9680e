#pragma once

#include <limits>
#include <vector>

#include "ncquant/ratio.hpp"

namespace ncquant {

/// Truncation order meaning "no truncation": the value is an exact
/// polynomial in hbar.
inline constexpr int kExactOrder = std::numeric_limits<int>::max() / 2;

/// Finite power series in hbar with ParamRatio coefficients, graded by
/// hbar-degree and truncated at an order cap.  Coefficients of degree > cap
/// are unknown (discarded); a cap of kExactOrder marks an exact polynomial.
class HSeries {
  public:
    HSeries() : cap_(kExactOrder) {}
    explicit HSeries(int cap) : cap_(cap) {}
    HSeries(ParamRatio c0, int cap = kExactOrder) : cap_(cap) {
        parts_.push_back(std::move(c0));
        normalize();
    }
    static HSeries term(ParamRatio c, int hbar_deg, int cap = kExactOrder) {
        HSeries s(cap);
        if (hbar_deg <= cap) {
            s.parts_.assign(hbar_deg + 1, ParamRatio());
            s.parts_[hbar_deg] = std::move(c);
        }
        s.normalize();
        return s;
    }

    int cap() const { return cap_; }
    bool is_zero() const { return parts_.empty(); }
    int size() const { return static_cast<int>(parts_.size()); }

    const ParamRatio& coeff(int k) const {
        static const ParamRatio zero;
        return (k >= 0 && k < size()) ? parts_[k] : zero;
    }

    /// Lowest nonzero hbar-degree; -1 for the zero series.
    int valuation() const {
        for (int k = 0; k < size(); ++k)
            if (!parts_[k].is_zero()) return k;
        return -1;
    }
    int top_degree() const { return size() - 1; }

    HSeries truncated(int cap) const {
        HSeries r(std::min(cap, cap_));
        r.parts_ = parts_;
        r.normalize();
        return r;
    }

    HSeries operator-() const {
        HSeries r(cap_);
        for (auto& c : parts_) r.parts_.push_back(-c);
        return r;
    }
    HSeries operator+(const HSeries& o) const {
        HSeries r(std::min(cap_, o.cap_));
        r.parts_.resize(std::max(parts_.size(), o.parts_.size()));
        for (size_t k = 0; k < r.parts_.size(); ++k)
            r.parts_[k] = coeff(static_cast<int>(k)) + o.coeff(static_cast<int>(k));
        r.normalize();
        return r;
    }
    HSeries operator-(const HSeries& o) const { return *this + (-o); }
    HSeries operator*(const HSeries& o) const {
        HSeries r(std::min(cap_, o.cap_));
        if (is_zero() || o.is_zero()) return r;
        r.parts_.assign(std::min<size_t>(parts_.size() + o.parts_.size() - 1,
                                         static_cast<size_t>(r.cap_) + 1),
                        ParamRatio());
        for (size_t a = 0; a < parts_.size(); ++a)
            for (size_t b = 0; b < o.parts_.size(); ++b)
                if (a + b < r.parts_.size()) r.parts_[a + b] += parts_[a] * o.parts_[b];
        r.normalize();
        return r;
    }
    HSeries& operator+=(const HSeries& o) { return *this = *this + o; }
    HSeries& operator-=(const HSeries& o) { return *this = *this - o; }
    HSeries& operator*=(const HSeries& o) { return *this = *this * o; }

    HSeries scaled(const ParamRatio& s) const {
        HSeries r(cap_);
        for (auto& c : parts_) r.parts_.push_back(c * s);
        r.normalize();
        return r;
    }
    HSeries scaled(const Scalar& s) const { return scaled(ParamRatio(s)); }

    /// Multiplication by hbar^k.
    HSeries shifted_up(int k) const {
        HSeries r(cap_);
        r.parts_.assign(parts_.size() + k, ParamRatio());
        for (size_t j = 0; j < parts_.size(); ++j) r.parts_[j + k] = parts_[j];
        r.normalize();
        return r;
    }
    /// Division by hbar^k; requires valuation >= k.
    HSeries shifted_down(int k) const {
        if (!is_zero() && valuation() < k)
            throw std::domain_error("HSeries: not divisible by hbar^" + std::to_string(k));
        HSeries r(cap_ == kExactOrder ? kExactOrder : cap_ - k);
        for (size_t j = k; j < parts_.size(); ++j) r.parts_.push_back(parts_[j]);
        r.normalize();
        return r;
    }

    HSeries conj() const {
        HSeries r(cap_);
        for (auto& c : parts_) r.parts_.push_back(c.conj());
        return r;
    }

    bool operator==(const HSeries& o) const { return parts_ == o.parts_; }
    bool operator!=(const HSeries& o) const { return !(*this == o); }
    bool operator<(const HSeries& o) const { return parts_ < o.parts_; }

    template <typename F>
    HSeries map(F&& f) const {
        HSeries r(cap_);
        for (auto& c : parts_) r.parts_.push_back(f(c));
        r.normalize();
        return r;
    }

  private:
    void normalize() {
        if (cap_ < kExactOrder && size() > cap_ + 1) parts_.resize(cap_ + 1);
        while (!parts_.empty() && parts_.back().is_zero()) parts_.pop_back();
    }

    int cap_;
    std::vector<ParamRatio> parts_;
};

inline std::string to_string(const HSeries& s, const SymbolTable& tab) {
    if (s.is_zero()) return "0";
    std::string out;
    for (int k = 0; k < s.size(); ++k) {
        if (s.coeff(k).is_zero()) continue;
        if (!out.empty()) out += " + ";
        std::string c = to_string(s.coeff(k), tab);
        bool atom = c.find(' ') == std::string::npos;
        if (k == 0)
            out += c;
        else {
            std::string h = k == 1 ? "hbar" : "hbar^" + std::to_string(k);
            if (c == "1")
                out += h;
            else
                out += (atom ? c : "(" + c + ")") + "*" + h;
        }
    }
    return out;
}

}  // namespace ncquant
