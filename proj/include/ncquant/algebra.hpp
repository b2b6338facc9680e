#pragma once

#include <cassert>
#include <deque>
#include <memory>
#include <mutex>
#include <set>
#include <tuple>

#include "ncquant/series.hpp"

namespace ncquant {

/// Commutative polynomial in generator exponents, used for denominator
/// defining relations and for the localized reduction pass.
template <typename Coeff>
using GenPoly = std::map<std::vector<unsigned>, Coeff>;

/// Declaration-ordered generators plus localized denominators d with a
/// defining polynomial q (so that d*q = 1).  The defining polynomial must be
/// supported on generators that commute exactly with each other.
class GeneratorTable {
  public:
    int declare(const std::string& name) {
        gens_.push_back(name);
        return static_cast<int>(gens_.size()) - 1;
    }

    int declare_denominator(const std::string& name, GenPoly<ParamRatio> q) {
        Den d;
        d.name = name;
        for (auto& [exps, c] : q) {
            if (exps.size() != gens_.size())
                throw std::invalid_argument("denominator defining polynomial has wrong arity");
            for (size_t k = 0; k < exps.size(); ++k)
                if (exps[k] > 0) d.support.insert(static_cast<int>(k));
        }
        d.q = std::move(q);
        dens_.push_back(std::move(d));
        return static_cast<int>(dens_.size()) - 1;
    }

    int num_gens() const { return static_cast<int>(gens_.size()); }
    int num_dens() const { return static_cast<int>(dens_.size()); }
    const std::string& gen_name(int i) const { return gens_.at(i); }
    const std::string& den_name(int i) const { return dens_.at(i).name; }
    const GenPoly<ParamRatio>& den_poly(int i) const { return dens_.at(i).q; }
    const std::set<int>& den_support(int i) const { return dens_.at(i).support; }

    std::optional<int> find_gen(const std::string& n) const {
        for (int k = 0; k < num_gens(); ++k)
            if (gens_[k] == n) return k;
        return std::nullopt;
    }
    std::optional<int> find_den(const std::string& n) const {
        for (int k = 0; k < num_dens(); ++k)
            if (dens_[k].name == n) return k;
        return std::nullopt;
    }

  private:
    struct Den {
        std::string name;
        GenPoly<ParamRatio> q;
        std::set<int> support;
    };
    std::vector<std::string> gens_;
    std::vector<Den> dens_;
};

/// Canonical monomial: denominator factors leftmost, then generators in
/// declaration order.
struct OrderedMonomial {
    std::vector<unsigned> den;  // exponents over denominator symbols
    std::vector<unsigned> gen;  // exponents N_1..N_n over generators

    static OrderedMonomial unit(const GeneratorTable& G) {
        return {std::vector<unsigned>(G.num_dens(), 0), std::vector<unsigned>(G.num_gens(), 0)};
    }
    static OrderedMonomial generator(const GeneratorTable& G, int i, unsigned e = 1) {
        auto m = unit(G);
        m.gen[i] = e;
        return m;
    }
    static OrderedMonomial denominator(const GeneratorTable& G, int d, unsigned e = 1) {
        auto m = unit(G);
        m.den[d] = e;
        return m;
    }

    unsigned total_degree() const {
        unsigned t = 0;
        for (auto e : den) t += e;
        for (auto e : gen) t += e;
        return t;
    }
    bool is_unit() const { return total_degree() == 0; }

    OrderedMonomial operator*(const OrderedMonomial& o) const {
        OrderedMonomial r = *this;
        for (size_t k = 0; k < den.size(); ++k) r.den[k] += o.den[k];
        for (size_t k = 0; k < gen.size(); ++k) r.gen[k] += o.gen[k];
        return r;
    }

    bool operator==(const OrderedMonomial& o) const { return den == o.den && gen == o.gen; }
    bool operator<(const OrderedMonomial& o) const {
        unsigned ta = total_degree(), tb = o.total_degree();
        if (ta != tb) return ta < tb;
        if (den != o.den) return den < o.den;
        return gen < o.gen;
    }
};

/// Pre-canonical product: a free sequence of letters.  Letter >= 0 is a
/// generator index, letter < 0 is denominator index -1-letter.
using Word = std::vector<int>;

inline int den_letter(int d) { return -1 - d; }
inline bool is_den_letter(int l) { return l < 0; }
inline int den_index(int l) { return -1 - l; }

inline Word monomial_word(const OrderedMonomial& m) {
    Word w;
    for (size_t d = 0; d < m.den.size(); ++d)
        for (unsigned k = 0; k < m.den[d]; ++k) w.push_back(den_letter(static_cast<int>(d)));
    for (size_t g = 0; g < m.gen.size(); ++g)
        for (unsigned k = 0; k < m.gen[g]; ++k) w.push_back(static_cast<int>(g));
    return w;
}

class CommutationTable;

/// Normal-ordered noncommutative polynomial (with optional central
/// denominator factors) over HSeries coefficients.
class NCElement {
  public:
    using Terms = std::map<OrderedMonomial, HSeries>;

    NCElement() = default;

    static NCElement unit(const GeneratorTable& G, HSeries c = HSeries(ParamRatio::one())) {
        NCElement e;
        e.add(OrderedMonomial::unit(G), std::move(c));
        return e;
    }
    static NCElement generator(const GeneratorTable& G, int i) {
        NCElement e;
        e.add(OrderedMonomial::generator(G, i), HSeries(ParamRatio::one()));
        return e;
    }
    static NCElement denominator(const GeneratorTable& G, int d) {
        NCElement e;
        e.add(OrderedMonomial::denominator(G, d), HSeries(ParamRatio::one()));
        return e;
    }
    static NCElement monomial(OrderedMonomial m, HSeries c) {
        NCElement e;
        e.add(std::move(m), std::move(c));
        return e;
    }

    const Terms& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    void add(const OrderedMonomial& m, const HSeries& c) {
        if (c.is_zero()) return;
        auto it = terms_.find(m);
        if (it == terms_.end())
            terms_[m] = c;
        else {
            it->second += c;
            if (it->second.is_zero()) terms_.erase(it);
        }
    }

    const HSeries& coeff(const OrderedMonomial& m) const {
        static const HSeries zero;
        auto it = terms_.find(m);
        return it == terms_.end() ? zero : it->second;
    }

    NCElement operator+(const NCElement& o) const {
        NCElement r = *this;
        for (auto& [m, c] : o.terms_) r.add(m, c);
        return r;
    }
    NCElement operator-(const NCElement& o) const {
        NCElement r = *this;
        for (auto& [m, c] : o.terms_) r.add(m, -c);
        return r;
    }
    NCElement operator-() const {
        NCElement r;
        for (auto& [m, c] : terms_) r.terms_[m] = -c;
        return r;
    }
    NCElement& operator+=(const NCElement& o) { return *this = *this + o; }
    NCElement& operator-=(const NCElement& o) { return *this = *this - o; }

    NCElement scaled(const HSeries& s) const {
        NCElement r;
        for (auto& [m, c] : terms_) r.add(m, c * s);
        return r;
    }
    NCElement scaled(const ParamRatio& s) const { return scaled(HSeries(s)); }
    NCElement scaled(const Scalar& s) const { return scaled(HSeries(ParamRatio(s))); }

    NCElement truncated(int K) const {
        NCElement r;
        for (auto& [m, c] : terms_) r.add(m, c.truncated(K));
        return r;
    }

    /// Minimum hbar-valuation over all coefficients (-1 if zero).
    int valuation() const {
        int v = -1;
        for (auto& [m, c] : terms_) {
            int cv = c.valuation();
            if (cv >= 0 && (v < 0 || cv < v)) v = cv;
        }
        return v;
    }
    int top_hbar_degree() const {
        int v = -1;
        for (auto& [m, c] : terms_) v = std::max(v, c.top_degree());
        return v;
    }
    unsigned max_total_degree() const {
        unsigned d = 0;
        for (auto& [m, c] : terms_) d = std::max(d, m.total_degree());
        return d;
    }

    /// The hbar^k layer as an element with degree-0 coefficients.
    NCElement hbar_layer(int k) const {
        NCElement r;
        for (auto& [m, c] : terms_)
            r.add(m, HSeries(c.coeff(k), c.cap()));
        return r;
    }

    NCElement hbar_div(int k) const {
        NCElement r;
        for (auto& [m, c] : terms_) {
            if (!c.is_zero() && c.valuation() < k)
                throw std::domain_error("NCElement: not divisible by hbar^" + std::to_string(k));
            r.add(m, c.shifted_down(k));
        }
        return r;
    }
    NCElement hbar_mul(int k) const {
        NCElement r;
        for (auto& [m, c] : terms_) r.add(m, c.shifted_up(k));
        return r;
    }

    NCElement substitute(int sym, const ParamRatio& value) const {
        NCElement r;
        for (auto& [m, c] : terms_)
            r.add(m, c.map([&](const ParamRatio& x) { return ratio_substitute(x, sym, value); }));
        return r;
    }

    bool operator==(const NCElement& o) const { return terms_ == o.terms_; }
    bool operator!=(const NCElement& o) const { return !(*this == o); }

  private:
    Terms terms_;
};

/// For each generator pair i<j, the reordering series F(i,j) in
/// x_j x_i = x_i x_j + F(i,j), with F of hbar-valuation >= 1.  Derived
/// generator/denominator commutation rules are memoized per truncation order.
class CommutationTable {
  public:
    explicit CommutationTable(const GeneratorTable* G = nullptr) : G_(G) {
        if (G_) f_.resize(G_->num_gens(), std::vector<NCElement>(G_->num_gens()));
    }

    const GeneratorTable& gens() const { return *G_; }

    void set_f(int i, int j, NCElement F) {
        assert(i < j);
        if (!F.is_zero() && F.valuation() < 1)
            throw std::invalid_argument("commutation series must have hbar-valuation >= 1");
        f_[i][j] = std::move(F);
        cache_ = std::make_shared<DenCache>();
    }
    const NCElement& f(int i, int j) const {
        assert(i < j);
        return f_[i][j];
    }

    /// Commutator [x_i, x_j] as an element (i, j in any order).
    NCElement bracket(int i, int j) const {
        if (i == j) return NCElement();
        if (i < j) return -f_[i][j];
        return f_[j][i];
    }

    /// Derived commutator [x_g, d] = -d [x_g, q] d, resolved to a localized
    /// canonical element by a fixed-point iteration in hbar-valuation.
    const NCElement& den_comm(int g, int d, int K) const;

    bool gen_commutes_with_den(int g, int d, int K) const { return den_comm(g, d, K).is_zero(); }

  private:
    // write-once memo of derived denominator commutators, shared across
    // copies of an unmodified table
    struct DenCache {
        std::mutex mu;
        std::map<std::tuple<int, int, int>, NCElement> map;
    };

    const GeneratorTable* G_;
    std::vector<std::vector<NCElement>> f_;
    std::shared_ptr<DenCache> cache_ = std::make_shared<DenCache>();

    friend NCElement normal_order_impl(const std::vector<std::pair<Word, HSeries>>& input,
                                       const CommutationTable& table, int K,
                                       const std::map<std::pair<int, int>, NCElement>* den_override);
};

NCElement reduce_denominators(const NCElement& e, const GeneratorTable& G, int K);

/// Core rewriting loop: repeatedly resolves the leftmost out-of-order
/// adjacent pair.  Each swap either lowers the inversion count at fixed
/// hbar-degree or raises the hbar-degree, which is capped at K.
inline NCElement normal_order_impl(const std::vector<std::pair<Word, HSeries>>& input,
                                   const CommutationTable& table, int K,
                                   const std::map<std::pair<int, int>, NCElement>* den_override) {
    const GeneratorTable& G = table.gens();
    NCElement out;
    std::deque<std::pair<Word, HSeries>> work(input.begin(), input.end());

    auto den_rule = [&](int g, int d) -> const NCElement& {
        if (den_override) {
            auto it = den_override->find({g, d});
            if (it != den_override->end()) return it->second;
        }
        return table.den_comm(g, d, K);
    };

    while (!work.empty()) {
        auto [w, c] = std::move(work.front());
        work.pop_front();
        c = c.truncated(K);
        if (c.is_zero()) continue;

        size_t pos = 0;
        bool reduced = true;
        for (; pos + 1 < w.size(); ++pos) {
            int a = w[pos], b = w[pos + 1];
            bool violation =
                (!is_den_letter(a) && !is_den_letter(b) && a > b) ||
                (is_den_letter(a) && is_den_letter(b) && den_index(a) > den_index(b)) ||
                (!is_den_letter(a) && is_den_letter(b));
            if (violation) {
                reduced = false;
                break;
            }
        }

        if (reduced) {
            OrderedMonomial m = OrderedMonomial::unit(G);
            for (int l : w)
                if (is_den_letter(l))
                    ++m.den[den_index(l)];
                else
                    ++m.gen[l];
            out.add(m, c);
            continue;
        }

        int a = w[pos], b = w[pos + 1];
        Word prefix(w.begin(), w.begin() + pos);
        Word suffix(w.begin() + pos + 2, w.end());
        auto splice = [&](int first, int second, const NCElement& corr) {
            Word base = prefix;
            base.push_back(first);
            base.push_back(second);
            base.insert(base.end(), suffix.begin(), suffix.end());
            work.emplace_front(std::move(base), c);
            for (auto& [cm, cc] : corr.terms()) {
                Word t = prefix;
                Word mw = monomial_word(cm);
                t.insert(t.end(), mw.begin(), mw.end());
                t.insert(t.end(), suffix.begin(), suffix.end());
                HSeries nc = (c * cc).truncated(K);
                if (!nc.is_zero()) work.emplace_back(std::move(t), std::move(nc));
            }
        };
        if (!is_den_letter(a) && !is_den_letter(b)) {
            // x_a x_b with a > b:  x_a x_b = x_b x_a + F(b, a)
            splice(b, a, table.f(b, a));
        } else if (is_den_letter(a) && is_den_letter(b)) {
            splice(b, a, NCElement());  // denominators commute
        } else {
            // generator then denominator: g d = d g + [g, d]
            splice(b, a, den_rule(a, den_index(b)));
        }
    }
    return reduce_denominators(out, G, K);
}

inline NCElement normal_order(const Word& w, const CommutationTable& table, int K,
                              HSeries coeff = HSeries(ParamRatio::one())) {
    for (int l : w) {
        if (is_den_letter(l)) {
            if (den_index(l) >= table.gens().num_dens())
                throw std::invalid_argument("unknown denominator symbol in word");
        } else if (l >= table.gens().num_gens()) {
            throw std::invalid_argument("unknown generator symbol in word");
        }
    }
    return normal_order_impl({{w, std::move(coeff)}}, table, K, nullptr);
}

inline NCElement nc_mul(const NCElement& a, const NCElement& b, const CommutationTable& table,
                        int K) {
    std::vector<std::pair<Word, HSeries>> words;
    for (auto& [ma, ca] : a.terms())
        for (auto& [mb, cb] : b.terms()) {
            HSeries c = (ca * cb).truncated(K);
            if (c.is_zero()) continue;
            Word w = monomial_word(ma);
            Word wb = monomial_word(mb);
            w.insert(w.end(), wb.begin(), wb.end());
            words.emplace_back(std::move(w), std::move(c));
        }
    return normal_order_impl(words, table, K, nullptr);
}

inline NCElement nc_commutator(const NCElement& a, const NCElement& b,
                               const CommutationTable& table, int K) {
    return nc_mul(a, b, table, K) - nc_mul(b, a, table, K);
}

/// Anti-automorphism: reverses each monomial, conjugates coefficients,
/// normal-orders.  Generators and denominators are fixed points.
inline NCElement involute(const NCElement& a, const CommutationTable& table, int K) {
    std::vector<std::pair<Word, HSeries>> words;
    for (auto& [m, c] : a.terms()) {
        Word w = monomial_word(m);
        std::reverse(w.begin(), w.end());
        words.emplace_back(std::move(w), c.conj());
    }
    return normal_order_impl(words, table, K, nullptr);
}

inline const NCElement& CommutationTable::den_comm(int g, int d, int K) const {
    auto cache = cache_;
    {
        std::lock_guard<std::mutex> lk(cache->mu);
        auto it = cache->map.find({g, d, K});
        if (it != cache->map.end()) return it->second;
    }
    // Fixed point over all generators for this denominator: every use of a
    // derived rule carries at least one extra power of hbar, so K+1 rounds
    // suffice.
    const GeneratorTable& G = *G_;
    std::map<std::pair<int, int>, NCElement> approx;
    for (int gg = 0; gg < G.num_gens(); ++gg) approx[{gg, d}] = NCElement();
    for (int round = 0; round <= K; ++round) {
        std::map<std::pair<int, int>, NCElement> next;
        bool changed = false;
        for (int gg = 0; gg < G.num_gens(); ++gg) {
            // A = [x_gg, q]
            std::vector<std::pair<Word, HSeries>> words;
            for (auto& [exps, qc] : G.den_poly(d)) {
                OrderedMonomial qm = OrderedMonomial::unit(G);
                qm.gen = exps;
                Word base = monomial_word(qm);
                Word left = {gg};
                left.insert(left.end(), base.begin(), base.end());
                words.emplace_back(std::move(left), HSeries(qc));
                Word right = base;
                right.push_back(gg);
                words.emplace_back(std::move(right), HSeries(qc).scaled(Scalar(-1)));
            }
            NCElement A = normal_order_impl(words, *this, K, &approx);
            // C = -d A d
            std::vector<std::pair<Word, HSeries>> cw;
            for (auto& [m, c] : A.terms()) {
                Word w = {den_letter(d)};
                Word mw = monomial_word(m);
                w.insert(w.end(), mw.begin(), mw.end());
                w.push_back(den_letter(d));
                cw.emplace_back(std::move(w), -c);
            }
            NCElement C = normal_order_impl(cw, *this, K, &approx);
            if (!(C == approx[{gg, d}])) changed = true;
            next[{gg, d}] = std::move(C);
        }
        approx = std::move(next);
        if (!changed) break;
    }
    std::lock_guard<std::mutex> lk(cache->mu);
    for (int gg = 0; gg < G.num_gens(); ++gg) {
        auto key = std::make_tuple(gg, d, K);
        if (!cache->map.count(key)) cache->map[key] = approx[{gg, d}];
    }
    return cache->map[{g, d, K}];
}

/// Applies the defining relations d*q = 1 to put denominator-bearing terms
/// in the canonical form d^m * (polynomial not divisible by q).
inline NCElement reduce_denominators(const NCElement& e, const GeneratorTable& G, int K) {
    NCElement cur;
    for (auto& [m, c] : e.terms()) cur.add(m, c.truncated(K));
    for (int d = 0; d < G.num_dens(); ++d) {
        const auto& support = G.den_support(d);
        // Group terms by everything outside (this denominator, its support).
        struct Group {
            std::map<std::vector<unsigned>, HSeries> parts;  // support exps x den exp appended
            unsigned max_den = 0;
        };
        std::map<OrderedMonomial, Group> groups;
        for (auto& [m, c] : cur.terms()) {
            OrderedMonomial key = m;
            std::vector<unsigned> sup;
            for (int s : support) {
                sup.push_back(m.gen[s]);
                key.gen[s] = 0;
            }
            sup.push_back(m.den[d]);
            key.den[d] = 0;
            auto& grp = groups[key];
            grp.parts[sup] = c;
            grp.max_den = std::max(grp.max_den, m.den[d]);
        }
        // q as a polynomial over the support variables
        GenPoly<ParamRatio> q;
        for (auto& [exps, qc] : G.den_poly(d)) {
            std::vector<unsigned> se;
            for (int s : support) se.push_back(exps[s]);
            q[se] = qc;
        }
        NCElement next;
        for (auto& [key, grp] : groups) {
            unsigned m0 = grp.max_den;
            // N = sum c * x^a * q^(m0 - j)
            GenPoly<HSeries> N;
            for (auto& [sup, c] : grp.parts) {
                unsigned j = sup.back();
                std::vector<unsigned> a(sup.begin(), sup.end() - 1);
                GenPoly<HSeries> term{{a, c}};
                for (unsigned k = 0; k + j < m0; ++k) {
                    GenPoly<HSeries> prod;
                    for (auto& [e1, c1] : term)
                        for (auto& [e2, c2] : q) {
                            std::vector<unsigned> es(e1.size());
                            for (size_t t = 0; t < es.size(); ++t) es[t] = e1[t] + e2[t];
                            auto& slot = prod[es];
                            slot += c1.scaled(c2);
                        }
                    term = std::move(prod);
                }
                for (auto& [ee, cc] : term) {
                    auto& slot = N[ee];
                    slot += cc;
                }
            }
            for (auto it = N.begin(); it != N.end();)
                it = it->second.is_zero() ? N.erase(it) : std::next(it);
            // division with remainder N = Q*q + R (lex on the support
            // exponents); emitting R at each level and descending through Q
            // yields the unique form with no level-(>=1) term divisible by
            // the leading monomial of q
            auto div_rem = [&](GenPoly<HSeries> num) {
                GenPoly<HSeries> quot, rem;
                auto qlead = std::prev(q.end());
                while (!num.empty()) {
                    auto rlead = std::prev(num.end());
                    if (rlead->second.is_zero()) {
                        num.erase(rlead);
                        continue;
                    }
                    bool divisible = true;
                    std::vector<unsigned> qe(rlead->first.size());
                    for (size_t t = 0; t < qe.size(); ++t) {
                        if (rlead->first[t] < qlead->first[t]) {
                            divisible = false;
                            break;
                        }
                        qe[t] = rlead->first[t] - qlead->first[t];
                    }
                    if (!divisible) {
                        rem[rlead->first] = rlead->second;
                        num.erase(rlead);
                        continue;
                    }
                    HSeries qc = rlead->second.scaled(qlead->second.inverse());
                    auto& qslot = quot[qe];
                    qslot += qc;
                    for (auto& [e2, c2] : q) {
                        std::vector<unsigned> es(qe.size());
                        for (size_t t = 0; t < es.size(); ++t) es[t] = qe[t] + e2[t];
                        auto& slot = num[es];
                        slot -= qc.scaled(c2);
                        if (slot.is_zero()) num.erase(es);
                    }
                }
                return std::pair{std::move(quot), std::move(rem)};
            };
            auto emit = [&](const GenPoly<HSeries>& part, unsigned level) {
                for (auto& [ee, cc] : part) {
                    OrderedMonomial m = key;
                    m.den[d] = level;
                    size_t t = 0;
                    for (int s : support) m.gen[s] = ee[t++];
                    next.add(m, cc.truncated(K));
                }
            };
            unsigned level = m0;
            while (level > 0 && !N.empty()) {
                auto [quot, rem] = div_rem(std::move(N));
                emit(rem, level);
                N = std::move(quot);
                --level;
            }
            emit(N, level);
        }
        cur = std::move(next);
    }
    return cur;
}

inline std::string to_string(const OrderedMonomial& m, const GeneratorTable& G) {
    std::string out;
    for (size_t d = 0; d < m.den.size(); ++d)
        if (m.den[d]) {
            if (!out.empty()) out += "*";
            out += G.den_name(static_cast<int>(d));
            if (m.den[d] > 1) out += "^" + std::to_string(m.den[d]);
        }
    for (size_t g = 0; g < m.gen.size(); ++g)
        if (m.gen[g]) {
            if (!out.empty()) out += "*";
            out += G.gen_name(static_cast<int>(g));
            if (m.gen[g] > 1) out += "^" + std::to_string(m.gen[g]);
        }
    return out.empty() ? "1" : out;
}

inline std::string to_string(const NCElement& e, const GeneratorTable& G, const SymbolTable& tab) {
    if (e.is_zero()) return "0";
    std::string out;
    for (auto& [m, c] : e.terms()) {
        if (!out.empty()) out += " + ";
        std::string cs = to_string(c, tab);
        bool atom = cs.find(' ') == std::string::npos;
        if (m.is_unit())
            out += cs;
        else if (cs == "1")
            out += to_string(m, G);
        else
            out += (atom ? cs : "(" + cs + ")") + "*" + to_string(m, G);
    }
    return out;
}

}  // namespace ncquant
