#pragma once

#include "ncquant/algebra.hpp"

namespace ncquant {

/// Derivation of the quantum algebra, determined by its generator images and
/// extended to products by the Leibniz rule.  The hbar^0 layer of each image
/// is the classical vector field; higher layers are quantum corrections.
/// Denominator images are derived, not stored: D(d) = -d * D(q) * d.
class Derivation {
  public:
    Derivation() = default;
    Derivation(const CommutationTable* table, int K)
        : table_(table), K_(K), images_(table->gens().num_gens()) {}

    int order() const { return K_; }
    const CommutationTable& table() const { return *table_; }

    void set_image(int g, NCElement im) {
        images_.at(g) = std::move(im);
        den_cache_ = std::make_shared<DenImageCache>();
    }
    const NCElement& image(int g) const { return images_.at(g); }

    const NCElement& den_image(int d) const {
        auto cache = den_cache_;
        std::lock_guard<std::mutex> lk(cache->mu);
        auto it = cache->map.find(d);
        if (it != cache->map.end()) return it->second;
        const GeneratorTable& G = table_->gens();
        NCElement q;
        for (auto& [exps, c] : G.den_poly(d)) {
            OrderedMonomial m = OrderedMonomial::unit(G);
            m.gen = exps;
            q.add(m, HSeries(c));
        }
        NCElement Dq = apply_unlocked(q);
        NCElement de = NCElement::denominator(G, d);
        NCElement r = -nc_mul(nc_mul(de, Dq, *table_, K_), de, *table_, K_);
        return cache->map.emplace(d, std::move(r)).first->second;
    }

    /// Leibniz extension to an arbitrary element; coefficients are constants.
    NCElement apply(const NCElement& a) const { return apply_unlocked(a); }

  private:
    NCElement apply_unlocked(const NCElement& a) const {
        std::vector<std::pair<Word, HSeries>> words;
        for (auto& [m, c] : a.terms()) {
            Word w = monomial_word(m);
            for (size_t pos = 0; pos < w.size(); ++pos) {
                const NCElement& im =
                    is_den_letter(w[pos]) ? den_image(den_index(w[pos])) : images_[w[pos]];
                for (auto& [im_m, im_c] : im.terms()) {
                    Word t(w.begin(), w.begin() + pos);
                    Word mw = monomial_word(im_m);
                    t.insert(t.end(), mw.begin(), mw.end());
                    t.insert(t.end(), w.begin() + pos + 1, w.end());
                    HSeries nc = (c * im_c).truncated(K_);
                    if (!nc.is_zero()) words.emplace_back(std::move(t), std::move(nc));
                }
            }
        }
        return normal_order_impl(words, *table_, K_, nullptr);
    }

    struct DenImageCache {
        std::mutex mu;
        std::map<int, NCElement> map;
    };

    const CommutationTable* table_ = nullptr;
    int K_ = 0;
    std::vector<NCElement> images_;
    std::shared_ptr<DenImageCache> den_cache_ = std::make_shared<DenImageCache>();
};

/// The inner derivation (1/i hbar) [ . , H ].
inline Derivation inner_derivation(const NCElement& H, const CommutationTable& table, int K) {
    Derivation D(&table, K);
    const GeneratorTable& G = table.gens();
    for (int g = 0; g < G.num_gens(); ++g) {
        NCElement c = nc_commutator(NCElement::generator(G, g), H, table, K + 1);
        D.set_image(g, c.truncated(K + 1).hbar_div(1).truncated(K).scaled(Scalar(0, -1)));
    }
    return D;
}

/// Lie series coefficients: per generator, the coefficient of t^m / m! for
/// m = 0..M, with coefficient(m+1) = D(coefficient(m)).
struct FlowSeries {
    std::vector<std::vector<NCElement>> coeffs;  // [generator][m]
};

inline FlowSeries formal_flow(const Derivation& D, int M) {
    const GeneratorTable& G = D.table().gens();
    FlowSeries out;
    out.coeffs.resize(G.num_gens());
    for (int g = 0; g < G.num_gens(); ++g) {
        out.coeffs[g].push_back(NCElement::generator(G, g));
        for (int m = 0; m < M; ++m) out.coeffs[g].push_back(D.apply(out.coeffs[g].back()));
    }
    return out;
}

}  // namespace ncquant
