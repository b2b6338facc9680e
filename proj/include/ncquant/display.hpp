#pragma once

#include <string>
#include <vector>

#include "ncquant/solver.hpp"

namespace ncquant {

/// One named member of the solved relation family: the hbar^k coefficient of
/// `mono` in the table entry of the pair (i, j), displayed under `name` after
/// stripping the slot phase.
struct FamilySlot {
    int i = -1, j = -1, k = 0;
    OrderedMonomial mono;
    Scalar phase;  // multiplies the raw coefficient to recover the named value
    int sym = -1;
    std::string name;
};

namespace detail {

/// Levi-Civita sign of (i, j, l) as a permutation of (0, 1, 2); 0 otherwise.
inline int epsilon3(int i, int j, int l) {
    if (i == j || j == l || i == l) return 0;
    if (i > 2 || j > 2 || l > 2 || i < 0 || j < 0 || l < 0) return 0;
    int sign = 1;
    int p[3] = {i, j, l};
    for (int x = 0; x < 3; ++x)
        for (int y = x + 1; y < 3; ++y)
            if (p[x] > p[y]) std::swap(p[x], p[y]), sign = -sign;
    return sign;
}

/// Renders a linear relation `rel = 0` with denominators cleared and the
/// coefficients scaled to a primitive integral form, leading sign positive.
inline std::string cleared_relation(const ParamRatio& rel, const SymbolTable& tab) {
    ParamPoly p = rel.num();
    using boost::multiprecision::cpp_int;
    cpp_int den_lcm = 1, num_gcd = 0;
    auto feed = [&](const Rational& q) {
        if (q == 0) return;
        cpp_int n = boost::multiprecision::numerator(q);
        cpp_int d = boost::multiprecision::denominator(q);
        den_lcm = boost::multiprecision::lcm(den_lcm, d);
        num_gcd = boost::multiprecision::gcd(num_gcd, boost::multiprecision::abs(n));
    };
    for (auto& [m, c] : p.terms()) feed(c.re), feed(c.im);
    if (num_gcd == 0) num_gcd = 1;
    Rational scale(den_lcm, num_gcd);
    const Scalar& lead = p.terms().rbegin()->second;
    if (lead.re < 0 || (lead.re == 0 && lead.im < 0)) scale = -scale;
    p = ParamPoly(Scalar(scale)) * p;
    return to_string(p, tab) + " = 0";
}

}  // namespace detail

/// Reparameterizes a solved family for display.  The surviving internal slot
/// symbols are replaced by named parameters read off the commutation table:
/// the hbar^1 coefficient of a lone unit-monomial slot becomes "k", a
/// single-generator slot over three generators becomes the conventional
/// "f<gen>", and anything else is serial-named.  Affine relations among the
/// named values are recorded in `result.constraints` with denominators
/// cleared; `extra` elements (e.g. a Hamiltonian candidate) are rewritten in
/// the same parameters.
inline std::vector<FamilySlot> present_family(QuantizationResult& r, SymbolTable& tab,
                                              const std::vector<NCElement*>& extra = {}) {
    const GeneratorTable& G = *r.G;
    if (r.free_syms.empty()) return {};
    auto touches_family = [&](const ParamRatio& c) {
        for (int s : r.free_syms)
            if (c.num().degree_in(s) > 0 || c.den().degree_in(s) > 0) return true;
        return false;
    };

    std::vector<FamilySlot> slots;
    for (int i = 0; i < G.num_gens(); ++i)
        for (int j = i + 1; j < G.num_gens(); ++j)
            for (auto& [mono, series] : r.table->f(i, j).terms())
                for (int k = 1; k < series.size(); ++k) {
                    const ParamRatio& c = series.coeff(k);
                    if (c.is_zero() || !touches_family(c)) continue;
                    FamilySlot s;
                    s.i = i, s.j = j, s.k = k, s.mono = mono;
                    s.phase = detail::i_power(k).conj();  // strip the i^k slot phase
                    slots.push_back(std::move(s));
                }
    if (slots.empty()) return {};

    // conventional names: f<l> for a single-generator slot over 3 generators,
    // "k" for a lone unit slot, serial c<n> otherwise
    int serial = 0;
    for (auto& s : slots) {
        bool pure_gen = true;
        int l = -1;
        unsigned total = 0;
        for (size_t d = 0; d < s.mono.den.size(); ++d)
            if (s.mono.den[d] > 0) pure_gen = false;
        for (size_t g = 0; g < s.mono.gen.size(); ++g)
            if (s.mono.gen[g] > 0) l = static_cast<int>(g), total += s.mono.gen[g];
        std::string base;
        if (s.k == 1 && pure_gen && total == 1 && G.num_gens() == 3 &&
            detail::epsilon3(s.i, s.j, l) != 0) {
            base = "f" + std::to_string(l + 1);
            s.phase = s.phase * Scalar(-detail::epsilon3(s.i, s.j, l));
        } else if (s.k == 1 && pure_gen && total == 0 && slots.size() == 1) {
            base = "k";
        } else {
            base = "c" + std::to_string(++serial);
        }
        std::string name = base;
        int suffix = 1;
        while (tab.find(name)) name = base + "_" + std::to_string(++suffix);
        s.name = name;
        s.sym = tab.declare(name, SymbolKind::FreeParam);
    }

    // named value = phase * coefficient; solve the defining rows for the
    // internal survivors and push the substitution through the result
    detail::EquationSink sink(r.free_syms, tab);
    for (auto& s : slots) {
        ParamRatio v = r.table->f(s.i, s.j).coeff(s.mono).coeff(s.k).scaled(s.phase);
        sink.add_zero_condition(v - ParamRatio::symbol(s.sym), "family presentation");
    }
    auto sol = solve_parametric_linear(sink.equations(), sink.num_unknowns(), tab);
    for (auto& a : sol.assumptions) detail::push_unique(r.assumptions, a);
    std::vector<int> kept;
    detail::Substitution sub = detail::solution_substitution(sol, sink, &kept);
    for (int i = 0; i < G.num_gens(); ++i) {
        for (int j = i + 1; j < G.num_gens(); ++j) r.table->set_f(i, j, sub(r.table->f(i, j)));
        r.derivation.set_image(i, sub(r.derivation.image(i)));
    }
    for (auto& [n, I] : r.integrals) I = sub(I);
    for (NCElement* e : extra)
        if (e) *e = sub(*e);

    // relations among the named parameters surface as leftover rows
    for (auto& c : sol.leftovers)
        detail::push_unique(r.constraints, detail::cleared_relation(c, tab));

    r.free_syms.clear();
    r.free_params.clear();
    for (auto& s : slots) {
        r.free_syms.push_back(s.sym);
        r.free_params.push_back(s.name);
    }
    for (int s : kept) {
        r.free_syms.push_back(s);
        r.free_params.push_back(tab.name(s));
    }
    return slots;
}

/// After further solving narrowed the family (e.g. the Heisenberg condition),
/// reads each presented slot back off the table and records the pinning
/// relations `named value = current value` in cleared form.
inline std::vector<std::string> pinned_relations(const QuantizationResult& r,
                                                 const SymbolTable& tab,
                                                 const std::vector<FamilySlot>& slots) {
    std::vector<std::string> out;
    for (auto& s : slots) {
        ParamRatio now = r.table->f(s.i, s.j).coeff(s.mono).coeff(s.k).scaled(s.phase);
        ParamRatio rel = ParamRatio::symbol(s.sym) - now;
        if (rel.is_zero()) continue;
        detail::push_unique(out, detail::cleared_relation(rel, tab));
    }
    return out;
}

}  // namespace ncquant
