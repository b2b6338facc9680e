#pragma once

#include <functional>
#include <sstream>
#include <unordered_set>

#include "ncquant/derivation.hpp"
#include "ncquant/linsolve.hpp"

namespace ncquant {

struct AnsatzConfig {
    int K = 1;              // hbar-order cap
    int table_degree = 1;   // max monomial degree for relation corrections
    int deriv_degree = 2;   // max monomial degree for dynamics corrections
    int integral_degree = 2;
    bool hermiticity = true;
};

/// One undetermined coefficient of the ansatz.  The attached series term is
/// i^k * sym * mono at hbar-degree k: every correction in the target class
/// carries that phase, which keeps real values of the symbols sufficient.
struct UnknownSlot {
    enum Kind { Table, Deriv, Integral } kind;
    int i = -1, j = -1;  // generator pair (Table) or generator (Deriv)
    int k = 0;           // hbar-order
    OrderedMonomial mono;
    int sym = -1;
};

struct QuantizationResult {
    const GeneratorTable* G = nullptr;
    std::shared_ptr<CommutationTable> table;
    Derivation derivation;  // references *table
    std::vector<std::pair<std::string, NCElement>> integrals;
    std::vector<int> free_syms;             // surviving ansatz/family symbols
    std::vector<std::string> free_params;   // their names
    std::vector<std::string> constraints;   // relations folded into the family
    std::vector<std::string> assumptions;   // genericity log
    bool exact = false;
    bool ok = true;
    std::string failure;
};

namespace detail {

inline std::vector<OrderedMonomial> enumerate_monomials(const GeneratorTable& G, int max_degree) {
    std::vector<OrderedMonomial> out;
    OrderedMonomial cur = OrderedMonomial::unit(G);
    int nd = G.num_dens(), ng = G.num_gens();
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == nd + ng) {
            out.push_back(cur);
            return;
        }
        unsigned& slot = pos < nd ? cur.den[pos] : cur.gen[pos - nd];
        for (int e = 0; e <= left; ++e) {
            slot = static_cast<unsigned>(e);
            rec(pos + 1, left - e);
        }
        slot = 0;
    };
    rec(0, max_degree);
    std::sort(out.begin(), out.end());
    return out;
}

inline std::string slot_symbol_name(const SymbolTable& tab, const GeneratorTable& G,
                                    const UnknownSlot& s) {
    std::string base;
    switch (s.kind) {
        case UnknownSlot::Table:
            base = "f" + std::to_string(s.k) + "_" + std::to_string(s.i + 1) +
                   std::to_string(s.j + 1);
            break;
        case UnknownSlot::Deriv:
            base = "g" + std::to_string(s.k) + "_" + std::to_string(s.i + 1);
            break;
        case UnknownSlot::Integral:
            base = "I" + std::to_string(s.k);
            break;
    }
    if (!s.mono.is_unit()) {
        std::string m = to_string(s.mono, G);
        for (auto& ch : m)
            if (ch == '*' || ch == '^') ch = '_';
        base += "_" + m;
    }
    std::string name = base;
    int serial = 0;
    while (tab.find(name)) name = base + "_u" + std::to_string(++serial);
    return name;
}

inline void push_unique(std::vector<std::string>& list, const std::string& s) {
    if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
}

inline Scalar i_power(int k) {
    switch (((k % 4) + 4) % 4) {
        case 0: return Scalar(1);
        case 1: return Scalar::i();
        case 2: return Scalar(-1);
        default: return -Scalar::i();
    }
}

/// Extracts linear equations over a chosen unknown-symbol set from vanishing
/// coefficient conditions; rows not touching the unknowns become constraint
/// candidates handled by the caller.
class EquationSink {
  public:
    EquationSink(std::vector<int> unknowns, const SymbolTable& tab) : tab_(tab) {
        for (int s : unknowns) {
            index_[s] = static_cast<int>(order_.size());
            order_.push_back(s);
        }
    }

    int num_unknowns() const { return static_cast<int>(order_.size()); }
    int symbol_of(int idx) const { return order_[idx]; }
    const std::vector<LinearForm>& equations() const { return eqs_; }
    const std::vector<std::pair<ParamRatio, std::string>>& residual_rows() const {
        return residuals_;
    }
    bool linear() const { return nonlinear_.empty(); }
    const std::string& nonlinearity() const { return nonlinear_; }

    void add_zero_condition(const ParamRatio& r, const std::string& tag) {
        if (r.is_zero()) return;
        for (auto& [sym, idx] : index_)
            if (r.den().degree_in(sym) > 0) {
                nonlinear_ = tag + ": unknown in denominator";
                return;
            }
        LinearForm form;
        bool touches = false;
        for (auto& [mono, c] : r.num().terms()) {
            int usym = -1;
            unsigned udeg = 0;
            for (auto& [id, e] : mono) {
                auto it = index_.find(id);
                if (it != index_.end()) {
                    udeg += e;
                    usym = id;
                }
            }
            if (udeg == 0) {
                ParamPoly p;
                p.add_term(mono, c);
                form.constant += ParamRatio(p) / ParamRatio(r.den());
            } else if (udeg == 1) {
                touches = true;
                Mono rest;
                for (auto& [id, e] : mono)
                    if (id != usym) rest.emplace_back(id, e);
                ParamPoly p;
                p.add_term(rest, c);
                form.add(index_[usym], ParamRatio(p) / ParamRatio(r.den()));
            } else {
                nonlinear_ = tag + ": degree >= 2 in stage unknowns";
                return;
            }
        }
        if (touches)
            eqs_.push_back(std::move(form));
        else
            residuals_.emplace_back(form.constant, tag);
    }

    void add_element_layer(const NCElement& e, int k, const std::string& tag) {
        for (auto& [m, c] : e.terms()) add_zero_condition(c.coeff(k), tag);
    }

  private:
    const SymbolTable& tab_;
    std::map<int, int> index_;
    std::vector<int> order_;
    std::vector<LinearForm> eqs_;
    std::vector<std::pair<ParamRatio, std::string>> residuals_;
    std::string nonlinear_;
};

/// Substitution map sym -> value applied to every element of a result in
/// flight.
struct Substitution {
    std::vector<std::pair<int, ParamRatio>> entries;

    NCElement operator()(NCElement e) const {
        for (auto& [s, v] : entries) e = e.substitute(s, v);
        return e;
    }
    ParamRatio operator()(ParamRatio r) const {
        for (auto& [s, v] : entries) r = ratio_substitute(r, s, v);
        return r;
    }
};

/// Turns a solved SolveSpace into a substitution: pivoted unknowns become
/// affine expressions in the surviving free unknowns.
inline Substitution solution_substitution(const SolveSpace& s, const EquationSink& sink,
                                          std::vector<int>* surviving) {
    Substitution sub;
    std::unordered_set<int> free_set(s.free_unknowns.begin(), s.free_unknowns.end());
    for (int u = 0; u < s.num_unknowns; ++u) {
        if (free_set.count(u)) {
            if (surviving) surviving->push_back(sink.symbol_of(u));
            continue;
        }
        ParamRatio expr = s.particular[u];
        for (size_t b = 0; b < s.null_basis.size(); ++b) {
            const ParamRatio& comp = s.null_basis[b][u];
            if (!comp.is_zero())
                expr += comp * ParamRatio::symbol(sink.symbol_of(s.free_unknowns[b]));
        }
        sub.entries.emplace_back(sink.symbol_of(u), std::move(expr));
    }
    return sub;
}

}  // namespace detail

/// Relation-conservation defect for the pair i < j: the derivation applied
/// through Leibniz to  x_j x_i - x_i x_j - F(i,j), fully normal-ordered.
/// Identically zero iff the pair's relation is conserved to order K.
inline NCElement consistency_defect(int i, int j, const CommutationTable& table,
                                    const Derivation& D, int K) {
    const GeneratorTable& G = table.gens();
    NCElement xi = NCElement::generator(G, i), xj = NCElement::generator(G, j);
    const NCElement& Di = D.image(i);
    const NCElement& Dj = D.image(j);
    NCElement r = nc_mul(Dj, xi, table, K) + nc_mul(xj, Di, table, K) -
                  nc_mul(Di, xj, table, K) - nc_mul(xi, Dj, table, K) - D.apply(table.f(i, j));
    return r.truncated(K);
}

struct ConsistencyReport {
    struct Violation {
        int i, j, l;
        NCElement residual;
    };
    bool consistent = true;
    std::vector<Violation> violations;
};

/// Compares the two reduction orders of x_l x_j x_i for every generator
/// triple; for linear tables this is a Jacobi-type identity.
inline ConsistencyReport check_table_consistency(const CommutationTable& table, int K) {
    const GeneratorTable& G = table.gens();
    ConsistencyReport rep;
    for (int l = 2; l < G.num_gens(); ++l)
        for (int j = 1; j < l; ++j)
            for (int i = 0; i < j; ++i) {
                NCElement xl = NCElement::generator(G, l);
                NCElement xj = NCElement::generator(G, j);
                NCElement xi = NCElement::generator(G, i);
                NCElement a = nc_mul(nc_mul(xl, xj, table, K), xi, table, K);
                NCElement b = nc_mul(xl, nc_mul(xj, xi, table, K), table, K);
                NCElement res = a - b;
                if (!res.is_zero()) {
                    rep.consistent = false;
                    rep.violations.push_back({i, j, l, std::move(res)});
                }
            }
    return rep;
}

namespace detail {

struct StageOutcome {
    bool ok = true;
    bool progressed = true;  // false when a fold only recorded constant constraints
    std::string failure;
};

/// Solves one batch of linear conditions: residual rows that do not touch
/// the stage unknowns are folded as constraints on the earlier surviving
/// parameters (when linear in them), then the stage is retried by the
/// caller.  `apply_sub` must push a substitution through all state.
template <typename BuildSink>
StageOutcome run_stage(SymbolTable& tab, std::vector<int>& surviving_frees,
                       std::vector<std::string>& constraints, std::vector<std::string>& assumptions,
                       const std::function<void(const Substitution&)>& apply_sub,
                       const BuildSink& build_sink, const std::string& stage_name) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        EquationSink sink = build_sink();
        if (!sink.linear())
            return {false, true, stage_name + ": nonlinear condition (" + sink.nonlinearity() + ")"};
        // fold 0 = c(earlier frees) rows into the surviving family
        auto do_fold = [&](const std::vector<std::pair<ParamRatio, std::string>>& rows)
            -> StageOutcome {
            EquationSink fold(surviving_frees, tab);
            for (auto& [row, tag] : rows) fold.add_zero_condition(row, tag);
            if (!fold.linear())
                return {false, true, stage_name + ": " + fold.nonlinearity()};
            // rows touching neither the stage unknowns nor the family are
            // relations among the system's constants: record them
            auto record = [&](const ParamRatio& c) -> bool {
                if (c.num().support().empty()) return false;
                std::string s = to_string(c, tab) + " = 0";
                if (std::find(constraints.begin(), constraints.end(), s) == constraints.end())
                    constraints.push_back(s);
                return true;
            };
            for (auto& [row, tag] : fold.residual_rows())
                if (!record(row))
                    return {false, true, stage_name + ": inconsistent, requires " +
                                       to_string(row, tab) + " = 0 (" + tag + ")"};
            auto sol = solve_parametric_linear(fold.equations(), fold.num_unknowns(), tab);
            for (auto& a : sol.assumptions) push_unique(assumptions, a);
            if (!sol.consistent) return {false, true, stage_name + ": " + sol.failure};
            for (auto& c : sol.leftovers)
                if (!record(c))
                    return {false, true,
                            stage_name + ": inconsistent, requires " + to_string(c, tab) + " = 0"};
            std::vector<int> kept;
            Substitution sub = solution_substitution(sol, fold, &kept);
            for (auto& [s, v] : sub.entries)
                constraints.push_back(tab.name(s) + " = " + to_string(v, tab));
            apply_sub(sub);
            surviving_frees = std::move(kept);
            StageOutcome out;
            out.progressed = !sub.entries.empty();
            return out;
        };
        if (!sink.residual_rows().empty()) {
            auto out = do_fold(sink.residual_rows());
            if (!out.ok) return out;
            if (out.progressed) continue;  // retry the stage with the narrowed family
        }
        auto sol = solve_parametric_linear(sink.equations(), sink.num_unknowns(), tab);
        for (auto& a : sol.assumptions) push_unique(assumptions, a);
        if (!sol.consistent) return {false, true, stage_name + ": " + sol.failure};
        if (!sol.leftovers.empty()) {
            // elimination can surface 0 = c rows that were not visible before
            // reduction; fold them into the earlier family and retry, or record
            // them as constraints among the constants when no family is left
            std::vector<std::pair<ParamRatio, std::string>> rows;
            for (auto& c : sol.leftovers) rows.push_back({c, stage_name + " reduced row"});
            auto out = do_fold(rows);
            if (!out.ok) return out;
            if (out.progressed) continue;
        }
        std::vector<int> kept;
        Substitution sub = solution_substitution(sol, sink, &kept);
        apply_sub(sub);
        for (int s : kept) surviving_frees.push_back(s);
        return {};
    }
    return {false, true, stage_name + ": constraint folding did not converge"};
}

}  // namespace detail

/// Ansatz construction: one fresh real symbol per (pair, order, monomial)
/// table slot and (generator, order, monomial) dynamics slot, attached with
/// the i^k phase; the hbar^0 layer of every image is the classical field.
struct Ansatz {
    CommutationTable table;
    Derivation derivation;
    std::vector<UnknownSlot> slots;
};

inline Ansatz build_ansatz(SymbolTable& tab, const GeneratorTable& G,
                           const std::vector<NCElement>& field, const AnsatzConfig& cfg,
                           std::shared_ptr<CommutationTable>* out_table = nullptr) {
    Ansatz a;
    auto table = std::make_shared<CommutationTable>(&G);
    auto table_monos = detail::enumerate_monomials(G, cfg.table_degree);
    auto deriv_monos = detail::enumerate_monomials(G, cfg.deriv_degree);
    for (int i = 0; i < G.num_gens(); ++i)
        for (int j = i + 1; j < G.num_gens(); ++j) {
            NCElement F;
            for (int k = 1; k <= cfg.K; ++k)
                for (auto& m : table_monos) {
                    UnknownSlot s{UnknownSlot::Table, i, j, k, m, -1};
                    s.sym = tab.declare(detail::slot_symbol_name(tab, G, s),
                                        SymbolKind::FreeParam);
                    F.add(m, HSeries::term(
                                 ParamRatio::symbol(s.sym).scaled(detail::i_power(k)), k));
                    a.slots.push_back(std::move(s));
                }
            table->set_f(i, j, std::move(F));
        }
    Derivation D(table.get(), cfg.K);
    for (int g = 0; g < G.num_gens(); ++g) {
        NCElement im = field.at(g);
        for (int k = 1; k <= cfg.K; ++k)
            for (auto& m : deriv_monos) {
                UnknownSlot s{UnknownSlot::Deriv, g, -1, k, m, -1};
                s.sym = tab.declare(detail::slot_symbol_name(tab, G, s), SymbolKind::FreeParam);
                im.add(m, HSeries::term(ParamRatio::symbol(s.sym).scaled(detail::i_power(k)), k));
                a.slots.push_back(std::move(s));
            }
        D.set_image(g, std::move(im));
    }
    a.table = *table;
    a.derivation = D;
    if (out_table) *out_table = std::move(table);
    return a;
}

/// The quantization algorithm: order-by-order in hbar, zero every ordered
/// coefficient of every pair defect plus the Hermiticity conditions, solving
/// linearly for the stage unknowns and folding any family constraints.
inline QuantizationResult solve_quantization(SymbolTable& tab, const GeneratorTable& G,
                                             const std::vector<NCElement>& field,
                                             const AnsatzConfig& cfg) {
    QuantizationResult res;
    res.G = &G;
    res.table = std::make_shared<CommutationTable>(&G);
    Ansatz a;
    {
        std::shared_ptr<CommutationTable> tbl;
        a = build_ansatz(tab, G, field, cfg, &tbl);
        res.table = std::move(tbl);
    }
    *res.table = a.table;
    Derivation D(res.table.get(), cfg.K);
    for (int g = 0; g < G.num_gens(); ++g) D.set_image(g, a.derivation.image(g));

    auto apply_sub = [&](const detail::Substitution& sub) {
        for (int i = 0; i < G.num_gens(); ++i)
            for (int j = i + 1; j < G.num_gens(); ++j) res.table->set_f(i, j, sub(res.table->f(i, j)));
        for (int g = 0; g < G.num_gens(); ++g) D.set_image(g, sub(D.image(g)));
    };

    for (int k = 1; k <= cfg.K; ++k) {
        std::vector<int> stage;
        for (auto& s : a.slots)
            if (s.k == k) stage.push_back(s.sym);
        auto build = [&]() {
            detail::EquationSink sink(stage, tab);
            for (int i = 0; i < G.num_gens(); ++i)
                for (int j = i + 1; j < G.num_gens(); ++j) {
                    std::string pair = G.gen_name(i) + "," + G.gen_name(j);
                    NCElement defect = consistency_defect(i, j, *res.table, D, cfg.K);
                    sink.add_element_layer(defect, k,
                                           "defect order " + std::to_string(k) + " pair (" + pair +
                                               ")");
                    if (cfg.hermiticity) {
                        NCElement inv = involute(res.table->f(i, j), *res.table, cfg.K) +
                                        res.table->f(i, j);
                        sink.add_element_layer(inv, k,
                                               "relation hermiticity order " + std::to_string(k) +
                                                   " pair (" + pair + ")");
                    }
                }
            if (cfg.hermiticity)
                for (int g = 0; g < G.num_gens(); ++g) {
                    NCElement h = involute(D.image(g), *res.table, cfg.K) - D.image(g);
                    sink.add_element_layer(h, k,
                                           "image hermiticity order " + std::to_string(k) + " (" +
                                               G.gen_name(g) + ")");
                }
            return sink;
        };
        auto out = detail::run_stage(tab, res.free_syms, res.constraints, res.assumptions,
                                     apply_sub, build, "order " + std::to_string(k));
        if (!out.ok) {
            res.ok = false;
            res.failure = out.failure +
                          "; no solution within table_degree=" + std::to_string(cfg.table_degree) +
                          ", deriv_degree=" + std::to_string(cfg.deriv_degree) +
                          " (a larger ansatz degree may help)";
            return res;
        }
    }

    res.derivation = D;
    for (int s : res.free_syms) res.free_params.push_back(tab.name(s));

    // exactness: with every relation series of total degree <= 2 the
    // rewriting cannot grow words, so a vanishing defect at an enlarged cap
    // certifies an identically vanishing residual
    bool small = true;
    for (int i = 0; i < G.num_gens() && small; ++i)
        for (int j = i + 1; j < G.num_gens() && small; ++j)
            if (res.table->f(i, j).max_total_degree() > 2) small = false;
    if (small) {
        int Kbig = cfg.K + 4;
        Derivation Dbig(res.table.get(), Kbig);
        for (int g = 0; g < G.num_gens(); ++g) Dbig.set_image(g, D.image(g));
        bool clean = true;
        for (int i = 0; i < G.num_gens() && clean; ++i)
            for (int j = i + 1; j < G.num_gens() && clean; ++j)
                if (!consistency_defect(i, j, *res.table, Dbig, Kbig).is_zero()) clean = false;
        res.exact = clean;
    }
    return res;
}

struct IntegralResult {
    bool ok = true;
    std::string failure;
    NCElement integral;
    std::vector<int> free_syms;
    std::vector<std::string> free_params;
    std::vector<std::string> constraints;
    std::vector<std::string> assumptions;
};

/// Solves X(I) = 0 and I* = I order-by-order for the correction
/// coefficients of a classical integral.  `family` lists coefficient symbols
/// of the classical part that may be narrowed by constraints (e.g. a
/// quadratic family); on return the surviving ones are reported free.
inline IntegralResult solve_integral_corrections(SymbolTable& tab, const NCElement& I_classical,
                                                 QuantizationResult& qres, const AnsatzConfig& cfg,
                                                 std::vector<int> family = {}) {
    IntegralResult res;
    const GeneratorTable& G = *qres.G;
    NCElement I = I_classical;
    std::vector<UnknownSlot> slots;
    auto monos = detail::enumerate_monomials(G, cfg.integral_degree);
    for (int k = 1; k <= cfg.K; ++k)
        for (auto& m : monos) {
            UnknownSlot s{UnknownSlot::Integral, -1, -1, k, m, -1};
            s.sym = tab.declare(detail::slot_symbol_name(tab, G, s), SymbolKind::FreeParam);
            I.add(m, HSeries::term(ParamRatio::symbol(s.sym).scaled(detail::i_power(k)), k));
            slots.push_back(std::move(s));
        }

    std::vector<int> foldable = family;
    for (int s : qres.free_syms) foldable.push_back(s);

    auto apply_sub = [&](const detail::Substitution& sub) {
        I = sub(I);
        for (int i = 0; i < G.num_gens(); ++i)
            for (int j = i + 1; j < G.num_gens(); ++j)
                qres.table->set_f(i, j, sub(qres.table->f(i, j)));
        for (int g = 0; g < G.num_gens(); ++g)
            qres.derivation.set_image(g, sub(qres.derivation.image(g)));
    };

    for (int k = 0; k <= cfg.K; ++k) {
        std::vector<int> stage;
        for (auto& s : slots)
            if (s.k == k) stage.push_back(s.sym);  // empty at k = 0: pure constraints
        auto build = [&]() {
            detail::EquationSink sink(stage, tab);
            NCElement flow = qres.derivation.apply(I).truncated(cfg.K);
            sink.add_element_layer(flow, k, "conservation order " + std::to_string(k));
            if (cfg.hermiticity && k >= 1) {
                NCElement h = involute(I, *qres.table, cfg.K) - I;
                sink.add_element_layer(h, k, "integral hermiticity order " + std::to_string(k));
            }
            return sink;
        };
        auto out = detail::run_stage(tab, foldable, res.constraints, res.assumptions, apply_sub,
                                     build, "integral order " + std::to_string(k));
        if (!out.ok) {
            res.ok = false;
            res.failure = out.failure + "; no conserved correction within integral_degree=" +
                          std::to_string(cfg.integral_degree);
            return res;
        }
    }

    // surviving correction slots and family symbols; refresh the parent
    // result's family (constraints may have narrowed it)
    std::unordered_set<int> fold_set(foldable.begin(), foldable.end());
    std::vector<int> parent;
    for (int s : qres.free_syms)
        if (fold_set.count(s)) parent.push_back(s);
    qres.free_syms = parent;
    qres.free_params.clear();
    for (int s : qres.free_syms) qres.free_params.push_back(tab.name(s));
    for (int s : foldable) {
        bool ours = false;
        for (auto& sl : slots) ours = ours || sl.sym == s;
        for (int f : family) ours = ours || f == s;
        if (ours) {
            res.free_syms.push_back(s);
            res.free_params.push_back(tab.name(s));
        }
    }
    res.integral = reduce_denominators(I, G, cfg.K + 2);
    return res;
}

struct HeisenbergResult {
    bool ok = true;
    std::string failure;
    NCElement hamiltonian;
    std::vector<int> free_syms;
    std::vector<std::string> free_params;
    std::vector<std::string> constraints;
    std::vector<std::string> assumptions;
};

/// Requires the solved dynamics to be inner: (1/i hbar)[x, H] must equal the
/// derivation image of every generator at every order.  Unknowns are the
/// Hamiltonian family coefficients when given, otherwise the surviving free
/// parameters of the result; solving proceeds order-by-order so products of
/// unknowns from different orders stay linear after substitution.
inline HeisenbergResult impose_heisenberg(SymbolTable& tab, QuantizationResult& qres,
                                          const NCElement& H_family, const AnsatzConfig& cfg,
                                          std::vector<int> family = {}) {
    HeisenbergResult res;
    const GeneratorTable& G = *qres.G;
    NCElement H = H_family;
    std::vector<int> unknowns = family;
    if (unknowns.empty()) {
        // default family: the surviving quantization parameters plus every
        // free parameter appearing in the Hamiltonian candidate
        std::set<int> syms(qres.free_syms.begin(), qres.free_syms.end());
        for (auto& [m, c] : H.terms())
            for (int k = 0; k < c.size(); ++k) {
                for (int id : c.coeff(k).num().support())
                    if (tab.is_free_param(id)) syms.insert(id);
                for (int id : c.coeff(k).den().support())
                    if (tab.is_free_param(id)) syms.insert(id);
            }
        unknowns.assign(syms.begin(), syms.end());
    }
    std::vector<std::string> dummy_constraints;

    auto apply_sub = [&](const detail::Substitution& sub) {
        H = sub(H);
        for (int i = 0; i < G.num_gens(); ++i)
            for (int j = i + 1; j < G.num_gens(); ++j)
                qres.table->set_f(i, j, sub(qres.table->f(i, j)));
        for (int g = 0; g < G.num_gens(); ++g)
            qres.derivation.set_image(g, sub(qres.derivation.image(g)));
        for (auto& [n, I] : qres.integrals) I = sub(I);
    };

    for (int k = 0; k <= cfg.K; ++k) {
        std::vector<int> stage = unknowns;
        auto build = [&]() {
            detail::EquationSink sink(stage, tab);
            Derivation inner = inner_derivation(H, *qres.table, cfg.K);
            for (int g = 0; g < G.num_gens(); ++g) {
                NCElement diff = inner.image(g) - qres.derivation.image(g);
                sink.add_element_layer(diff, k,
                                       "inner-derivation order " + std::to_string(k) + " (" +
                                           G.gen_name(g) + ")");
            }
            return sink;
        };
        std::vector<int> next;
        auto out = detail::run_stage(tab, next, res.constraints, res.assumptions, apply_sub, build,
                                     "heisenberg order " + std::to_string(k));
        if (!out.ok) {
            res.ok = false;
            res.failure = "no Hamiltonian in family makes the derivation inner: " + out.failure;
            return res;
        }
        unknowns = next;  // unknowns surviving this order carry to the next
    }

    res.hamiltonian = reduce_denominators(H, G, cfg.K + 2);
    res.free_syms = unknowns;
    for (int s : unknowns) res.free_params.push_back(tab.name(s));
    // narrow the result family: anything substituted away is gone
    std::unordered_set<int> kept(unknowns.begin(), unknowns.end());
    std::vector<int> parent;
    for (int s : qres.free_syms)
        if (kept.count(s)) parent.push_back(s);
    qres.free_syms = parent;
    qres.free_params.clear();
    for (int s : qres.free_syms) qres.free_params.push_back(tab.name(s));
    return res;
}

}  // namespace ncquant
