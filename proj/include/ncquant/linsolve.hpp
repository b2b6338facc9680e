#pragma once

#include <string>
#include <vector>

#include "ncquant/series.hpp"

namespace ncquant {

/// One linear equation sum_u coeff[u] * u + constant = 0.
struct LinearForm {
    std::map<int, ParamRatio> coeffs;  // unknown index -> coefficient
    ParamRatio constant;

    void add(int u, const ParamRatio& c) {
        if (c.is_zero()) return;
        auto it = coeffs.find(u);
        if (it == coeffs.end())
            coeffs[u] = c;
        else {
            it->second += c;
            if (it->second.is_zero()) coeffs.erase(it);
        }
    }
    bool is_trivial() const { return coeffs.empty() && constant.is_zero(); }
};

/// Affine solution set of a parametric linear system: particular solution
/// plus a basis of the homogeneous null space, both over the fraction field
/// of the system constants.
struct SolveSpace {
    bool consistent = true;
    int num_unknowns = 0;
    std::vector<ParamRatio> particular;               // unknown -> value
    std::vector<std::vector<ParamRatio>> null_basis;  // each: unknown -> component
    std::vector<int> free_unknowns;                   // unknowns spanning the null space
    std::vector<std::string> assumptions;             // genericity pivots used
    std::string failure;                              // set when !consistent
    std::vector<ParamRatio> leftovers;  // constants of contradictory rows (0 = c)
};

/// Gaussian elimination over the rational-function field, treating declared
/// constants as generic (nonzero, algebraically independent).  Pivots are
/// preferred free of solver parameters; a pivot containing one is resolved
/// by the same genericity convention and logged.
inline SolveSpace solve_parametric_linear(std::vector<LinearForm> eqs, int num_unknowns,
                                          const SymbolTable& tab) {
    SolveSpace out;
    out.num_unknowns = num_unknowns;

    struct Row {
        std::map<int, ParamRatio> c;
        ParamRatio k;
    };
    std::vector<Row> rows;
    for (auto& e : eqs)
        if (!e.is_trivial()) rows.push_back({e.coeffs, e.constant});

    std::vector<int> pivot_row(num_unknowns, -1);
    std::vector<bool> eliminated(rows.size(), false);

    auto pivot_quality = [&](const ParamRatio& c) {
        // prefer pivots free of free parameters, then structurally simple ones
        bool fp = c.num().contains_free_param(tab) || c.den().contains_free_param(tab);
        return std::make_pair(fp ? 1 : 0, c.num().terms().size());
    };

    for (size_t pass = 0; pass < rows.size(); ++pass) {
        // choose next pivot among unreduced rows
        int best_row = -1, best_col = -1;
        std::pair<int, size_t> best_q{2, SIZE_MAX};
        for (size_t r = 0; r < rows.size(); ++r) {
            if (eliminated[r]) continue;
            for (auto& [u, c] : rows[r].c) {
                auto q = pivot_quality(c);
                if (q < best_q) {
                    best_q = q;
                    best_row = static_cast<int>(r);
                    best_col = u;
                }
            }
        }
        if (best_row < 0) break;
        Row& pr = rows[best_row];
        eliminated[best_row] = true;
        pivot_row[best_col] = best_row;
        ParamRatio pc = pr.c[best_col];
        if (best_q.first == 1)
            out.assumptions.push_back("assumed nonzero pivot: " + to_string(pc, tab));
        else if (!pc.num().is_constant())
            out.assumptions.push_back("assumed nonzero pivot: " + to_string(pc, tab));
        // normalize pivot row
        ParamRatio inv = pc.inverse();
        for (auto& [u, c] : pr.c) c *= inv;
        pr.k *= inv;
        // eliminate the column from every other row
        for (size_t r = 0; r < rows.size(); ++r) {
            if (r == static_cast<size_t>(best_row)) continue;
            auto it = rows[r].c.find(best_col);
            if (it == rows[r].c.end()) continue;
            ParamRatio f = it->second;
            rows[r].c.erase(it);
            for (auto& [u, c] : pr.c)
                if (u != best_col) {
                    auto jt = rows[r].c.find(u);
                    if (jt == rows[r].c.end())
                        rows[r].c[u] = c * f.scaled(Scalar(-1));
                    else {
                        jt->second -= c * f;
                        if (jt->second.is_zero()) rows[r].c.erase(jt);
                    }
                }
            rows[r].k -= pr.k * f;
        }
    }

    // contradiction check: fully reduced rows with nonzero constant.  A purely
    // numeric constant is a hard inconsistency; a symbolic one is reported as a
    // leftover so the caller can fold it into an earlier family or record it as
    // a constraint on the system's constants.
    for (size_t r = 0; r < rows.size(); ++r) {
        if (!eliminated[r] && rows[r].c.empty() && !rows[r].k.is_zero()) {
            ParamRatio c = -rows[r].k;
            if (c.num().support().empty()) {
                out.consistent = false;
                if (out.failure.empty())
                    out.failure = "inconsistent: 0 = " + to_string(c, tab);
            }
            out.leftovers.push_back(std::move(c));
        }
    }
    if (!out.consistent) return out;

    out.particular.assign(num_unknowns, ParamRatio());
    for (int u = 0; u < num_unknowns; ++u) {
        if (pivot_row[u] < 0) out.free_unknowns.push_back(u);
    }
    for (int u = 0; u < num_unknowns; ++u) {
        if (pivot_row[u] >= 0) {
            // u + sum_{free} c_f * f + k = 0  ->  u = -k - sum c_f * f
            out.particular[u] = -rows[pivot_row[u]].k;
        }
    }
    for (int f : out.free_unknowns) {
        std::vector<ParamRatio> dir(num_unknowns, ParamRatio());
        dir[f] = ParamRatio::one();
        for (int u = 0; u < num_unknowns; ++u) {
            if (pivot_row[u] < 0) continue;
            auto it = rows[pivot_row[u]].c.find(f);
            if (it != rows[pivot_row[u]].c.end()) dir[u] = -it->second;
        }
        out.null_basis.push_back(std::move(dir));
    }
    return out;
}

/// Substitutes a member of the solution family (particular + chosen basis
/// combination) into a form; used by the residual property tests.
inline ParamRatio evaluate_form(const LinearForm& e, const std::vector<ParamRatio>& values) {
    ParamRatio r = e.constant;
    for (auto& [u, c] : e.coeffs) r += c * values[u];
    return r;
}

}  // namespace ncquant
