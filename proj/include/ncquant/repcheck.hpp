#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <json.hpp>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "solver.hpp"

namespace ncquant {

/// Explicit finite-dimensional matrices for the generators plus numeric
/// values for hbar and every symbolic parameter.  The top `edge_margin`
/// basis levels are excluded from truncation-sensitive residual norms.
struct MatrixRep {
    int dimension = 0;
    std::map<std::string, Eigen::MatrixXcd> generators;
    std::map<std::string, std::complex<double>> values;  // "hbar", constants, free params
    int edge_margin = 0;
};

struct RepReport {
    struct Item {
        std::string name;
        double residual = 0.0;  // max interior entry of the defect matrix
        bool pass = true;
    };
    bool pass = true;
    double tol = 0.0;
    std::vector<Item> items;
};

namespace detail {

inline std::complex<double> eval_scalar(const Scalar& s) {
    return {static_cast<double>(s.re), static_cast<double>(s.im)};
}

inline std::complex<double> eval_poly(const ParamPoly& p, const SymbolTable& tab,
                                      const MatrixRep& rep) {
    std::complex<double> acc = 0.0;
    for (auto& [m, c] : p.terms()) {
        std::complex<double> term = eval_scalar(c);
        for (auto& [id, e] : m) {
            auto it = rep.values.find(tab.name(id));
            if (it == rep.values.end())
                throw std::invalid_argument("unassigned parameter: " + tab.name(id));
            term *= std::pow(it->second, static_cast<int>(e));
        }
        acc += term;
    }
    return acc;
}

inline std::complex<double> eval_ratio(const ParamRatio& r, const SymbolTable& tab,
                                       const MatrixRep& rep) {
    return eval_poly(r.num(), tab, rep) / eval_poly(r.den(), tab, rep);
}

inline std::complex<double> eval_series(const HSeries& s, const SymbolTable& tab,
                                        const MatrixRep& rep) {
    auto it = rep.values.find("hbar");
    if (it == rep.values.end()) throw std::invalid_argument("unassigned parameter: hbar");
    std::complex<double> acc = 0.0, hk = 1.0;
    for (int k = 0; k < s.size(); ++k) {
        acc += eval_ratio(s.coeff(k), tab, rep) * hk;
        hk *= it->second;
    }
    return acc;
}

}  // namespace detail

/// Evaluates an element as a matrix: denominators become numeric inverses of
/// their polynomial images (leftmost, matching the canonical ordering).
inline Eigen::MatrixXcd evaluate_element(const NCElement& e, const GeneratorTable& G,
                                         const SymbolTable& tab, const MatrixRep& rep) {
    int N = rep.dimension;
    std::vector<Eigen::MatrixXcd> gen_mats;
    for (int g = 0; g < G.num_gens(); ++g) {
        auto it = rep.generators.find(G.gen_name(g));
        if (it == rep.generators.end())
            throw std::invalid_argument("missing matrix for generator " + G.gen_name(g));
        if (it->second.rows() != N || it->second.cols() != N)
            throw std::invalid_argument("dimension mismatch for generator " + G.gen_name(g));
        gen_mats.push_back(it->second);
    }
    std::vector<Eigen::MatrixXcd> den_mats;
    for (int d = 0; d < G.num_dens(); ++d) {
        Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(N, N);
        for (auto& [exps, c] : G.den_poly(d)) {
            Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(N, N);
            for (size_t g = 0; g < exps.size(); ++g)
                for (unsigned k = 0; k < exps[g]; ++k) m = m * gen_mats[g];
            q += detail::eval_ratio(c, tab, rep) * m;
        }
        den_mats.push_back(q.inverse());
    }
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(N, N);
    for (auto& [mono, coeff] : e.terms()) {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(N, N);
        for (size_t d = 0; d < mono.den.size(); ++d)
            for (unsigned k = 0; k < mono.den[d]; ++k) m = m * den_mats[d];
        for (size_t g = 0; g < mono.gen.size(); ++g)
            for (unsigned k = 0; k < mono.gen[g]; ++k) m = m * gen_mats[g];
        out += detail::eval_series(coeff, tab, rep) * m;
    }
    return out;
}

namespace detail {

inline double interior_max(const Eigen::MatrixXcd& m, int edge_margin) {
    int n = static_cast<int>(m.rows()) - edge_margin;
    if (n <= 0) return 0.0;
    return m.topLeftCorner(n, n).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Verifies every commutation relation, the derivation-vs-inner identity when
/// a Hamiltonian is supplied, and conservation of every carried integral.
inline RepReport check_representation(const QuantizationResult& result, const SymbolTable& tab,
                                      const MatrixRep& rep, double tol,
                                      const NCElement* hamiltonian = nullptr) {
    const GeneratorTable& G = *result.G;
    RepReport report;
    report.tol = tol;
    auto add = [&](const std::string& name, double residual) {
        bool ok = residual <= tol;
        report.items.push_back({name, residual, ok});
        report.pass = report.pass && ok;
    };

    std::vector<Eigen::MatrixXcd> X;
    for (int g = 0; g < G.num_gens(); ++g) {
        X.push_back(evaluate_element(NCElement::generator(G, g), G, tab, rep));
        add("hermitian(" + G.gen_name(g) + ")",
            detail::interior_max(X[g] - X[g].adjoint().eval(), rep.edge_margin));
    }

    for (int i = 0; i < G.num_gens(); ++i)
        for (int j = i + 1; j < G.num_gens(); ++j) {
            Eigen::MatrixXcd F = evaluate_element(result.table->f(i, j), G, tab, rep);
            Eigen::MatrixXcd defect = X[j] * X[i] - X[i] * X[j] - F;
            add("relation(" + G.gen_name(i) + "," + G.gen_name(j) + ")",
                detail::interior_max(defect, rep.edge_margin));
        }

    if (hamiltonian) {
        std::complex<double> hbar = rep.values.at("hbar");
        Eigen::MatrixXcd H = evaluate_element(*hamiltonian, G, tab, rep);
        for (int g = 0; g < G.num_gens(); ++g) {
            Eigen::MatrixXcd inner = (X[g] * H - H * X[g]) / (std::complex<double>(0, 1) * hbar);
            Eigen::MatrixXcd image = evaluate_element(result.derivation.image(g), G, tab, rep);
            add("inner(" + G.gen_name(g) + ")", detail::interior_max(inner - image, rep.edge_margin));
        }
        for (auto& [name, I] : result.integrals) {
            Eigen::MatrixXcd M = evaluate_element(I, G, tab, rep);
            add("conserved(" + name + ")", detail::interior_max(M * H - H * M, rep.edge_margin));
        }
    }
    return report;
}

/// Built-in representations.
///   spin:                  angular-momentum matrices of the given dimension,
///                          scaled by hbar (dimension 1 is the zero triple)
///   truncated_ladder_pair: position/momentum pair from truncated ladders
///                          with interior commutator i*hbar*scale
inline MatrixRep builtin_rep(const std::string& name, int dimension,
                             std::map<std::string, std::complex<double>> values) {
    if (dimension < 1) throw std::invalid_argument("unsupported dimension");
    MatrixRep rep;
    rep.dimension = dimension;
    rep.values = std::move(values);
    auto hbar_it = rep.values.find("hbar");
    if (hbar_it == rep.values.end()) throw std::invalid_argument("unassigned parameter: hbar");
    std::complex<double> hbar = hbar_it->second;
    int N = dimension;
    if (name == "spin") {
        double j = (N - 1) / 2.0;
        Eigen::MatrixXcd Jp = Eigen::MatrixXcd::Zero(N, N);
        // basis |j,m>, m = j, j-1, ..., -j; J+ |j,m> = sqrt(j(j+1)-m(m+1)) |j,m+1>
        for (int r = 0; r + 1 < N; ++r) {
            double m = j - (r + 1);
            Jp(r, r + 1) = std::sqrt(j * (j + 1) - m * (m + 1));
        }
        Eigen::MatrixXcd Jm = Jp.adjoint();
        Eigen::MatrixXcd Jz = Eigen::MatrixXcd::Zero(N, N);
        for (int r = 0; r < N; ++r) Jz(r, r) = j - r;
        rep.generators["L1"] = hbar * 0.5 * (Jp + Jm);
        rep.generators["L2"] = hbar * std::complex<double>(0, -0.5) * (Jp - Jm);
        rep.generators["L3"] = hbar * Jz;
        return rep;
    }
    if (name == "truncated_ladder_pair") {
        std::complex<double> scale = rep.values.count("scale") ? rep.values.at("scale") : 1.0;
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(N, N);
        for (int r = 0; r + 1 < N; ++r) a(r, r + 1) = std::sqrt(r + 1.0);
        Eigen::MatrixXcd ad = a.adjoint();
        std::complex<double> s = std::sqrt(hbar * scale / 2.0);
        rep.generators["x"] = s * (a + ad);
        rep.generators["p"] = std::complex<double>(0, 1) * s * (ad - a);
        return rep;
    }
    throw std::invalid_argument("unsupported representation '" + name +
                                "'; available: spin, truncated_ladder_pair");
}

/// Loads a representation from the JSON matrix-file schema
/// {"dimension": N, "generators": {name: [[re,im],...]}, "values": {...}}.
inline MatrixRep rep_from_json(const nlohmann::json& j) {
    MatrixRep rep;
    rep.dimension = j.at("dimension").get<int>();
    int N = rep.dimension;
    for (auto& [name, rows] : j.at("generators").items()) {
        if (static_cast<int>(rows.size()) != N)
            throw std::invalid_argument("dimension mismatch for generator " + name);
        Eigen::MatrixXcd m(N, N);
        for (int r = 0; r < N; ++r) {
            if (static_cast<int>(rows[r].size()) != N)
                throw std::invalid_argument("dimension mismatch for generator " + name);
            for (int c = 0; c < N; ++c) {
                auto& cell = rows[r][c];
                m(r, c) = std::complex<double>(cell.at(0).get<double>(), cell.at(1).get<double>());
            }
        }
        rep.generators[name] = std::move(m);
    }
    for (auto& [name, v] : j.at("values").items())
        rep.values[name] = v.is_array()
                               ? std::complex<double>(v.at(0).get<double>(), v.at(1).get<double>())
                               : std::complex<double>(v.get<double>(), 0.0);
    if (j.contains("edge_margin")) rep.edge_margin = j.at("edge_margin").get<int>();
    return rep;
}

}  // namespace ncquant
