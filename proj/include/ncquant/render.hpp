#pragma once

#include <json.hpp>
#include <sstream>
#include <string>

#include "solver.hpp"

namespace ncquant {

enum class RenderFormat { Text, Json };

namespace detail {

inline std::string pair_product(const GeneratorTable& G, int first, int second) {
    return G.gen_name(first) + " " + G.gen_name(second);
}

/// Relation coefficients read scalar-first: "i*hbar*k", "(-1/2)*i*hbar*a1*f1".
inline std::string relation_coeff_string(const HSeries& s, const SymbolTable& tab) {
    if (s.is_zero()) return "0";
    std::string out;
    for (int k = 0; k < s.size(); ++k) {
        const ParamRatio& c = s.coeff(k);
        if (c.is_zero()) continue;
        if (!out.empty()) out += " + ";
        std::string h = k == 0 ? "" : (k == 1 ? "hbar" : "hbar^" + std::to_string(k));
        if (c.den() == ParamPoly::one() && c.num().terms().size() == 1) {
            auto& [mono, sc] = *c.num().terms().begin();
            std::vector<std::string> parts;
            auto rational_part = [](const Rational& v) {
                std::string rs = to_string(v);
                return (v < 0 || rs.find('/') != std::string::npos) ? "(" + rs + ")" : rs;
            };
            if (sc.re != 0 && sc.im != 0) {
                parts.push_back("(" + to_string(sc) + ")");
            } else if (sc.im != 0) {
                if (sc.im == -1)
                    parts.push_back("-i");
                else {
                    if (sc.im != 1) parts.push_back(rational_part(sc.im));
                    parts.push_back("i");
                }
            } else if (sc.re != 1 || (h.empty() && mono.empty())) {
                parts.push_back(rational_part(sc.re));
            }
            if (!h.empty()) parts.push_back(h);
            if (!mono.empty()) parts.push_back(to_string(mono, tab));
            std::string term;
            for (auto& p : parts) term += (term.empty() ? "" : "*") + p;
            out += term;
        } else {
            std::string cs = to_string(c, tab);
            if (h.empty())
                out += cs;
            else
                out += "(" + cs + ")*" + h;
        }
    }
    return out;
}

}  // namespace detail

/// Serializes a solved quantization into the stable JSON schema.  Key and
/// array ordering follow declaration order, so identical inputs render to
/// byte-identical output.
inline nlohmann::ordered_json result_to_json(const QuantizationResult& r, const SymbolTable& tab,
                                             const std::string& system_name, int hbar_order) {
    const GeneratorTable& G = *r.G;
    nlohmann::ordered_json j;
    j["system"] = system_name;
    j["hbar_order"] = hbar_order;

    j["relations"] = nlohmann::ordered_json::array();
    for (int i = 0; i < G.num_gens(); ++i)
        for (int jj = i + 1; jj < G.num_gens(); ++jj) {
            nlohmann::ordered_json rel;
            rel["lhs"] = detail::pair_product(G, jj, i);
            auto rhs = nlohmann::ordered_json::array();
            rhs.push_back({{"monomial", detail::pair_product(G, i, jj)}, {"coefficient", "1"}});
            for (auto& [m, c] : r.table->f(i, jj).terms())
                rhs.push_back({{"monomial", to_string(m, G)},
                               {"coefficient", detail::relation_coeff_string(c, tab)}});
            rel["rhs"] = std::move(rhs);
            j["relations"].push_back(std::move(rel));
        }

    j["derivation"] = nlohmann::ordered_json::object();
    for (int g = 0; g < G.num_gens(); ++g)
        j["derivation"][G.gen_name(g)] = to_string(r.derivation.image(g), G, tab);

    j["integrals"] = nlohmann::ordered_json::object();
    for (auto& [name, I] : r.integrals) j["integrals"][name] = to_string(I, G, tab);

    j["free_params"] = r.free_params;
    j["constraints"] = r.constraints;
    j["assumptions"] = r.assumptions;
    j["exact"] = r.exact;

    ConsistencyReport rep = check_table_consistency(*r.table, hbar_order);
    nlohmann::ordered_json cons;
    cons["consistent"] = rep.consistent;
    cons["violations"] = nlohmann::ordered_json::array();
    for (auto& v : rep.violations)
        cons["violations"].push_back({{"i", v.i},
                                      {"j", v.j},
                                      {"l", v.l},
                                      {"residual", to_string(v.residual, G, tab)}});
    j["consistency_report"] = std::move(cons);
    return j;
}

inline std::string result_to_text(const QuantizationResult& r, const SymbolTable& tab,
                                  const std::string& system_name, int hbar_order) {
    const GeneratorTable& G = *r.G;
    std::ostringstream os;
    os << "system " << system_name << " (hbar order " << hbar_order << ")\n";
    os << "relations:\n";
    for (int i = 0; i < G.num_gens(); ++i)
        for (int j = i + 1; j < G.num_gens(); ++j) {
            os << "  " << detail::pair_product(G, j, i) << " = " << detail::pair_product(G, i, j);
            for (auto& [m, c] : r.table->f(i, j).terms()) {
                std::string cs = detail::relation_coeff_string(c, tab);
                if (cs.find(" + ") != std::string::npos) cs = "(" + cs + ")";
                os << " + " << cs;
                if (!m.is_unit()) os << "*" << to_string(m, G);
            }
            os << "\n";
        }
    os << "derivation:\n";
    for (int g = 0; g < G.num_gens(); ++g)
        os << "  d/dt " << G.gen_name(g) << " = " << to_string(r.derivation.image(g), G, tab)
           << "\n";
    if (!r.integrals.empty()) {
        os << "integrals:\n";
        for (auto& [name, I] : r.integrals) os << "  " << name << " = " << to_string(I, G, tab) << "\n";
    }
    os << "free parameters:";
    for (auto& p : r.free_params) os << " " << p;
    os << "\n";
    for (auto& c : r.constraints) os << "constraint: " << c << "\n";
    for (auto& a : r.assumptions) os << "assumption: " << a << "\n";
    os << "exact: " << (r.exact ? "yes" : "no") << "\n";
    ConsistencyReport rep = check_table_consistency(*r.table, hbar_order);
    os << "consistency: " << (rep.consistent ? "ok" : "violated") << "\n";
    for (auto& v : rep.violations)
        os << "  residual (" << G.gen_name(v.l) << "," << G.gen_name(v.j) << ","
           << G.gen_name(v.i) << "): " << to_string(v.residual, G, tab) << "\n";
    return os.str();
}

/// Renders a result in the requested format.  Json output is deterministic
/// and round-trips: parsing the bytes and re-dumping reproduces them.
inline std::string render_result(const QuantizationResult& r, const SymbolTable& tab,
                                 const std::string& system_name, int hbar_order,
                                 RenderFormat format) {
    if (format == RenderFormat::Json)
        return result_to_json(r, tab, system_name, hbar_order).dump(2) + "\n";
    return result_to_text(r, tab, system_name, hbar_order);
}

}  // namespace ncquant
