// Command-line front end: quantize systems from the DSL, solve integral
// corrections, verify matrix representations, and render exact results.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include <ncquant/display.hpp>
#include <ncquant/render.hpp>
#include <ncquant/repcheck.hpp>
#include <ncquant/system.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitMath = 2;

struct InputOpts {
    std::string example;
    std::string file;
    int order = -1;
    int table_degree = -1;
    int deriv_degree = -1;
    int integral_degree = -1;
    bool no_hermiticity = false;
    std::string format = "text";
};

void add_input_flags(CLI::App* cmd, InputOpts& in, bool with_format = true) {
    auto* ex = cmd->add_option("--example", in.example, "built-in example name");
    auto* fi = cmd->add_option("--file", in.file, "system definition file");
    ex->excludes(fi);
    cmd->add_option("--order", in.order, "hbar order K");
    cmd->add_option("--table-degree", in.table_degree, "max degree of relation corrections");
    cmd->add_option("--deriv-degree", in.deriv_degree, "max degree of dynamics corrections");
    cmd->add_option("--integral-degree", in.integral_degree, "max degree of integral corrections");
    cmd->add_flag("--no-hermiticity", in.no_hermiticity, "drop the hermiticity conditions");
    if (with_format)
        cmd->add_option("--format", in.format, "output format: text or json")
            ->check(CLI::IsMember({"text", "json"}));
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MathError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ncquant::LoweredSystem load_system(const InputOpts& in) {
    ncquant::SystemSpec spec;
    if (!in.example.empty()) {
        spec = ncquant::load_example(in.example);
    } else if (!in.file.empty()) {
        std::ifstream f(in.file);
        if (!f) throw UsageError("cannot open file: " + in.file);
        std::ostringstream buf;
        buf << f.rdbuf();
        spec = ncquant::parse_system(buf.str());
    } else {
        throw UsageError("exactly one of --example or --file is required");
    }
    if (in.order >= 0) spec.options["order"] = std::to_string(in.order);
    if (in.table_degree >= 0) spec.options["table_degree"] = std::to_string(in.table_degree);
    if (in.deriv_degree >= 0) spec.options["deriv_degree"] = std::to_string(in.deriv_degree);
    if (in.integral_degree >= 0)
        spec.options["integral_degree"] = std::to_string(in.integral_degree);
    if (in.no_hermiticity) spec.options["hermiticity"] = "false";
    return ncquant::lower(spec);
}

std::string system_label(const InputOpts& in, const ncquant::LoweredSystem& sys) {
    return sys.spec.name.empty() ? (in.example.empty() ? in.file : in.example) : sys.spec.name;
}

ncquant::QuantizationResult solve_or_throw(ncquant::LoweredSystem& sys) {
    auto r = ncquant::solve_quantization(sys.tab, sys.G, sys.field, sys.config);
    if (!r.ok) throw MathError("quantization failed: " + r.failure);
    return r;
}

/// Picks the Hamiltonian for the Heisenberg condition: --hamiltonian NAME or
/// the first declared integral.
ncquant::NCElement pick_hamiltonian(const ncquant::LoweredSystem& sys, const std::string& name) {
    if (sys.integrals.empty())
        throw UsageError("--heisenberg requires an integrals section (none declared)");
    if (name.empty()) return sys.integrals.front().second;
    for (auto& [n, I] : sys.integrals)
        if (n == name) return I;
    throw UsageError("unknown integral: " + name);
}

void apply_heisenberg(ncquant::LoweredSystem& sys, ncquant::QuantizationResult& r,
                      const std::vector<ncquant::FamilySlot>& slots,
                      const std::string& hamiltonian_name) {
    ncquant::NCElement H = pick_hamiltonian(sys, hamiltonian_name);
    auto h = ncquant::impose_heisenberg(sys.tab, r, H, sys.config);
    if (!h.ok) throw MathError("heisenberg condition failed: " + h.failure);
    for (auto& c : h.constraints) ncquant::detail::push_unique(r.constraints, c);
    for (auto& c : ncquant::pinned_relations(r, sys.tab, slots))
        ncquant::detail::push_unique(r.constraints, c);
    for (auto& a : h.assumptions) ncquant::detail::push_unique(r.assumptions, a);
    std::string hn = hamiltonian_name.empty() ? sys.integrals.front().first : hamiltonian_name;
    r.integrals.emplace_back(hn, h.hamiltonian);
}

void emit(const std::string& s) { std::cout << s; }

int cmd_quantize(const InputOpts& in, bool heisenberg, const std::string& hamiltonian_name) {
    auto sys = load_system(in);
    auto r = solve_or_throw(sys);
    auto slots = ncquant::present_family(r, sys.tab);
    if (heisenberg) apply_heisenberg(sys, r, slots, hamiltonian_name);
    emit(ncquant::render_result(r, sys.tab, system_label(in, sys), sys.config.K,
                                in.format == "json" ? ncquant::RenderFormat::Json
                                                    : ncquant::RenderFormat::Text));
    return kExitOk;
}

int cmd_integrals(const InputOpts& in) {
    auto sys = load_system(in);
    auto r = solve_or_throw(sys);
    ncquant::present_family(r, sys.tab);
    if (sys.integrals.empty()) throw UsageError("system declares no integrals");
    for (auto& [name, I] : sys.integrals) {
        auto ir = ncquant::solve_integral_corrections(sys.tab, I, r, sys.config);
        if (!ir.ok) throw MathError("integral " + name + " failed: " + ir.failure);
        r.integrals.emplace_back(name, ir.integral);
        for (auto& c : ir.constraints) ncquant::detail::push_unique(r.constraints, c);
        for (auto& a : ir.assumptions) ncquant::detail::push_unique(r.assumptions, a);
        for (size_t k = 0; k < ir.free_params.size(); ++k) {
            if (std::find(r.free_syms.begin(), r.free_syms.end(), ir.free_syms[k]) ==
                r.free_syms.end()) {
                r.free_syms.push_back(ir.free_syms[k]);
                r.free_params.push_back(ir.free_params[k]);
            }
        }
    }
    emit(ncquant::render_result(r, sys.tab, system_label(in, sys), sys.config.K,
                                in.format == "json" ? ncquant::RenderFormat::Json
                                                    : ncquant::RenderFormat::Text));
    return kExitOk;
}

int cmd_consistency(const InputOpts& in) {
    auto sys = load_system(in);
    auto r = solve_or_throw(sys);
    ncquant::present_family(r, sys.tab);
    auto rep = ncquant::check_table_consistency(*r.table, sys.config.K);
    if (in.format == "json") {
        nlohmann::ordered_json j;
        j["system"] = system_label(in, sys);
        j["consistent"] = rep.consistent;
        j["violations"] = nlohmann::ordered_json::array();
        for (auto& v : rep.violations)
            j["violations"].push_back({{"i", v.i},
                                       {"j", v.j},
                                       {"l", v.l},
                                       {"residual", to_string(v.residual, sys.G, sys.tab)}});
        emit(j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        os << "consistency: " << (rep.consistent ? "ok" : "violated") << "\n";
        for (auto& v : rep.violations)
            os << "  residual (" << v.i << "," << v.j << "," << v.l
               << "): " << to_string(v.residual, sys.G, sys.tab) << "\n";
        emit(os.str());
    }
    return rep.consistent ? kExitOk : kExitMath;
}

int cmd_check_rep(const InputOpts& in, const std::string& rep_file, double tol, int edge_margin,
                  bool heisenberg, const std::string& hamiltonian_name) {
    auto sys = load_system(in);
    auto r = solve_or_throw(sys);
    auto slots = ncquant::present_family(r, sys.tab);
    ncquant::NCElement H;
    bool have_h = false;
    if (heisenberg) {
        apply_heisenberg(sys, r, slots, hamiltonian_name);
        H = r.integrals.back().second;
        have_h = true;
    }
    std::ifstream f(rep_file);
    if (!f) throw UsageError("cannot open representation file: " + rep_file);
    ncquant::MatrixRep rep;
    try {
        nlohmann::json j;
        f >> j;
        rep = ncquant::rep_from_json(j);
    } catch (const std::exception& e) {
        throw UsageError(std::string("bad representation file: ") + e.what());
    }
    if (edge_margin >= 0) rep.edge_margin = edge_margin;
    ncquant::RepReport report;
    try {
        report = ncquant::check_representation(r, sys.tab, rep, tol, have_h ? &H : nullptr);
    } catch (const std::exception& e) {
        throw UsageError(std::string("representation check: ") + e.what());
    }
    if (in.format == "json") {
        nlohmann::ordered_json j;
        j["system"] = system_label(in, sys);
        j["tol"] = report.tol;
        j["pass"] = report.pass;
        j["items"] = nlohmann::ordered_json::array();
        for (auto& it : report.items)
            j["items"].push_back({{"name", it.name}, {"residual", it.residual}, {"pass", it.pass}});
        emit(j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        os << "representation check (tol " << report.tol << "): "
           << (report.pass ? "pass" : "fail") << "\n";
        for (auto& it : report.items)
            os << "  " << (it.pass ? "ok  " : "FAIL") << " " << it.name
               << " residual=" << it.residual << "\n";
        emit(os.str());
    }
    return report.pass ? kExitOk : kExitMath;
}

int cmd_flow(const InputOpts& in, int flow_order) {
    auto sys = load_system(in);
    auto r = solve_or_throw(sys);
    ncquant::present_family(r, sys.tab);
    auto fs = ncquant::formal_flow(r.derivation, flow_order);
    if (in.format == "json") {
        nlohmann::ordered_json j;
        j["system"] = system_label(in, sys);
        j["flow_order"] = flow_order;
        j["coefficients"] = nlohmann::ordered_json::object();
        for (int g = 0; g < sys.G.num_gens(); ++g) {
            auto arr = nlohmann::ordered_json::array();
            for (auto& c : fs.coeffs[g]) arr.push_back(to_string(c, sys.G, sys.tab));
            j["coefficients"][sys.G.gen_name(g)] = std::move(arr);
        }
        emit(j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        os << "flow coefficients (t^m/m!, m = 0.." << flow_order << "):\n";
        for (int g = 0; g < sys.G.num_gens(); ++g)
            for (size_t m = 0; m < fs.coeffs[g].size(); ++m)
                os << "  " << sys.G.gen_name(g) << "[" << m
                   << "] = " << to_string(fs.coeffs[g][m], sys.G, sys.tab) << "\n";
        emit(os.str());
    }
    return kExitOk;
}

int cmd_list_examples(const std::string& format) {
    if (format == "json") {
        nlohmann::ordered_json j = ncquant::example_names();
        emit(j.dump(2) + "\n");
    } else {
        for (auto& n : ncquant::example_names()) emit(n + "\n");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"exact quantization of classical dynamical systems"};
    app.require_subcommand(1);

    InputOpts in;
    bool heisenberg = false;
    std::string hamiltonian_name;
    std::string rep_file;
    double tol = 1e-9;
    int edge_margin = -1;
    int flow_order = 3;

    auto* quantize = app.add_subcommand("quantize", "solve the quantization ansatz");
    add_input_flags(quantize, in);
    quantize->add_flag("--heisenberg", heisenberg, "require the dynamics to be inner");
    quantize->add_option("--hamiltonian", hamiltonian_name, "integral to use as Hamiltonian");

    auto* integrals = app.add_subcommand("integrals", "solve quantum corrections of the integrals");
    add_input_flags(integrals, in);

    auto* consistency = app.add_subcommand("consistency", "Jacobi/PBW check of the solved table");
    add_input_flags(consistency, in);

    auto* check_rep = app.add_subcommand("check-rep", "verify a matrix representation");
    add_input_flags(check_rep, in);
    check_rep->add_option("--rep", rep_file, "representation JSON file")->required();
    check_rep->add_option("--tol", tol, "residual tolerance");
    check_rep->add_option("--edge-margin", edge_margin, "truncation margin override");
    check_rep->add_flag("--heisenberg", heisenberg, "also check inner dynamics and conservation");
    check_rep->add_option("--hamiltonian", hamiltonian_name, "integral to use as Hamiltonian");

    auto* flow = app.add_subcommand("flow", "formal time-flow series of the solved derivation");
    add_input_flags(flow, in);
    flow->add_option("--flow-order", flow_order, "highest t-order M");

    auto* list = app.add_subcommand("list-examples", "list built-in example systems");
    std::string list_format = "text";
    list->add_option("--format", list_format, "output format: text or json")
        ->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (quantize->parsed()) return cmd_quantize(in, heisenberg, hamiltonian_name);
        if (integrals->parsed()) return cmd_integrals(in);
        if (consistency->parsed()) return cmd_consistency(in);
        if (check_rep->parsed())
            return cmd_check_rep(in, rep_file, tol, edge_margin, heisenberg, hamiltonian_name);
        if (flow->parsed()) return cmd_flow(in, flow_order);
        if (list->parsed()) return cmd_list_examples(list_format);
    } catch (const ncquant::ParseError& e) {
        std::cerr << "error: line " << e.pos.line << " col " << e.pos.col << ": " << e.what()
                  << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const MathError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMath;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
