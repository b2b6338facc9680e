#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>
#include <ncquant/repcheck.hpp>

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(NCQUANT_CLI_PATH) + " " + args + " 2>&1";
    RunResult r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf;
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
    int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

std::string temp_path(const std::string& name) {
    const char* dir = std::getenv("TMPDIR");
    return std::string(dir ? dir : "/tmp") + "/" + name;
}

}  // namespace

TEST_CASE("cli: list-examples names the built-in catalog") {
    auto r = run_cli("list-examples");
    CHECK(r.exit_code == 0);
    for (auto name : {"magnetic_particle", "euler_top", "pais_uhlenbeck", "nonlinear_oscillator",
                      "canonical_oscillator"})
        CHECK(contains(r.output, name));
    auto j = run_cli("list-examples --format json");
    CHECK(j.exit_code == 0);
    CHECK(nlohmann::json::parse(j.output).size() == 5);
}

TEST_CASE("cli: magnetic particle family has the free parameter k") {
    auto r = run_cli("quantize --example magnetic_particle --order 1");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.output, "v_y v_x = v_x v_y + i*hbar*k"));
    CHECK(contains(r.output, "free parameters: k"));
    CHECK(contains(r.output, "exact: yes"));
}

TEST_CASE("cli: euler top with heisenberg prints the family constraints") {
    auto r = run_cli("quantize --example euler_top --order 1 --heisenberg");
    CHECK(r.exit_code == 0);
    // the orthogonality constraint of the relation family
    CHECK(contains(r.output, "a1*f1 + a2*f2 + a3*f3 = 0"));
    // cross-product-form pinning b x f = a (the f3 = 0 member): b3 f2 = -a1,
    // b3 f1 = a2, and the remaining component as a condition on the constants
    CHECK(contains(r.output, "b3*f2 + a1 = 0"));
    CHECK(contains(r.output, "b3*f1 - a2 = 0"));
    CHECK(contains(r.output, "a1*b1 + a2*b2 + a3*b3"));
}

TEST_CASE("cli: canonical oscillator heisenberg pins the canonical commutator") {
    auto r = run_cli("quantize --example canonical_oscillator --heisenberg");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.output, "p x = x p + -i*hbar"));
    CHECK(contains(r.output, "free parameters:\n"));
}

TEST_CASE("cli: missing input file is a usage error") {
    auto r = run_cli("quantize --file missing.nq");
    CHECK(r.exit_code == 1);
    auto r2 = run_cli("quantize --example no_such_system");
    CHECK(r2.exit_code == 1);
    auto r3 = run_cli("quantize");
    CHECK(r3.exit_code == 1);
}

TEST_CASE("cli: parse errors carry line and column") {
    std::string path = temp_path("ncquant_cli_bad.nq");
    {
        std::ofstream f(path);
        f << "system broken\ngenerators x\nevolution\n  x' = y\n";
    }
    auto r = run_cli("quantize --file " + path);
    CHECK(r.exit_code == 1);
    CHECK(contains(r.output, "line 4"));
    std::remove(path.c_str());
}

TEST_CASE("cli: json output is deterministic and parses") {
    auto a = run_cli("quantize --example euler_top --format json");
    auto b = run_cli("quantize --example euler_top --format json");
    REQUIRE(a.exit_code == 0);
    CHECK(a.output == b.output);
    auto j = nlohmann::json::parse(a.output);
    CHECK(j["system"] == "euler_top");
    CHECK(j["exact"] == true);
    CHECK(j["consistency_report"]["consistent"] == true);
}

TEST_CASE("cli: integrals subcommand reports corrected integrals") {
    auto r = run_cli("integrals --example nonlinear_oscillator --format json");
    CHECK(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.output);
    REQUIRE(j["integrals"].contains("H"));
    CHECK(contains(j["integrals"]["H"].get<std::string>(), "hbar^2"));
}

TEST_CASE("cli: consistency subcommand passes on the solved examples") {
    for (auto name : {"magnetic_particle", "euler_top", "pais_uhlenbeck"}) {
        auto r = run_cli(std::string("consistency --example ") + name);
        CHECK(r.exit_code == 0);
        CHECK(contains(r.output, "consistency: ok"));
    }
}

TEST_CASE("cli: flow prints the Lie series coefficients") {
    auto r = run_cli("flow --example canonical_oscillator --flow-order 2");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.output, "x[0] = x"));
    CHECK(contains(r.output, "x[1] ="));
    CHECK(contains(r.output, "x[2] ="));
}

TEST_CASE("cli: check-rep validates a spin representation file") {
    using namespace ncquant;
    // spin-1/2 triple with member values f = (1, 1, 1) on a = (1, 1, -2)
    MatrixRep spin = builtin_rep("spin", 2, {{"hbar", 0.5}});
    nlohmann::json j;
    j["dimension"] = 2;
    for (auto& [name, m] : spin.generators) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < m.cols(); ++c)
                row.push_back({m(r, c).real(), m(r, c).imag()});
            rows.push_back(std::move(row));
        }
        j["generators"][name] = std::move(rows);
    }
    j["values"] = {{"hbar", 0.5}, {"a1", 1.0}, {"a2", 1.0},  {"a3", -2.0},
                   {"f3", 1.0},   {"f2", 1.0}, {"b1", 1.0},  {"b2", 1.0},
                   {"b3", 1.0}};
    std::string path = temp_path("ncquant_cli_spin.json");
    {
        std::ofstream f(path);
        f << j.dump();
    }
    auto r = run_cli("check-rep --example euler_top --rep " + path + " --tol 1e-10");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.output, "pass"));

    auto bad = run_cli("check-rep --example euler_top --rep " + path + "_missing --tol 1e-10");
    CHECK(bad.exit_code == 1);
    std::remove(path.c_str());
}
