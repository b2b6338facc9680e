#pragma once

#include <cctype>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "solver.hpp"

namespace ncquant {

// ---------------------------------------------------------------------------
// Source locations and diagnostics
// ---------------------------------------------------------------------------

struct SourcePos {
    int line = 1;
    int col = 1;
};

/// Located diagnostic: every rejected input names the offending line/column.
class ParseError : public std::runtime_error {
  public:
    ParseError(SourcePos p, const std::string& msg)
        : std::runtime_error("line " + std::to_string(p.line) + ", column " +
                             std::to_string(p.col) + ": " + msg),
          pos(p) {}
    SourcePos pos;
};

// ---------------------------------------------------------------------------
// Expression trees
// ---------------------------------------------------------------------------

/// Commutative classical expression: the user writes ordinary rational
/// arithmetic; operator ordering is applied later at the algebra boundary.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum Kind { Num, Sym, Add, Mul, Neg, Pow, Div } kind;
    Rational value;           // Num (always a non-negative integer literal)
    std::string name;         // Sym
    std::vector<ExprPtr> kids;  // Add/Mul: n-ary; Neg: 1; Pow: 1; Div: 2
    unsigned exponent = 0;    // Pow
    SourcePos pos;

    static ExprPtr num(Rational v, SourcePos p = {}) {
        auto e = std::make_shared<Expr>();
        e->kind = Num;
        e->value = std::move(v);
        e->pos = p;
        return e;
    }
    static ExprPtr sym(std::string n, SourcePos p = {}) {
        auto e = std::make_shared<Expr>();
        e->kind = Sym;
        e->name = std::move(n);
        e->pos = p;
        return e;
    }
    static ExprPtr node(Kind k, std::vector<ExprPtr> kids, SourcePos p = {}) {
        auto e = std::make_shared<Expr>();
        e->kind = k;
        e->kids = std::move(kids);
        e->pos = p;
        return e;
    }
    static ExprPtr pow(ExprPtr base, unsigned exp, SourcePos p = {}) {
        auto e = std::make_shared<Expr>();
        e->kind = Pow;
        e->kids = {std::move(base)};
        e->exponent = exp;
        e->pos = p;
        return e;
    }
};

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case Expr::Num: return a->value == b->value;
        case Expr::Sym: return a->name == b->name;
        case Expr::Pow:
            if (a->exponent != b->exponent) return false;
            [[fallthrough]];
        default:
            if (a->kids.size() != b->kids.size()) return false;
            for (size_t k = 0; k < a->kids.size(); ++k)
                if (!expr_equal(a->kids[k], b->kids[k])) return false;
            return true;
    }
}

// ---------------------------------------------------------------------------
// System specification
// ---------------------------------------------------------------------------

struct DenDecl {
    std::string name;
    ExprPtr body;  // q in d = 1/(q); polynomial in generators and constants
};

struct Equation {
    std::string name;  // generator (evolution) or integral name
    ExprPtr rhs;
};

/// Parsed system definition: declarations, evolution equations, named
/// classical integrals and default solver options.
struct SystemSpec {
    std::string name;
    std::vector<std::string> constants;
    std::vector<std::string> generators;
    std::vector<DenDecl> denominators;
    std::vector<Equation> evolution;  // one per generator, declaration order
    std::vector<Equation> integrals;
    std::map<std::string, std::string> options;

    /// Default ansatz configuration with the options section applied.
    AnsatzConfig config() const {
        AnsatzConfig cfg;
        for (auto& [key, val] : options) {
            if (key == "order")
                cfg.K = std::stoi(val);
            else if (key == "table_degree")
                cfg.table_degree = std::stoi(val);
            else if (key == "deriv_degree")
                cfg.deriv_degree = std::stoi(val);
            else if (key == "integral_degree")
                cfg.integral_degree = std::stoi(val);
            else if (key == "hermiticity")
                cfg.hermiticity = (val == "true" || val == "1");
            else
                throw std::invalid_argument("unknown option: " + key);
        }
        return cfg;
    }
};

inline bool operator==(const DenDecl& a, const DenDecl& b) {
    return a.name == b.name && expr_equal(a.body, b.body);
}
inline bool operator==(const Equation& a, const Equation& b) {
    return a.name == b.name && expr_equal(a.rhs, b.rhs);
}
inline bool operator==(const SystemSpec& a, const SystemSpec& b) {
    return a.name == b.name && a.constants == b.constants && a.generators == b.generators &&
           a.denominators == b.denominators && a.evolution == b.evolution &&
           a.integrals == b.integrals && a.options == b.options;
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace detail {

struct Token {
    enum Kind { Ident, Number, Punct, End } kind = End;
    std::string text;   // Ident / Punct
    Rational value;     // Number
    SourcePos pos;
};

class Lexer {
  public:
    explicit Lexer(const std::string& text) : text_(text) { advance(); }

    const Token& peek() const { return tok_; }
    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

  private:
    void advance() {
        while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_]))) bump();
        tok_ = Token{};
        tok_.pos = {line_, col_};
        if (i_ >= text_.size()) {
            tok_.kind = Token::End;
            return;
        }
        char c = text_[i_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            tok_.kind = Token::Ident;
            while (i_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[i_])) || text_[i_] == '_')) {
                tok_.text += text_[i_];
                bump();
            }
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string digits;
            while (i_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i_]))) {
                digits += text_[i_];
                bump();
            }
            if (i_ < text_.size() && text_[i_] == '.')
                throw ParseError({line_, col_},
                                 "floating-point literals are not allowed; use exact rationals");
            tok_.kind = Token::Number;
            tok_.value = Rational(digits);
            return;
        }
        static const std::string puncts = "+-*/^()='";
        if (puncts.find(c) != std::string::npos) {
            tok_.kind = Token::Punct;
            tok_.text = std::string(1, c);
            bump();
            return;
        }
        throw ParseError({line_, col_}, std::string("unexpected character '") + c + "'");
    }

    void bump() {
        if (text_[i_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++i_;
    }

    const std::string& text_;
    size_t i_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace detail {

class SystemParser {
  public:
    explicit SystemParser(const std::string& text) : lex_(text) {}

    SystemSpec parse() {
        expect_keyword("system");
        spec_.name = expect_ident("system name");
        if (at_keyword("constants")) {
            lex_.next();
            while (at_plain_ident()) declare(spec_.constants, expect_ident("constant name"));
        }
        if (at_keyword("generators")) {
            lex_.next();
            while (at_plain_ident()) declare(spec_.generators, expect_ident("generator name"));
        }
        while (at_keyword("denominator")) {
            lex_.next();
            DenDecl d;
            d.name = expect_ident("denominator name");
            check_fresh(d.name, lex_.peek().pos);
            expect_punct("=");
            Token one = lex_.next();
            if (one.kind != Token::Number || one.value != Rational(1))
                throw ParseError(one.pos, "denominator must have the form 1/(...)");
            expect_punct("/");
            expect_punct("(");
            in_denominator_ = true;
            d.body = parse_expr();
            in_denominator_ = false;
            expect_punct(")");
            spec_.denominators.push_back(std::move(d));
            declared_.push_back(spec_.denominators.back().name);
        }
        expect_keyword("evolution");
        do {
            Equation eq;
            Token lhs = lex_.next();
            if (lhs.kind != Token::Ident)
                throw ParseError(lhs.pos, "expected a generator name on the left of '");
            if (!is_generator(lhs.text))
                throw ParseError(lhs.pos, "evolution of undeclared generator '" + lhs.text + "'");
            eq.name = lhs.text;
            expect_punct("'");
            expect_punct("=");
            eq.rhs = parse_expr();
            for (auto& prev : spec_.evolution)
                if (prev.name == eq.name)
                    throw ParseError(lhs.pos, "duplicate evolution equation for '" + eq.name + "'");
            spec_.evolution.push_back(std::move(eq));
        } while (at_plain_ident() && !at_keyword("integrals") && !at_keyword("options"));
        if (spec_.evolution.size() != spec_.generators.size())
            throw ParseError(lex_.peek().pos, "evolution must define every generator exactly once");
        // report in generator declaration order
        std::vector<Equation> ordered;
        for (auto& g : spec_.generators)
            for (auto& eq : spec_.evolution)
                if (eq.name == g) ordered.push_back(eq);
        spec_.evolution = std::move(ordered);
        if (at_keyword("integrals")) {
            lex_.next();
            do {
                Equation eq;
                eq.name = expect_ident("integral name");
                expect_punct("=");
                eq.rhs = parse_expr();
                spec_.integrals.push_back(std::move(eq));
            } while (at_plain_ident() && !at_keyword("options"));
        }
        if (at_keyword("options")) {
            lex_.next();
            do {
                std::string key = expect_ident("option name");
                expect_punct("=");
                Token val = lex_.next();
                if (val.kind == Token::Number) {
                    std::ostringstream os;
                    os << val.value;
                    spec_.options[key] = os.str();
                } else if (val.kind == Token::Ident) {
                    spec_.options[key] = val.text;
                } else {
                    throw ParseError(val.pos, "expected an option value");
                }
            } while (at_plain_ident());
        }
        Token end = lex_.next();
        if (end.kind != Token::End) throw ParseError(end.pos, "unexpected trailing input");
        return std::move(spec_);
    }

  private:
    static bool is_keyword(const std::string& s) {
        return s == "system" || s == "constants" || s == "generators" || s == "denominator" ||
               s == "evolution" || s == "integrals" || s == "options";
    }
    bool at_keyword(const std::string& k) const {
        return lex_.peek().kind == Token::Ident && lex_.peek().text == k;
    }
    bool at_plain_ident() const {
        return lex_.peek().kind == Token::Ident && !is_keyword(lex_.peek().text);
    }
    void expect_keyword(const std::string& k) {
        Token t = lex_.next();
        if (t.kind != Token::Ident || t.text != k)
            throw ParseError(t.pos, "expected '" + k + "'");
    }
    std::string expect_ident(const std::string& what) {
        Token t = lex_.next();
        if (t.kind != Token::Ident) throw ParseError(t.pos, "expected " + what);
        if (is_keyword(t.text)) throw ParseError(t.pos, "'" + t.text + "' is a reserved word");
        return t.text;
    }
    void expect_punct(const std::string& p) {
        Token t = lex_.next();
        if (t.kind != Token::Punct || t.text != p)
            throw ParseError(t.pos, "expected '" + p + "'");
    }
    void check_fresh(const std::string& n, SourcePos p) {
        for (auto& d : declared_)
            if (d == n) throw ParseError(p, "symbol redeclared: '" + n + "'");
    }
    void declare(std::vector<std::string>& into, const std::string& n) {
        check_fresh(n, lex_.peek().pos);
        into.push_back(n);
        declared_.push_back(n);
    }
    bool is_declared(const std::string& n) const {
        for (auto& d : declared_)
            if (d == n) return true;
        return false;
    }
    bool is_generator(const std::string& n) const {
        for (auto& g : spec_.generators)
            if (g == n) return true;
        return false;
    }
    bool is_denominator(const std::string& n) const {
        for (auto& d : spec_.denominators)
            if (d.name == n) return true;
        return false;
    }

    // expr := term (('+'|'-') term)*  — flattened n-ary sum
    ExprPtr parse_expr() {
        SourcePos p = lex_.peek().pos;
        std::vector<ExprPtr> kids{parse_term()};
        while (lex_.peek().kind == Token::Punct &&
               (lex_.peek().text == "+" || lex_.peek().text == "-")) {
            Token op = lex_.next();
            ExprPtr t = parse_term();
            kids.push_back(op.text == "-" ? Expr::node(Expr::Neg, {t}, op.pos) : t);
        }
        if (kids.size() == 1) return kids[0];
        return Expr::node(Expr::Add, std::move(kids), p);
    }

    // term := factor (('*'|'/') factor)*  — '*' flattens, '/' folds left
    ExprPtr parse_term() {
        SourcePos p = lex_.peek().pos;
        ExprPtr acc = parse_factor();
        while (lex_.peek().kind == Token::Punct &&
               (lex_.peek().text == "*" || lex_.peek().text == "/")) {
            Token op = lex_.next();
            ExprPtr f = parse_factor();
            if (op.text == "/") {
                acc = Expr::node(Expr::Div, {acc, f}, op.pos);
            } else if (acc->kind == Expr::Mul) {
                auto kids = acc->kids;
                kids.push_back(f);
                acc = Expr::node(Expr::Mul, std::move(kids), acc->pos);
            } else {
                acc = Expr::node(Expr::Mul, {acc, f}, p);
            }
        }
        return acc;
    }

    // factor := '-' factor | primary ('^' natural)?
    ExprPtr parse_factor() {
        if (lex_.peek().kind == Token::Punct && lex_.peek().text == "-") {
            Token op = lex_.next();
            return Expr::node(Expr::Neg, {parse_factor()}, op.pos);
        }
        ExprPtr base = parse_primary();
        if (lex_.peek().kind == Token::Punct && lex_.peek().text == "^") {
            Token op = lex_.next();
            Token e = lex_.next();
            if (e.kind != Token::Number || denominator(e.value) != 1 || e.value < 0)
                throw ParseError(e.pos, "non-natural exponent");
            return Expr::pow(base, static_cast<unsigned>(numerator(e.value)), op.pos);
        }
        return base;
    }

    ExprPtr parse_primary() {
        Token t = lex_.next();
        if (t.kind == Token::Number) return Expr::num(t.value, t.pos);
        if (t.kind == Token::Ident) {
            if (is_keyword(t.text))
                throw ParseError(t.pos, "'" + t.text + "' is a reserved word");
            if (!is_declared(t.text))
                throw ParseError(t.pos, "undeclared symbol '" + t.text + "'");
            if (in_denominator_ && is_denominator(t.text))
                throw ParseError(t.pos,
                                 "denominator body must be polynomial; '" + t.text +
                                     "' is itself a denominator");
            return Expr::sym(t.text, t.pos);
        }
        if (t.kind == Token::Punct && t.text == "(") {
            ExprPtr e = parse_expr();
            expect_punct(")");
            return e;
        }
        throw ParseError(t.pos, "expected an expression");
    }

    Lexer lex_;
    SystemSpec spec_;
    std::vector<std::string> declared_;
    bool in_denominator_ = false;
};

}  // namespace detail

/// Parses the system-definition language.  Throws ParseError with a precise
/// line/column on every malformed input.
inline SystemSpec parse_system(const std::string& text) {
    return detail::SystemParser(text).parse();
}

// ---------------------------------------------------------------------------
// Pretty printer (grammar round-trip: parse(print(s)) == s)
// ---------------------------------------------------------------------------

namespace detail {

// precedence levels: 0 sum, 1 product, 2 unary minus, 3 power, 4 atom
inline int expr_prec(const Expr& e) {
    switch (e.kind) {
        case Expr::Add: return 0;
        case Expr::Mul:
        case Expr::Div: return 1;
        case Expr::Neg: return 2;
        case Expr::Pow: return 3;
        default: return 4;
    }
}

inline void print_expr(std::ostream& os, const ExprPtr& e, int parent_prec) {
    bool parens = expr_prec(*e) < parent_prec;
    if (parens) os << "(";
    switch (e->kind) {
        case Expr::Num: os << e->value; break;
        case Expr::Sym: os << e->name; break;
        case Expr::Add:
            for (size_t k = 0; k < e->kids.size(); ++k) {
                const ExprPtr& kid = e->kids[k];
                if (k == 0) {
                    print_expr(os, kid, 1);
                } else if (kid->kind == Expr::Neg) {
                    os << " - ";
                    print_expr(os, kid->kids[0], 2);
                } else {
                    os << " + ";
                    print_expr(os, kid, 1);
                }
            }
            break;
        case Expr::Mul:
            for (size_t k = 0; k < e->kids.size(); ++k) {
                if (k) os << "*";
                print_expr(os, e->kids[k], 2);
            }
            break;
        case Expr::Div:
            print_expr(os, e->kids[0], 1);
            os << "/";
            print_expr(os, e->kids[1], 3);
            break;
        case Expr::Neg:
            os << "-";
            print_expr(os, e->kids[0], 2);
            break;
        case Expr::Pow:
            print_expr(os, e->kids[0], 4);
            os << "^" << e->exponent;
            break;
    }
    if (parens) os << ")";
}

}  // namespace detail

inline std::string to_text(const ExprPtr& e) {
    std::ostringstream os;
    detail::print_expr(os, e, 0);
    return os.str();
}

inline std::string to_text(const SystemSpec& s) {
    std::ostringstream os;
    os << "system " << s.name << "\n";
    if (!s.constants.empty()) {
        os << "constants";
        for (auto& c : s.constants) os << " " << c;
        os << "\n";
    }
    if (!s.generators.empty()) {
        os << "generators";
        for (auto& g : s.generators) os << " " << g;
        os << "\n";
    }
    for (auto& d : s.denominators)
        os << "denominator " << d.name << " = 1/(" << to_text(d.body) << ")\n";
    os << "evolution\n";
    for (auto& eq : s.evolution) os << "  " << eq.name << "' = " << to_text(eq.rhs) << "\n";
    if (!s.integrals.empty()) {
        os << "integrals\n";
        for (auto& eq : s.integrals) os << "  " << eq.name << " = " << to_text(eq.rhs) << "\n";
    }
    if (!s.options.empty()) {
        os << "options\n";
        for (auto& [k, v] : s.options) os << "  " << k << " = " << v << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Built-in example catalog
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& example_names() {
    static const std::vector<std::string> names{"magnetic_particle", "euler_top",
                                                "pais_uhlenbeck", "nonlinear_oscillator",
                                                "canonical_oscillator"};
    return names;
}

inline std::string example_text(const std::string& name) {
    if (name == "magnetic_particle")
        return "system magnetic_particle\n"
               "constants q B m c\n"
               "generators v_x v_y\n"
               "evolution\n"
               "  v_x' = q*B/(m*c)*v_y\n"
               "  v_y' = -q*B/(m*c)*v_x\n"
               "integrals\n"
               "  H = m/2*(v_x^2 + v_y^2)\n"
               "options\n"
               "  order = 1\n"
               "  table_degree = 0\n"
               "  deriv_degree = 0\n"
               "  integral_degree = 2\n";
    if (name == "euler_top")
        return "system euler_top\n"
               "constants a1 a2 a3 b1 b2 b3\n"
               "generators L1 L2 L3\n"
               "evolution\n"
               "  L1' = a1*L2*L3\n"
               "  L2' = a2*L1*L3\n"
               "  L3' = a3*L1*L2\n"
               "integrals\n"
               "  H = 1/2*(b1*L1^2 + b2*L2^2 + b3*L3^2)\n"
               "options\n"
               "  order = 1\n"
               "  table_degree = 1\n"
               "  deriv_degree = 2\n"
               "  integral_degree = 2\n";
    if (name == "pais_uhlenbeck")
        return "system pais_uhlenbeck\n"
               "constants w1 w2\n"
               "generators x1 x2 x3 x4\n"
               "evolution\n"
               "  x1' = x2\n"
               "  x2' = x3\n"
               "  x3' = x4\n"
               "  x4' = -(w1^2 + w2^2)*x3 - w1^2*w2^2*x1\n"
               "integrals\n"
               "  H1 = -1/2*w1^2*w2^2*x2^2 + 1/2*(w1^2 + w2^2)*x3^2 + 1/2*x4^2"
               " + w1^2*w2^2*x1*x3\n"
               "  H2 = 1/2*w1^2*w2^2*x1^2 + 1/2*(w1^2 + w2^2)*x2^2 - 1/2*x3^2 + x2*x4\n"
               "options\n"
               "  order = 1\n"
               "  table_degree = 0\n"
               "  deriv_degree = 0\n"
               "  integral_degree = 2\n";
    if (name == "nonlinear_oscillator")
        return "system nonlinear_oscillator\n"
               "constants lambda w\n"
               "generators x y\n"
               "denominator d = 1/(1 + lambda*x^2)\n"
               "evolution\n"
               "  x' = y\n"
               "  y' = lambda*d*x*y^2 - w^2*d*x\n"
               "integrals\n"
               "  H = 1/2*d*(y^2 + w^2*x^2)\n"
               "options\n"
               "  order = 2\n"
               "  table_degree = 2\n"
               "  deriv_degree = 2\n"
               "  integral_degree = 3\n";
    if (name == "canonical_oscillator")
        return "system canonical_oscillator\n"
               "constants m w\n"
               "generators x p\n"
               "evolution\n"
               "  x' = p/m\n"
               "  p' = -m*w^2*x\n"
               "integrals\n"
               "  H = p^2/(2*m) + m*w^2/2*x^2\n"
               "options\n"
               "  order = 1\n"
               "  table_degree = 0\n"
               "  deriv_degree = 0\n"
               "  integral_degree = 2\n";
    std::string msg = "unknown example '" + name + "'; available:";
    for (auto& n : example_names()) msg += " " + n;
    throw std::out_of_range(msg);
}

inline SystemSpec load_example(const std::string& name) {
    return parse_system(example_text(name));
}

// ---------------------------------------------------------------------------
// Lowering to the algebra layer
// ---------------------------------------------------------------------------

/// A spec lowered into live algebra objects.  Keep this alive while any
/// solver result derived from it is in use (results point at the generator
/// table).
struct LoweredSystem {
    SystemSpec spec;
    SymbolTable tab;
    GeneratorTable G;
    std::vector<NCElement> field;  // per generator, declaration order
    std::vector<std::pair<std::string, NCElement>> integrals;
    AnsatzConfig config;
};

namespace detail {

// commutative polynomial over (denominator exps, generator exps)
using CMono = std::pair<std::vector<unsigned>, std::vector<unsigned>>;
using CPoly = std::map<CMono, ParamRatio>;

struct LowerCtx {
    const SystemSpec* spec;
    SymbolTable* tab;
    int num_gens;
    int num_dens;  // 0 while denominator bodies are being evaluated

    int gen_index(const std::string& n) const {
        for (size_t k = 0; k < spec->generators.size(); ++k)
            if (spec->generators[k] == n) return static_cast<int>(k);
        return -1;
    }
    int den_index_of(const std::string& n) const {
        for (size_t k = 0; k < spec->denominators.size(); ++k)
            if (spec->denominators[k].name == n) return static_cast<int>(k);
        return -1;
    }
};

inline void cpoly_accumulate(CPoly& into, const CMono& m, const ParamRatio& c) {
    auto it = into.find(m);
    if (it == into.end()) {
        if (!c.is_zero()) into.emplace(m, c);
        return;
    }
    it->second += c;
    if (it->second.is_zero()) into.erase(it);
}

inline CPoly cpoly_mul(const CPoly& a, const CPoly& b) {
    CPoly r;
    for (auto& [ma, ca] : a)
        for (auto& [mb, cb] : b) {
            CMono m = ma;
            for (size_t k = 0; k < m.first.size(); ++k) m.first[k] += mb.first[k];
            for (size_t k = 0; k < m.second.size(); ++k) m.second[k] += mb.second[k];
            cpoly_accumulate(r, m, ca * cb);
        }
    return r;
}

inline CPoly eval_expr(const ExprPtr& e, const LowerCtx& ctx) {
    CMono unit{std::vector<unsigned>(ctx.num_dens, 0), std::vector<unsigned>(ctx.num_gens, 0)};
    switch (e->kind) {
        case Expr::Num: {
            CPoly r;
            ParamRatio c(ParamPoly(Scalar(e->value)));
            if (!c.is_zero()) r.emplace(unit, c);
            return r;
        }
        case Expr::Sym: {
            CPoly r;
            if (int g = ctx.gen_index(e->name); g >= 0) {
                CMono m = unit;
                m.second[g] = 1;
                r.emplace(m, ParamRatio::one());
                return r;
            }
            if (int d = ctx.den_index_of(e->name); d >= 0) {
                if (d >= ctx.num_dens)
                    throw ParseError(e->pos, "denominator '" + e->name + "' used before declared");
                CMono m = unit;
                m.first[d] = 1;
                r.emplace(m, ParamRatio::one());
                return r;
            }
            int id = ctx.tab->find(e->name)
                         ? *ctx.tab->find(e->name)
                         : throw ParseError(e->pos, "undeclared symbol '" + e->name + "'");
            r.emplace(unit, ParamRatio::symbol(id));
            return r;
        }
        case Expr::Add: {
            CPoly r;
            for (auto& kid : e->kids)
                for (auto& [m, c] : eval_expr(kid, ctx)) cpoly_accumulate(r, m, c);
            return r;
        }
        case Expr::Mul: {
            CPoly r = eval_expr(e->kids[0], ctx);
            for (size_t k = 1; k < e->kids.size(); ++k) r = cpoly_mul(r, eval_expr(e->kids[k], ctx));
            return r;
        }
        case Expr::Neg: {
            CPoly r = eval_expr(e->kids[0], ctx);
            for (auto& [m, c] : r) c = c.scaled(Scalar(-1));
            return r;
        }
        case Expr::Pow: {
            CPoly r;
            r.emplace(unit, ParamRatio::one());
            CPoly base = eval_expr(e->kids[0], ctx);
            for (unsigned k = 0; k < e->exponent; ++k) r = cpoly_mul(r, base);
            return r;
        }
        case Expr::Div: {
            CPoly num = eval_expr(e->kids[0], ctx);
            CPoly den = eval_expr(e->kids[1], ctx);
            if (den.size() != 1 || den.begin()->first.first != std::vector<unsigned>(ctx.num_dens, 0) ||
                den.begin()->first.second != std::vector<unsigned>(ctx.num_gens, 0))
                throw ParseError(e->pos,
                                 "division only by constants; invert generator polynomials "
                                 "through a declared denominator");
            ParamRatio inv = den.begin()->second.inverse();
            for (auto& [m, c] : num) c *= inv;
            return num;
        }
    }
    throw ParseError(e->pos, "malformed expression");
}

}  // namespace detail

inline LoweredSystem lower(const SystemSpec& spec) {
    LoweredSystem sys;
    sys.spec = spec;
    sys.config = spec.config();
    for (auto& c : spec.constants) sys.tab.declare(c, SymbolKind::Constant);
    for (auto& g : spec.generators) sys.G.declare(g);

    detail::LowerCtx ctx{&sys.spec, &sys.tab, static_cast<int>(spec.generators.size()), 0};
    for (auto& d : spec.denominators) {
        // the body was validated polynomial at parse time; num_dens stays at
        // the declared-so-far count so forward references fail loudly
        detail::CPoly body = detail::eval_expr(d.body, ctx);
        GenPoly<ParamRatio> q;
        for (auto& [m, c] : body) q[m.second] = c;
        sys.G.declare_denominator(d.name, std::move(q));
        ctx.num_dens = sys.G.num_dens();
    }

    int K = sys.config.K + 2;  // canonicalization margin above the solve order
    auto to_element = [&](const ExprPtr& e) {
        NCElement out;
        for (auto& [m, c] : detail::eval_expr(e, ctx)) {
            OrderedMonomial om = OrderedMonomial::unit(sys.G);
            om.den = m.first;
            om.gen = m.second;
            out.add(om, HSeries(c));
        }
        return reduce_denominators(out, sys.G, K);
    };
    for (auto& eq : spec.evolution) sys.field.push_back(to_element(eq.rhs));
    for (auto& eq : spec.integrals) sys.integrals.emplace_back(eq.name, to_element(eq.rhs));
    return sys;
}

}  // namespace ncquant
