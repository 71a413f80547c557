#pragma once

// Propositional knowledge: literals, CNF, a small formula language, and the
// brute-force semantics every other layer is tested against.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nesy/error.hpp"

namespace nesy {

// DIMACS-style literal: +v or -v for variable v >= 1.
class lit {
public:
    constexpr lit() = default;
    constexpr explicit lit(int dimacs) : code_(dimacs) {}
    static constexpr lit pos(int var) { return lit(var); }
    static constexpr lit neg(int var) { return lit(-var); }

    constexpr int var() const { return code_ < 0 ? -code_ : code_; }
    constexpr bool positive() const { return code_ > 0; }
    constexpr int dimacs() const { return code_; }
    constexpr lit operator~() const { return lit(-code_); }

    constexpr auto operator<=>(const lit&) const = default;

private:
    int code_ = 0;
};

// How a variable's literals are weighted during evaluation.
//   bernoulli  positive literal p, negative literal 1 - p
//   indicator  positive literal p, negative literal unit (one-hot groups)
//   auxiliary  both literals unit; not an input (Tseitin / carry definitions)
enum class var_role : std::uint8_t { bernoulli, indicator, auxiliary };

using clause = std::vector<lit>;

struct cnf {
    int num_vars = 0;
    std::vector<clause> clauses;
    // An empty clause was present: the theory is unsatisfiable.
    bool unsat = false;
    // roles[v - 1]; always num_vars entries.
    std::vector<var_role> roles;

    cnf() = default;
    explicit cnf(int n) : num_vars(n), roles(static_cast<std::size_t>(n), var_role::bernoulli) {}

    var_role role(int v) const { return roles[static_cast<std::size_t>(v - 1)]; }
    bool is_auxiliary(int v) const { return role(v) == var_role::auxiliary; }

    // Non-auxiliary variables in id order; these are the evaluation inputs.
    std::vector<int> input_vars() const {
        std::vector<int> out;
        for (int v = 1; v <= num_vars; ++v)
            if (!is_auxiliary(v)) out.push_back(v);
        return out;
    }

    int max_input_var() const {
        for (int v = num_vars; v >= 1; --v)
            if (!is_auxiliary(v)) return v;
        return 0;
    }

    bool operator==(const cnf&) const = default;
};

// Sort-free normalisation: drops duplicate literals (keeping first occurrence).
// Returns false when the clause is tautological.
inline bool normalize_clause(clause& c) {
    clause out;
    out.reserve(c.size());
    for (lit l : c) {
        if (std::find(out.begin(), out.end(), ~l) != out.end()) return false;
        if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    }
    c = std::move(out);
    return true;
}

// ---------------------------------------------------------------------------
// DIMACS

namespace detail {

inline std::vector<std::pair<std::string_view, std::size_t>> split_tokens(std::string_view line) {
    std::vector<std::pair<std::string_view, std::size_t>> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.emplace_back(line.substr(start, i - start), start + 1);
    }
    return out;
}

inline std::optional<long long> parse_integer(std::string_view tok) {
    long long v = 0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

}  // namespace detail

// Parses DIMACS CNF. Text after a clause's terminating 0 on the same line is a
// comment when it does not start with an integer (e.g. "-1 2 0   c A -> B").
inline cnf parse_dimacs(std::string_view text) {
    cnf out;
    bool have_header = false;
    long long declared_clauses = 0;
    long long parsed_clauses = 0;
    clause current;
    std::size_t line_no = 0;
    std::size_t current_start_line = 0;

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = eol + 1;
        ++line_no;

        auto tokens = detail::split_tokens(line);
        if (tokens.empty()) continue;
        if (tokens[0].first[0] == 'c') continue;
        if (tokens[0].first == "%") break;

        if (tokens[0].first == "p") {
            if (have_header) throw parse_error("duplicate problem line", line_no);
            if (!current.empty()) throw parse_error("problem line inside a clause", line_no);
            if (tokens.size() != 4 || tokens[1].first != "cnf")
                throw parse_error("malformed problem line, expected 'p cnf <vars> <clauses>'", line_no);
            auto nv = detail::parse_integer(tokens[2].first);
            auto nc = detail::parse_integer(tokens[3].first);
            if (!nv || !nc || *nv < 0 || *nc < 0 || *nv > (1 << 28))
                throw parse_error("malformed problem line, bad counts", line_no);
            out = cnf(static_cast<int>(*nv));
            declared_clauses = *nc;
            have_header = true;
            continue;
        }

        bool terminated_on_line = false;
        for (const auto& [tok, col] : tokens) {
            auto value = detail::parse_integer(tok);
            if (!value) {
                if (terminated_on_line) break;  // trailing comment
                throw parse_error("unexpected token '" + std::string(tok) + "'", line_no, col);
            }
            if (!have_header) throw parse_error("clause before problem line", line_no, col);
            if (*value == 0) {
                if (tok[0] == '-') throw parse_error("literal index 0 inside a clause body", line_no, col);
                ++parsed_clauses;
                if (current.empty()) {
                    out.unsat = true;
                } else if (normalize_clause(current)) {
                    out.clauses.push_back(std::move(current));
                }
                current.clear();
                terminated_on_line = true;
                continue;
            }
            if (*value > out.num_vars || -*value > out.num_vars)
                throw parse_error("literal " + std::string(tok) + " exceeds declared variable count " +
                                      std::to_string(out.num_vars),
                                  line_no, col);
            if (current.empty()) current_start_line = line_no;
            current.push_back(lit(static_cast<int>(*value)));
            terminated_on_line = false;
        }
    }
    if (!have_header) throw parse_error("missing problem line", line_no);
    if (!current.empty()) throw parse_error("unterminated final clause", current_start_line);
    if (parsed_clauses != declared_clauses)
        throw parse_error("clause count mismatch: declared " + std::to_string(declared_clauses) +
                              ", found " + std::to_string(parsed_clauses),
                          line_no);
    return out;
}

// Writes DIMACS; an unsat marker is written as a trailing empty clause.
inline std::string to_dimacs(const cnf& f) {
    std::ostringstream os;
    os << "p cnf " << f.num_vars << ' ' << f.clauses.size() + (f.unsat ? 1 : 0) << '\n';
    for (const auto& c : f.clauses) {
        for (lit l : c) os << l.dimacs() << ' ';
        os << "0\n";
    }
    if (f.unsat) os << "0\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Formula language

enum class formula_kind : std::uint8_t { var, negation, conjunction, disjunction, implication, equivalence, top, bottom };

struct formula {
    formula_kind kind = formula_kind::top;
    int var = 0;
    std::vector<formula> children;

    static formula variable(int v) { return {formula_kind::var, v, {}}; }
    static formula constant(bool value) { return {value ? formula_kind::top : formula_kind::bottom, 0, {}}; }
    static formula negation_of(formula a) { return {formula_kind::negation, 0, {std::move(a)}}; }
    static formula binary(formula_kind k, formula a, formula b) { return {k, 0, {std::move(a), std::move(b)}}; }
    static formula conj(formula a, formula b) { return binary(formula_kind::conjunction, std::move(a), std::move(b)); }
    static formula disj(formula a, formula b) { return binary(formula_kind::disjunction, std::move(a), std::move(b)); }

    bool is_literal() const {
        return kind == formula_kind::var ||
               (kind == formula_kind::negation && children[0].kind == formula_kind::var);
    }
    lit as_literal() const { return kind == formula_kind::var ? lit::pos(var) : lit::neg(children[0].var); }

    bool operator==(const formula&) const = default;
};

inline int max_var(const formula& f) {
    int m = f.kind == formula_kind::var ? f.var : 0;
    for (const auto& c : f.children) m = std::max(m, max_var(c));
    return m;
}

class name_table {
public:
    name_table() = default;
    name_table(std::initializer_list<std::string> names) {
        for (const auto& n : names) declare(n);
    }

    // Returns the id of an existing name or assigns the next dense id.
    int declare(const std::string& name) {
        auto it = ids_.find(name);
        if (it != ids_.end()) return it->second;
        names_.push_back(name);
        ids_.emplace(name, static_cast<int>(names_.size()));
        return static_cast<int>(names_.size());
    }
    std::optional<int> find(const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }
    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id - 1)); }
    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> ids_;
};

namespace detail {

class formula_parser {
public:
    formula_parser(std::string_view text, name_table& names, bool declare)
        : text_(text), names_(names), declare_(declare) {}

    formula parse() {
        formula f = parse_iff();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return f;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw parse_error(what, 1, pos_ + 1); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool accept(std::string_view op) {
        skip_ws();
        if (text_.substr(pos_, op.size()) == op) {
            pos_ += op.size();
            return true;
        }
        return false;
    }

    formula parse_iff() {
        formula lhs = parse_implies();
        while (accept("<->")) lhs = formula::binary(formula_kind::equivalence, std::move(lhs), parse_implies());
        return lhs;
    }
    formula parse_implies() {
        formula lhs = parse_or();
        if (accept("->")) return formula::binary(formula_kind::implication, std::move(lhs), parse_implies());
        return lhs;
    }
    formula parse_or() {
        formula lhs = parse_and();
        while (accept("|")) lhs = formula::disj(std::move(lhs), parse_and());
        return lhs;
    }
    formula parse_and() {
        formula lhs = parse_unary();
        while (accept("&")) lhs = formula::conj(std::move(lhs), parse_unary());
        return lhs;
    }
    formula parse_unary() {
        if (accept("~")) return formula::negation_of(parse_unary());
        if (accept("(")) {
            formula inner = parse_iff();
            if (!accept(")")) fail("expected ')'");
            return inner;
        }
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        if (start == pos_) fail(pos_ < text_.size() ? "unexpected '" + std::string(1, text_[pos_]) + "'"
                                                    : std::string("unexpected end of input"));
        if (std::isdigit(static_cast<unsigned char>(text_[start]))) {
            pos_ = start;
            fail("identifier expected");
        }
        std::string ident(text_.substr(start, pos_ - start));
        if (ident == "true") return formula::constant(true);
        if (ident == "false") return formula::constant(false);
        auto id = names_.find(ident);
        if (!id) {
            if (!declare_) {
                pos_ = start;
                fail("unknown identifier '" + ident + "'");
            }
            id = names_.declare(ident);
        }
        return formula::variable(*id);
    }

    std::string_view text_;
    name_table& names_;
    bool declare_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Precedence (tightest first): ~ & | -> <->. "->" is right-associative.
// With declare_new, unknown identifiers are added to the table in order of appearance.
inline formula parse_formula(std::string_view text, name_table& names, bool declare_new = false) {
    return detail::formula_parser(text, names, declare_new).parse();
}

inline formula parse_formula(std::string_view text, const name_table& names) {
    name_table copy = names;
    return parse_formula(text, copy, false);
}

inline std::string to_string(const formula& f, const name_table* names = nullptr) {
    auto var_name = [&](int v) { return names && v <= names->size() ? names->name(v) : "v" + std::to_string(v); };
    switch (f.kind) {
        case formula_kind::var: return var_name(f.var);
        case formula_kind::top: return "true";
        case formula_kind::bottom: return "false";
        case formula_kind::negation: return "~" + to_string(f.children[0], names);
        default: break;
    }
    const char* op = f.kind == formula_kind::conjunction   ? " & "
                     : f.kind == formula_kind::disjunction ? " | "
                     : f.kind == formula_kind::implication ? " -> "
                                                           : " <-> ";
    std::string out = "(";
    for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += op;
        out += to_string(f.children[i], names);
    }
    return out + ")";
}

// ---------------------------------------------------------------------------
// Normal forms

namespace detail {

inline formula nnf(const formula& f, bool negate) {
    using K = formula_kind;
    switch (f.kind) {
        case K::var: return negate ? formula::negation_of(f) : f;
        case K::top: return formula::constant(!negate);
        case K::bottom: return formula::constant(negate);
        case K::negation: return nnf(f.children[0], !negate);
        case K::conjunction:
        case K::disjunction: {
            formula out{(f.kind == K::conjunction) != negate ? K::conjunction : K::disjunction, 0, {}};
            for (const auto& c : f.children) out.children.push_back(nnf(c, negate));
            return out;
        }
        case K::implication:
            // a -> b == ~a | b ; ~(a -> b) == a & ~b
            if (negate) return formula::conj(nnf(f.children[0], false), nnf(f.children[1], true));
            return formula::disj(nnf(f.children[0], true), nnf(f.children[1], false));
        case K::equivalence: {
            const auto& a = f.children[0];
            const auto& b = f.children[1];
            if (negate)
                return formula::disj(formula::conj(nnf(a, false), nnf(b, true)),
                                     formula::conj(nnf(a, true), nnf(b, false)));
            return formula::disj(formula::conj(nnf(a, false), nnf(b, false)),
                                 formula::conj(nnf(a, true), nnf(b, true)));
        }
    }
    return f;
}

}  // namespace detail

// Eliminates -> and <->, pushes negations to variables, removes double negation.
inline formula to_nnf(const formula& f) { return detail::nnf(f, false); }

inline bool is_nnf(const formula& f) {
    switch (f.kind) {
        case formula_kind::var:
        case formula_kind::top:
        case formula_kind::bottom: return true;
        case formula_kind::negation: return f.children[0].kind == formula_kind::var;
        case formula_kind::conjunction:
        case formula_kind::disjunction:
            return std::all_of(f.children.begin(), f.children.end(), [](const formula& c) { return is_nnf(c); });
        default: return false;
    }
}

namespace detail {

// Folds constants out of an NNF formula and flattens nested and/or.
inline formula simplify_nnf(const formula& f) {
    using K = formula_kind;
    if (f.kind != K::conjunction && f.kind != K::disjunction) return f;
    const K absorbing = f.kind == K::conjunction ? K::bottom : K::top;
    const K neutral = f.kind == K::conjunction ? K::top : K::bottom;
    formula out{f.kind, 0, {}};
    for (const auto& c : f.children) {
        formula s = simplify_nnf(c);
        if (s.kind == absorbing) return s;
        if (s.kind == neutral) continue;
        if (s.kind == f.kind) {
            for (auto& g : s.children) out.children.push_back(std::move(g));
        } else {
            out.children.push_back(std::move(s));
        }
    }
    if (out.children.empty()) return formula{neutral, 0, {}};
    if (out.children.size() == 1) return std::move(out.children[0]);
    return out;
}

class tseitin {
public:
    explicit tseitin(int num_vars) : out_(num_vars) {}

    cnf run(const formula& root) {
        formula f = simplify_nnf(root);
        if (f.kind == formula_kind::top) return std::move(out_);
        if (f.kind == formula_kind::bottom) {
            out_.unsat = true;
            return std::move(out_);
        }
        if (f.kind == formula_kind::conjunction) {
            for (const auto& c : f.children) emit_top(c);
        } else {
            emit_top(f);
        }
        return std::move(out_);
    }

private:
    void add(clause c) {
        if (normalize_clause(c)) out_.clauses.push_back(std::move(c));
    }

    void emit_top(const formula& f) {
        if (f.is_literal()) return add({f.as_literal()});
        clause c;
        for (const auto& g : f.children) c.push_back(literal_for(g));
        add(std::move(c));
    }

    // Literal equivalent to f, introducing a defined auxiliary when f is compound.
    lit literal_for(const formula& f) {
        if (f.is_literal()) return f.as_literal();
        std::vector<lit> parts;
        for (const auto& g : f.children) parts.push_back(literal_for(g));
        ++out_.num_vars;
        out_.roles.push_back(var_role::auxiliary);
        lit x = lit::pos(out_.num_vars);
        if (f.kind == formula_kind::conjunction) {
            clause back{x};
            for (lit p : parts) {
                add({~x, p});
                back.push_back(~p);
            }
            add(std::move(back));
        } else {
            clause fwd{~x};
            for (lit p : parts) {
                add({x, ~p});
                fwd.push_back(p);
            }
            add(std::move(fwd));
        }
        return x;
    }

    cnf out_;
};

}  // namespace detail

// Tseitin encoding of an NNF formula. Auxiliary variables are numbered after
// num_vars (defaults to the largest variable in f) and flagged auxiliary.
inline cnf to_cnf(const formula& f, int num_vars = -1) {
    if (!is_nnf(f)) throw semantic_error("to_cnf requires an NNF formula");
    if (num_vars < 0) num_vars = max_var(f);
    return detail::tseitin(num_vars).run(f);
}

// ---------------------------------------------------------------------------
// Brute-force semantics

// Assignment indexed by variable id - 1.
using assignment = std::vector<bool>;

inline bool eval_assignment(const formula& f, const assignment& a) {
    using K = formula_kind;
    switch (f.kind) {
        case K::var:
            if (f.var < 1 || static_cast<std::size_t>(f.var) > a.size())
                throw semantic_error("missing assignment entry for variable " + std::to_string(f.var));
            return a[static_cast<std::size_t>(f.var - 1)];
        case K::top: return true;
        case K::bottom: return false;
        case K::negation: return !eval_assignment(f.children[0], a);
        case K::conjunction:
            return std::all_of(f.children.begin(), f.children.end(),
                               [&](const formula& c) { return eval_assignment(c, a); });
        case K::disjunction:
            return std::any_of(f.children.begin(), f.children.end(),
                               [&](const formula& c) { return eval_assignment(c, a); });
        case K::implication: return !eval_assignment(f.children[0], a) || eval_assignment(f.children[1], a);
        case K::equivalence: return eval_assignment(f.children[0], a) == eval_assignment(f.children[1], a);
    }
    return false;
}

namespace detail {

// Plain DPLL satisfiability over small residual clause sets (auxiliary extension search).
inline bool dpll_sat(std::vector<clause> clauses, std::unordered_map<int, bool> fixed = {}) {
    for (;;) {
        bool changed = false;
        std::vector<clause> residual;
        for (const auto& c : clauses) {
            clause r;
            bool sat = false;
            for (lit l : c) {
                auto it = fixed.find(l.var());
                if (it == fixed.end()) {
                    r.push_back(l);
                } else if (it->second == l.positive()) {
                    sat = true;
                    break;
                }
            }
            if (sat) continue;
            if (r.empty()) return false;
            if (r.size() == 1) {
                fixed[r[0].var()] = r[0].positive();
                changed = true;
            }
            residual.push_back(std::move(r));
        }
        clauses = std::move(residual);
        if (clauses.empty()) return true;
        if (!changed) break;
    }
    int v = clauses[0][0].var();
    auto with_true = fixed;
    with_true[v] = true;
    if (dpll_sat(clauses, std::move(with_true))) return true;
    fixed[v] = false;
    return dpll_sat(std::move(clauses), std::move(fixed));
}

}  // namespace detail

// Truth of a CNF; auxiliary variables are existentially quantified, so only
// non-auxiliary entries of `a` are read.
inline bool eval_assignment(const cnf& f, const assignment& a) {
    if (f.unsat) return false;
    const int needed = f.max_input_var();
    if (static_cast<int>(a.size()) < needed)
        throw semantic_error("missing assignment entry for variable " + std::to_string(a.size() + 1));
    std::vector<clause> residual;
    for (const auto& c : f.clauses) {
        clause r;
        bool sat = false;
        for (lit l : c) {
            if (f.is_auxiliary(l.var())) {
                r.push_back(l);
            } else if (a[static_cast<std::size_t>(l.var() - 1)] == l.positive()) {
                sat = true;
                break;
            }
        }
        if (sat) continue;
        if (r.empty()) return false;
        residual.push_back(std::move(r));
    }
    return residual.empty() || detail::dpll_sat(std::move(residual));
}

inline constexpr int brute_force_limit = 26;

// Per-variable literal weights (index var - 1) derived from role and probability.
template <class Real>
std::vector<std::pair<Real, Real>> literal_weights(const cnf& f, const std::vector<Real>& probs) {
    std::vector<std::pair<Real, Real>> w(static_cast<std::size_t>(f.num_vars), {Real(1), Real(1)});
    for (int v = 1; v <= f.num_vars; ++v) {
        auto role = f.role(v);
        if (role == var_role::auxiliary) continue;
        if (static_cast<std::size_t>(v) > probs.size())
            throw semantic_error("missing probability for variable " + std::to_string(v));
        Real p = probs[static_cast<std::size_t>(v - 1)];
        w[static_cast<std::size_t>(v - 1)] = {p, role == var_role::indicator ? Real(1) : Real(1) - p};
    }
    return w;
}

// Sum over satisfying assignments of the product of literal weights.
// Real may be long double for high-precision oracles.
template <class Real = double>
Real brute_force_wmc(const cnf& f, const std::vector<Real>& probs) {
    const auto inputs = f.input_vars();
    if (static_cast<int>(inputs.size()) > brute_force_limit)
        throw semantic_error("brute-force enumeration guard exceeded: " + std::to_string(inputs.size()) +
                             " variables > " + std::to_string(brute_force_limit));
    if (f.unsat) return Real(0);
    const auto w = literal_weights(f, probs);
    const bool has_aux = inputs.size() != static_cast<std::size_t>(f.num_vars);
    const std::uint64_t total = std::uint64_t{1} << inputs.size();

    // Clause masks over input positions; valid without auxiliaries.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> masks;
    if (!has_aux) {
        for (const auto& c : f.clauses) {
            std::uint64_t pos = 0, neg = 0;
            for (lit l : c) (l.positive() ? pos : neg) |= std::uint64_t{1} << (l.var() - 1);
            masks.emplace_back(pos, neg);
        }
    }

    Real sum = 0;
    assignment a(static_cast<std::size_t>(f.num_vars), false);
    for (std::uint64_t bits = 0; bits < total; ++bits) {
        bool sat = true;
        if (!has_aux) {
            for (auto [pos, neg] : masks) {
                if (!((bits & pos) | (~bits & neg))) {
                    sat = false;
                    break;
                }
            }
        } else {
            for (std::size_t i = 0; i < inputs.size(); ++i)
                a[static_cast<std::size_t>(inputs[i] - 1)] = (bits >> i) & 1;
            sat = eval_assignment(f, a);
        }
        if (!sat) continue;
        Real term = 1;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto& [wp, wn] = w[static_cast<std::size_t>(inputs[i] - 1)];
            term *= ((bits >> i) & 1) ? wp : wn;
        }
        sum += term;
    }
    return sum;
}

inline double brute_force_wmc(const cnf& f, std::initializer_list<double> probs) {
    return brute_force_wmc<double>(f, std::vector<double>(probs));
}

// Number of satisfying assignments over the input variables (auxiliaries are
// functionally determined, so this is also the count over all variables).
inline std::uint64_t brute_force_count(const cnf& f) {
    std::vector<double> half(static_cast<std::size_t>(f.num_vars), 0.5);
    const auto inputs = f.input_vars();
    for (int v : inputs)
        if (f.role(v) == var_role::indicator)
            throw semantic_error("brute_force_count is defined for bernoulli variables only");
    double w = brute_force_wmc<double>(f, half);
    return static_cast<std::uint64_t>(std::llround(std::ldexp(w, static_cast<int>(inputs.size()))));
}

}  // namespace nesy
