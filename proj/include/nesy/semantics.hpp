#pragma once

// Algebraic structures ("logic tracks") that give formulas and circuits a
// meaning, the fuzzy t-norm families, and value transformations between them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nesy/error.hpp"
#include "nesy/formula.hpp"

namespace nesy {

enum class structure_kind : std::uint8_t { boolean, probability, log_probability, fuzzy };

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// neg, conj, disj and their partial derivatives. Implication is disj(neg(x), y).
struct fuzzy_connectives {
    std::function<double(double)> neg;
    std::function<double(double, double)> conj;
    std::function<double(double, double)> disj;
    std::function<double(double)> dneg;
    std::function<std::pair<double, double>(double, double)> dconj;
    std::function<std::pair<double, double>(double, double)> ddisj;

    double implies(double x, double y) const { return disj(neg(x), y); }

    // Fills the derivative slots with central differences.
    static fuzzy_connectives from_functions(std::function<double(double)> neg,
                                            std::function<double(double, double)> conj,
                                            std::function<double(double, double)> disj) {
        constexpr double h = 1e-6;
        fuzzy_connectives c{neg, conj, disj, {}, {}, {}};
        c.dneg = [neg](double x) { return (neg(x + h) - neg(x - h)) / (2 * h); };
        auto partials = [](std::function<double(double, double)> g) {
            return [g](double x, double y) {
                return std::pair{(g(x + h, y) - g(x - h, y)) / (2 * h), (g(x, y + h) - g(x, y - h)) / (2 * h)};
            };
        };
        c.dconj = partials(conj);
        c.ddisj = partials(disj);
        return c;
    }
};

struct structure {
    std::string tag;
    structure_kind kind = structure_kind::probability;
    double carrier_lo = 0;
    double carrier_hi = 1;
    bool differentiable = true;
    // True iff evaluation on a compiled d-DNNF preserves the semantics.
    bool circuit_safe = true;
    // Elementwise connectives; present for fuzzy families and boolean.
    std::optional<fuzzy_connectives> connectives;

    bool in_carrier(double x) const {
        if (std::isnan(x)) return false;
        if (kind == structure_kind::boolean) return x == 0.0 || x == 1.0;
        return x >= carrier_lo && x <= carrier_hi;
    }

    std::string carrier_text() const {
        if (kind == structure_kind::boolean) return "{0,1}";
        if (kind == structure_kind::log_probability) return "[-inf,0]";
        return "[0,1]";
    }

    bool is_fuzzy() const { return kind == structure_kind::fuzzy; }
};

using structure_ref = std::shared_ptr<const structure>;

// Decimal rendering used in diagnostics and command output: 12 significant digits.
inline std::string format_value(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// Built-in fuzzy families. Subgradients at min/max ties take the first argument.

inline fuzzy_connectives product_connectives() {
    return {
        [](double x) { return 1 - x; },
        [](double x, double y) { return x * y; },
        [](double x, double y) { return x + y - x * y; },
        [](double) { return -1.0; },
        [](double x, double y) { return std::pair{y, x}; },
        [](double x, double y) { return std::pair{1 - y, 1 - x}; },
    };
}

inline fuzzy_connectives godel_connectives() {
    return {
        [](double x) { return 1 - x; },
        [](double x, double y) { return std::min(x, y); },
        [](double x, double y) { return std::max(x, y); },
        [](double) { return -1.0; },
        [](double x, double y) { return x <= y ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0}; },
        [](double x, double y) { return x >= y ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0}; },
    };
}

inline fuzzy_connectives lukasiewicz_connectives() {
    // conj = max(0, x+y-1), disj = min(1, x+y); the constant is the first argument.
    return {
        [](double x) { return 1 - x; },
        [](double x, double y) { return std::max(0.0, x + y - 1); },
        [](double x, double y) { return std::min(1.0, x + y); },
        [](double) { return -1.0; },
        [](double x, double y) { return x + y - 1 > 0 ? std::pair{1.0, 1.0} : std::pair{0.0, 0.0}; },
        [](double x, double y) { return x + y < 1 ? std::pair{1.0, 1.0} : std::pair{0.0, 0.0}; },
    };
}

inline structure_ref make_fuzzy_structure(std::string tag, fuzzy_connectives c) {
    auto s = std::make_shared<structure>();
    s->tag = std::move(tag);
    s->kind = structure_kind::fuzzy;
    s->differentiable = true;
    s->circuit_safe = false;
    s->connectives = std::move(c);
    return s;
}

namespace detail {

inline const std::map<std::string, structure_ref, std::less<>>& builtin_registry() {
    static const auto registry = [] {
        std::map<std::string, structure_ref, std::less<>> r;
        auto boolean = std::make_shared<structure>();
        boolean->tag = "boolean";
        boolean->kind = structure_kind::boolean;
        boolean->differentiable = false;
        boolean->connectives = fuzzy_connectives{
            [](double x) { return 1 - x; },
            [](double x, double y) { return std::min(x, y); },
            [](double x, double y) { return std::max(x, y); },
            {}, {}, {},
        };
        r["boolean"] = boolean;

        auto prob = std::make_shared<structure>();
        prob->tag = "probability";
        prob->kind = structure_kind::probability;
        r["probability"] = prob;

        auto logp = std::make_shared<structure>();
        logp->tag = "log_probability";
        logp->kind = structure_kind::log_probability;
        logp->carrier_lo = neg_inf;
        logp->carrier_hi = 0;
        r["log_probability"] = logp;

        r["fuzzy_product"] = make_fuzzy_structure("fuzzy_product", product_connectives());
        r["fuzzy_godel"] = make_fuzzy_structure("fuzzy_godel", godel_connectives());
        r["fuzzy_lukasiewicz"] = make_fuzzy_structure("fuzzy_lukasiewicz", lukasiewicz_connectives());
        return r;
    }();
    return registry;
}

}  // namespace detail

inline std::vector<std::string> builtin_structure_tags() {
    std::vector<std::string> out;
    for (const auto& [k, v] : detail::builtin_registry()) out.push_back(k);
    return out;
}

// Built-in structure by tag; "log" is accepted for log_probability.
inline structure_ref get_structure(std::string_view name) {
    if (name == "log") name = "log_probability";
    const auto& reg = detail::builtin_registry();
    auto it = reg.find(name);
    if (it == reg.end()) throw semantic_error("unknown structure tag '" + std::string(name) + "'");
    return it->second;
}

// ---------------------------------------------------------------------------
// Leaf weighting shared by every circuit evaluator.

// log(1 - exp(x)) for x <= 0.
inline double log1mexp(double x) {
    if (x == 0) return neg_inf;
    return x > -0.6931471805599453 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

inline double structure_one(structure_kind k) { return k == structure_kind::log_probability ? 0.0 : 1.0; }
inline double structure_zero(structure_kind k) { return k == structure_kind::log_probability ? neg_inf : 0.0; }

// Value of a literal leaf given the variable's input `x` (a probability, a
// log-probability or a 0/1 truth value, depending on the structure).
inline double leaf_value(structure_kind k, var_role role, bool positive, double x) {
    if (role == var_role::auxiliary) return structure_one(k);
    if (positive) return x;
    if (role == var_role::indicator) return structure_one(k);
    switch (k) {
        case structure_kind::log_probability: return log1mexp(x);
        default: return 1 - x;
    }
}

// ---------------------------------------------------------------------------
// Fuzzy evaluation on NNF formulas.

struct fuzzy_result {
    double value = 0;
    std::vector<double> gradient;  // d value / d score, index var - 1
};

namespace detail {

class fuzzy_evaluator {
public:
    fuzzy_evaluator(const fuzzy_connectives& c, std::span<const double> scores) : c_(c), scores_(scores) {}

    double forward(const formula& f) {
        double v = 0;
        switch (f.kind) {
            case formula_kind::top: v = 1; break;
            case formula_kind::bottom: v = 0; break;
            case formula_kind::var: v = score(f.var); break;
            case formula_kind::negation: v = c_.neg(score(f.children[0].var)); break;
            case formula_kind::conjunction:
            case formula_kind::disjunction: {
                const auto& op = f.kind == formula_kind::conjunction ? c_.conj : c_.disj;
                v = forward(f.children[0]);
                for (std::size_t i = 1; i < f.children.size(); ++i) v = op(v, forward(f.children[i]));
                break;
            }
            default: throw semantic_error("evaluate_fuzzy requires an NNF formula");
        }
        values_[&f] = v;
        return v;
    }

    void backward(const formula& f, double adj, std::vector<double>& grad) {
        switch (f.kind) {
            case formula_kind::var: grad[static_cast<std::size_t>(f.var - 1)] += adj; return;
            case formula_kind::negation: {
                int v = f.children[0].var;
                grad[static_cast<std::size_t>(v - 1)] += adj * c_.dneg(score(v));
                return;
            }
            case formula_kind::conjunction:
            case formula_kind::disjunction: {
                const bool is_and = f.kind == formula_kind::conjunction;
                const auto& op = is_and ? c_.conj : c_.disj;
                const auto& dop = is_and ? c_.dconj : c_.ddisj;
                const std::size_t k = f.children.size();
                std::vector<double> prefix(k);
                prefix[0] = values_.at(&f.children[0]);
                for (std::size_t i = 1; i < k; ++i) prefix[i] = op(prefix[i - 1], values_.at(&f.children[i]));
                double acc = adj;
                for (std::size_t i = k - 1; i >= 1; --i) {
                    auto [da, db] = dop(prefix[i - 1], values_.at(&f.children[i]));
                    backward(f.children[i], acc * db, grad);
                    acc *= da;
                }
                backward(f.children[0], acc, grad);
                return;
            }
            default: return;
        }
    }

private:
    double score(int v) const {
        if (v < 1 || static_cast<std::size_t>(v) > scores_.size())
            throw semantic_error("missing score for variable " + std::to_string(v));
        return scores_[static_cast<std::size_t>(v - 1)];
    }

    const fuzzy_connectives& c_;
    std::span<const double> scores_;
    std::unordered_map<const formula*, double> values_;
};

inline const fuzzy_connectives& require_fuzzy(const formula& f, const structure& s, std::span<const double> scores) {
    if (!s.is_fuzzy() || !s.connectives) throw semantic_error("evaluate_fuzzy: '" + s.tag + "' is not a fuzzy structure");
    if (!is_nnf(f)) throw semantic_error("evaluate_fuzzy requires an NNF formula");
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!(scores[i] >= 0 && scores[i] <= 1))
            throw semantic_error("evaluate_fuzzy: score " + format_value(scores[i]) + " of variable " +
                                 std::to_string(i + 1) + " outside [0,1]");
    return *s.connectives;
}

}  // namespace detail

// scores[v - 1] is the truth degree of variable v.
inline double evaluate_fuzzy(const formula& f, const structure& s, std::span<const double> scores) {
    return detail::fuzzy_evaluator(detail::require_fuzzy(f, s, scores), scores).forward(f);
}

inline fuzzy_result evaluate_fuzzy_with_gradient(const formula& f, const structure& s, std::span<const double> scores) {
    detail::fuzzy_evaluator ev(detail::require_fuzzy(f, s, scores), scores);
    fuzzy_result out;
    out.value = ev.forward(f);
    out.gradient.assign(scores.size(), 0.0);
    ev.backward(f, 1.0, out.gradient);
    return out;
}

// ---------------------------------------------------------------------------
// Transformations between structures.

// True when `from` values can be converted to `to` values. Identity is always allowed.
inline bool transform_exists(const structure& from, const structure& to) {
    if (from.tag == to.tag) return true;
    using K = structure_kind;
    if (from.kind == K::probability && to.kind == K::log_probability) return true;
    if (from.kind == K::log_probability && to.kind == K::probability) return true;
    if (from.kind == K::boolean && (to.kind == K::probability || to.kind == K::fuzzy)) return true;
    return false;
}

inline double transform_value(double x, const structure& from, const structure& to) {
    using K = structure_kind;
    if (from.tag == to.tag) return x;
    if (from.kind == K::probability && to.kind == K::log_probability) return x == 0 ? neg_inf : std::log(x);
    if (from.kind == K::log_probability && to.kind == K::probability) return std::exp(x);
    if (from.kind == K::boolean) return x;
    throw incompatible_structures(from.tag, to.tag);
}

inline std::vector<double> transform(std::span<const double> values, const structure& from, const structure& to) {
    if (!transform_exists(from, to)) throw incompatible_structures(from.tag, to.tag, "no transformation defined");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!from.in_carrier(values[i]))
            throw semantic_error("transform: value " + format_value(values[i]) + " at index " + std::to_string(i) +
                                 " outside " + from.tag + " carrier " + from.carrier_text());
        out[i] = transform_value(values[i], from, to);
    }
    return out;
}

inline std::string transform_name(const structure& from, const structure& to) {
    using K = structure_kind;
    if (from.tag == to.tag) return "identity";
    if (from.kind == K::probability && to.kind == K::log_probability) return "log";
    if (from.kind == K::log_probability && to.kind == K::probability) return "exp";
    return "embed";
}

}  // namespace nesy
