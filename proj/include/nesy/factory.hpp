#pragma once

// A configurable factory for building modules from structures, aggregators and
// predicates, plus formula and circuit modules.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nesy/circuit.hpp"
#include "nesy/error.hpp"
#include "nesy/formula.hpp"
#include "nesy/layered.hpp"
#include "nesy/semantics.hpp"
#include "nesy/symtensor.hpp"

namespace nesy {

// ---------------------------------------------------------------------------
// Aggregators

inline constexpr double default_p = 6.0;

// (mean(x^p))^(1/p)
inline double p_mean(std::span<const double> x, double p = default_p) {
    if (x.empty()) throw semantic_error("p_mean: empty axis");
    double acc = 0;
    for (double v : x) acc += std::pow(v, p);
    return std::pow(acc / static_cast<double>(x.size()), 1.0 / p);
}

// 1 - p_mean(1 - x)
inline double p_mean_error(std::span<const double> x, double p = default_p) {
    if (x.empty()) throw semantic_error("p_mean_error: empty axis");
    double acc = 0;
    for (double v : x) acc += std::pow(1 - v, p);
    return 1 - std::pow(acc / static_cast<double>(x.size()), 1.0 / p);
}

struct aggregator {
    enum class op_kind { p_mean, p_mean_error };
    std::string name;
    op_kind op = op_kind::p_mean;
    double p = default_p;

    double operator()(std::span<const double> x) const { return op == op_kind::p_mean ? p_mean(x, p) : p_mean_error(x, p); }
};

// ---------------------------------------------------------------------------
// Predicates

// Scores one row of entity arguments; each argument is a vector of features.
using predicate_fn = std::function<double(const std::vector<std::span<const double>>&)>;

struct predicate {
    std::string functor;
    int arity = 0;
    std::string structure_tag;
    predicate_fn score;
};

// exp(-||x - y||_2)
inline double eq_score(const std::vector<std::span<const double>>& args) {
    const auto& x = args[0];
    const auto& y = args[1];
    if (x.size() != y.size()) throw semantic_error("eq: embedding sizes differ");
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-std::sqrt(d));
}

inline predicate builtin_predicate(const std::string& name, std::string structure_tag) {
    if (name == "eq") return {"eq", 2, std::move(structure_tag), eq_score};
    throw semantic_error("unknown built-in predicate '" + name + "'");
}

// ---------------------------------------------------------------------------
// Configuration

struct factory_config {
    // Tags (or aliases such as "fuzzy") to structures; unknown tags fall back
    // to the built-in registry.
    std::map<std::string, structure_ref> structures;
    // Added to, or overriding, the built-in `exists` and `forall`.
    std::vector<aggregator> aggregators;
    std::vector<predicate> predicates;

    // Product fuzzy logic under the alias "fuzzy", p-mean quantifiers and the
    // equality predicate.
    static factory_config ltn() {
        factory_config c;
        c.structures["fuzzy"] = get_structure("fuzzy_product");
        c.aggregators.push_back({"exists", aggregator::op_kind::p_mean, default_p});
        c.aggregators.push_back({"forall", aggregator::op_kind::p_mean_error, default_p});
        c.predicates.push_back(builtin_predicate("eq", "fuzzy"));
        return c;
    }

    // {"structures": {"fuzzy": "fuzzy_product"},
    //  "aggregators": [{"name": "exists", "op": "p_mean", "p": 6}],
    //  "predicates": [{"name": "eq", "builtin": "eq", "structure": "fuzzy"}]}
    static factory_config from_json(const nlohmann::json& j) {
        factory_config c;
        try {
            if (!j.is_object()) throw parse_error("factory config: expected an object", 1);
            for (auto it = j.begin(); it != j.end(); ++it)
                if (it.key() != "structures" && it.key() != "aggregators" && it.key() != "predicates")
                    throw parse_error("factory config: unknown field '" + it.key() + "'", 1);
            if (j.contains("structures"))
                for (auto it = j["structures"].begin(); it != j["structures"].end(); ++it)
                    c.structures[it.key()] = get_structure(it.value().get<std::string>());
            if (j.contains("aggregators")) {
                for (const auto& a : j["aggregators"]) {
                    aggregator ag;
                    ag.name = a.at("name").get<std::string>();
                    std::string op = a.value("op", ag.name == "forall" ? "p_mean_error" : "p_mean");
                    if (op == "p_mean") ag.op = aggregator::op_kind::p_mean;
                    else if (op == "p_mean_error") ag.op = aggregator::op_kind::p_mean_error;
                    else throw semantic_error("factory config: unknown aggregator op '" + op + "'");
                    ag.p = a.value("p", default_p);
                    c.aggregators.push_back(ag);
                }
            }
            if (j.contains("predicates"))
                for (const auto& p : j["predicates"]) {
                    auto pr = builtin_predicate(p.value("builtin", p.at("name").get<std::string>()), p.value("structure", "fuzzy_product"));
                    pr.functor = p.at("name").get<std::string>();
                    c.predicates.push_back(std::move(pr));
                }
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(std::string("factory config: ") + e.what(), 1);
        }
        return c;
    }

    static factory_config from_json_text(std::string_view text) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw parse_error(std::string("factory config: ") + e.what(), 1);
        }
        return from_json(j);
    }
};

// ---------------------------------------------------------------------------
// Module helpers

namespace detail {

inline std::vector<std::string> positional_symbols(const std::vector<int>& vars) {
    std::vector<std::string> out;
    for (int v : vars) out.push_back("v" + std::to_string(v));
    return out;
}

inline leaf_batch to_leaf_batch(const tensor& t, const std::vector<std::size_t>& columns) {
    leaf_batch b(t.rows, columns.size());
    const std::size_t w = t.row_size();
    for (std::size_t r = 0; r < t.rows; ++r)
        for (std::size_t c = 0; c < columns.size(); ++c) b.at(r, c) = t.data[r * w + columns[c]];
    return b;
}

inline std::string join_symbols(const std::vector<std::string>& syms) {
    std::string s;
    for (std::size_t i = 0; i < syms.size(); ++i) s += (i ? "," : "") + syms[i];
    return s;
}

}  // namespace detail

// Module over a compiled circuit: one input tensor (columns in `symbols` order,
// which must match lc's input variables) and one scalar output.
inline annotated_module circuit_module(std::shared_ptr<const circuit> c, structure_ref s, std::string name = "phi",
                                       std::vector<std::string> symbols = {}, std::string output = {}) {
    auto lc = std::make_shared<const layered_circuit>(layerize(*c));
    const bool positional = symbols.empty();
    if (positional) symbols = detail::positional_symbols(lc->input_vars);
    if (symbols.size() != lc->num_inputs())
        throw semantic_error("circuit_module: " + std::to_string(symbols.size()) + " symbols for " +
                             std::to_string(lc->num_inputs()) + " circuit inputs");
    detail::require_circuit_structure(*s);
    if (output.empty()) output = name;
    std::vector<std::size_t> columns(lc->num_inputs());
    std::iota(columns.begin(), columns.end(), std::size_t{0});
    compute_fn fn = [lc, s, columns](const tensor_list& in, const exec_options& opts) {
        auto batch = detail::to_leaf_batch(in.at(0), columns);
        eval_options eo;
        eo.validate = opts.validate;
        eo.threads = opts.parallel ? 0u : 1u;
        auto vals = evaluate(*lc, batch, *s, eo);
        return tensor_list{tensor(in.at(0).rows, {1}, std::move(vals))};
    };
    sym_tensor in(std::move(symbols), s);
    sym_tensor out({output}, s);
    nlohmann::json wiring = {{"kind", "module"}, {"name", name}, {"backend", "circuit"},
                             {"inputs", {in.to_json()}}, {"outputs", {out.to_json()}},
                             {"nodes", c->size()}, {"layers", lc->layers.size()}};
    return annotated_module(name, {in}, {out}, std::move(fn), std::move(wiring))
        .with_positional(positional)
        .with_backing({c, lc, columns});
}

inline annotated_module circuit_module(const cnf& f, structure_ref s, std::string name = "phi") {
    return circuit_module(std::make_shared<const circuit>(smooth(compile(f))), std::move(s), std::move(name));
}

// Constant module with no inputs.
inline annotated_module constant_module(std::string name, sym_tensor out, tensor value) {
    auto v = std::make_shared<const tensor>(std::move(value));
    compute_fn fn = [v](const tensor_list&, const exec_options&) { return tensor_list{*v}; };
    return annotated_module(std::move(name), {}, {std::move(out)}, std::move(fn));
}

// ---------------------------------------------------------------------------
// Factory

class factory {
public:
    explicit factory(factory_config cfg = {}) : cfg_(std::move(cfg)) {
        for (const auto& [k, s] : cfg_.structures)
            if (!s) throw semantic_error("factory: structure '" + k + "' is undefined");
        aggregators_["exists"] = {"exists", aggregator::op_kind::p_mean, default_p};
        aggregators_["forall"] = {"forall", aggregator::op_kind::p_mean_error, default_p};
        std::set<std::string> seen;
        for (const auto& a : cfg_.aggregators) {
            if (!seen.insert(a.name).second) throw semantic_error("factory: duplicate aggregator '" + a.name + "'");
            if (!(a.p >= 1)) throw semantic_error("factory: aggregator '" + a.name + "' needs p >= 1");
            aggregators_[a.name] = a;
        }
        for (const auto& p : cfg_.predicates) {
            if (predicates_.count(p.functor)) throw semantic_error("factory: duplicate predicate '" + p.functor + "'");
            structure(p.structure_tag);
            predicates_[p.functor] = p;
        }
    }

    const factory_config& config() const { return cfg_; }

    structure_ref structure(const std::string& tag) const {
        auto it = cfg_.structures.find(tag);
        if (it != cfg_.structures.end()) return it->second;
        return get_structure(tag);
    }

    // Elementwise 'not' on x's single output tensor; symbols are kept.
    annotated_module unary_node(const std::string& op, const annotated_module& x) const {
        if (op != "not") throw semantic_error("unknown unary connective '" + op + "'");
        const auto& spec = single_output(x, "unary_node");
        const auto& c = connectives_of(spec.structure());
        auto neg = c.neg;
        auto inner = std::make_shared<annotated_module>(x);
        compute_fn fn = [inner, neg](const tensor_list& in, const exec_options& opts) {
            tensor_list out = (*inner)(in, opts);
            for (auto& v : out[0].data) v = neg(v);
            return out;
        };
        std::string name = op + "(" + x.name() + ")";
        nlohmann::json wiring = {{"kind", "module"}, {"name", name}, {"op", op}, {"arg", x.wiring()},
                                 {"inputs", nlohmann::json::array()}, {"outputs", {spec.to_json()}}};
        for (const auto& t : x.inputs()) wiring["inputs"].push_back(t.to_json());
        return annotated_module(std::move(name), x.inputs(), x.outputs(), std::move(fn), std::move(wiring));
    }

    // Elementwise 'and', 'or' (alias 'pr') or 'implies' of x's and y's outputs.
    // Output symbols are op(a,b) for paired symbols a, b.
    annotated_module binary_node(const std::string& op, const annotated_module& x, const annotated_module& y) const {
        const auto& sx = single_output(x, "binary_node");
        const auto& sy = single_output(y, "binary_node");
        if (op != "and" && op != "or" && op != "pr" && op != "implies")
            throw semantic_error("unknown binary connective '" + op + "'");
        if (sx.tag() != sy.tag()) throw incompatible_structures(sx.tag(), sy.tag(), "binary_node '" + op + "'");
        if (sx.size() != sy.size())
            throw semantic_error("binary_node '" + op + "': operand sizes differ (" + std::to_string(sx.size()) + " vs " +
                                 std::to_string(sy.size()) + ")");
        const auto& c = connectives_of(sx.structure());
        std::function<double(double, double)> f;
        if (op == "and") f = c.conj;
        else if (op == "implies") f = [c](double a, double b) { return c.implies(a, b); };
        else f = c.disj;
        const std::string canonical = op == "pr" ? "or" : op;

        std::vector<std::string> syms;
        for (std::size_t i = 0; i < sx.size(); ++i)
            syms.push_back(canonical + "(" + sx.symbols()[i] + "," + sy.symbols()[i] + ")");
        sym_tensor out(syms, sx.structure_ptr(), sx.shape());

        // Shared input tensors are passed once.
        const bool shared = same_specs(x.inputs(), y.inputs());
        std::vector<sym_tensor> inputs = x.inputs();
        if (!shared) inputs.insert(inputs.end(), y.inputs().begin(), y.inputs().end());
        const std::size_t nx = x.inputs().size();
        auto left = std::make_shared<annotated_module>(x);
        auto right = std::make_shared<annotated_module>(y);
        compute_fn fn = [left, right, f, shared, nx](const tensor_list& in, const exec_options& opts) {
            tensor_list xin(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(nx));
            tensor_list yin = shared ? xin : tensor_list(in.begin() + static_cast<std::ptrdiff_t>(nx), in.end());
            tensor a = (*left)(xin, opts)[0];
            tensor b = (*right)(yin, opts)[0];
            if (a.rows != b.rows && a.rows != 1 && b.rows != 1)
                throw semantic_error("binary_node: batch size mismatch");
            const std::size_t rows = std::max(a.rows, b.rows), n = a.row_size();
            tensor o(rows, a.shape, std::vector<double>(rows * n));
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t i = 0; i < n; ++i)
                    o.data[r * n + i] = f(a.data[(a.rows == 1 ? 0 : r) * n + i], b.data[(b.rows == 1 ? 0 : r) * n + i]);
            return tensor_list{std::move(o)};
        };
        std::string name = canonical + "(" + x.name() + "," + y.name() + ")";
        nlohmann::json wiring = {{"kind", "module"}, {"name", name}, {"op", canonical}, {"left", x.wiring()},
                                 {"right", y.wiring()}, {"inputs", nlohmann::json::array()}, {"outputs", {out.to_json()}}};
        for (const auto& t : inputs) wiring["inputs"].push_back(t.to_json());
        return annotated_module(std::move(name), std::move(inputs), {out}, std::move(fn), std::move(wiring));
    }

    const aggregator& find_aggregator(const std::string& name) const {
        auto it = aggregators_.find(name);
        if (it == aggregators_.end()) throw semantic_error("unknown aggregator '" + name + "'");
        return it->second;
    }

    double aggregate(const std::string& name, std::span<const double> scores) const {
        const auto& a = find_aggregator(name);
        if (scores.empty()) throw semantic_error("aggregate '" + name + "': empty axis");
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (!(scores[i] >= 0 && scores[i] <= 1))
                throw semantic_error("aggregate '" + name + "': score " + format_value(scores[i]) + " at index " +
                                     std::to_string(i) + " outside [0,1]");
        return a(scores);
    }

    // Reduces x's single output tensor along its symbol axis, per batch row.
    annotated_module aggregate_module(const std::string& name, const annotated_module& x) const {
        const auto& a = find_aggregator(name);
        const auto& spec = single_output(x, "aggregate");
        if (spec.size() == 0) throw semantic_error("aggregate '" + name + "': empty axis");
        auto inner = std::make_shared<annotated_module>(x);
        compute_fn fn = [inner, a](const tensor_list& in, const exec_options& opts) {
            tensor v = (*inner)(in, opts)[0];
            const std::size_t n = v.row_size();
            tensor o(v.rows, {1}, std::vector<double>(v.rows));
            for (std::size_t r = 0; r < v.rows; ++r) o.data[r] = a(std::span<const double>(v.data.data() + r * n, n));
            return tensor_list{std::move(o)};
        };
        std::string sym = name + "(" + detail::join_symbols(spec.symbols()) + ")";
        sym_tensor out({sym}, spec.structure_ptr());
        std::string mname = name + "(" + x.name() + ")";
        nlohmann::json wiring = {{"kind", "module"}, {"name", mname}, {"aggregator", name}, {"p", a.p},
                                 {"arg", x.wiring()}, {"outputs", {out.to_json()}}};
        return annotated_module(std::move(mname), x.inputs(), {out}, std::move(fn), std::move(wiring));
    }

    // Constant module scoring the predicate on each row of the entity tensors;
    // the output has one symbol per row, `symbol[i]`.
    annotated_module apply_predicate(const std::string& functor, const std::vector<tensor>& entities,
                                     std::string symbol = {}) const {
        auto it = predicates_.find(functor);
        if (it == predicates_.end()) throw semantic_error("unknown predicate '" + functor + "'");
        const auto& p = it->second;
        if (static_cast<int>(entities.size()) != p.arity)
            throw semantic_error("predicate '" + functor + "' has arity " + std::to_string(p.arity) + ", called with " +
                                 std::to_string(entities.size()) + " arguments");
        std::size_t rows = 0;
        for (const auto& e : entities) {
            if (e.rows != 1 && rows != 0 && rows != 1 && e.rows != rows)
                throw semantic_error("predicate '" + functor + "': entity row counts differ");
            rows = std::max(rows, e.rows);
        }
        std::vector<double> scores(rows);
        auto s = structure(p.structure_tag);
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<std::span<const double>> args;
            for (const auto& e : entities) {
                const std::size_t w = e.row_size();
                args.emplace_back(e.data.data() + (e.rows == 1 ? 0 : r) * w, w);
            }
            scores[r] = p.score(args);
            if (!s->in_carrier(scores[r]))
                throw semantic_error("predicate '" + functor + "' produced " + format_value(scores[r]) + " outside " +
                                     s->carrier_text());
        }
        if (symbol.empty()) symbol = functor;
        std::vector<std::string> syms;
        for (std::size_t r = 0; r < rows; ++r) syms.push_back(symbol + "[" + std::to_string(r) + "]");
        return constant_module(symbol, sym_tensor(syms, s), tensor(1, {rows}, std::move(scores)));
    }

    // Module evaluating f under `tag`. Circuit-safe structures compile f;
    // fuzzy structures evaluate its NNF directly. Input symbols are the names
    // in `names` (all declared variables) or v1..vn.
    annotated_module build_formula_module(const formula& f, const std::string& tag, const name_table* names = nullptr,
                                          std::string output = "phi") const {
        auto s = structure(tag);
        const int n = std::max(names ? names->size() : 0, max_var(f));
        std::vector<int> vars(static_cast<std::size_t>(n));
        std::iota(vars.begin(), vars.end(), 1);
        std::vector<std::string> syms;
        for (int v : vars) syms.push_back(names && v <= names->size() ? names->name(v) : "v" + std::to_string(v));
        formula nnf = to_nnf(f);

        if (!s->is_fuzzy()) {
            auto c = std::make_shared<const circuit>(smooth(compile(to_cnf(nnf, n))));
            auto m = circuit_module(c, s, output, syms, output);
            return names ? m : m.with_positional(true);
        }

        auto g = std::make_shared<const formula>(std::move(nnf));
        compute_fn fn = [g, s, n](const tensor_list& in, const exec_options&) {
            const tensor& t = in.at(0);
            tensor o(t.rows, {1}, std::vector<double>(t.rows));
            for (std::size_t r = 0; r < t.rows; ++r)
                o.data[r] = evaluate_fuzzy(*g, *s, std::span<const double>(t.data.data() + r * static_cast<std::size_t>(n), static_cast<std::size_t>(n)));
            return tensor_list{std::move(o)};
        };
        sym_tensor in(syms, s), out({output}, s);
        nlohmann::json wiring = {{"kind", "module"}, {"name", output}, {"backend", "formula"},
                                 {"formula", to_string(*g, names)}, {"inputs", {in.to_json()}}, {"outputs", {out.to_json()}}};
        return annotated_module(output, {in}, {out}, std::move(fn), std::move(wiring)).with_positional(names == nullptr);
    }

private:
    static const sym_tensor& single_output(const annotated_module& m, const char* op) {
        if (m.outputs().size() != 1)
            throw semantic_error(std::string(op) + ": module '" + m.name() + "' must have exactly one output tensor");
        return m.outputs()[0];
    }

    static const fuzzy_connectives& connectives_of(const nesy::structure& s) {
        if (!s.connectives) throw semantic_error("structure '" + s.tag + "' defines no elementwise connectives");
        return *s.connectives;
    }

    static bool same_specs(const std::vector<sym_tensor>& a, const std::vector<sym_tensor>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].symbols() != b[i].symbols() || a[i].tag() != b[i].tag()) return false;
        return true;
    }

    factory_config cfg_;
    std::map<std::string, aggregator> aggregators_;
    std::map<std::string, predicate> predicates_;
};

}  // namespace nesy
