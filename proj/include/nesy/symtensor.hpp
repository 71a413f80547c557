#pragma once

// Symbol-annotated tensors and modules: interface reshaping, sequential
// chaining and DAG wiring with automatic transformation stages, and runtime
// interface validation.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nesy/error.hpp"
#include "nesy/layered.hpp"
#include "nesy/semantics.hpp"

namespace nesy {

// Dense values with a leading batch dimension: data holds rows * prod(shape)
// entries, row-major.
struct tensor {
    std::size_t rows = 1;
    std::vector<std::size_t> shape;
    std::vector<double> data;

    tensor() = default;
    tensor(std::size_t r, std::vector<std::size_t> s, std::vector<double> d)
        : rows(r), shape(std::move(s)), data(std::move(d)) {}

    // rows x n matrix.
    static tensor matrix(std::size_t rows, std::size_t n, std::vector<double> d) { return {rows, {n}, std::move(d)}; }
    static tensor matrix(std::size_t rows, std::size_t n, double fill = 0) {
        return {rows, {n}, std::vector<double>(rows * n, fill)};
    }
    // Single row.
    static tensor row(std::vector<double> d) {
        const std::size_t n = d.size();
        return {1, {n}, std::move(d)};
    }

    std::size_t row_size() const {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }
    double& at(std::size_t r, std::size_t i) { return data[r * row_size() + i]; }
    double at(std::size_t r, std::size_t i) const { return data[r * row_size() + i]; }

    bool operator==(const tensor&) const = default;
};

using tensor_list = std::vector<tensor>;

class sym_tensor {
public:
    sym_tensor() = default;

    // Flat symbols in row-major order; shape defaults to {symbols.size()}.
    sym_tensor(std::vector<std::string> symbols, structure_ref s, std::vector<std::size_t> shape = {})
        : symbols_(std::move(symbols)), structure_(std::move(s)), shape_(std::move(shape)) {
        if (!structure_) throw semantic_error("sym_tensor: missing structure");
        if (shape_.empty()) shape_ = {symbols_.size()};
        const auto n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
        if (n != symbols_.size())
            throw semantic_error("sym_tensor: shape holds " + std::to_string(n) + " entries but " +
                                 std::to_string(symbols_.size()) + " symbols were given");
        for (std::size_t i = 0; i < symbols_.size(); ++i) {
            if (!index_.emplace(symbols_[i], i).second)
                throw semantic_error("sym_tensor: duplicate symbol '" + symbols_[i] + "'");
        }
    }

    const std::vector<std::string>& symbols() const { return symbols_; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    const structure_ref& structure_ptr() const { return structure_; }
    const nesy::structure& structure() const { return *structure_; }
    const std::string& tag() const { return structure_->tag; }
    std::size_t size() const { return symbols_.size(); }

    std::optional<std::size_t> index_of(const std::string& sym) const {
        auto it = index_.find(sym);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    sym_tensor with_structure(structure_ref s) const { return sym_tensor(symbols_, std::move(s), shape_); }

    nlohmann::json to_json() const { return {{"symbols", symbols_}, {"shape", shape_}, {"structure", tag()}}; }

private:
    std::vector<std::string> symbols_;
    structure_ref structure_;
    std::vector<std::size_t> shape_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct exec_options {
    // Check inputs and outputs against the module's interface.
    bool validate = true;
    // Let DAG composites run independent modules on separate threads.
    bool parallel = true;
};

using compute_fn = std::function<tensor_list(const tensor_list&, const exec_options&)>;

// Compiled-circuit backing of a module with a single input tensor. Column c of
// the layered circuit reads flat input entry columns[c].
struct circuit_backing {
    std::shared_ptr<const circuit> source;
    std::shared_ptr<const layered_circuit> layered;
    std::vector<std::size_t> columns;
};

class annotated_module;

std::vector<std::string> validate(const annotated_module& m, const tensor_list& inputs);

class annotated_module {
public:
    annotated_module(std::string name, std::vector<sym_tensor> inputs, std::vector<sym_tensor> outputs, compute_fn fn,
                     nlohmann::json wiring = nullptr)
        : name_(std::move(name)), inputs_(std::move(inputs)), outputs_(std::move(outputs)), fn_(std::move(fn)) {
        if (wiring.is_null()) {
            wiring = {{"kind", "module"}, {"name", name_}};
            wiring["inputs"] = nlohmann::json::array();
            for (const auto& t : inputs_) wiring["inputs"].push_back(t.to_json());
            wiring["outputs"] = nlohmann::json::array();
            for (const auto& t : outputs_) wiring["outputs"].push_back(t.to_json());
        }
        wiring_ = std::move(wiring);
    }

    const std::string& name() const { return name_; }
    const std::vector<sym_tensor>& inputs() const { return inputs_; }
    const std::vector<sym_tensor>& outputs() const { return outputs_; }
    const nlohmann::json& wiring() const { return wiring_; }

    // Input symbols v1..vn that bind positionally under reshape_input.
    bool positional_inputs() const { return positional_; }
    const std::optional<circuit_backing>& backing() const { return backing_; }

    annotated_module with_positional(bool on) const {
        auto m = *this;
        m.positional_ = on;
        return m;
    }
    annotated_module with_backing(circuit_backing b) const {
        auto m = *this;
        m.backing_ = std::move(b);
        return m;
    }
    annotated_module renamed(std::string name) const {
        auto m = *this;
        m.name_ = std::move(name);
        if (m.wiring_.contains("name")) m.wiring_["name"] = m.name_;
        return m;
    }

    tensor_list operator()(const tensor_list& in, const exec_options& opts = {}) const {
        if (opts.validate) {
            auto v = validate(*this, in);
            if (!v.empty()) throw validation_error(std::move(v));
        }
        tensor_list out = fn_(in, opts);
        if (opts.validate) {
            auto v = check_outputs(out);
            if (!v.empty()) throw validation_error(std::move(v));
        }
        return out;
    }

    // Unchecked call of the compute function.
    tensor_list compute(const tensor_list& in, const exec_options& opts = {}) const { return fn_(in, opts); }

    std::vector<std::string> check_outputs(const tensor_list& out) const;

private:
    std::string name_;
    std::vector<sym_tensor> inputs_;
    std::vector<sym_tensor> outputs_;
    compute_fn fn_;
    nlohmann::json wiring_;
    bool positional_ = false;
    std::optional<circuit_backing> backing_;
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

// Outputs may exceed the carrier by accumulated rounding (e.g. a sum of
// probabilities that should total 1).
inline constexpr double output_slack = 1e-9;

inline void check_tensors(const std::string& module, const char* role, const std::vector<sym_tensor>& spec,
                          const tensor_list& values, double slack, std::vector<std::string>& out) {
    const std::string where = "module '" + module + "' " + role;
    if (values.size() != spec.size()) {
        out.push_back(where + ": expected " + std::to_string(spec.size()) + " tensors, got " +
                      std::to_string(values.size()));
        return;
    }
    for (std::size_t t = 0; t < spec.size(); ++t) {
        const auto& s = spec[t];
        const auto& v = values[t];
        const std::string tw = where + " " + std::to_string(t);
        if (v.shape != s.shape() || v.data.size() != v.rows * s.size()) {
            nlohmann::json got = v.shape, want = s.shape();
            out.push_back(tw + ": shape " + got.dump() + " with " + std::to_string(v.data.size()) +
                          " values does not match " + want.dump() + " per row");
            continue;
        }
        const auto& st = s.structure();
        const std::size_t n = s.size();
        for (std::size_t r = 0; r < v.rows; ++r) {
            for (std::size_t i = 0; i < n; ++i) {
                const double x = v.data[r * n + i];
                bool ok = st.in_carrier(x);
                if (!ok && slack > 0 && !std::isnan(x) && st.kind != structure_kind::boolean)
                    ok = x >= st.carrier_lo - slack && x <= st.carrier_hi + slack;
                if (ok) continue;
                out.push_back(tw + " row " + std::to_string(r) + " index " + std::to_string(i) + " (" +
                              s.symbols()[i] + "): value " + format_value(x) + " outside " + st.carrier_text());
                if (out.size() >= 20) return;
            }
        }
    }
}

}  // namespace detail

// Interface violations of `inputs` for module m; empty when valid.
inline std::vector<std::string> validate(const annotated_module& m, const tensor_list& inputs) {
    std::vector<std::string> out;
    detail::check_tensors(m.name(), "input", m.inputs(), inputs, 0, out);
    return out;
}

inline std::vector<std::string> annotated_module::check_outputs(const tensor_list& out) const {
    std::vector<std::string> v;
    detail::check_tensors(name_, "output", outputs_, out, detail::output_slack, v);
    return v;
}

// ---------------------------------------------------------------------------
// Adapters: gather entries by symbol and convert between structures.

namespace detail {

struct pick {
    std::size_t tensor;
    std::size_t elem;
};

struct adapter {
    std::vector<std::vector<pick>> picks;  // per target tensor
    std::vector<std::vector<std::pair<structure_ref, structure_ref>>> conv;  // per target tensor, per source tensor
    std::vector<sym_tensor> sources;
    std::vector<sym_tensor> targets;
    bool reshapes = false;
    nlohmann::json stages = nlohmann::json::array();

    bool trivial() const { return !reshapes && stages.empty(); }

    tensor_list apply(const tensor_list& in) const {
        tensor_list out;
        out.reserve(targets.size());
        for (std::size_t t = 0; t < targets.size(); ++t) {
            const auto& ps = picks[t];
            std::size_t rows = 1;
            for (const auto& p : ps) {
                const std::size_t r = in[p.tensor].rows;
                if (r == 1) continue;
                if (rows != 1 && rows != r)
                    throw semantic_error("batch size mismatch: " + std::to_string(rows) + " vs " + std::to_string(r));
                rows = r;
            }
            const std::size_t n = ps.size();
            tensor v(rows, targets[t].shape(), std::vector<double>(rows * n));
            for (std::size_t i = 0; i < n; ++i) {
                const auto& src = in[ps[i].tensor];
                const std::size_t sn = src.row_size();
                const auto& [from, to] = conv[t][ps[i].tensor];
                const bool same = from->tag == to->tag;
                for (std::size_t r = 0; r < rows; ++r) {
                    const double x = src.data[(src.rows == 1 ? 0 : r) * sn + ps[i].elem];
                    v.data[r * n + i] = same ? x : transform_value(x, *from, *to);
                }
            }
            out.push_back(std::move(v));
        }
        return out;
    }
};

using symbol_source = std::unordered_map<std::string, pick>;

inline symbol_source index_symbols(const std::vector<sym_tensor>& sources) {
    symbol_source by;
    for (std::size_t s = 0; s < sources.size(); ++s)
        for (std::size_t e = 0; e < sources[s].size(); ++e) by.emplace(sources[s].symbols()[e], pick{s, e});
    return by;
}

// Builds the gather/convert plan from `sources` to `targets`. `context` names
// the edge in error messages.
inline adapter make_adapter(const std::vector<sym_tensor>& sources, const std::vector<sym_tensor>& targets,
                            const std::string& context) {
    adapter a;
    a.sources = sources;
    a.targets = targets;
    const auto by = index_symbols(sources);
    if (sources.size() != targets.size()) a.reshapes = true;
    std::set<std::pair<std::string, std::string>> seen_conv;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& tgt = targets[t];
        std::vector<pick> ps;
        for (std::size_t i = 0; i < tgt.size(); ++i) {
            const auto& sym = tgt.symbols()[i];
            auto it = by.find(sym);
            if (it == by.end()) throw semantic_error(context + ": required symbol '" + sym + "' is not provided");
            if (it->second.tensor != t || it->second.elem != i || sources[t].size() != tgt.size()) a.reshapes = true;
            ps.push_back(it->second);
        }
        std::vector<std::pair<structure_ref, structure_ref>> conv;
        for (std::size_t s = 0; s < sources.size(); ++s) conv.emplace_back(sources[s].structure_ptr(), tgt.structure_ptr());
        for (const auto& p : ps) {
            const auto& from = sources[p.tensor].structure();
            const auto& to = tgt.structure();
            if (from.tag == to.tag) continue;
            if (!transform_exists(from, to)) throw incompatible_structures(from.tag, to.tag, context);
            if (seen_conv.emplace(from.tag, to.tag).second)
                a.stages.push_back({{"kind", "transform"}, {"name", transform_name(from, to)}, {"from", from.tag}, {"to", to.tag}});
        }
        a.picks.push_back(std::move(ps));
        a.conv.push_back(std::move(conv));
    }
    if (a.reshapes) {
        nlohmann::json sel = nlohmann::json::array();
        for (const auto& ps : a.picks) {
            nlohmann::json row = nlohmann::json::array();
            for (const auto& p : ps) row.push_back(sources.size() == 1 ? nlohmann::json(p.elem) : nlohmann::json({p.tensor, p.elem}));
            sel.push_back(row);
        }
        a.stages.insert(a.stages.begin(), nlohmann::json{{"kind", "reshape"}, {"selection", sel}});
    }
    return a;
}

inline std::set<std::string> symbol_set(const std::vector<sym_tensor>& ts) {
    std::set<std::string> out;
    for (const auto& t : ts) out.insert(t.symbols().begin(), t.symbols().end());
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// reshape_input

// Rebinds m's inputs to the single tensor `expected`. Entries of m's inputs are
// gathered from `expected` by symbol name; modules with positional inputs
// (v1..vn) bind them to expected's first n entries when the names differ.
inline annotated_module reshape_input(const annotated_module& m, const sym_tensor& expected) {
    for (const auto& in : m.inputs())
        if (in.tag() != expected.tag())
            throw incompatible_structures(expected.tag(), in.tag(), "reshape_input for module '" + m.name() + "'");

    std::size_t needed = 0;
    bool by_name = true;
    for (const auto& in : m.inputs()) {
        needed += in.size();
        for (const auto& sym : in.symbols())
            if (!expected.index_of(sym)) by_name = false;
    }

    std::vector<std::vector<std::size_t>> sel;
    if (by_name) {
        for (const auto& in : m.inputs()) {
            sel.emplace_back();
            for (const auto& sym : in.symbols()) sel.back().push_back(*expected.index_of(sym));
        }
    } else if (m.positional_inputs() && expected.size() >= needed) {
        std::size_t next = 0;
        for (const auto& in : m.inputs()) {
            sel.emplace_back();
            for (std::size_t i = 0; i < in.size(); ++i) sel.back().push_back(next++);
        }
    } else {
        for (const auto& in : m.inputs()) {
            for (std::size_t i = 0; i < in.size(); ++i) {
                const auto& sym = in.symbols()[i];
                if (expected.index_of(sym)) continue;
                if (m.positional_inputs()) {
                    throw semantic_error("reshape_input for module '" + m.name() + "': expected tensor has " +
                                         std::to_string(expected.size()) + " symbols, positional input '" + sym +
                                         "' needs " + std::to_string(needed));
                }
                throw semantic_error("reshape_input for module '" + m.name() + "': missing required symbol '" + sym + "'");
            }
        }
    }

    auto inner = std::make_shared<annotated_module>(m);
    const std::size_t width = expected.size();
    std::vector<sym_tensor> inner_specs = m.inputs();
    compute_fn fn = [inner, sel, width, inner_specs](const tensor_list& in, const exec_options& opts) {
        const tensor& src = in.at(0);
        tensor_list gathered;
        for (std::size_t t = 0; t < sel.size(); ++t) {
            const auto& idx = sel[t];
            tensor v(src.rows, inner_specs[t].shape(), std::vector<double>(src.rows * idx.size()));
            for (std::size_t r = 0; r < src.rows; ++r)
                for (std::size_t i = 0; i < idx.size(); ++i) v.data[r * idx.size() + i] = src.data[r * width + idx[i]];
            gathered.push_back(std::move(v));
        }
        return (*inner)(gathered, opts);
    };

    nlohmann::json selection = sel.size() == 1 ? nlohmann::json(sel[0]) : nlohmann::json(sel);
    nlohmann::json wiring = {{"kind", "reshape"},
                             {"name", m.name()},
                             {"expected", expected.to_json()},
                             {"selection", selection},
                             {"inner", m.wiring()}};
    annotated_module out(m.name(), {expected}, m.outputs(), std::move(fn), std::move(wiring));
    if (m.backing() && sel.size() == 1) {
        circuit_backing b = *m.backing();
        for (auto& c : b.columns) c = sel[0][c];
        out = out.with_backing(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------------------
// chain

// m2 after m1. Reshape and transformation stages are inserted between them when
// the symbol layouts or structures differ.
inline annotated_module chain(const annotated_module& m1, const annotated_module& m2, std::string name = {}) {
    const auto produced = detail::symbol_set(m1.outputs());
    const auto consumed = detail::symbol_set(m2.inputs());
    if (produced != consumed) {
        std::string msg = "chain '" + m1.name() + "' -> '" + m2.name() + "': symbol set mismatch";
        for (const auto& s : consumed)
            if (!produced.count(s)) msg += "; '" + s + "' not produced";
        for (const auto& s : produced)
            if (!consumed.count(s)) msg += "; '" + s + "' not consumed";
        throw semantic_error(msg);
    }
    auto a = std::make_shared<detail::adapter>(
        detail::make_adapter(m1.outputs(), m2.inputs(), "chain '" + m1.name() + "' -> '" + m2.name() + "'"));
    auto first = std::make_shared<annotated_module>(m1);
    auto second = std::make_shared<annotated_module>(m2);
    if (name.empty()) name = m1.name() + " >> " + m2.name();

    compute_fn fn = [first, second, a](const tensor_list& in, const exec_options& opts) {
        tensor_list mid = (*first)(in, opts);
        return (*second)(a->trivial() ? mid : a->apply(mid), opts);
    };
    nlohmann::json stages = nlohmann::json::array();
    stages.push_back(m1.wiring());
    for (const auto& s : a->stages) stages.push_back(s);
    stages.push_back(m2.wiring());
    nlohmann::json wiring = {{"kind", "chain"}, {"name", name}, {"stages", stages}};
    return annotated_module(std::move(name), m1.inputs(), m2.outputs(), std::move(fn), std::move(wiring))
        .with_positional(m1.positional_inputs());
}

// ---------------------------------------------------------------------------
// wire_dag

namespace detail {

struct dag_plan {
    std::vector<annotated_module> modules;
    std::vector<sym_tensor> externals;
    // Producer of each symbol: node 0 is the external inputs, node i + 1 is modules[i].
    std::unordered_map<std::string, std::size_t> producer;
    std::vector<std::vector<std::size_t>> levels;  // module indices
    std::vector<adapter> adapters;                 // per module: from all upstream outputs
    std::vector<std::vector<std::size_t>> upstream;  // per module: source nodes in adapter order
    std::vector<std::pair<std::size_t, std::size_t>> exposed;  // (module, output tensor)
};

}  // namespace detail

// Wires modules by their symbolic dependencies. The composite's inputs are
// `external_inputs`; its outputs are every module output tensor holding a
// symbol no module consumes, in execution order.
inline annotated_module wire_dag(const std::vector<annotated_module>& modules, const std::vector<sym_tensor>& external_inputs,
                                 std::string name = "dag") {
    auto plan = std::make_shared<detail::dag_plan>();
    plan->modules = modules;
    plan->externals = external_inputs;
    const std::size_t n = modules.size();

    std::set<std::string> names;
    for (const auto& m : modules)
        if (!names.insert(m.name()).second) throw semantic_error("wire_dag: duplicate module name '" + m.name() + "'");

    auto claim = [&](const std::string& sym, std::size_t node) {
        auto [it, fresh] = plan->producer.emplace(sym, node);
        if (!fresh) {
            auto who = [&](std::size_t k) { return k == 0 ? std::string("external inputs") : "module '" + modules[k - 1].name() + "'"; };
            throw semantic_error("wire_dag: symbol '" + sym + "' produced twice, by " + who(it->second) + " and " + who(node));
        }
    };
    for (const auto& t : external_inputs)
        for (const auto& s : t.symbols()) claim(s, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& t : modules[i].outputs())
            for (const auto& s : t.symbols()) claim(s, i + 1);

    // Dependencies.
    std::vector<std::set<std::size_t>> deps(n);
    std::set<std::string> consumed;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& t : modules[i].inputs()) {
            for (const auto& s : t.symbols()) {
                auto it = plan->producer.find(s);
                if (it == plan->producer.end())
                    throw semantic_error("wire_dag: symbol '" + s + "' needed by module '" + modules[i].name() +
                                         "' is never produced");
                if (it->second == i + 1)
                    throw semantic_error("wire_dag: cycle detected: " + modules[i].name() + " -> " + modules[i].name());
                if (it->second > 0) deps[i].insert(it->second - 1);
                consumed.insert(s);
            }
        }
    }

    // Kahn levels.
    std::vector<std::size_t> indeg(n, 0);
    std::vector<std::vector<std::size_t>> users(n);
    for (std::size_t i = 0; i < n; ++i) {
        indeg[i] = deps[i].size();
        for (auto d : deps[i]) users[d].push_back(i);
    }
    std::vector<std::size_t> frontier;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) frontier.push_back(i);
    std::size_t placed = 0;
    while (!frontier.empty()) {
        plan->levels.push_back(frontier);
        placed += frontier.size();
        std::vector<std::size_t> next;
        for (auto i : frontier)
            for (auto u : users[i])
                if (--indeg[u] == 0) next.push_back(u);
        std::sort(next.begin(), next.end());
        frontier.swap(next);
    }
    if (placed != n) {
        // Walk dependencies among the unplaced modules until one repeats.
        std::size_t start = 0;
        while (indeg[start] == 0) ++start;
        std::vector<std::size_t> path;
        std::vector<int> pos(n, -1);
        std::size_t cur = start;
        while (pos[cur] < 0) {
            pos[cur] = static_cast<int>(path.size());
            path.push_back(cur);
            for (auto d : deps[cur]) {
                if (indeg[d] > 0) {
                    cur = d;
                    break;
                }
            }
        }
        std::vector<std::size_t> cyc(path.begin() + pos[cur], path.end());
        std::reverse(cyc.begin(), cyc.end());
        std::string msg = "wire_dag: cycle detected: ";
        for (auto i : cyc) msg += modules[i].name() + " -> ";
        msg += modules[cyc.front()].name();
        throw semantic_error(msg);
    }

    // Per-module adapters over the upstream nodes' tensors.
    nlohmann::json edges = nlohmann::json::array();
    plan->adapters.resize(n);
    plan->upstream.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::set<std::size_t> nodes;
        for (const auto& t : modules[i].inputs())
            for (const auto& s : t.symbols()) nodes.insert(plan->producer.at(s));
        std::vector<sym_tensor> sources;
        for (auto node : nodes) {
            plan->upstream[i].push_back(node);
            const auto& ts = node == 0 ? external_inputs : modules[node - 1].outputs();
            sources.insert(sources.end(), ts.begin(), ts.end());
        }
        plan->adapters[i] = detail::make_adapter(sources, modules[i].inputs(), "wire_dag edge into '" + modules[i].name() + "'");
        for (auto node : nodes) {
            nlohmann::json e = {{"from", node == 0 ? std::string("<inputs>") : modules[node - 1].name()}, {"to", modules[i].name()}};
            nlohmann::json syms = nlohmann::json::array();
            for (const auto& t : modules[i].inputs())
                for (const auto& s : t.symbols())
                    if (plan->producer.at(s) == node) syms.push_back(s);
            e["symbols"] = syms;
            nlohmann::json tr = nlohmann::json::array();
            const auto& ts = node == 0 ? external_inputs : modules[node - 1].outputs();
            for (const auto& st : ts)
                for (const auto& tgt : modules[i].inputs())
                    if (st.tag() != tgt.tag()) {
                        for (const auto& s : tgt.symbols())
                            if (st.index_of(s)) {
                                tr.push_back(transform_name(st.structure(), tgt.structure()) + " " + st.tag() + " -> " + tgt.tag());
                                break;
                            }
                    }
            if (!tr.empty()) e["transforms"] = tr;
            edges.push_back(e);
        }
    }

    std::vector<sym_tensor> outputs;
    for (const auto& level : plan->levels) {
        for (auto i : level) {
            const auto& outs = modules[i].outputs();
            for (std::size_t t = 0; t < outs.size(); ++t) {
                bool open = std::any_of(outs[t].symbols().begin(), outs[t].symbols().end(),
                                        [&](const std::string& s) { return !consumed.count(s); });
                if (open) {
                    plan->exposed.emplace_back(i, t);
                    outputs.push_back(outs[t]);
                }
            }
        }
    }

    compute_fn fn = [plan](const tensor_list& in, const exec_options& opts) {
        const std::size_t n = plan->modules.size();
        std::vector<tensor_list> results(n);
        auto run = [&](std::size_t i) {
            tensor_list gathered;
            for (auto node : plan->upstream[i]) {
                const tensor_list& src = node == 0 ? in : results[node - 1];
                gathered.insert(gathered.end(), src.begin(), src.end());
            }
            results[i] = plan->modules[i](plan->adapters[i].apply(gathered), opts);
        };
        for (const auto& level : plan->levels) {
            if (!opts.parallel || level.size() == 1) {
                for (auto i : level) run(i);
                continue;
            }
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(level.size());
            for (std::size_t k = 0; k < level.size(); ++k) {
                pool.emplace_back([&, k] {
                    try {
                        run(level[k]);
                    } catch (...) {
                        errors[k] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
        tensor_list out;
        for (auto [i, t] : plan->exposed) out.push_back(results[i][t]);
        return out;
    };

    nlohmann::json mods = nlohmann::json::array();
    for (const auto& m : modules) mods.push_back(m.wiring());
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& level : plan->levels) {
        nlohmann::json names_at = nlohmann::json::array();
        for (auto i : level) names_at.push_back(modules[i].name());
        lv.push_back(names_at);
    }
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& t : outputs) outs.push_back(t.to_json());
    nlohmann::json ins = nlohmann::json::array();
    for (const auto& t : external_inputs) ins.push_back(t.to_json());
    nlohmann::json wiring = {{"kind", "dag"}, {"name", name},     {"inputs", ins}, {"levels", lv},
                             {"edges", edges}, {"modules", mods}, {"outputs", outs}};
    return annotated_module(std::move(name), external_inputs, std::move(outputs), std::move(fn), std::move(wiring));
}

// ---------------------------------------------------------------------------
// Wiring manifests

inline constexpr const char* manifest_format_tag = "nesy-wiring/1";

inline nlohmann::json wiring_manifest(const annotated_module& m) {
    return {{"format", manifest_format_tag}, {"module", m.wiring()}};
}

namespace detail {

inline void describe(const nlohmann::json& w, int depth, std::string& out) {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    const std::string kind = w.value("kind", "?");
    const std::string name = w.value("name", "");
    auto spec_line = [](const nlohmann::json& ts) {
        std::string s;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            if (i) s += ", ";
            s += ts[i].value("structure", "?") + "[";
            const auto& syms = ts[i]["symbols"];
            for (std::size_t j = 0; j < syms.size(); ++j) s += (j ? " " : "") + syms[j].get<std::string>();
            s += "]";
        }
        return s;
    };
    if (kind == "module") {
        out += pad + "module " + name;
        if (w.contains("inputs")) out += "  in: " + spec_line(w["inputs"]);
        if (w.contains("outputs")) out += "  out: " + spec_line(w["outputs"]);
        if (w.contains("backend")) out += "  backend: " + w["backend"].get<std::string>();
        out += "\n";
    } else if (kind == "reshape") {
        out += pad + "reshape " + name + "  selection " + w["selection"].dump();
        if (w.contains("expected")) out += "  from " + spec_line(nlohmann::json::array({w["expected"]}));
        out += "\n";
        if (w.contains("inner")) describe(w["inner"], depth + 1, out);
    } else if (kind == "transform") {
        out += pad + "transform " + w.value("name", "") + " (" + w.value("from", "") + " -> " + w.value("to", "") + ")\n";
    } else if (kind == "chain") {
        out += pad + "chain " + name + "\n";
        for (const auto& s : w["stages"]) describe(s, depth + 1, out);
    } else if (kind == "dag") {
        out += pad + "dag " + name + "\n";
        out += pad + "  inputs: " + spec_line(w["inputs"]) + "\n";
        int li = 0;
        for (const auto& level : w["levels"]) {
            out += pad + "  level " + std::to_string(li++) + ":";
            for (const auto& nm : level) out += " " + nm.get<std::string>();
            out += "\n";
        }
        for (const auto& e : w["edges"]) {
            out += pad + "  edge " + e.value("from", "") + " -> " + e.value("to", "") + " " + e["symbols"].dump();
            if (e.contains("transforms"))
                for (const auto& t : e["transforms"]) out += "  [" + t.get<std::string>() + "]";
            out += "\n";
        }
        for (const auto& m : w["modules"]) describe(m, depth + 1, out);
        out += pad + "  outputs: " + spec_line(w["outputs"]) + "\n";
    } else {
        out += pad + kind + " " + name + "\n";
    }
}

}  // namespace detail

// Human-readable rendering of a wiring manifest.
inline std::string describe_manifest(const nlohmann::json& manifest) {
    if (manifest.value("format", "") != manifest_format_tag) throw parse_error("manifest: unknown format tag", 1);
    std::string out;
    try {
        detail::describe(manifest.at("module"), 0, out);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("manifest: ") + e.what(), 1);
    }
    return out;
}

}  // namespace nesy
