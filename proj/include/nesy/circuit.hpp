#pragma once

// Decision-d-DNNF circuits: node table, CNF compilation (DPLL with unit
// propagation, component decomposition and component caching), smoothing,
// structural property checks, model counting and a JSON file format.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "nesy/error.hpp"
#include "nesy/formula.hpp"

namespace nesy {

using node_id = std::uint32_t;

enum class node_kind : std::uint8_t { and_node, or_node, lit_node, true_node, false_node };

inline const char* node_kind_name(node_kind k) {
    switch (k) {
        case node_kind::and_node: return "AND";
        case node_kind::or_node: return "OR";
        case node_kind::lit_node: return "LIT";
        case node_kind::true_node: return "TRUE";
        case node_kind::false_node: return "FALSE";
    }
    return "?";
}

struct circuit_node {
    node_kind kind = node_kind::true_node;
    std::vector<node_id> children;
    lit literal;           // LIT only
    int decision_var = 0;  // OR only; 0 when unknown

    bool operator==(const circuit_node&) const = default;
};

// Immutable node table in topological order (children before parents).
class circuit {
public:
    circuit() : circuit(0, {}, {circuit_node{}}, 0) {}

    // Validates well-formedness (ids, topology, arity, literal range). Structural
    // properties are not enforced here; see check_properties.
    circuit(int num_vars, std::vector<var_role> roles, std::vector<circuit_node> nodes, node_id root)
        : num_vars_(num_vars), roles_(std::move(roles)), nodes_(std::move(nodes)), root_(root) {
        if (roles_.empty()) roles_.assign(static_cast<std::size_t>(num_vars_), var_role::bernoulli);
        if (static_cast<int>(roles_.size()) != num_vars_) throw semantic_error("circuit: role table size mismatch");
        if (nodes_.empty() || root_ >= nodes_.size()) throw semantic_error("circuit: root id out of range");
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            const bool inner = n.kind == node_kind::and_node || n.kind == node_kind::or_node;
            if (inner && n.children.empty())
                throw semantic_error("circuit: node " + std::to_string(i) + " has no children");
            if (!inner && !n.children.empty())
                throw semantic_error("circuit: leaf node " + std::to_string(i) + " has children");
            for (node_id c : n.children)
                if (c >= i)
                    throw semantic_error("circuit: node " + std::to_string(i) + " references child " +
                                         std::to_string(c) + " out of topological order");
            if (n.kind == node_kind::lit_node && (n.literal.var() < 1 || n.literal.var() > num_vars_))
                throw semantic_error("circuit: literal out of range at node " + std::to_string(i));
            if (n.decision_var < 0 || n.decision_var > num_vars_)
                throw semantic_error("circuit: decision variable out of range at node " + std::to_string(i));
        }
        compute_var_sets();
    }

    int num_vars() const { return num_vars_; }
    const std::vector<var_role>& roles() const { return roles_; }
    var_role role(int v) const { return roles_[static_cast<std::size_t>(v - 1)]; }
    const std::vector<circuit_node>& nodes() const { return nodes_; }
    const circuit_node& node(node_id i) const { return nodes_[i]; }
    std::size_t size() const { return nodes_.size(); }
    node_id root() const { return root_; }

    // Sorted variables mentioned below node i.
    const std::vector<int>& var_set(node_id i) const { return var_sets_[i]; }

    std::vector<int> input_vars() const {
        std::vector<int> out;
        for (int v = 1; v <= num_vars_; ++v)
            if (role(v) != var_role::auxiliary) out.push_back(v);
        return out;
    }

    std::size_t edge_count() const {
        std::size_t e = 0;
        for (const auto& n : nodes_) e += n.children.size();
        return e;
    }

    bool operator==(const circuit& o) const {
        return num_vars_ == o.num_vars_ && roles_ == o.roles_ && nodes_ == o.nodes_ && root_ == o.root_;
    }

private:
    void compute_var_sets() {
        var_sets_.resize(nodes_.size());
        std::vector<int> merged;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            auto& vs = var_sets_[i];
            if (n.kind == node_kind::lit_node) {
                vs = {n.literal.var()};
                continue;
            }
            for (node_id c : n.children) {
                merged.clear();
                std::set_union(vs.begin(), vs.end(), var_sets_[c].begin(), var_sets_[c].end(),
                               std::back_inserter(merged));
                vs.swap(merged);
            }
        }
    }

    int num_vars_;
    std::vector<var_role> roles_;
    std::vector<circuit_node> nodes_;
    node_id root_;
    std::vector<std::vector<int>> var_sets_;
};

// ---------------------------------------------------------------------------
// Hash-consing builder

class circuit_builder {
public:
    explicit circuit_builder(int num_vars) : num_vars_(num_vars) {
        false_ = intern({node_kind::false_node, {}, {}, 0});
        true_ = intern({node_kind::true_node, {}, {}, 0});
    }

    node_id make_true() const { return true_; }
    node_id make_false() const { return false_; }
    node_id make_lit(lit l) { return intern({node_kind::lit_node, {}, l, 0}); }

    // Flattens nested ANDs and folds constants.
    node_id make_and(const std::vector<node_id>& parts) {
        std::vector<node_id> kids;
        for (node_id p : parts) {
            const auto& n = nodes_[p];
            if (n.kind == node_kind::false_node) return false_;
            if (n.kind == node_kind::true_node) continue;
            if (n.kind == node_kind::and_node) {
                kids.insert(kids.end(), n.children.begin(), n.children.end());
            } else {
                kids.push_back(p);
            }
        }
        if (kids.empty()) return true_;
        if (kids.size() == 1) return kids[0];
        return intern({node_kind::and_node, std::move(kids), {}, 0});
    }

    // Decision node: `hi` entails +var, `lo` entails -var. FALSE branches fold away.
    node_id make_decision(int var, node_id hi, node_id lo) {
        if (nodes_[hi].kind == node_kind::false_node) return lo;
        if (nodes_[lo].kind == node_kind::false_node) return hi;
        return intern({node_kind::or_node, {hi, lo}, {}, var});
    }

    // Unfolded node, for hand-built and rebuilt circuits.
    node_id make_raw(circuit_node n) { return intern(std::move(n)); }

    const circuit_node& node(node_id i) const { return nodes_[i]; }

    // Keeps only nodes reachable from root, renumbered in depth-first post-order.
    circuit finish(node_id root, std::vector<var_role> roles) const {
        std::vector<node_id> remap(nodes_.size(), UINT32_MAX);
        std::vector<circuit_node> out;
        std::vector<std::pair<node_id, std::size_t>> stack{{root, 0}};
        while (!stack.empty()) {
            auto& [id, next] = stack.back();
            const auto& n = nodes_[id];
            if (remap[id] != UINT32_MAX) {
                stack.pop_back();
                continue;
            }
            if (next < n.children.size()) {
                node_id c = n.children[next++];
                if (remap[c] == UINT32_MAX) stack.emplace_back(c, 0);
                continue;
            }
            circuit_node copy = n;
            for (auto& c : copy.children) c = remap[c];
            remap[id] = static_cast<node_id>(out.size());
            out.push_back(std::move(copy));
            stack.pop_back();
        }
        return circuit(num_vars_, std::move(roles), std::move(out), remap[root]);
    }

private:
    struct key_hash {
        std::size_t operator()(const circuit_node& n) const noexcept {
            std::size_t h = static_cast<std::size_t>(n.kind) * 0x9E3779B97F4A7C15ull;
            auto mix = [&h](std::size_t v) { h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2); };
            mix(static_cast<std::size_t>(n.literal.dimacs()));
            mix(static_cast<std::size_t>(n.decision_var));
            for (node_id c : n.children) mix(c);
            return h;
        }
    };

    node_id intern(circuit_node n) {
        auto it = unique_.find(n);
        if (it != unique_.end()) return it->second;
        auto id = static_cast<node_id>(nodes_.size());
        nodes_.push_back(n);
        unique_.emplace(std::move(n), id);
        return id;
    }

    int num_vars_;
    std::vector<circuit_node> nodes_;
    std::unordered_map<circuit_node, node_id, key_hash> unique_;
    node_id false_ = 0;
    node_id true_ = 0;
};

// ---------------------------------------------------------------------------
// Compilation

struct compile_options {
    bool component_caching = true;
};

struct compile_stats {
    std::size_t decisions = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_entries = 0;
    std::size_t components = 0;
};

namespace detail {

class dpll_compiler {
public:
    dpll_compiler(const cnf& f, compile_options opts)
        : f_(f),
          opts_(opts),
          builder_(f.num_vars),
          value_(static_cast<std::size_t>(f.num_vars) + 1, -1),
          occurs_(static_cast<std::size_t>(f.num_vars) + 1) {
        for (std::size_t c = 0; c < f.clauses.size(); ++c)
            for (lit l : f.clauses[c]) occurs_[static_cast<std::size_t>(l.var())].push_back(static_cast<int>(c));
    }

    circuit run(compile_stats* stats) {
        node_id root = builder_.make_false();
        if (!f_.unsat) {
            std::vector<int> all(f_.clauses.size());
            std::iota(all.begin(), all.end(), 0);
            std::size_t mark = trail_.size();
            bool ok = true;
            for (int c : all) {
                if (!propagate_clause(c)) {
                    ok = false;
                    break;
                }
            }
            ok = ok && propagate_queue(mark);
            if (ok) {
                std::vector<node_id> parts = trail_literals(mark);
                parts.push_back(compile_residual(all));
                root = builder_.make_and(parts);
            }
            undo(mark);
        }
        if (stats) {
            *stats = stats_;
            stats->cache_entries = cache_.size();
        }
        return builder_.finish(root, f_.roles);
    }

private:
    struct vec_hash {
        std::size_t operator()(const std::vector<int>& v) const noexcept {
            std::size_t h = v.size();
            for (int x : v) h ^= static_cast<std::size_t>(x) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
            return h;
        }
    };

    bool is_true(lit l) const { return value_[static_cast<std::size_t>(l.var())] == (l.positive() ? 1 : 0); }
    bool is_unassigned(int v) const { return value_[static_cast<std::size_t>(v)] < 0; }

    void assign(lit l) {
        value_[static_cast<std::size_t>(l.var())] = l.positive() ? 1 : 0;
        trail_.push_back(l);
    }

    void undo(std::size_t mark) {
        while (trail_.size() > mark) {
            value_[static_cast<std::size_t>(trail_.back().var())] = -1;
            trail_.pop_back();
        }
    }

    // Assigns the remaining literal of a unit clause; false on conflict.
    bool propagate_clause(int cid) {
        lit unit;
        int open = 0;
        for (lit l : f_.clauses[static_cast<std::size_t>(cid)]) {
            if (is_true(l)) return true;
            if (is_unassigned(l.var())) {
                unit = l;
                if (++open > 1) return true;
            }
        }
        if (open == 0) return false;
        assign(unit);
        return true;
    }

    // Propagates consequences of trail entries from `head` onwards.
    bool propagate_queue(std::size_t head) {
        while (head < trail_.size()) {
            int v = trail_[head++].var();
            for (int cid : occurs_[static_cast<std::size_t>(v)])
                if (!propagate_clause(cid)) return false;
        }
        return true;
    }

    std::vector<node_id> trail_literals(std::size_t mark) {
        std::vector<node_id> out;
        for (std::size_t i = mark; i < trail_.size(); ++i) out.push_back(builder_.make_lit(trail_[i]));
        return out;
    }

    bool satisfied(int cid) const {
        for (lit l : f_.clauses[static_cast<std::size_t>(cid)])
            if (is_true(l)) return true;
        return false;
    }

    node_id compile_residual(const std::vector<int>& clause_ids) {
        std::vector<int> live;
        for (int c : clause_ids)
            if (!satisfied(c)) live.push_back(c);
        if (live.empty()) return builder_.make_true();

        // Connected components over unassigned variables.
        std::unordered_map<int, int> parent;
        auto find = [&parent](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (int c : live) {
            int first = 0;
            for (lit l : f_.clauses[static_cast<std::size_t>(c)]) {
                if (!is_unassigned(l.var())) continue;
                int v = l.var();
                if (!parent.count(v)) parent[v] = v;
                if (first == 0) {
                    first = v;
                } else {
                    int a = find(first), b = find(v);
                    if (a != b) parent[std::max(a, b)] = std::min(a, b);
                }
            }
        }
        std::map<int, std::pair<std::vector<int>, std::vector<int>>> comps;  // root -> (clauses, vars)
        for (int c : live) {
            for (lit l : f_.clauses[static_cast<std::size_t>(c)]) {
                if (is_unassigned(l.var())) {
                    comps[find(l.var())].first.push_back(c);
                    break;
                }
            }
        }
        for (auto& [v, p] : parent) comps[find(v)].second.push_back(v);

        std::vector<node_id> parts;
        for (auto& [r, comp] : comps) {
            std::sort(comp.second.begin(), comp.second.end());
            node_id n = compile_component(comp.first, comp.second);
            if (builder_.node(n).kind == node_kind::false_node) return n;
            parts.push_back(n);
        }
        return builder_.make_and(parts);
    }

    // Most occurrences in the shortest live clauses; ties to the lowest id.
    int choose_branch(const std::vector<int>& clause_ids) const {
        std::size_t shortest = SIZE_MAX;
        for (int c : clause_ids) {
            std::size_t open = 0;
            for (lit l : f_.clauses[static_cast<std::size_t>(c)]) open += is_unassigned(l.var());
            shortest = std::min(shortest, open);
        }
        std::map<int, int> score;
        for (int c : clause_ids) {
            std::size_t open = 0;
            for (lit l : f_.clauses[static_cast<std::size_t>(c)]) open += is_unassigned(l.var());
            if (open != shortest) continue;
            for (lit l : f_.clauses[static_cast<std::size_t>(c)])
                if (is_unassigned(l.var())) ++score[l.var()];
        }
        int best = 0, best_score = -1;
        for (auto [v, s] : score)
            if (s > best_score) best = v, best_score = s;
        return best;
    }

    node_id compile_component(const std::vector<int>& clause_ids, const std::vector<int>& vars) {
        ++stats_.components;
        std::vector<int> key;
        if (opts_.component_caching) {
            key.reserve(vars.size() + clause_ids.size() + 1);
            key.insert(key.end(), vars.begin(), vars.end());
            key.push_back(0);
            key.insert(key.end(), clause_ids.begin(), clause_ids.end());
            auto it = cache_.find(key);
            if (it != cache_.end()) {
                ++stats_.cache_hits;
                return it->second;
            }
        }

        const int v = choose_branch(clause_ids);
        ++stats_.decisions;
        node_id branch[2];
        for (int b = 0; b < 2; ++b) {
            std::size_t mark = trail_.size();
            assign(b == 0 ? lit::pos(v) : lit::neg(v));
            if (propagate_queue(mark)) {
                std::vector<node_id> parts = trail_literals(mark);
                parts.push_back(compile_residual(clause_ids));
                branch[b] = builder_.make_and(parts);
            } else {
                branch[b] = builder_.make_false();
            }
            undo(mark);
        }
        node_id out = builder_.make_decision(v, branch[0], branch[1]);
        if (opts_.component_caching) cache_.emplace(std::move(key), out);
        return out;
    }

    const cnf& f_;
    compile_options opts_;
    circuit_builder builder_;
    std::vector<int8_t> value_;
    std::vector<lit> trail_;
    std::vector<std::vector<int>> occurs_;
    std::unordered_map<std::vector<int>, node_id, vec_hash> cache_;
    compile_stats stats_;
};

}  // namespace detail

// Compiles a CNF into a decomposable, deterministic decision-d-DNNF.
inline circuit compile(const cnf& f, compile_options opts = {}, compile_stats* stats = nullptr) {
    return detail::dpll_compiler(f, opts).run(stats);
}

// ---------------------------------------------------------------------------
// Smoothing

// Every OR node's children get identical variable sets, and the root covers
// all declared variables, by conjoining (v | ~v) gadgets.
inline circuit smooth(const circuit& c) {
    circuit_builder b(c.num_vars());
    std::vector<node_id> remap(c.size());
    std::vector<std::vector<int>> vars(c.size());
    std::unordered_map<int, node_id> gadgets;

    auto gadget = [&](int v) {
        auto it = gadgets.find(v);
        if (it != gadgets.end()) return it->second;
        node_id g = b.make_raw({node_kind::or_node, {b.make_lit(lit::pos(v)), b.make_lit(lit::neg(v))}, {}, v});
        gadgets.emplace(v, g);
        return g;
    };
    auto pad = [&](node_id n, const std::vector<int>& have, const std::vector<int>& want) {
        std::vector<int> missing;
        std::set_difference(want.begin(), want.end(), have.begin(), have.end(), std::back_inserter(missing));
        if (missing.empty()) return n;
        std::vector<node_id> parts{n};
        for (int v : missing) parts.push_back(gadget(v));
        return b.make_and(parts);
    };

    for (node_id i = 0; i < c.size(); ++i) {
        const auto& n = c.node(i);
        const auto& vs = c.var_set(i);
        switch (n.kind) {
            case node_kind::true_node: remap[i] = b.make_true(); break;
            case node_kind::false_node: remap[i] = b.make_false(); break;
            case node_kind::lit_node: remap[i] = b.make_lit(n.literal); break;
            case node_kind::and_node: {
                std::vector<node_id> kids;
                for (node_id ch : n.children) kids.push_back(remap[ch]);
                remap[i] = b.make_and(kids);
                break;
            }
            case node_kind::or_node: {
                std::vector<node_id> kids;
                for (node_id ch : n.children) kids.push_back(pad(remap[ch], c.var_set(ch), vs));
                remap[i] = b.make_raw({node_kind::or_node, std::move(kids), {}, n.decision_var});
                break;
            }
        }
    }
    node_id root = remap[c.root()];
    if (b.node(root).kind != node_kind::false_node) {
        std::vector<int> all(static_cast<std::size_t>(c.num_vars()));
        std::iota(all.begin(), all.end(), 1);
        root = pad(root, c.var_set(c.root()), all);
    }
    return b.finish(root, c.roles());
}

// ---------------------------------------------------------------------------
// Structural properties

struct property_report {
    bool decomposable = true;
    bool deterministic = true;
    bool smooth = true;
    // Up to five violating node ids per property.
    std::vector<node_id> non_decomposable;
    std::vector<node_id> non_deterministic;
    std::vector<node_id> non_smooth;

    bool ok() const { return decomposable && deterministic && smooth; }
};

namespace detail {

// Sufficient syntactic test that every model of `n` sets literal l.
class entailment {
public:
    explicit entailment(const circuit& c) : c_(c) {}

    bool entails(node_id n, lit l) {
        const auto& node = c_.node(n);
        switch (node.kind) {
            case node_kind::lit_node: return node.literal == l;
            case node_kind::false_node: return true;
            case node_kind::true_node: return false;
            default: break;
        }
        if (node.kind == node_kind::and_node) {
            for (node_id ch : node.children)
                if (c_.node(ch).kind == node_kind::lit_node && c_.node(ch).literal == l) return true;
        }
        auto key = (static_cast<std::uint64_t>(n) << 32) | static_cast<std::uint32_t>(l.dimacs());
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        bool r;
        if (node.kind == node_kind::and_node) {
            r = std::any_of(node.children.begin(), node.children.end(), [&](node_id ch) { return entails(ch, l); });
        } else {
            r = std::all_of(node.children.begin(), node.children.end(), [&](node_id ch) { return entails(ch, l); });
        }
        memo_.emplace(key, r);
        return r;
    }

private:
    const circuit& c_;
    std::unordered_map<std::uint64_t, bool> memo_;
};

}  // namespace detail

inline property_report check_properties(const circuit& c) {
    property_report rep;
    auto flag = [](bool& prop, std::vector<node_id>& list, node_id i) {
        prop = false;
        if (list.size() < 5) list.push_back(i);
    };
    detail::entailment ent(c);
    std::vector<char> seen(static_cast<std::size_t>(c.num_vars()) + 1, 0);
    for (node_id i = 0; i < c.size(); ++i) {
        const auto& n = c.node(i);
        if (n.kind == node_kind::and_node) {
            bool overlap = false;
            for (node_id ch : n.children) {
                for (int v : c.var_set(ch)) {
                    if (seen[static_cast<std::size_t>(v)]) overlap = true;
                    seen[static_cast<std::size_t>(v)] = 1;
                }
            }
            for (int v : c.var_set(i)) seen[static_cast<std::size_t>(v)] = 0;
            if (overlap) flag(rep.decomposable, rep.non_decomposable, i);
        } else if (n.kind == node_kind::or_node) {
            for (node_id ch : n.children) {
                if (c.var_set(ch) != c.var_set(n.children[0])) {
                    flag(rep.smooth, rep.non_smooth, i);
                    break;
                }
            }
            bool det = false;
            if (n.children.size() == 2 && n.decision_var > 0) {
                lit p = lit::pos(n.decision_var);
                det = (ent.entails(n.children[0], p) && ent.entails(n.children[1], ~p)) ||
                      (ent.entails(n.children[0], ~p) && ent.entails(n.children[1], p));
            }
            if (!det) flag(rep.deterministic, rep.non_deterministic, i);
        }
    }
    return rep;
}

inline void require_properties(const circuit& c, const char* operation) {
    auto rep = check_properties(c);
    if (!rep.decomposable) throw structural_error("decomposable", std::string(operation) + ": circuit is not decomposable");
    if (!rep.deterministic)
        throw structural_error("deterministic", std::string(operation) + ": circuit is not deterministic");
    if (!rep.smooth) throw structural_error("smooth", std::string(operation) + ": circuit is not smooth");
}

using big_count = boost::multiprecision::cpp_int;

// Models over all declared variables; variables absent from the root count twice.
inline big_count model_count(const circuit& c) {
    require_properties(c, "model_count");
    std::vector<big_count> val(c.size());
    for (node_id i = 0; i < c.size(); ++i) {
        const auto& n = c.node(i);
        switch (n.kind) {
            case node_kind::true_node:
            case node_kind::lit_node: val[i] = 1; break;
            case node_kind::false_node: val[i] = 0; break;
            case node_kind::and_node:
                val[i] = 1;
                for (node_id ch : n.children) val[i] *= val[ch];
                break;
            case node_kind::or_node:
                val[i] = 0;
                for (node_id ch : n.children) val[i] += val[ch];
                break;
        }
    }
    big_count out = val[c.root()];
    if (out != 0) out <<= static_cast<unsigned>(c.num_vars() - static_cast<int>(c.var_set(c.root()).size()));
    return out;
}

// ---------------------------------------------------------------------------
// File format

inline constexpr const char* circuit_format_tag = "nesy-circuit/1";

// One JSON document: header fields, then one compact record per line in "nodes".
// `extra` fields (e.g. a layer manifest) are emitted after the header.
inline std::string to_json_text(const circuit& c, const nlohmann::json& extra = nlohmann::json::object()) {
    using nlohmann::json;
    std::vector<int> aux, indicators;
    for (int v = 1; v <= c.num_vars(); ++v) {
        if (c.role(v) == var_role::auxiliary) aux.push_back(v);
        if (c.role(v) == var_role::indicator) indicators.push_back(v);
    }
    std::string out = "{\n";
    out += "  \"format\": \"" + std::string(circuit_format_tag) + "\",\n";
    out += "  \"num_vars\": " + std::to_string(c.num_vars()) + ",\n";
    out += "  \"num_nodes\": " + std::to_string(c.size()) + ",\n";
    out += "  \"root\": " + std::to_string(c.root()) + ",\n";
    out += "  \"auxiliary\": " + json(aux).dump() + ",\n";
    out += "  \"indicator\": " + json(indicators).dump() + ",\n";
    for (auto it = extra.begin(); it != extra.end(); ++it)
        out += "  " + json(it.key()).dump() + ": " + it.value().dump() + ",\n";
    out += "  \"nodes\": [\n";
    for (node_id i = 0; i < c.size(); ++i) {
        const auto& n = c.node(i);
        json rec;
        rec["id"] = i;
        rec["kind"] = node_kind_name(n.kind);
        if (n.kind == node_kind::lit_node) rec["literal"] = n.literal.dimacs();
        if (!n.children.empty()) rec["children"] = n.children;
        if (n.kind == node_kind::or_node) rec["decision_var"] = n.decision_var;
        out += "    " + rec.dump() + (i + 1 < c.size() ? ",\n" : "\n");
    }
    out += "  ]\n}\n";
    return out;
}

inline circuit circuit_from_json_text(std::string_view text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("circuit file: ") + e.what(), 1);
    }
    try {
        if (doc.value("format", "") != circuit_format_tag) throw parse_error("circuit file: unknown format tag", 1);
        int num_vars = doc.at("num_vars").get<int>();
        if (num_vars < 0) throw parse_error("circuit file: negative num_vars", 1);
        std::vector<var_role> roles(static_cast<std::size_t>(num_vars), var_role::bernoulli);
        auto set_roles = [&](const char* field, var_role r) {
            for (int v : doc.value(field, std::vector<int>{})) {
                if (v < 1 || v > num_vars) throw parse_error(std::string("circuit file: bad ") + field + " entry", 1);
                roles[static_cast<std::size_t>(v - 1)] = r;
            }
        };
        set_roles("auxiliary", var_role::auxiliary);
        set_roles("indicator", var_role::indicator);
        const auto& recs = doc.at("nodes");
        if (recs.size() != doc.at("num_nodes").get<std::size_t>())
            throw parse_error("circuit file: num_nodes does not match node records", 1);
        std::vector<circuit_node> nodes;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const auto& r = recs[i];
            if (r.at("id").get<std::size_t>() != i)
                throw parse_error("circuit file: node ids must be dense and ordered (record " + std::to_string(i) + ")", 1);
            std::string kind = r.at("kind").get<std::string>();
            circuit_node n;
            if (kind == "AND") n.kind = node_kind::and_node;
            else if (kind == "OR") n.kind = node_kind::or_node;
            else if (kind == "LIT") n.kind = node_kind::lit_node;
            else if (kind == "TRUE") n.kind = node_kind::true_node;
            else if (kind == "FALSE") n.kind = node_kind::false_node;
            else throw parse_error("circuit file: unknown node kind '" + kind + "'", 1);
            if (n.kind == node_kind::lit_node) n.literal = lit(r.at("literal").get<int>());
            n.children = r.value("children", std::vector<node_id>{});
            n.decision_var = r.value("decision_var", 0);
            nodes.push_back(std::move(n));
        }
        return circuit(num_vars, std::move(roles), std::move(nodes), doc.at("root").get<node_id>());
    } catch (const json::exception& e) {
        throw parse_error(std::string("circuit file: ") + e.what(), 1);
    } catch (const semantic_error& e) {
        throw parse_error(e.what(), 1);
    }
}

}  // namespace nesy
