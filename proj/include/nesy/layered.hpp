#pragma once

// Depth-stratified, array-encoded circuits evaluated over batches of leaf
// inputs, with reverse-mode gradients and a recursive reference evaluator.
//
// Buffers are slot-major: the value of slot s for chunk row r lives at
// buf[s * rows + r], so every gather/reduce runs over contiguous rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nesy/circuit.hpp"
#include "nesy/error.hpp"
#include "nesy/semantics.hpp"

namespace nesy {

enum class layer_kind : std::uint8_t { leaf, prod, sum };

inline const char* layer_kind_name(layer_kind k) {
    switch (k) {
        case layer_kind::leaf: return "LEAF";
        case layer_kind::prod: return "PROD";
        case layer_kind::sum: return "SUM";
    }
    return "?";
}

struct layer {
    layer_kind kind = layer_kind::leaf;
    std::uint32_t offset = 0;  // first slot of this layer
    std::uint32_t size = 0;
    // CSR child lists; child_begin has size + 1 entries.
    std::vector<std::uint32_t> child_begin;
    std::vector<std::uint32_t> child_slots;
};

struct leaf_slot {
    enum class tag : std::uint8_t { literal, constant_true, constant_false };
    tag type = tag::literal;
    int var = 0;
    bool positive = true;
    var_role role = var_role::bernoulli;
};

struct layered_circuit {
    int num_vars = 0;
    std::vector<var_role> roles;
    // Batch column c holds variable input_vars[c].
    std::vector<int> input_vars;
    std::vector<int> column_of;  // var -> column, -1 for auxiliaries; index 0 unused
    std::vector<layer> layers;
    std::vector<leaf_slot> leaves;
    std::uint32_t root_slot = 0;
    std::uint32_t num_slots = 0;
    // Leaf slots per variable, -1 when the literal does not occur.
    std::vector<std::int64_t> pos_slot;
    std::vector<std::int64_t> neg_slot;

    std::size_t num_inputs() const { return input_vars.size(); }

    nlohmann::json manifest() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& l : layers) out.push_back({{"kind", layer_kind_name(l.kind)}, {"size", l.size}});
        return out;
    }
};

// Dense row-major matrix of per-variable inputs, one row per batch element.
struct leaf_batch {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    leaf_batch() = default;
    leaf_batch(std::size_t r, std::size_t c, double fill = 0) : rows(r), cols(c), values(r * c, fill) {}

    static leaf_batch from_rows(const std::vector<std::vector<double>>& rs) {
        leaf_batch b(rs.size(), rs.empty() ? 0 : rs[0].size());
        for (std::size_t r = 0; r < rs.size(); ++r) {
            if (rs[r].size() != b.cols) throw semantic_error("leaf_batch: ragged rows");
            std::copy(rs[r].begin(), rs[r].end(), b.values.begin() + static_cast<std::ptrdiff_t>(r * b.cols));
        }
        return b;
    }

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

inline layered_circuit layerize(const circuit& c) {
    require_properties(c, "layerize");
    layered_circuit lc;
    lc.num_vars = c.num_vars();
    lc.roles = c.roles();
    lc.column_of.assign(static_cast<std::size_t>(c.num_vars()) + 1, -1);
    for (int v : c.input_vars()) {
        lc.column_of[static_cast<std::size_t>(v)] = static_cast<int>(lc.input_vars.size());
        lc.input_vars.push_back(v);
    }
    lc.pos_slot.assign(static_cast<std::size_t>(c.num_vars()) + 1, -1);
    lc.neg_slot.assign(static_cast<std::size_t>(c.num_vars()) + 1, -1);

    std::vector<std::uint32_t> depth(c.size(), 0);
    std::uint32_t max_depth = 0;
    for (node_id i = 0; i < c.size(); ++i) {
        for (node_id ch : c.node(i).children) depth[i] = std::max(depth[i], depth[ch] + 1);
        max_depth = std::max(max_depth, depth[i]);
    }
    // buckets[2d] = PROD at depth d, buckets[2d+1] = SUM at depth d; bucket 0 holds leaves.
    std::vector<std::vector<node_id>> buckets(2 * static_cast<std::size_t>(max_depth) + 2);
    for (node_id i = 0; i < c.size(); ++i) {
        const auto k = c.node(i).kind;
        std::size_t b = depth[i] == 0 ? 0 : 2 * static_cast<std::size_t>(depth[i]) + (k == node_kind::or_node ? 1 : 0);
        buckets[b].push_back(i);
    }

    std::vector<std::uint32_t> slot(c.size(), 0);
    std::uint32_t next = 0;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        if (buckets[b].empty()) continue;
        layer l;
        l.kind = b == 0 ? layer_kind::leaf : (b % 2 == 0 ? layer_kind::prod : layer_kind::sum);
        l.offset = next;
        l.size = static_cast<std::uint32_t>(buckets[b].size());
        l.child_begin.push_back(0);
        for (node_id i : buckets[b]) {
            slot[i] = next++;
            const auto& n = c.node(i);
            if (l.kind == layer_kind::leaf) {
                leaf_slot ls;
                if (n.kind == node_kind::true_node) ls.type = leaf_slot::tag::constant_true;
                else if (n.kind == node_kind::false_node) ls.type = leaf_slot::tag::constant_false;
                else {
                    ls.var = n.literal.var();
                    ls.positive = n.literal.positive();
                    ls.role = c.role(ls.var);
                    (ls.positive ? lc.pos_slot : lc.neg_slot)[static_cast<std::size_t>(ls.var)] = slot[i];
                }
                lc.leaves.push_back(ls);
            } else {
                for (node_id ch : n.children) l.child_slots.push_back(slot[ch]);
            }
            l.child_begin.push_back(static_cast<std::uint32_t>(l.child_slots.size()));
        }
        lc.layers.push_back(std::move(l));
    }
    lc.num_slots = next;
    lc.root_slot = slot[c.root()];
    return lc;
}

struct eval_options {
    // Check every input against the structure's carrier before evaluating.
    bool validate = true;
    // Worker threads across batch rows; 0 picks hardware concurrency.
    unsigned threads = 0;
};

namespace detail {

inline void require_circuit_structure(const structure& s) {
    if (s.is_fuzzy()) throw semantic_error("fuzzy semantics require formula input");
    if (!s.circuit_safe) throw semantic_error("structure '" + s.tag + "' cannot be evaluated on a compiled circuit");
}

inline void validate_batch(const layered_circuit& lc, const leaf_batch& batch) {
    if (batch.cols != lc.num_inputs())
        throw semantic_error("batch has " + std::to_string(batch.cols) + " columns, circuit expects " +
                             std::to_string(lc.num_inputs()));
}

inline void validate_carrier(const layered_circuit& lc, const leaf_batch& batch, const structure& s) {
    for (std::size_t r = 0; r < batch.rows; ++r)
        for (std::size_t c = 0; c < batch.cols; ++c)
            if (!s.in_carrier(batch.at(r, c)))
                throw validation_error({"row " + std::to_string(r) + ", variable " + std::to_string(lc.input_vars[c]) +
                                        ": value " + format_value(batch.at(r, c)) + " outside " + s.tag +
                                        " carrier " + s.carrier_text()});
}

// Same formula and reduction order as the recursive evaluator below.
inline void reduce_node(structure_kind k, layer_kind lk, const std::uint32_t* kids, std::size_t nk,
                        const double* buf, std::size_t rows, double* __restrict out, double* __restrict scratch) {
    auto child = [&](std::size_t j) -> const double* { return buf + static_cast<std::size_t>(kids[j]) * rows; };
    if (k == structure_kind::log_probability && lk == layer_kind::sum) {
        const double* first = child(0);
        std::copy(first, first + rows, out);
        for (std::size_t j = 1; j < nk; ++j) {
            const double* __restrict ch = child(j);
            for (std::size_t r = 0; r < rows; ++r) out[r] = std::max(out[r], ch[r]);
        }
        std::fill(scratch, scratch + rows, 0.0);
        for (std::size_t j = 0; j < nk; ++j) {
            const double* __restrict ch = child(j);
            for (std::size_t r = 0; r < rows; ++r)
                if (out[r] != neg_inf) scratch[r] += std::exp(ch[r] - out[r]);
        }
        for (std::size_t r = 0; r < rows; ++r)
            if (out[r] != neg_inf) out[r] += std::log(scratch[r]);
        return;
    }
    // Left fold over the children; the first pair is combined directly.
    auto fold = [&](auto op) {
        const double* __restrict a = child(0);
        if (nk == 1) {
            std::copy(a, a + rows, out);
            return;
        }
        const double* __restrict b = child(1);
        for (std::size_t r = 0; r < rows; ++r) out[r] = op(a[r], b[r]);
        for (std::size_t j = 2; j < nk; ++j) {
            const double* __restrict ch = child(j);
            for (std::size_t r = 0; r < rows; ++r) out[r] = op(out[r], ch[r]);
        }
    };
    const bool prod = lk == layer_kind::prod;
    switch (k) {
        case structure_kind::probability:
            if (prod) fold([](double x, double y) { return x * y; });
            else fold([](double x, double y) { return x + y; });
            break;
        case structure_kind::log_probability:
            fold([](double x, double y) { return x + y; });
            break;
        default:
            if (prod) fold([](double x, double y) { return std::min(x, y); });
            else fold([](double x, double y) { return std::max(x, y); });
            break;
    }
}

// Forward pass for batch rows [r0, r0 + rows) into a slot-major buffer.
inline void forward_chunk(const layered_circuit& lc, const leaf_batch& batch, structure_kind k, std::size_t r0,
                          std::size_t rows, std::vector<double>& buf) {
    buf.resize(static_cast<std::size_t>(lc.num_slots) * rows);
    std::vector<double> scratch(rows);
    for (std::size_t i = 0; i < lc.leaves.size(); ++i) {
        const auto& leaf = lc.leaves[i];
        double* out = buf.data() + i * rows;
        switch (leaf.type) {
            case leaf_slot::tag::constant_true: std::fill(out, out + rows, structure_one(k)); break;
            case leaf_slot::tag::constant_false: std::fill(out, out + rows, structure_zero(k)); break;
            case leaf_slot::tag::literal: {
                if (leaf.role == var_role::auxiliary) {
                    std::fill(out, out + rows, structure_one(k));
                    break;
                }
                if (!leaf.positive && leaf.role == var_role::indicator) {
                    std::fill(out, out + rows, structure_one(k));
                    break;
                }
                const auto col = static_cast<std::size_t>(lc.column_of[static_cast<std::size_t>(leaf.var)]);
                const double* in = batch.values.data() + r0 * batch.cols + col;
                const std::size_t stride = batch.cols;
                if (leaf.positive) {
                    for (std::size_t r = 0; r < rows; ++r) out[r] = in[r * stride];
                } else if (k != structure_kind::log_probability) {
                    for (std::size_t r = 0; r < rows; ++r) out[r] = 1 - in[r * stride];
                } else {
                    for (std::size_t r = 0; r < rows; ++r) out[r] = leaf_value(k, leaf.role, false, in[r * stride]);
                }
                break;
            }
        }
    }
    for (const auto& l : lc.layers) {
        if (l.kind == layer_kind::leaf) continue;
        for (std::uint32_t i = 0; i < l.size; ++i) {
            const std::uint32_t b = l.child_begin[i], e = l.child_begin[i + 1];
            reduce_node(k, l.kind, l.child_slots.data() + b, e - b, buf.data(), rows,
                        buf.data() + static_cast<std::size_t>(l.offset + i) * rows, scratch.data());
        }
    }
}

inline std::size_t chunk_rows(const layered_circuit& lc, std::size_t total) {
    const std::size_t by_memory = std::max<std::size_t>(8, (std::size_t{1} << 16) / std::max<std::uint32_t>(1, lc.num_slots));
    return std::max<std::size_t>(1, std::min({total, by_memory, std::size_t{1024}}));
}

// Runs fn(r0, rows) over row chunks, spread across threads when worthwhile.
template <class Fn>
void for_each_chunk(std::size_t total, std::size_t chunk, unsigned threads, Fn&& fn) {
    const std::size_t n_chunks = (total + chunk - 1) / chunk;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_chunks));
    if (threads <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c * chunk, std::min(chunk, total - c * chunk));
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t c = t; c < n_chunks; c += threads) fn(c * chunk, std::min(chunk, total - c * chunk));
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// One output per batch row: WMC (probability), log WMC (log_probability) or
// the satisfaction indicator (boolean, 0/1 inputs).
inline std::vector<double> evaluate(const layered_circuit& lc, const leaf_batch& batch, const structure& s,
                                    eval_options opts = {}) {
    detail::require_circuit_structure(s);
    detail::validate_batch(lc, batch);
    if (opts.validate) detail::validate_carrier(lc, batch, s);
    std::vector<double> out(batch.rows);
    if (batch.rows == 0) return out;
    const std::size_t chunk = detail::chunk_rows(lc, batch.rows);
    detail::for_each_chunk(batch.rows, chunk, opts.threads, [&](std::size_t r0, std::size_t rows) {
        std::vector<double> buf;
        detail::forward_chunk(lc, batch, s.kind, r0, rows, buf);
        const double* root = buf.data() + static_cast<std::size_t>(lc.root_slot) * rows;
        std::copy(root, root + rows, out.begin() + static_cast<std::ptrdiff_t>(r0));
    });
    return out;
}

// Gradient of the output with respect to each input variable's probability,
// one row of num_inputs() entries per batch row. For log_probability the
// inputs are log-probabilities but the gradient is d log WMC / d p.
inline leaf_batch backward(const layered_circuit& lc, const leaf_batch& batch, const structure& s,
                           eval_options opts = {}) {
    detail::require_circuit_structure(s);
    if (!s.differentiable) throw semantic_error("structure '" + s.tag + "' is not differentiable");
    detail::validate_batch(lc, batch);
    if (opts.validate) detail::validate_carrier(lc, batch, s);
    const bool in_log = s.kind == structure_kind::log_probability;
    leaf_batch grad(batch.rows, batch.cols, 0.0);
    if (batch.rows == 0) return grad;

    const std::size_t chunk = detail::chunk_rows(lc, batch.rows);
    detail::for_each_chunk(batch.rows, chunk, opts.threads, [&](std::size_t r0, std::size_t rows) {
        std::vector<double> val;
        detail::forward_chunk(lc, batch, s.kind, r0, rows, val);
        const double adj_zero = in_log ? neg_inf : 0.0;
        std::vector<double> adj(val.size(), adj_zero);
        std::vector<double> suffix;
        auto accumulate = [&](double& into, double contrib) {
            if (!in_log) {
                into += contrib;
            } else if (contrib != neg_inf) {
                if (into == neg_inf) into = contrib;
                else {
                    double m = std::max(into, contrib);
                    into = m + std::log1p(std::exp(-std::abs(into - contrib)));
                }
            }
        };
        for (std::size_t r = 0; r < rows; ++r) adj[static_cast<std::size_t>(lc.root_slot) * rows + r] = in_log ? 0.0 : 1.0;

        for (auto li = lc.layers.rbegin(); li != lc.layers.rend(); ++li) {
            const auto& l = *li;
            if (l.kind == layer_kind::leaf) continue;
            for (std::uint32_t i = 0; i < l.size; ++i) {
                const std::size_t parent = static_cast<std::size_t>(l.offset + i);
                const std::uint32_t b = l.child_begin[i], e = l.child_begin[i + 1];
                const std::size_t k = e - b;
                for (std::size_t r = 0; r < rows; ++r) {
                    const double a = adj[parent * rows + r];
                    if (a == adj_zero) continue;
                    if (l.kind == layer_kind::sum) {
                        for (std::uint32_t j = b; j < e; ++j)
                            accumulate(adj[static_cast<std::size_t>(l.child_slots[j]) * rows + r], a);
                        continue;
                    }
                    // Product of the other children via suffix products.
                    suffix.assign(k + 1, in_log ? 0.0 : 1.0);
                    for (std::size_t j = k; j-- > 0;) {
                        double v = val[static_cast<std::size_t>(l.child_slots[b + j]) * rows + r];
                        suffix[j] = in_log ? suffix[j + 1] + v : suffix[j + 1] * v;
                    }
                    double left = in_log ? 0.0 : 1.0;
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t ch = l.child_slots[b + j];
                        double others = in_log ? left + suffix[j + 1] : left * suffix[j + 1];
                        accumulate(adj[ch * rows + r], in_log ? a + others : a * others);
                        double v = val[ch * rows + r];
                        left = in_log ? left + v : left * v;
                    }
                }
            }
        }

        for (std::size_t c = 0; c < lc.input_vars.size(); ++c) {
            const int v = lc.input_vars[c];
            const auto ps = lc.pos_slot[static_cast<std::size_t>(v)];
            const auto ns = lc.neg_slot[static_cast<std::size_t>(v)];
            const bool uses_neg = lc.roles[static_cast<std::size_t>(v - 1)] == var_role::bernoulli;
            for (std::size_t r = 0; r < rows; ++r) {
                double a = ps >= 0 ? adj[static_cast<std::size_t>(ps) * rows + r] : adj_zero;
                double n = (uses_neg && ns >= 0) ? adj[static_cast<std::size_t>(ns) * rows + r] : adj_zero;
                double g;
                if (!in_log) {
                    g = a - n;
                } else {
                    const double lw = val[static_cast<std::size_t>(lc.root_slot) * rows + r];
                    if (lw == neg_inf) {
                        g = a > n ? INFINITY : (a < n ? -INFINITY : 0.0);
                    } else {
                        g = (a == neg_inf ? 0.0 : std::exp(a - lw)) - (n == neg_inf ? 0.0 : std::exp(n - lw));
                    }
                }
                grad.at(r0 + r, c) = g;
            }
        }
    });
    return grad;
}

// Memoized post-order walk of the node table for a single input row; uses the
// same per-node arithmetic as evaluate.
inline double evaluate_recursive(const circuit& c, std::span<const double> inputs, const structure& s,
                                 bool validate = true) {
    detail::require_circuit_structure(s);
    const auto vars = c.input_vars();
    if (inputs.size() != vars.size())
        throw semantic_error("evaluate_recursive: " + std::to_string(inputs.size()) + " inputs, circuit expects " +
                             std::to_string(vars.size()));
    std::vector<int> column_of(static_cast<std::size_t>(c.num_vars()) + 1, -1);
    for (std::size_t i = 0; i < vars.size(); ++i) {
        column_of[static_cast<std::size_t>(vars[i])] = static_cast<int>(i);
        if (validate && !s.in_carrier(inputs[i]))
            throw validation_error({"variable " + std::to_string(vars[i]) + ": value " + format_value(inputs[i]) +
                                    " outside " + s.tag + " carrier " + s.carrier_text()});
    }
    const structure_kind k = s.kind;
    std::vector<double> memo(c.size());
    std::vector<char> done(c.size(), 0);

    auto visit = [&](auto&& self, node_id id) -> double {
        if (done[id]) return memo[id];
        const auto& n = c.node(id);
        double v = 0;
        switch (n.kind) {
            case node_kind::true_node: v = structure_one(k); break;
            case node_kind::false_node: v = structure_zero(k); break;
            case node_kind::lit_node: {
                const int var = n.literal.var();
                const auto role = c.role(var);
                v = role == var_role::auxiliary
                        ? structure_one(k)
                        : leaf_value(k, role, n.literal.positive(), inputs[static_cast<std::size_t>(column_of[static_cast<std::size_t>(var)])]);
                break;
            }
            case node_kind::and_node:
            case node_kind::or_node: {
                const bool is_sum = n.kind == node_kind::or_node;
                v = self(self, n.children[0]);
                if (k == structure_kind::log_probability && is_sum) {
                    double m = v;
                    for (std::size_t j = 1; j < n.children.size(); ++j) m = std::max(m, self(self, n.children[j]));
                    if (m != neg_inf) {
                        double acc = 0.0;
                        for (node_id ch : n.children) acc += std::exp(self(self, ch) - m);
                        m += std::log(acc);
                    }
                    v = m;
                    break;
                }
                for (std::size_t j = 1; j < n.children.size(); ++j) {
                    double x = self(self, n.children[j]);
                    switch (k) {
                        case structure_kind::probability: v = is_sum ? v + x : v * x; break;
                        case structure_kind::log_probability: v += x; break;
                        default: v = is_sum ? std::max(v, x) : std::min(v, x); break;
                    }
                }
                break;
            }
        }
        done[id] = 1;
        memo[id] = v;
        return v;
    };
    return visit(visit, c.root());
}

}  // namespace nesy
