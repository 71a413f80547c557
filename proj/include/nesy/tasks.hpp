#pragma once

// End-to-end tasks: semantic loss over circuit-backed modules, the
// multi-digit addition constraint with its convolution oracle, a timing
// harness, and the delimited weight-file format.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nesy/circuit.hpp"
#include "nesy/error.hpp"
#include "nesy/factory.hpp"
#include "nesy/formula.hpp"
#include "nesy/layered.hpp"
#include "nesy/symtensor.hpp"

namespace nesy {

// ---------------------------------------------------------------------------
// Semantic loss

struct loss_result {
    std::vector<double> per_row;  // -log WMC
    double mean = 0;
    // d mean / d input, laid out like the module's input tensor.
    tensor gradient;
    // One line per row whose constraint has zero probability.
    std::vector<std::string> diagnostics;
};

// Mean over rows of -log WMC, evaluated in the log structure. `rows` is laid
// out like m's input tensor and holds probabilities (or log-probabilities when
// m's input structure is log_probability).
inline loss_result semantic_loss(const annotated_module& m, const tensor& rows, bool want_gradient = true,
                                 const exec_options& opts = {}) {
    if (!m.backing()) throw semantic_error("semantic_loss: module '" + m.name() + "' is not circuit-backed");
    const auto& in = m.inputs().at(0);
    const auto kind = in.structure().kind;
    if (kind != structure_kind::probability && kind != structure_kind::log_probability)
        throw incompatible_structures(in.tag(), "log_probability", "semantic_loss needs probability inputs");
    if (opts.validate) {
        auto v = validate(m, {rows});
        if (!v.empty()) throw validation_error(std::move(v));
    }
    const auto& b = *m.backing();
    leaf_batch batch = detail::to_leaf_batch(rows, b.columns);
    if (kind == structure_kind::probability)
        for (auto& x : batch.values) x = x == 0 ? neg_inf : std::log(x);

    const auto& logs = *get_structure("log_probability");
    eval_options eo;
    eo.validate = false;
    eo.threads = opts.parallel ? 0u : 1u;
    auto lw = evaluate(*b.layered, batch, logs, eo);

    loss_result out;
    out.per_row.resize(rows.rows);
    for (std::size_t r = 0; r < rows.rows; ++r) {
        out.per_row[r] = 0.0 - lw[r];  // +0 rather than -0 for certain rows
        if (lw[r] == neg_inf)
            out.diagnostics.push_back("row " + std::to_string(r) + ": constraint has probability 0, loss is +inf");
        out.mean += out.per_row[r];
    }
    out.mean = rows.rows ? out.mean / static_cast<double>(rows.rows) : 0.0;

    if (want_gradient) {
        auto g = backward(*b.layered, batch, logs, eo);
        out.gradient = tensor(rows.rows, rows.shape, std::vector<double>(rows.data.size(), 0.0));
        const std::size_t w = rows.row_size();
        const double scale = rows.rows ? -1.0 / static_cast<double>(rows.rows) : 0.0;
        for (std::size_t r = 0; r < rows.rows; ++r)
            for (std::size_t c = 0; c < b.columns.size(); ++c) out.gradient.data[r * w + b.columns[c]] += scale * g.at(r, c);
    }
    return out;
}

// Projected gradient descent on the semantic loss of a single probability
// row; returns the loss before each step and after the last.
inline std::vector<double> semantic_loss_descent(const annotated_module& m, std::vector<double> p, int steps, double lr,
                                                 double lo, double hi, std::vector<double>* final_p = nullptr) {
    std::vector<double> losses;
    for (int s = 0; s <= steps; ++s) {
        auto res = semantic_loss(m, tensor::row(p), s < steps);
        losses.push_back(res.mean);
        if (s == steps) break;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i] - lr * res.gradient.data[i], lo, hi);
    }
    if (final_p) *final_p = p;
    return losses;
}

// ---------------------------------------------------------------------------
// Multi-digit addition

inline constexpr int max_addition_digits = 4;

struct addition_problem {
    int n_digits = 0;
    long long query_sum = 0;
    cnf encoding;

    // Indicator for digit value d at position i (0 = least significant) of number k (0 or 1).
    int digit_var(int k, int i, int d) const { return 1 + ((k * n_digits + i) * 10 + d); }
    int num_indicators() const { return 20 * n_digits; }
    // Carry out of position i - 1 into position i, for 1 <= i < n_digits.
    int carry_var(int i) const { return 20 * n_digits + i; }
};

inline long long pow10(int n) {
    long long v = 1;
    for (int i = 0; i < n; ++i) v *= 10;
    return v;
}

inline long long max_addition_sum(int n) { return 2 * (pow10(n) - 1); }

// Exactly-one per digit group (45 pairwise exclusions and one covering clause)
// and a ripple-carry column encoding of number1 + number2 = s. Carries are
// auxiliary and fully determined by the digits.
inline addition_problem build_addition(int n, long long s) {
    if (n < 1 || n > max_addition_digits)
        throw semantic_error("build_addition: digit count " + std::to_string(n) + " outside [1," +
                             std::to_string(max_addition_digits) + "]");
    if (s < 0 || s > max_addition_sum(n))
        throw semantic_error("build_addition: sum " + std::to_string(s) + " outside [0," +
                             std::to_string(max_addition_sum(n)) + "]");
    addition_problem p;
    p.n_digits = n;
    p.query_sum = s;
    const int carries = n - 1;
    cnf f(20 * n + carries);
    for (int v = 1; v <= 20 * n; ++v) f.roles[static_cast<std::size_t>(v - 1)] = var_role::indicator;
    for (int i = 1; i < n; ++i) f.roles[static_cast<std::size_t>(p.carry_var(i) - 1)] = var_role::auxiliary;

    for (int k = 0; k < 2; ++k) {
        for (int i = 0; i < n; ++i) {
            clause cover;
            for (int d = 0; d < 10; ++d) {
                cover.push_back(lit::pos(p.digit_var(k, i, d)));
                for (int e = d + 1; e < 10; ++e) f.clauses.push_back({lit::neg(p.digit_var(k, i, d)), lit::neg(p.digit_var(k, i, e))});
            }
            f.clauses.push_back(std::move(cover));
        }
    }

    const long long top = s / pow10(n);
    for (int i = 0; i < n; ++i) {
        const int want = static_cast<int>((s / pow10(i)) % 10);
        for (int cin = 0; cin <= (i == 0 ? 0 : 1); ++cin) {
            for (int a = 0; a < 10; ++a) {
                for (int b = 0; b < 10; ++b) {
                    const int t = a + b + cin;
                    clause c{lit::neg(p.digit_var(0, i, a)), lit::neg(p.digit_var(1, i, b))};
                    if (i > 0) c.push_back(cin ? lit::neg(p.carry_var(i)) : lit::pos(p.carry_var(i)));
                    if (t % 10 != want) {
                        f.clauses.push_back(std::move(c));
                    } else if (i + 1 < n) {
                        c.push_back(t >= 10 ? lit::pos(p.carry_var(i + 1)) : lit::neg(p.carry_var(i + 1)));
                        f.clauses.push_back(std::move(c));
                    } else if (t / 10 != top) {
                        f.clauses.push_back(std::move(c));
                    }
                }
            }
        }
    }
    p.encoding = std::move(f);
    return p;
}

// dists[k * n + i][d]: probability of digit d at position i of number k.
using digit_distributions = std::vector<std::vector<double>>;

inline void check_digit_distributions(const digit_distributions& dists, int n) {
    if (static_cast<int>(dists.size()) != 2 * n)
        throw semantic_error("digit distributions: expected " + std::to_string(2 * n) + " groups, got " +
                             std::to_string(dists.size()));
    for (std::size_t g = 0; g < dists.size(); ++g) {
        if (dists[g].size() != 10) throw semantic_error("digit distributions: group " + std::to_string(g) + " needs 10 entries");
        double sum = 0;
        for (double x : dists[g]) {
            if (!(x >= 0 && x <= 1))
                throw semantic_error("digit distributions: group " + std::to_string(g) + " has entry " + format_value(x) +
                                     " outside [0,1]");
            sum += x;
        }
        if (std::fabs(sum - 1) > 1e-9)
            throw semantic_error("digit distributions: group " + std::to_string(g) + " sums to " + format_value(sum));
    }
}

// Input row for the addition circuit (indicator variables in id order).
inline std::vector<double> addition_weights(const digit_distributions& dists) {
    std::vector<double> row;
    for (const auto& g : dists) row.insert(row.end(), g.begin(), g.end());
    return row;
}

// Exact distribution of number1 + number2, index = sum. Each number's value
// distribution is the product over its positions; the two are then convolved.
inline std::vector<double> convolution_oracle(const digit_distributions& dists, int n) {
    check_digit_distributions(dists, n);
    auto value_dist = [&](int k) {
        std::vector<double> v{1.0};
        long long scale = 1;
        for (int i = 0; i < n; ++i) {
            std::vector<double> next(v.size() + static_cast<std::size_t>(9 * scale), 0.0);
            for (std::size_t x = 0; x < v.size(); ++x)
                for (int d = 0; d < 10; ++d)
                    next[x + static_cast<std::size_t>(d * scale)] += v[x] * dists[static_cast<std::size_t>(k * n + i)][static_cast<std::size_t>(d)];
            v.swap(next);
            scale *= 10;
        }
        return v;
    };
    auto a = value_dist(0), b = value_dist(1);
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t x = 0; x < a.size(); ++x)
        if (a[x] != 0)
            for (std::size_t y = 0; y < b.size(); ++y) out[x + y] += a[x] * b[y];
    return out;
}

// Random digit distributions: uniform draws normalised per group.
inline digit_distributions random_digit_distributions(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    digit_distributions d(static_cast<std::size_t>(2 * n), std::vector<double>(10));
    for (auto& g : d) {
        double sum = 0;
        for (auto& x : g) sum += (x = u(rng) + 1e-3);
        for (auto& x : g) x /= sum;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Timing

struct timing_stat {
    double median = 0;  // seconds per query
    double mean = 0;
    std::vector<double> samples;
};

struct batch_timing {
    std::size_t batch = 0;
    timing_stat per_query;
};

struct timing_report {
    int n_digits = 0;
    long long query_sum = 0;
    std::size_t batch_size = 0;
    int repetitions = 0;
    std::uint64_t seed = 0;
    std::size_t circuit_nodes = 0;
    std::size_t circuit_edges = 0;
    std::size_t layers = 0;
    std::size_t inputs = 0;
    unsigned parallelism = 1;
    double compile_seconds = 0;
    timing_stat recursive;
    std::vector<batch_timing> layered;  // batch 1, any extra sizes, batch_size
    double spot_check_wmc = 0;
    double spot_check_oracle = 0;
    double spot_check_rel_error = 0;

    const batch_timing& at_batch(std::size_t b) const {
        for (const auto& t : layered)
            if (t.batch == b) return t;
        throw semantic_error("timing_report: no measurement at batch " + std::to_string(b));
    }

    nlohmann::json to_json() const {
        auto stat = [](const timing_stat& s) { return nlohmann::json{{"median", s.median}, {"mean", s.mean}, {"samples", s.samples}}; };
        nlohmann::json lay = nlohmann::json::array();
        for (const auto& t : layered) lay.push_back({{"batch", t.batch}, {"per_query_seconds", stat(t.per_query)}});
        return {{"task", "addition"},
                {"digits", n_digits},
                {"query_sum", query_sum},
                {"batch_size", batch_size},
                {"repetitions", repetitions},
                {"seed", seed},
                {"circuit", {{"nodes", circuit_nodes}, {"edges", circuit_edges}, {"layers", layers}, {"inputs", inputs}}},
                {"parallelism", parallelism},
                {"compile_seconds", compile_seconds},
                {"recursive_per_query_seconds", stat(recursive)},
                {"layered", lay},
                {"spot_check", {{"wmc", spot_check_wmc}, {"oracle", spot_check_oracle}, {"relative_error", spot_check_rel_error}}}};
    }

    std::string to_table() const {
        std::ostringstream os;
        os << "addition N=" << n_digits << " s=" << query_sum << ": " << circuit_nodes << " nodes, " << circuit_edges
           << " edges, " << layers << " layers, " << inputs << " inputs, parallelism " << parallelism << "\n";
        os << "mode                    batch   median s/query      mean s/query\n";
        auto line = [&](const std::string& mode, std::size_t b, const timing_stat& s) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%-22s %6zu   %-18s %s\n", mode.c_str(), b, format_value(s.median).c_str(),
                          format_value(s.mean).c_str());
            os << buf;
        };
        line("recursive", 1, recursive);
        for (const auto& t : layered) line("layered", t.batch, t.per_query);
        os << "spot check: wmc " << format_value(spot_check_wmc) << " oracle " << format_value(spot_check_oracle)
           << " rel error " << format_value(spot_check_rel_error) << "\n";
        return os.str();
    }
};

struct bench_options {
    std::size_t batch_size = 1024;
    int repetitions = 5;
    std::uint64_t seed = 42;
    // Batch sizes timed in addition to 1 and batch_size.
    std::vector<std::size_t> extra_batches;
    unsigned threads = 0;
    // Distinct queries timed per repetition for the single-query modes.
    std::size_t single_queries = 64;
};

namespace detail {

inline timing_stat summarize(std::vector<double> samples) {
    timing_stat s;
    s.samples = samples;
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    s.median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    for (double x : samples) s.mean += x;
    s.mean /= static_cast<double>(n);
    return s;
}

// One warm-up round, then `reps` timed rounds of fn(); each returns seconds per query.
template <class Fn>
timing_stat time_rounds(int reps, Fn&& fn) {
    fn();
    std::vector<double> samples;
    for (int r = 0; r < reps; ++r) samples.push_back(fn());
    return summarize(std::move(samples));
}

}  // namespace detail

inline timing_report bench_addition(int n, const bench_options& opts = {}) {
    using clock = std::chrono::steady_clock;
    if (opts.repetitions < 1) throw semantic_error("bench: repetitions must be >= 1");
    if (opts.batch_size < 1) throw semantic_error("bench: batch size must be >= 1");
    timing_report rep;
    rep.n_digits = n;
    rep.query_sum = pow10(n) - 1;
    rep.batch_size = opts.batch_size;
    rep.repetitions = opts.repetitions;
    rep.seed = opts.seed;

    auto t0 = clock::now();
    auto prob = build_addition(n, rep.query_sum);
    circuit c = smooth(compile(prob.encoding));
    layered_circuit lc = layerize(c);
    rep.compile_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    rep.circuit_nodes = c.size();
    rep.circuit_edges = c.edge_count();
    rep.layers = lc.layers.size();
    rep.inputs = lc.num_inputs();

    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> sizes{1};
    for (auto b : opts.extra_batches)
        if (b > 1 && b != opts.batch_size) sizes.push_back(b);
    if (opts.batch_size > 1) sizes.push_back(opts.batch_size);
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    const std::size_t rows = std::max(sizes.back(), opts.single_queries);
    std::vector<digit_distributions> dists;
    leaf_batch batch(rows, lc.num_inputs());
    for (std::size_t r = 0; r < rows; ++r) {
        dists.push_back(random_digit_distributions(rng, n));
        auto w = addition_weights(dists.back());
        std::copy(w.begin(), w.end(), batch.values.begin() + static_cast<std::ptrdiff_t>(r * batch.cols));
    }
    const auto& s = *get_structure("probability");
    eval_options eo;
    eo.validate = false;
    eo.threads = opts.threads;

    const std::size_t q = std::min(opts.single_queries, rows);
    volatile double sink = 0;
    rep.recursive = detail::time_rounds(opts.repetitions, [&] {
        auto start = clock::now();
        for (std::size_t r = 0; r < q; ++r) sink = sink + evaluate_recursive(c, batch.row(r), s, false);
        return std::chrono::duration<double>(clock::now() - start).count() / static_cast<double>(q);
    });

    for (auto b : sizes) {
        const std::size_t queries = b == 1 ? q : b;
        std::vector<leaf_batch> parts;
        for (std::size_t r0 = 0; r0 < queries; r0 += b) {
            leaf_batch part(b, batch.cols);
            std::copy(batch.values.begin() + static_cast<std::ptrdiff_t>(r0 * batch.cols),
                      batch.values.begin() + static_cast<std::ptrdiff_t>((r0 + b) * batch.cols), part.values.begin());
            parts.push_back(std::move(part));
        }
        auto stat = detail::time_rounds(opts.repetitions, [&] {
            auto start = clock::now();
            for (const auto& part : parts) sink = sink + evaluate(lc, part, s, eo)[0];
            return std::chrono::duration<double>(clock::now() - start).count() / static_cast<double>(queries);
        });
        rep.layered.push_back({b, stat});
    }

    const unsigned hw = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    const std::size_t chunks = (opts.batch_size + detail::chunk_rows(lc, opts.batch_size) - 1) / detail::chunk_rows(lc, opts.batch_size);
    rep.parallelism = static_cast<unsigned>(std::min<std::size_t>(hw, chunks));

    rep.spot_check_wmc = evaluate(lc, leaf_batch::from_rows({std::vector<double>(batch.values.begin(), batch.values.begin() + static_cast<std::ptrdiff_t>(batch.cols))}), s)[0];
    rep.spot_check_oracle = convolution_oracle(dists[0], n)[static_cast<std::size_t>(rep.query_sum)];
    rep.spot_check_rel_error = rep.spot_check_wmc == rep.spot_check_oracle
                                   ? 0.0
                                   : std::fabs(rep.spot_check_wmc - rep.spot_check_oracle) /
                                         std::max(std::fabs(rep.spot_check_wmc), std::fabs(rep.spot_check_oracle));
    return rep;
}

// ---------------------------------------------------------------------------
// Weight files: a header row of symbol names, then one row of values per
// batch element. Separators are commas; surrounding whitespace is ignored.

struct weight_table {
    std::vector<std::string> symbols;
    tensor values;  // rows x symbols.size()
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.front()))) cell.remove_prefix(1);
        while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.remove_suffix(1);
        out.emplace_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_number(const std::string& s) {
    if (s == "inf" || s == "+inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

inline weight_table parse_weights(std::string_view text) {
    weight_table w;
    std::size_t pos = 0, line_no = 0;
    bool header = false;
    std::vector<double> data;
    std::size_t rows = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos || line.front() == '#') continue;
        auto cells = detail::split_csv_line(line);
        if (!header) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (cells[i].empty()) throw parse_error("weights: empty symbol name in header", line_no, i + 1);
                if (std::find(w.symbols.begin(), w.symbols.end(), cells[i]) != w.symbols.end())
                    throw parse_error("weights: duplicate symbol '" + cells[i] + "' in header", line_no, i + 1);
                w.symbols.push_back(cells[i]);
            }
            header = true;
            continue;
        }
        if (cells.size() != w.symbols.size())
            throw parse_error("weights: row has " + std::to_string(cells.size()) + " values, header has " +
                                  std::to_string(w.symbols.size()),
                              line_no);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            auto v = detail::parse_number(cells[i]);
            if (!v) throw parse_error("weights: malformed number '" + cells[i] + "'", line_no, i + 1);
            data.push_back(*v);
        }
        ++rows;
    }
    if (!header) throw parse_error("weights: missing header row", line_no);
    w.values = tensor::matrix(rows, w.symbols.size(), std::move(data));
    return w;
}

inline std::string format_weights(const weight_table& w) {
    std::string out;
    for (std::size_t i = 0; i < w.symbols.size(); ++i) out += (i ? "," : "") + w.symbols[i];
    out += "\n";
    const std::size_t n = w.symbols.size();
    for (std::size_t r = 0; r < w.values.rows; ++r) {
        for (std::size_t i = 0; i < n; ++i) out += (i ? "," : "") + format_value(w.values.data[r * n + i]);
        out += "\n";
    }
    return out;
}

}  // namespace nesy
