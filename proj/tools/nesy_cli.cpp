// nesy: compile, evaluate and inspect weighted logical constraints.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nesy/circuit.hpp"
#include "nesy/error.hpp"
#include "nesy/factory.hpp"
#include "nesy/formula.hpp"
#include "nesy/layered.hpp"
#include "nesy/semantics.hpp"
#include "nesy/symtensor.hpp"
#include "nesy/tasks.hpp"

namespace {

using namespace nesy;

class usage_error : public error {
public:
    explicit usage_error(const std::string& what) : error(error_kind::usage, what) {}
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error(error_kind::input, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error(error_kind::input, "cannot write '" + path + "'");
    out << text;
}

std::vector<std::string> split_names(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b == std::string::npos) throw usage_error("--names: empty name in '" + s + "'");
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

struct formula_input {
    formula f;
    name_table names;
};

formula_input load_formula(const std::string& path, const std::string& names_flag) {
    formula_input in;
    const bool declared = !names_flag.empty();
    if (declared)
        for (const auto& n : split_names(names_flag)) in.names.declare(n);
    in.f = parse_formula(read_file(path), in.names, !declared);
    return in;
}

factory make_factory(const std::string& config_path) {
    if (config_path.empty()) return factory(factory_config::ltn());
    return factory(factory_config::from_json_text(read_file(config_path)));
}

// A loaded circuit with the symbol names recorded at compile time (if any).
struct circuit_input {
    std::shared_ptr<const circuit> c;
    std::vector<std::string> names;
};

circuit_input load_circuit(const std::string& path) {
    const std::string text = read_file(path);
    circuit_input in;
    in.c = std::make_shared<const circuit>(circuit_from_json_text(text));
    auto doc = nlohmann::json::parse(text);
    if (doc.contains("names")) {
        try {
            in.names = doc["names"].get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception&) {
            throw parse_error("circuit file: 'names' must be a list of strings", 1);
        }
    }
    return in;
}

annotated_module module_for_circuit(const circuit_input& in, structure_ref s) {
    std::vector<std::string> syms;
    if (!in.names.empty()) {
        for (int v : in.c->input_vars()) {
            if (v > static_cast<int>(in.names.size())) throw parse_error("circuit file: fewer names than variables", 1);
            syms.push_back(in.names[static_cast<std::size_t>(v - 1)]);
        }
    }
    return circuit_module(in.c, std::move(s), "phi", syms, "phi");
}

struct common_args {
    std::string circuit, formula, names, weights, semantics = "probability", config;
};

// The module named by --circuit or --formula, bound to the weight file's header.
struct bound_module {
    annotated_module m;
    weight_table w;
};

bound_module bind(const common_args& a, const factory& fac) {
    if (a.circuit.empty() == a.formula.empty()) throw usage_error("give exactly one of --circuit and --formula");
    if (!a.names.empty() && a.formula.empty()) throw usage_error("--names requires --formula");
    auto s = fac.structure(a.semantics);
    std::optional<annotated_module> m;
    if (!a.circuit.empty()) {
        if (s->is_fuzzy()) throw semantic_error("fuzzy semantics require formula input");
        m = module_for_circuit(load_circuit(a.circuit), s);
    } else {
        auto fi = load_formula(a.formula, a.names);
        m = fac.build_formula_module(fi.f, a.semantics, &fi.names);
    }
    auto w = parse_weights(read_file(a.weights));
    auto r = reshape_input(*m, sym_tensor(w.symbols, s));
    return {std::move(r), std::move(w)};
}

void add_common(CLI::App* cmd, common_args& a, bool with_semantics, bool with_formula) {
    cmd->add_option("--circuit", a.circuit, "Compiled circuit file");
    if (with_formula) {
        cmd->add_option("--formula", a.formula, "Formula file");
        cmd->add_option("--names", a.names, "Comma-separated variable names, in id order");
    }
    cmd->add_option("--weights", a.weights, "Weight file (header row of symbols)")->required();
    if (with_semantics) cmd->add_option("--semantics", a.semantics, "Structure tag");
    cmd->add_option("--config", a.config, "Factory configuration file");
}

int run(int argc, char** argv) {
    CLI::App app{"Compile and evaluate weighted logical constraints"};
    app.require_subcommand(1);

    // compile
    std::string c_dimacs, c_formula, c_names, c_out, c_manifest;
    bool c_no_cache = false;
    auto* compile_cmd = app.add_subcommand("compile", "Compile CNF or a formula to a smooth d-DNNF circuit");
    compile_cmd->add_option("--dimacs", c_dimacs, "DIMACS CNF file");
    compile_cmd->add_option("--formula", c_formula, "Formula file");
    compile_cmd->add_option("--names", c_names, "Comma-separated variable names, in id order");
    compile_cmd->add_option("--out", c_out, "Output circuit file")->required();
    compile_cmd->add_option("--manifest", c_manifest, "Also write the module wiring manifest");
    compile_cmd->add_flag("--no-cache", c_no_cache, "Disable component caching");

    // eval / grad / loss
    common_args ev, gr, lo;
    bool ev_batch = false;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a circuit or formula on each weight row");
    add_common(eval_cmd, ev, true, true);
    eval_cmd->add_flag("--batch", ev_batch, "Evaluate all rows as one batch");
    auto* grad_cmd = app.add_subcommand("grad", "Gradient per input symbol for each weight row");
    add_common(grad_cmd, gr, true, true);
    auto* loss_cmd = app.add_subcommand("loss", "Semantic loss per weight row and the mean");
    add_common(loss_cmd, lo, true, false);

    // check
    std::string k_circuit;
    auto* check_cmd = app.add_subcommand("check", "Check decomposability, determinism and smoothness");
    check_cmd->add_option("--circuit", k_circuit, "Circuit file")->required();

    // inspect
    std::string i_manifest;
    auto* inspect_cmd = app.add_subcommand("inspect", "Pretty-print a wiring manifest");
    inspect_cmd->add_option("--manifest", i_manifest, "Manifest file")->required();

    // bench
    std::string b_task = "addition", b_format = "table";
    int b_digits = 1, b_reps = 5;
    std::size_t b_batch = 1024;
    std::uint64_t b_seed = 42;
    unsigned b_threads = 0;
    bool b_large = false;
    std::vector<std::size_t> b_extra;
    auto* bench_cmd = app.add_subcommand("bench", "Time batched against recursive evaluation");
    bench_cmd->add_option("--task", b_task, "Benchmark task")->check(CLI::IsMember({"addition"}));
    bench_cmd->add_option("--digits", b_digits, "Digits per number");
    bench_cmd->add_option("--batch", b_batch, "Batch size");
    bench_cmd->add_option("--reps", b_reps, "Timed repetitions");
    bench_cmd->add_option("--seed", b_seed, "Seed for the random weight rows");
    bench_cmd->add_option("--threads", b_threads, "Worker threads (0 = hardware)");
    bench_cmd->add_option("--also-batch", b_extra, "Additional batch sizes to time");
    bench_cmd->add_option("--format", b_format, "table or json")->check(CLI::IsMember({"table", "json"}));
    bench_cmd->add_flag("--allow-large", b_large, "Permit 4-digit runs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error[usage]: " << e.what() << "\n";
        return 1;
    }

    if (*compile_cmd) {
        if (c_dimacs.empty() == c_formula.empty()) throw usage_error("give exactly one of --dimacs and --formula");
        if (!c_names.empty() && c_formula.empty()) throw usage_error("--names requires --formula");
        cnf f;
        std::vector<std::string> names;
        if (!c_dimacs.empty()) {
            f = parse_dimacs(read_file(c_dimacs));
        } else {
            auto fi = load_formula(c_formula, c_names);
            const int n = std::max(fi.names.size(), max_var(fi.f));
            f = to_cnf(to_nnf(fi.f), n);
            names = fi.names.names();
        }
        compile_options co;
        co.component_caching = !c_no_cache;
        auto c = std::make_shared<const circuit>(smooth(compile(f, co)));
        circuit_input ci{c, names};
        auto m = module_for_circuit(ci, get_structure("probability"));
        const auto& lc = *m.backing()->layered;
        nlohmann::json extra = nlohmann::json::object();
        if (!names.empty()) extra["names"] = names;
        extra["layers"] = lc.manifest();
        write_file(c_out, to_json_text(*c, extra));
        if (!c_manifest.empty()) write_file(c_manifest, wiring_manifest(m).dump(2) + "\n");
        std::cout << "nodes " << c->size() << "\nedges " << c->edge_count() << "\nlayers " << lc.layers.size()
                  << "\ninputs " << lc.num_inputs() << "\n";
        return 0;
    }

    if (*eval_cmd) {
        auto fac = make_factory(ev.config);
        auto b = bind(ev, fac);
        std::vector<double> values;
        if (ev_batch) {
            values = b.m({b.w.values})[0].data;
        } else {
            const std::size_t n = b.w.values.row_size();
            for (std::size_t r = 0; r < b.w.values.rows; ++r) {
                std::vector<double> row(b.w.values.data.begin() + static_cast<std::ptrdiff_t>(r * n),
                                        b.w.values.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
                values.push_back(b.m({tensor::row(std::move(row))})[0].data[0]);
            }
        }
        for (double v : values) std::cout << format_value(v) << "\n";
        return 0;
    }

    if (*grad_cmd) {
        auto fac = make_factory(gr.config);
        auto b = bind(gr, fac);
        auto s = fac.structure(gr.semantics);
        weight_table g;
        g.symbols = b.w.symbols;
        g.values = tensor::matrix(b.w.values.rows, g.symbols.size());
        if (auto errs = validate(b.m, {b.w.values}); !errs.empty()) throw validation_error(std::move(errs));
        if (b.m.backing()) {
            const auto& bk = *b.m.backing();
            auto grads = backward(*bk.layered, detail::to_leaf_batch(b.w.values, bk.columns), *s);
            for (std::size_t r = 0; r < g.values.rows; ++r)
                for (std::size_t c = 0; c < bk.columns.size(); ++c) g.values.at(r, bk.columns[c]) += grads.at(r, c);
        } else {
            // Fuzzy formula: the formula was bound by name, so map its variables to header columns.
            auto fi = load_formula(gr.formula, gr.names);
            const formula nnf = to_nnf(fi.f);
            const int n = std::max(fi.names.size(), max_var(fi.f));
            std::vector<std::size_t> cols;
            const sym_tensor header(b.w.symbols, s);
            for (int v = 1; v <= n; ++v) {
                const std::string sym = v <= fi.names.size() ? fi.names.name(v) : "v" + std::to_string(v);
                auto idx = header.index_of(sym);
                cols.push_back(idx ? *idx : static_cast<std::size_t>(v - 1));
            }
            for (std::size_t r = 0; r < g.values.rows; ++r) {
                std::vector<double> x;
                for (auto c : cols) x.push_back(b.w.values.at(r, c));
                auto res = evaluate_fuzzy_with_gradient(nnf, *s, x);
                for (std::size_t v = 0; v < cols.size(); ++v) g.values.at(r, cols[v]) += res.gradient[v];
            }
        }
        std::cout << format_weights(g);
        return 0;
    }

    if (*loss_cmd) {
        auto fac = make_factory(lo.config);
        if (fac.structure(lo.semantics)->is_fuzzy()) throw semantic_error("semantic loss needs probability or log semantics");
        auto b = bind(lo, fac);
        auto res = semantic_loss(b.m, b.w.values, false);
        for (const auto& d : res.diagnostics) std::cerr << "warning: " << d << "\n";
        for (double v : res.per_row) std::cout << format_value(v) << "\n";
        std::cout << "mean " << format_value(res.mean) << "\n";
        return 0;
    }

    if (*check_cmd) {
        auto c = load_circuit(k_circuit).c;
        auto rep = check_properties(*c);
        auto line = [](const char* name, bool ok, const std::vector<node_id>& bad) {
            std::cout << name << ": " << (ok ? "yes" : "no");
            if (!ok) {
                std::cout << " (nodes";
                for (auto id : bad) std::cout << " " << id;
                std::cout << ")";
            }
            std::cout << "\n";
        };
        line("decomposable", rep.decomposable, rep.non_decomposable);
        line("deterministic", rep.deterministic, rep.non_deterministic);
        line("smooth", rep.smooth, rep.non_smooth);
        if (!rep.ok()) {
            std::cerr << "error[semantic]: circuit violates required properties\n";
            return 3;
        }
        return 0;
    }

    if (*inspect_cmd) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(i_manifest));
        } catch (const nlohmann::json::parse_error& e) {
            throw parse_error(std::string("manifest: ") + e.what(), 1);
        }
        std::cout << describe_manifest(j);
        return 0;
    }

    if (*bench_cmd) {
        if (b_digits == 4 && !b_large) throw usage_error("--digits 4 requires --allow-large");
        if (b_digits < 1 || b_digits > max_addition_digits)
            throw usage_error("--digits must be in [1," + std::to_string(max_addition_digits) + "]");
        bench_options o;
        o.batch_size = b_batch;
        o.repetitions = b_reps;
        o.seed = b_seed;
        o.threads = b_threads;
        o.extra_batches = b_extra;
        auto rep = bench_addition(b_digits, o);
        if (b_format == "json") std::cout << rep.to_json().dump(2) << "\n";
        else std::cout << rep.to_table();
        return 0;
    }
    return 1;
}

const char* kind_prefix(error_kind k) {
    switch (k) {
        case error_kind::usage: return "error[usage]: ";
        case error_kind::input: return "error[input]: ";
        case error_kind::semantic: return "error[semantic]: ";
    }
    return "error: ";
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const nesy::error& e) {
        std::string msg = e.what();
        for (auto& ch : msg)
            if (ch == '\n') ch = ' ';
        std::cerr << kind_prefix(e.kind()) << msg << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error[semantic]: " << e.what() << "\n";
        return 3;
    }
}
