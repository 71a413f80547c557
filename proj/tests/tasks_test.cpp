#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nesy/tasks.hpp"
#include "oracles.hpp"

using namespace nesy;

namespace {

annotated_module example1_module(const std::string& tag = "probability") {
    auto f = parse_dimacs("p cnf 3 2\n-1 2 0\n2 -3 0\n");
    return reshape_input(circuit_module(f, get_structure(tag)), sym_tensor({"A_p", "B_p", "C_p"}, get_structure(tag)));
}

digit_distributions uniform_digits(int n) {
    return digit_distributions(static_cast<std::size_t>(2 * n), std::vector<double>(10, 0.1));
}

digit_distributions point_masses(const std::vector<int>& digits) {
    digit_distributions d(digits.size(), std::vector<double>(10, 0.0));
    for (std::size_t g = 0; g < digits.size(); ++g) d[g][static_cast<std::size_t>(digits[g])] = 1.0;
    return d;
}

double addition_wmc(const addition_problem& p, const digit_distributions& d) {
    auto m = circuit_module(p.encoding, get_structure("probability"));
    return m({tensor::row(addition_weights(d))})[0].data[0];
}

}  // namespace

TEST(SemanticLoss, Examples) {
    auto phi = example1_module();
    auto r = semantic_loss(phi, tensor::row({0.5, 0.5, 0.5}));
    EXPECT_NEAR(r.mean, -std::log(0.625), 1e-15);
    EXPECT_NEAR(r.mean, 0.470004, 1e-6);
    EXPECT_TRUE(r.diagnostics.empty());
    EXPECT_EQ(semantic_loss(phi, tensor::row({0.0, 1.0, 0.0})).mean, 0.0);
    auto bad = semantic_loss(phi, tensor::matrix(2, 3, {0.5, 0.5, 0.5, 1.0, 0.0, 1.0}));
    EXPECT_EQ(bad.per_row[1], INFINITY);
    EXPECT_EQ(bad.mean, INFINITY);
    EXPECT_FALSE(std::isnan(bad.per_row[0]));
    ASSERT_EQ(bad.diagnostics.size(), 1u);
    EXPECT_NE(bad.diagnostics[0].find("row 1"), std::string::npos);
}

TEST(SemanticLoss, LogInputsAgree) {
    auto p = example1_module("probability");
    auto l = example1_module("log_probability");
    std::vector<double> row{0.3, 0.6, 0.8};
    std::vector<double> logs;
    for (double x : row) logs.push_back(std::log(x));
    auto a = semantic_loss(p, tensor::row(row));
    auto b = semantic_loss(l, tensor::row(logs));
    EXPECT_NEAR(a.mean, b.mean, 1e-15);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.gradient.data[i], b.gradient.data[i], 1e-12);
}

TEST(SemanticLoss, GradientMatchesFiniteDifferences) {
    auto phi = example1_module();
    std::mt19937_64 rng(15);
    for (int t = 0; t < 50; ++t) {
        auto p = oracle::random_probs(rng, 3, 0.05, 0.95);
        auto r = semantic_loss(phi, tensor::row(p));
        for (std::size_t i = 0; i < 3; ++i) {
            auto up = p, dn = p;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            const double fd = (semantic_loss(phi, tensor::row(up), false).mean - semantic_loss(phi, tensor::row(dn), false).mean) / 2e-6;
            EXPECT_LE(oracle::relative_error(r.gradient.data[i], fd), 1e-6);
        }
    }
    // Mean over rows scales each row's gradient by 1/rows.
    auto two = semantic_loss(phi, tensor::matrix(2, 3, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}));
    auto one = semantic_loss(phi, tensor::row({0.5, 0.5, 0.5}));
    EXPECT_NEAR(two.gradient.data[1], one.gradient.data[1] / 2, 1e-15);
}

TEST(SemanticLoss, GradientFollowsReshapedColumns) {
    auto f = parse_dimacs("p cnf 3 2\n-1 2 0\n2 -3 0\n");
    auto phi = reshape_input(circuit_module(f, get_structure("probability")),
                             sym_tensor({"v2", "x", "v3", "v1"}, get_structure("probability")));
    auto r = semantic_loss(phi, tensor::row({0.5, 0.9, 0.5, 0.5}));
    EXPECT_NEAR(r.mean, -std::log(0.625), 1e-15);
    EXPECT_NEAR(r.gradient.data[0], -0.75 / 0.625, 1e-12);
    EXPECT_EQ(r.gradient.data[1], 0.0);
}

TEST(SemanticLoss, RejectsInvalidInput) {
    auto phi = example1_module();
    EXPECT_THROW(semantic_loss(phi, tensor::row({0.5, 1.5, 0.5})), validation_error);
    factory f;
    auto fz = f.build_formula_module(formula::variable(1), "fuzzy_product");
    EXPECT_THROW(semantic_loss(fz, tensor::row({0.5})), semantic_error);
}

TEST(SemanticLoss, DescentIsMonotone) {
    auto phi = example1_module();
    std::vector<double> final_p;
    auto losses = semantic_loss_descent(phi, {0.5, 0.5, 0.5}, 100, 0.05, 0.001, 0.999, &final_p);
    ASSERT_EQ(losses.size(), 101u);
    for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1]);
    EXPECT_LT(losses.back(), 0.05);
    EXPECT_GT(final_p[1], 0.9);
}

TEST(Addition, Examples) {
    EXPECT_NEAR(addition_wmc(build_addition(1, 0), uniform_digits(1)), 0.01, 1e-15);
    EXPECT_NEAR(addition_wmc(build_addition(1, 9), uniform_digits(1)), 0.10, 1e-15);
    EXPECT_NEAR(addition_wmc(build_addition(1, 7), point_masses({3, 4})), 1.0, 1e-15);
    EXPECT_EQ(addition_wmc(build_addition(1, 8), point_masses({3, 4})), 0.0);
}

TEST(Addition, Encoding) {
    auto p = build_addition(2, 123);
    EXPECT_EQ(p.encoding.num_vars, 41);
    EXPECT_EQ(p.digit_var(0, 0, 0), 1);
    EXPECT_EQ(p.digit_var(1, 1, 9), 40);
    EXPECT_EQ(p.carry_var(1), 41);
    for (int v = 1; v <= 40; ++v) EXPECT_EQ(p.encoding.roles[static_cast<std::size_t>(v - 1)], var_role::indicator);
    EXPECT_EQ(p.encoding.roles[40], var_role::auxiliary);
    std::size_t binary = 0, covers = 0;
    for (const auto& c : p.encoding.clauses) {
        if (c.size() == 10) ++covers;
        if (c.size() == 2 && !c[0].positive() && !c[1].positive() && (c[0].var() - 1) / 10 == (c[1].var() - 1) / 10) ++binary;
    }
    EXPECT_EQ(covers, 4u);
    EXPECT_EQ(binary, 4u * 45u);
    EXPECT_THROW(build_addition(0, 0), semantic_error);
    EXPECT_THROW(build_addition(5, 0), semantic_error);
    EXPECT_THROW(build_addition(1, 19), semantic_error);
    EXPECT_THROW(build_addition(2, -1), semantic_error);
    EXPECT_NO_THROW(build_addition(2, 198));
}

TEST(Addition, ModelCountsMatchDigitPairs) {
    // Models are digit tuples with a + b = s; carries are determined.
    for (int s = 0; s <= 18; ++s) {
        circuit c = smooth(compile(build_addition(1, s).encoding));
        EXPECT_EQ(model_count(c), big_count(std::min(s, 18 - s) + 1)) << s;
    }
    for (int s : {0, 1, 99, 100, 150, 198}) {
        circuit c = smooth(compile(build_addition(2, s).encoding));
        long long pairs = 0;
        for (int a = 0; a < 100; ++a)
            if (s - a >= 0 && s - a < 100) ++pairs;
        EXPECT_EQ(model_count(c), big_count(pairs)) << s;
        EXPECT_TRUE(check_properties(c).ok());
    }
}

TEST(Addition, MatchesOracle) {
    std::mt19937_64 rng(16);
    for (int n = 1; n <= 2; ++n) {
        for (int t = 0; t < 3; ++t) {
            auto d = random_digit_distributions(rng, n);
            auto oracle_dist = convolution_oracle(d, n);
            double total = 0;
            for (long long s = 0; s <= max_addition_sum(n); s += (n == 1 ? 1 : 7)) {
                const double w = addition_wmc(build_addition(n, s), d);
                EXPECT_LE(oracle::relative_error(w, oracle_dist[static_cast<std::size_t>(s)]), 1e-9) << n << " " << s;
                if (n == 1) total += w;
            }
            if (n == 1) {
                EXPECT_NEAR(total, 1.0, 1e-9);
            }
        }
    }
}

TEST(ConvolutionOracle, Examples) {
    auto u = convolution_oracle(uniform_digits(1), 1);
    ASSERT_EQ(u.size(), 19u);
    EXPECT_NEAR(u[9], 0.10, 1e-15);
    for (int s = 0; s <= 18; ++s) EXPECT_NEAR(u[static_cast<std::size_t>(s)], (std::min(s, 18 - s) + 1) / 100.0, 1e-15);
    EXPECT_EQ(convolution_oracle(point_masses({3, 4}), 1)[7], 1.0);
    std::mt19937_64 rng(17);
    auto d = convolution_oracle(random_digit_distributions(rng, 2), 2);
    EXPECT_EQ(d.size(), 199u);
    double total = 0;
    for (double x : d) total += x;
    EXPECT_NEAR(total, 1.0, 1e-12);
    // Position 0 is least significant: 10 + 0 = 10.
    EXPECT_EQ(convolution_oracle(point_masses({0, 1, 0, 0}), 2)[10], 1.0);
}

TEST(ConvolutionOracle, RejectsMalformedInput) {
    auto d = uniform_digits(1);
    d[1][0] = 0.2;
    EXPECT_THROW(convolution_oracle(d, 1), semantic_error);
    EXPECT_THROW(convolution_oracle(uniform_digits(1), 2), semantic_error);
    auto neg = point_masses({3, 4});
    neg[0][0] = -0.5;
    neg[0][1] = 0.5;
    EXPECT_THROW(convolution_oracle(neg, 1), semantic_error);
}

TEST(Bench, ReportShape) {
    bench_options o;
    o.batch_size = 64;
    o.repetitions = 2;
    o.extra_batches = {8};
    o.single_queries = 8;
    auto r = bench_addition(1, o);
    EXPECT_EQ(r.n_digits, 1);
    EXPECT_EQ(r.query_sum, 9);
    EXPECT_EQ(r.seed, 42u);
    EXPECT_GT(r.circuit_nodes, 0u);
    EXPECT_GT(r.layers, 0u);
    EXPECT_EQ(r.inputs, 20u);
    ASSERT_EQ(r.layered.size(), 3u);
    EXPECT_EQ(r.layered[0].batch, 1u);
    EXPECT_EQ(r.at_batch(64).per_query.samples.size(), 2u);
    EXPECT_THROW(r.at_batch(3), semantic_error);
    EXPECT_LE(r.spot_check_rel_error, 1e-9);
    EXPECT_GE(r.parallelism, 1u);
    auto j = r.to_json();
    EXPECT_EQ(j["circuit"]["nodes"], r.circuit_nodes);
    EXPECT_NE(r.to_table().find("recursive"), std::string::npos);
    // Same seed, same workload.
    EXPECT_EQ(bench_addition(1, o).spot_check_wmc, r.spot_check_wmc);
}

TEST(Weights, RoundTrip) {
    weight_table w;
    w.symbols = {"A_p", "B_p", "C_p"};
    w.values = tensor::matrix(2, 3, {0.5, 0.25, 0.125, 1.0 / 3, 0.0, 1.0});
    auto text = format_weights(w);
    EXPECT_EQ(text, "A_p,B_p,C_p\n0.5,0.25,0.125\n0.333333333333,0,1\n");
    auto back = parse_weights(text);
    EXPECT_EQ(back.symbols, w.symbols);
    EXPECT_EQ(back.values.rows, 2u);
    EXPECT_EQ(back.values.data[0], 0.5);
    auto spaced = parse_weights("# comment\n a , b \r\n 0.1, -inf\n\n");
    EXPECT_EQ(spaced.symbols, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(spaced.values.data[1], -INFINITY);
}

TEST(Weights, Errors) {
    auto expect_line = [](const char* text, std::size_t line) {
        try {
            parse_weights(text);
            FAIL() << text;
        } catch (const parse_error& e) {
            EXPECT_EQ(e.line(), line) << e.what();
        }
    };
    expect_line("", 0);
    expect_line("a,b\n0.1\n", 2);
    expect_line("a,b\n0.1,0.2\n0.1,x\n", 3);
    expect_line("a,a\n", 1);
    expect_line("a,,b\n", 1);
}
