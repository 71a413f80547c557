#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nesy/layered.hpp"
#include "oracles.hpp"

using namespace nesy;

namespace {

const char* kHierarchy = "p cnf 3 2\n-1 2 0\n-3 2 0\n";

struct compiled {
    cnf f;
    circuit c;
    layered_circuit lc;
};

compiled build(const cnf& f) {
    circuit c = smooth(compile(f));
    return {f, c, layerize(c)};
}

compiled build(const char* dimacs) { return build(parse_dimacs(dimacs)); }

const structure& prob() { return *get_structure("probability"); }
const structure& logp() { return *get_structure("log_probability"); }
const structure& boolean() { return *get_structure("boolean"); }

std::vector<double> logs(std::vector<double> p) {
    for (auto& x : p) x = std::log(x);
    return p;
}

double single(const compiled& k, const std::vector<double>& row, const structure& s) {
    return evaluate(k.lc, leaf_batch::from_rows({row}), s)[0];
}

std::vector<double> single_grad(const compiled& k, const std::vector<double>& row, const structure& s) {
    auto g = backward(k.lc, leaf_batch::from_rows({row}), s);
    return g.values;
}

}  // namespace

TEST(Layerize, SingleLiteral) {
    circuit_builder b(1);
    circuit c = b.finish(b.make_lit(lit(1)), {});
    auto lc = layerize(c);
    ASSERT_EQ(lc.layers.size(), 1u);
    EXPECT_EQ(lc.layers[0].kind, layer_kind::leaf);
    EXPECT_EQ(lc.root_slot, 0u);
}

TEST(Layerize, ConjunctionOfTwoLiterals) {
    circuit_builder b(2);
    circuit c = b.finish(b.make_and({b.make_lit(lit(1)), b.make_lit(lit(2))}), {});
    auto lc = layerize(c);
    ASSERT_EQ(lc.layers.size(), 2u);
    EXPECT_EQ(lc.layers[0].kind, layer_kind::leaf);
    EXPECT_EQ(lc.layers[1].kind, layer_kind::prod);
    EXPECT_EQ(lc.layers[1].size, 1u);
}

TEST(Layerize, LayersFollowDepth) {
    auto k = build(kHierarchy);
    // Depth of each node, recomputed.
    std::vector<int> depth(k.c.size(), 0);
    for (node_id i = 0; i < k.c.size(); ++i)
        for (auto ch : k.c.node(i).children) depth[i] = std::max(depth[i], depth[ch] + 1);
    const int root_depth = depth[k.c.root()];
    std::size_t slot_total = 0;
    for (const auto& l : k.lc.layers) {
        slot_total += l.size;
        for (std::uint32_t j = 0; j + 1 < l.child_begin.size(); ++j)
            for (std::uint32_t e = l.child_begin[j]; e < l.child_begin[j + 1]; ++e) EXPECT_LT(l.child_slots[e], l.offset);
    }
    EXPECT_EQ(slot_total, k.c.size());
    EXPECT_GE(static_cast<int>(k.lc.layers.size()), root_depth + 1);
    EXPECT_LE(static_cast<int>(k.lc.layers.size()), 2 * root_depth + 1);
}

TEST(Layerize, LeafMapCoversEveryVariableInBothPolarities) {
    auto k = build(kHierarchy);
    for (int v = 1; v <= 3; ++v) {
        EXPECT_GE(k.lc.pos_slot[static_cast<std::size_t>(v)], 0);
        EXPECT_GE(k.lc.neg_slot[static_cast<std::size_t>(v)], 0);
    }
}

TEST(Layerize, RejectsNonSmoothCircuits) {
    circuit_builder b(2);
    circuit c = b.finish(b.make_decision(1, b.make_lit(lit(1)), b.make_and({b.make_lit(lit(-1)), b.make_lit(lit(2))})), {});
    EXPECT_THROW(layerize(c), structural_error);
}

TEST(Evaluate, HierarchyExamples) {
    auto k = build(kHierarchy);
    EXPECT_DOUBLE_EQ(single(k, {0.5, 0.5, 0.5}, prob()), 0.625);
    EXPECT_DOUBLE_EQ(single(k, {1, 1, 1}, prob()), 1.0);
    EXPECT_NEAR(single(k, logs({0.5, 0.5, 0.5}), logp()), std::log(0.625), 1e-15);
    EXPECT_EQ(single(k, {1, 0, 0}, boolean()), 0.0);
    EXPECT_EQ(single(k, {1, 1, 0}, boolean()), 1.0);
}

TEST(Evaluate, AgreesWithBruteForceOnRandomRows) {
    auto k = build(kHierarchy);
    std::mt19937_64 rng(1);
    for (int r = 0; r < 20; ++r) {
        auto p = oracle::random_probs(rng, 3, 0, 1);
        EXPECT_LE(oracle::relative_error(single(k, p, prob()), brute_force_wmc<double>(k.f, p)), 1e-12);
    }
}

TEST(Evaluate, CarrierViolationNamesRowAndVariable) {
    auto k = build(kHierarchy);
    try {
        evaluate(k.lc, leaf_batch::from_rows({{0.5, 0.5, 0.5}, {0.5, 1.3, 0.5}}), prob());
        FAIL();
    } catch (const validation_error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("variable 2"), std::string::npos) << msg;
    }
    EXPECT_THROW(single(k, {0.1, -0.2, -1}, logp()), validation_error);
    EXPECT_THROW(single(k, {1, 0.5, 0}, boolean()), validation_error);
    EXPECT_THROW(evaluate(k.lc, leaf_batch::from_rows({{0.5, 0.5}}), prob()), semantic_error);
}

TEST(Evaluate, FuzzyStructuresRefuseCircuits) {
    auto k = build(kHierarchy);
    try {
        single(k, {0.5, 0.5, 0.5}, *get_structure("fuzzy_product"));
        FAIL();
    } catch (const semantic_error& e) {
        EXPECT_NE(std::string(e.what()).find("fuzzy semantics require formula input"), std::string::npos);
    }
}

TEST(Evaluate, ConstantCircuits) {
    circuit_builder b(0);
    circuit t = b.finish(b.make_true(), {}), f = b.finish(b.make_false(), {});
    std::vector<double> none;
    EXPECT_EQ(evaluate_recursive(t, none, prob()), 1.0);
    EXPECT_EQ(evaluate_recursive(f, none, prob()), 0.0);
    EXPECT_EQ(evaluate_recursive(t, none, logp()), 0.0);
    EXPECT_EQ(evaluate_recursive(f, none, logp()), neg_inf);
    leaf_batch empty(2, 0);
    EXPECT_EQ(evaluate(layerize(t), empty, prob()), (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(evaluate(layerize(f), empty, logp()), (std::vector<double>{neg_inf, neg_inf}));
}

TEST(Evaluate, LogOfZeroStaysFinite) {
    auto k = build(kHierarchy);
    double v = single(k, {0, -INFINITY, 0}, logp());
    EXPECT_EQ(v, neg_inf);
    auto g = single_grad(k, {0, -INFINITY, 0}, logp());
    for (double x : g) EXPECT_FALSE(std::isnan(x));
}

TEST(Evaluate, MatchesRecursiveAndBatchesIndependently) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 30; ++t) {
        auto k = build(oracle::random_cnf(rng));
        const auto n = k.lc.num_inputs();
        leaf_batch batch(17, n);
        for (auto& x : batch.values) x = std::uniform_real_distribution<double>(0, 1)(rng);
        auto all = evaluate(k.lc, batch, prob());
        auto threaded = evaluate(k.lc, batch, prob(), {true, 4});
        EXPECT_EQ(all, threaded);
        for (std::size_t r = 0; r < batch.rows; ++r) {
            auto row = batch.row(r);
            EXPECT_EQ(all[r], evaluate_recursive(k.c, row, prob()));
            EXPECT_EQ(all[r], single(k, {row.begin(), row.end()}, prob()));
        }
        leaf_batch lb = batch;
        for (auto& x : lb.values) x = std::log(x);
        auto lall = evaluate(k.lc, lb, logp());
        for (std::size_t r = 0; r < batch.rows; ++r) {
            EXPECT_EQ(lall[r], evaluate_recursive(k.c, lb.row(r), logp()));
            if (all[r] >= 1e-30) {
                EXPECT_LE(oracle::relative_error(std::exp(lall[r]), all[r]), 1e-9);
            }
        }
    }
}

TEST(Evaluate, ValidationIsObservationOnly) {
    auto k = build(kHierarchy);
    auto batch = leaf_batch::from_rows({{0.2, 0.4, 0.9}, {0.7, 0.1, 0.3}});
    EXPECT_EQ(evaluate(k.lc, batch, prob(), {true, 1}), evaluate(k.lc, batch, prob(), {false, 1}));
}

TEST(Backward, HierarchyExamples) {
    auto k = build(kHierarchy);
    auto g = single_grad(k, {0.5, 0.5, 0.5}, prob());
    EXPECT_DOUBLE_EQ(g[1], 0.75);
    auto gl = single_grad(k, logs({0.5, 0.5, 0.5}), logp());
    EXPECT_NEAR(gl[1], 0.75 / 0.625, 1e-14);

    auto unit = build("p cnf 1 1\n1 0\n");
    EXPECT_DOUBLE_EQ(single_grad(unit, {0.37}, prob())[0], 1.0);
}

TEST(Backward, UnusedVariableHasZeroGradient) {
    auto k = build("p cnf 3 1\n1 2 0\n");
    auto g = single_grad(k, {0.3, 0.6, 0.8}, prob());
    EXPECT_EQ(g[2], 0.0);
}

TEST(Backward, BooleanIsNotDifferentiable) {
    auto k = build(kHierarchy);
    EXPECT_THROW(single_grad(k, {1, 1, 1}, boolean()), semantic_error);
}

TEST(Backward, MultilinearSlopes) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        auto k = build(oracle::random_cnf(rng));
        auto p = oracle::random_probs(rng, static_cast<int>(k.lc.num_inputs()));
        auto g = single_grad(k, p, prob());
        for (std::size_t v = 0; v < p.size(); ++v) {
            auto lo = p, hi = p;
            lo[v] = 0.1;
            hi[v] = 0.9;
            double slope = (single(k, hi, prob()) - single(k, lo, prob())) / 0.8;
            EXPECT_NEAR(slope, g[v], 1e-12 + 1e-9 * std::fabs(g[v]));
        }
    }
}

TEST(Backward, MatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    oracle::random_cnf_params params;
    params.max_vars = 10;
    int checked = 0;
    for (int t = 0; t < 20; ++t) {
        cnf f = oracle::random_cnf(rng, params);
        auto k = build(f);
        auto p = oracle::random_probs(rng, f.num_vars, 0.1, 0.9);
        auto g = single_grad(k, p, prob());
        auto gl = single_grad(k, logs(p), logp());
        std::vector<long double> pl(p.begin(), p.end());
        const long double base = brute_force_wmc<long double>(f, pl);
        for (std::size_t v = 0; v < p.size(); ++v) {
            auto up = pl, dn = pl;
            up[v] += 1e-5L;
            dn[v] -= 1e-5L;
            long double wu = brute_force_wmc<long double>(f, up), wd = brute_force_wmc<long double>(f, dn);
            double fd = static_cast<double>((wu - wd) / 2e-5L);
            if (std::fabs(g[v]) > 1e-8) {
                EXPECT_LE(oracle::relative_error(g[v], fd), 1e-6);
                ++checked;
            }
            if (base > 0) {
                double fdl = static_cast<double>((std::log(wu) - std::log(wd)) / 2e-5L);
                if (std::fabs(gl[v]) > 1e-8) {
                    EXPECT_LE(oracle::relative_error(gl[v], fdl), 1e-6);
                }
            }
        }
    }
    EXPECT_GT(checked, 50);
}

TEST(Backward, IndicatorsUsePositiveLiteralOnly) {
    // Exactly one of 1, 2.
    cnf f = parse_dimacs("p cnf 2 2\n1 2 0\n-1 -2 0\n");
    f.roles = {var_role::indicator, var_role::indicator};
    auto k = build(f);
    EXPECT_DOUBLE_EQ(single(k, {0.3, 0.7}, prob()), 1.0);
    auto g = single_grad(k, {0.3, 0.7}, prob());
    EXPECT_DOUBLE_EQ(g[0], 1.0);
    EXPECT_DOUBLE_EQ(g[1], 1.0);
}
