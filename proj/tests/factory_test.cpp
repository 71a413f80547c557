#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nesy/factory.hpp"
#include "oracles.hpp"

using namespace nesy;

namespace {

annotated_module scores(const factory& f, const std::string& name, std::vector<double> v, const std::string& tag = "fuzzy") {
    std::vector<std::string> syms;
    for (std::size_t i = 0; i < v.size(); ++i) syms.push_back(name + std::to_string(i));
    const std::size_t n = v.size();
    return constant_module(name, sym_tensor(syms, f.structure(tag)), tensor(1, {n}, std::move(v)));
}

double scalar(const annotated_module& m) { return m({})[0].data.at(0); }

}  // namespace

TEST(Aggregators, Examples) {
    factory ltn(factory_config::ltn());
    const double xs[] = {1.0, 0.0};
    EXPECT_NEAR(ltn.aggregate("exists", xs), 0.890899, 1e-6);
    EXPECT_NEAR(ltn.aggregate("exists", xs), std::pow(0.5, 1.0 / 6), 1e-15);
    const double cs[] = {0.37, 0.37, 0.37, 0.37};
    EXPECT_NEAR(ltn.aggregate("exists", cs), 0.37, 1e-15);
    const double ones[] = {1, 1, 1};
    EXPECT_EQ(ltn.aggregate("forall", ones), 1.0);
    EXPECT_THROW(ltn.aggregate("most", ones), semantic_error);
    EXPECT_THROW(ltn.aggregate("exists", std::span<const double>{}), semantic_error);
    const double bad[] = {0.5, 1.2};
    EXPECT_THROW(ltn.aggregate("exists", bad), semantic_error);
}

TEST(Aggregators, Properties) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    factory f;
    for (int t = 0; t < 2000; ++t) {
        const std::size_t n = 1 + rng() % 8;
        const double p = 1 + 9 * u(rng);
        std::vector<double> x(n);
        for (auto& v : x) v = u(rng);
        const double m = p_mean(x, p);
        EXPECT_GE(m, *std::min_element(x.begin(), x.end()) - 1e-12);
        EXPECT_LE(m, *std::max_element(x.begin(), x.end()) + 1e-12);
        auto y = x;
        y[rng() % n] = std::min(1.0, y[rng() % n] + u(rng));
        // y dominates x only when the bumped entry is the one that changed.
        bool dominates = true;
        for (std::size_t i = 0; i < n; ++i) dominates &= y[i] >= x[i];
        if (dominates) {
            EXPECT_GE(p_mean(y, p), m - 1e-15);
        }
        const double e = p_mean_error(x, p);
        EXPECT_TRUE(e >= 0 && e <= 1);
    }
    // Boolean scores.
    for (std::uint64_t bits = 1; bits < 64; ++bits) {
        const std::size_t n = 6;
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = (bits >> i) & 1;
        const bool any = bits != 0, all = bits == 63;
        EXPECT_EQ(f.aggregate("exists", x) > 0, any);
        EXPECT_EQ(f.aggregate("forall", x) == 1.0, all) << bits;
    }
    const std::vector<double> zeros(5, 0.0);
    EXPECT_EQ(f.aggregate("exists", zeros), 0.0);
}

TEST(Factory, UnaryNode) {
    factory ltn(factory_config::ltn());
    auto x = scores(ltn, "x", {0.3});
    auto n = ltn.unary_node("not", x);
    EXPECT_NEAR(scalar(n), 0.7, 1e-15);
    EXPECT_EQ(n.outputs()[0].symbols(), x.outputs()[0].symbols());
    EXPECT_EQ(n.outputs()[0].tag(), "fuzzy_product");
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i) {
        double v = u(rng);
        EXPECT_NEAR(scalar(ltn.unary_node("not", ltn.unary_node("not", scores(ltn, "x", {v})))), v, 1e-12);
    }
    EXPECT_THROW(ltn.unary_node("xor", x), semantic_error);
}

TEST(Factory, BinaryNode) {
    factory ltn(factory_config::ltn());
    auto a = scores(ltn, "a", {0.5}), b = scores(ltn, "b", {0.5});
    auto conj = ltn.binary_node("and", a, b);
    EXPECT_EQ(scalar(conj), 0.25);
    EXPECT_EQ(conj.outputs()[0].symbols(), (std::vector<std::string>{"and(a0,b0)"}));
    EXPECT_EQ(conj.wiring()["outputs"][0]["symbols"][0], "and(a0,b0)");
    EXPECT_EQ(scalar(ltn.binary_node("and", scores(ltn, "x", {0.42}), scores(ltn, "one", {1.0}))), 0.42);
    auto pr = ltn.binary_node("pr", a, b);
    EXPECT_EQ(scalar(pr), 0.75);
    EXPECT_EQ(pr.outputs()[0].symbols()[0], "or(a0,b0)");
    EXPECT_NEAR(scalar(ltn.binary_node("implies", scores(ltn, "a", {0.8}), b)), 0.6, 1e-15);
    EXPECT_THROW(ltn.binary_node("and", a, scores(ltn, "p", {0.5}, "probability")), incompatible_structures);
    EXPECT_THROW(ltn.binary_node("nand", a, b), semantic_error);
    EXPECT_THROW(ltn.binary_node("and", a, scores(ltn, "c", {0.5, 0.5})), semantic_error);
}

TEST(Factory, NodesOverSharedInputs) {
    factory f(factory_config::ltn());
    name_table names{"A", "B"};
    auto a = f.build_formula_module(parse_formula("A", names), "fuzzy", &names, "pa");
    auto b = f.build_formula_module(parse_formula("B", names), "fuzzy", &names, "pb");
    auto both = f.binary_node("and", a, f.unary_node("not", b));
    ASSERT_EQ(both.inputs().size(), 1u);
    EXPECT_NEAR(both({tensor::row({0.8, 0.25})})[0].data[0], 0.8 * 0.75, 1e-15);
}

TEST(Factory, AggregateModule) {
    factory ltn(factory_config::ltn());
    auto x = scores(ltn, "x", {1.0, 0.0});
    auto e = ltn.aggregate_module("exists", x);
    EXPECT_NEAR(scalar(e), std::pow(0.5, 1.0 / 6), 1e-15);
    EXPECT_EQ(e.outputs()[0].symbols()[0], "exists(x0,x1)");
    EXPECT_THROW(ltn.aggregate_module("most", x), semantic_error);
}

TEST(Factory, EqPredicate) {
    factory ltn(factory_config::ltn());
    tensor x = tensor::matrix(2, 3, {0.1, 0.2, 0.3, 1.0, -1.0, 2.0});
    auto same = ltn.apply_predicate("eq", {x, x});
    auto out = same({})[0];
    EXPECT_EQ(out.data, (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(same.outputs()[0].symbols(), (std::vector<std::string>{"eq[0]", "eq[1]"}));
    EXPECT_EQ(same.outputs()[0].tag(), "fuzzy_product");
    const double d = std::log(2.0) / std::sqrt(2.0);
    tensor y = tensor::matrix(1, 2, {0.0, 0.0}), z = tensor::matrix(1, 2, {d, d});
    EXPECT_NEAR(scalar(ltn.apply_predicate("eq", {y, z})), 0.5, 1e-15);
    try {
        ltn.apply_predicate("eq", {x, x, x});
        FAIL();
    } catch (const semantic_error& e) {
        EXPECT_NE(std::string(e.what()).find("arity 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(ltn.apply_predicate("near", {x, x}), semantic_error);
}

TEST(Factory, ConfigValidation) {
    factory_config dup;
    dup.aggregators = {{"a", aggregator::op_kind::p_mean, 2}, {"a", aggregator::op_kind::p_mean, 3}};
    EXPECT_THROW(factory{dup}, semantic_error);
    factory_config low;
    low.aggregators = {{"a", aggregator::op_kind::p_mean, 0.5}};
    EXPECT_THROW(factory{low}, semantic_error);
    factory_config pred;
    pred.predicates = {builtin_predicate("eq", "missing_tag")};
    EXPECT_THROW(factory{pred}, semantic_error);
    factory_config two;
    two.predicates = {builtin_predicate("eq", "fuzzy_product"), builtin_predicate("eq", "fuzzy_godel")};
    EXPECT_THROW(factory{two}, semantic_error);
}

TEST(Factory, ConfigFromJson) {
    auto cfg = factory_config::from_json_text(R"({
        "structures": {"fuzzy": "fuzzy_product"},
        "aggregators": [{"name": "exists", "op": "p_mean", "p": 6}, {"name": "soft", "p": 2}],
        "predicates": [{"name": "eq", "builtin": "eq", "structure": "fuzzy"}]
    })");
    factory f(cfg);
    EXPECT_EQ(f.structure("fuzzy")->tag, "fuzzy_product");
    const double xs[] = {1.0, 0.0};
    EXPECT_NEAR(f.aggregate("soft", xs), std::sqrt(0.5), 1e-15);
    EXPECT_NEAR(f.aggregate("exists", xs), std::pow(0.5, 1.0 / 6), 1e-15);
    EXPECT_THROW(factory_config::from_json_text("{\"extra\": 1}"), parse_error);
    EXPECT_THROW(factory_config::from_json_text("{"), parse_error);
    EXPECT_THROW(factory_config::from_json_text("{\"structures\": {\"fuzzy\": \"nope\"}}"), semantic_error);
    EXPECT_THROW(factory_config::from_json_text("{\"aggregators\": [{\"name\": \"x\", \"op\": \"median\"}]}"), semantic_error);
}

TEST(BuildFormulaModule, Examples) {
    factory f(factory_config::ltn());
    name_table names;
    formula phi = parse_formula("(~A | B) & (B | ~C)", names, true);
    auto prob = f.build_formula_module(phi, "probability", &names);
    EXPECT_NEAR(prob({tensor::row({0.5, 0.5, 0.5})})[0].data[0], 0.625, 1e-15);
    EXPECT_TRUE(prob.backing());
    auto fz = f.build_formula_module(phi, "fuzzy_product", &names);
    EXPECT_NEAR(fz({tensor::row({0.8, 0.5, 0.3})})[0].data[0], 0.51, 1e-15);
    EXPECT_EQ(fz.wiring()["backend"], "formula");
    for (const auto& tag : builtin_structure_tags()) {
        auto t = f.build_formula_module(formula::constant(true), tag);
        const double v = t({tensor(1, {0}, {})})[0].data[0];
        EXPECT_EQ(v, tag == "log_probability" ? 0.0 : 1.0) << tag;
    }
}

TEST(BuildFormulaModule, SameInterfaceAcrossStructures) {
    factory f;
    std::mt19937_64 rng(13);
    const std::vector<std::string> tags{"probability", "log_probability", "boolean", "fuzzy_product", "fuzzy_godel",
                                        "fuzzy_lukasiewicz"};
    for (int t = 0; t < 20; ++t) {
        formula g = oracle::random_formula(rng, 5, 4);
        name_table names{"a", "b", "c", "d", "e"};
        std::vector<annotated_module> ms;
        for (const auto& tag : tags) ms.push_back(f.build_formula_module(g, tag, &names));
        for (const auto& m : ms) {
            EXPECT_EQ(m.inputs().size(), 1u);
            EXPECT_EQ(m.inputs()[0].symbols(), ms[0].inputs()[0].symbols());
            EXPECT_EQ(m.outputs()[0].symbols(), ms[0].outputs()[0].symbols());
            EXPECT_EQ(m.inputs()[0].tag(), m.outputs()[0].tag());
        }
    }
}

TEST(BuildFormulaModule, ProbabilityMatchesBruteForce) {
    factory f;
    std::mt19937_64 rng(14);
    for (int t = 0; t < 40; ++t) {
        formula g = oracle::random_formula(rng, 6, 5);
        auto m = f.build_formula_module(g, "probability");
        EXPECT_TRUE(m.positional_inputs());
        auto p = oracle::random_probs(rng, 6);
        // Independent reference: sum over all assignments.
        long double ref = 0;
        for (std::uint64_t bits = 0; bits < 64; ++bits) {
            auto a = oracle::bits_to_assignment(bits, 6);
            if (!eval_assignment(g, a)) continue;
            long double w = 1;
            for (int v = 0; v < 6; ++v) w *= a[static_cast<std::size_t>(v)] ? p[static_cast<std::size_t>(v)] : 1 - p[static_cast<std::size_t>(v)];
            ref += w;
        }
        const std::size_t n = m.inputs()[0].size();
        std::vector<double> row(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n));
        EXPECT_LE(oracle::relative_error(m({tensor::row(row)})[0].data[0], static_cast<double>(ref)), 1e-12);
    }
}

TEST(BuildFormulaModule, UnknownStructure) {
    factory f;
    EXPECT_THROW(f.build_formula_module(formula::variable(1), "tropical"), semantic_error);
}
