// Semantic loss on a three-variable constraint, then a short projected
// gradient descent run on the predicted probabilities.

#include <cstdio>

#include "nesy/factory.hpp"
#include "nesy/tasks.hpp"

int main() {
    using namespace nesy;
    auto prob = get_structure("probability");
    cnf constraint = parse_dimacs("p cnf 3 2\n-1 2 0\n2 -3 0\n");
    auto phi = reshape_input(circuit_module(constraint, prob), sym_tensor({"A_p", "B_p", "C_p"}, prob));

    auto first = semantic_loss(phi, tensor::row({0.5, 0.5, 0.5}));
    std::printf("loss at uniform: %s\n", format_value(first.mean).c_str());

    std::vector<double> p;
    auto losses = semantic_loss_descent(phi, {0.5, 0.5, 0.5}, 100, 0.05, 0.001, 0.999, &p);
    for (std::size_t i = 0; i < losses.size(); i += 20) std::printf("step %3zu  loss %s\n", i, format_value(losses[i]).c_str());
    std::printf("final p = (%s, %s, %s), loss %s\n", format_value(p[0]).c_str(), format_value(p[1]).c_str(),
                format_value(p[2]).c_str(), format_value(losses.back()).c_str());

    // The same constraint under product fuzzy logic.
    factory ltn(factory_config::ltn());
    name_table names;
    auto f = parse_formula("(~A | B) & (B | ~C)", names, true);
    auto fuzzy = ltn.build_formula_module(f, "fuzzy", &names);
    std::printf("fuzzy truth at (0.8, 0.5, 0.3): %s\n", format_value(fuzzy({tensor::row({0.8, 0.5, 0.3})})[0].data[0]).c_str());
}
