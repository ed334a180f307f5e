#include "resnet_ntk/quadrature.hpp"

#include "resnet_ntk/errors.hpp"
#include "resnet_ntk/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>

namespace resnet_ntk {

GaussHermiteRule gauss_hermite_rule(std::size_t nodes) {
    if (nodes < 2) throw InputError("gauss_hermite_rule: need at least 2 nodes");
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
    // polynomials (zero diagonal, off-diagonal √k). Nodes are its eigenvalues,
    // weights the squared first eigenvector components; the measure has mass 1.
    DenseMatrix jacobi(nodes, nodes);
    for (std::size_t k = 1; k < nodes; ++k) {
        const double b = std::sqrt(static_cast<double>(k));
        jacobi(k - 1, k) = b;
        jacobi(k, k - 1) = b;
    }
    const SymmetricEigen eig = sym_eigen(jacobi);

    GaussHermiteRule rule;
    rule.nodes = eig.values;
    rule.weights.resize(nodes);
    double total = 0.0;
    for (std::size_t k = 0; k < nodes; ++k) {
        rule.weights[k] = eig.vectors(0, k) * eig.vectors(0, k);
        total += rule.weights[k];
    }
    if (!(std::abs(total - 1.0) <= 1e-10))
        throw NumericalError("gauss_hermite_rule: weights do not sum to one");
    // Symmetrize: the rule is exact for odd moments only if ±x pairs match.
    for (std::size_t k = 0; k < nodes / 2; ++k) {
        const std::size_t j = nodes - 1 - k;
        const double x = 0.5 * (rule.nodes[j] - rule.nodes[k]);
        const double w = 0.5 * (rule.weights[j] + rule.weights[k]);
        rule.nodes[k] = -x;
        rule.nodes[j] = x;
        rule.weights[k] = rule.weights[j] = w / total;
    }
    if (nodes % 2 == 1) {
        rule.nodes[nodes / 2] = 0.0;
        rule.weights[nodes / 2] /= total;
    }
    return rule;
}

namespace {

// Rules are reused across calls; building one is an O(n³) eigensolve.
const GaussHermiteRule& cached_rule(std::size_t nodes) {
    static std::mutex mutex;
    static std::map<std::size_t, GaussHermiteRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(nodes);
    if (it == cache.end()) it = cache.emplace(nodes, gauss_hermite_rule(nodes)).first;
    return it->second;
}

} // namespace

double gauss_hermite_expectation(const std::function<double(double)>& f, std::size_t nodes) {
    const GaussHermiteRule& rule = cached_rule(nodes);
    double sum = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double v = f(rule.nodes[k]);
        if (!std::isfinite(v))
            throw NumericalError("gauss_hermite_expectation: non-finite integrand at node " +
                                 std::to_string(rule.nodes[k]));
        sum += rule.weights[k] * v;
    }
    return sum;
}

} // namespace resnet_ntk
