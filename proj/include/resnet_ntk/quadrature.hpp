#pragma once

#include "resnet_ntk/linalg.hpp"

#include <cstddef>
#include <functional>

namespace resnet_ntk {

// Nodes and weights for E_{x~N(0,1)}[f(x)] ≈ Σ w_k f(x_k). The weights sum
// to one; nodes are the roots of the probabilists' Hermite polynomial.
struct GaussHermiteRule {
    Vector nodes;
    Vector weights;
};

GaussHermiteRule gauss_hermite_rule(std::size_t nodes);

double gauss_hermite_expectation(const std::function<double(double)>& f, std::size_t nodes);

} // namespace resnet_ntk
