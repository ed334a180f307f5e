#include "resnet_ntk/activation.hpp"

#include "resnet_ntk/errors.hpp"

#include <algorithm>
#include <cmath>

namespace resnet_ntk {
namespace {

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

double ActivationSpec::value(double z) const noexcept {
    switch (kind) {
    case ActivationKind::softplus:
        return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    case ActivationKind::tanh:
        return std::tanh(z);
    case ActivationKind::identity:
        return z;
    }
    return z;
}

double ActivationSpec::derivative(double z) const noexcept {
    switch (kind) {
    case ActivationKind::softplus:
        return sigmoid(z);
    case ActivationKind::tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    case ActivationKind::identity:
        return 1.0;
    }
    return 1.0;
}

double ActivationSpec::second_derivative(double z) const noexcept {
    switch (kind) {
    case ActivationKind::softplus: {
        const double s = sigmoid(z);
        return s * (1.0 - s);
    }
    case ActivationKind::tanh: {
        const double t = std::tanh(z);
        return -2.0 * t * (1.0 - t * t);
    }
    case ActivationKind::identity:
        return 0.0;
    }
    return 0.0;
}

std::string_view ActivationSpec::name() const noexcept {
    switch (kind) {
    case ActivationKind::softplus: return "softplus";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::identity: return "identity";
    }
    return "unknown";
}

ActivationSpec softplus_activation() { return {ActivationKind::softplus, 1.0, 0.25, true}; }

// sup |tanh″| = 4/(3√3), attained at tanh(z)² = 1/3.
ActivationSpec tanh_activation() {
    return {ActivationKind::tanh, 1.0, 4.0 / (3.0 * std::sqrt(3.0)), true};
}

ActivationSpec identity_activation() { return {ActivationKind::identity, 1.0, 0.0, true}; }

ActivationSpec activation_from_name(std::string_view name) {
    if (name == "softplus") return softplus_activation();
    if (name == "tanh") return tanh_activation();
    if (name == "identity") return identity_activation();
    throw InputError("unknown activation '" + std::string(name) + "'");
}

} // namespace resnet_ntk
