#pragma once

#include <string>
#include <string_view>

namespace resnet_ntk {

enum class ActivationKind { softplus, tanh, identity };

// A smooth scalar activation with certified bounds |φ′| ≤ B and |φ″| ≤ M.
struct ActivationSpec {
    ActivationKind kind = ActivationKind::softplus;
    double B = 1.0;
    double M = 0.25;
    bool subadditive = true;

    double value(double z) const noexcept;
    double derivative(double z) const noexcept;
    double second_derivative(double z) const noexcept;

    std::string_view name() const noexcept;
};

ActivationSpec softplus_activation();
ActivationSpec tanh_activation();
ActivationSpec identity_activation();

// Accepts "softplus", "tanh", "identity".
ActivationSpec activation_from_name(std::string_view name);

} // namespace resnet_ntk
