#pragma once

#include "resnet_ntk/linalg.hpp"
#include "resnet_ntk/model.hpp"

#include <cstddef>
#include <vector>

namespace resnet_ntk {

inline constexpr std::size_t kDefaultJacobianCap = 100'000'000;

// u[i][h-1] = ∂f(x_i)/∂xʰ, built right to left from u[i][H-1] = a.
struct BackwardVectors {
    std::vector<std::vector<Vector>> u;
};

BackwardVectors backward_vectors(const Theta& theta, const ModelConfig& config,
                                 const std::vector<ForwardCache>& caches);
std::vector<Vector> backward_vectors(const Theta& theta, const ModelConfig& config,
                                     const ForwardCache& cache);

// ∂f/∂Wʰ = left · rightᵀ.
struct LayerGradient {
    Vector left;  // length m
    Vector right; // length d (h = 1) or m
    DenseMatrix dense() const;
};

std::vector<LayerGradient> grad_per_layer(const Theta& theta, const ModelConfig& config,
                                          const ForwardCache& cache,
                                          const std::vector<Vector>& u);

// Per-sample rank-one gradients for the whole batch, [sample][layer].
std::vector<std::vector<LayerGradient>> batch_gradients(const Theta& theta,
                                                        const ModelConfig& config,
                                                        const Dataset& data);

// Explicit n×p Jacobian, row i = concatenated row-major ∂f(x_i)/∂Wʰ.
DenseMatrix full_jacobian(const Theta& theta, const ModelConfig& config, const Dataset& data,
                          std::size_t max_entries = kDefaultJacobianCap);

struct GramBlocks {
    std::vector<DenseMatrix> G; // G[h-1] for layer h
};

// G⁽ʰ⁾_ij = ⟨∂f(x_i)/∂Wʰ, ∂f(x_j)/∂Wʰ⟩ assembled from rank-one factors.
GramBlocks gram_blocks(const Theta& theta, const ModelConfig& config, const Dataset& data);

struct NtkGram {
    DenseMatrix K;
};

NtkGram ntk(const Theta& theta, const ModelConfig& config, const Dataset& data);
NtkGram ntk_from_blocks(const GramBlocks& blocks);

inline constexpr double kMinFiniteDiffStep = 1e-7;
inline constexpr double kMaxFiniteDiffStep = 1e-3;

// Central differences of batch outputs, same layout as full_jacobian.
// Steps outside [1e-7, 1e-3] are rejected.
DenseMatrix finite_diff_jacobian(const Theta& theta, const ModelConfig& config,
                                 const Dataset& data, double step = 1e-5);
// Unguarded variant for diagnosing how truncation/roundoff grows off that range.
DenseMatrix central_differences(const Theta& theta, const ModelConfig& config,
                                const Dataset& data, double step);

// √max(0, λ_min(JJᵀ)).
double sigma_min_jacobian(const Theta& theta, const ModelConfig& config, const Dataset& data);
// √λ_max(JJᵀ) = ‖J‖.
double jacobian_spectral_norm(const Theta& theta, const ModelConfig& config,
                              const Dataset& data);

} // namespace resnet_ntk
