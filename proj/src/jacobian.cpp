#include "resnet_ntk/jacobian.hpp"

#include "resnet_ntk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace resnet_ntk {

std::vector<Vector> backward_vectors(const Theta& theta, const ModelConfig& config,
                                     const ForwardCache& cache) {
    if (cache.layer_outputs.size() != config.H || cache.preactivations.size() != config.H ||
        theta.depth() != config.H)
        throw InputError("backward_vectors: cache does not match theta depth");
    if (theta.a.size() != config.m) throw InputError("backward_vectors: readout length mismatch");

    const double res_scale = config.residual_scale();
    std::vector<Vector> u(config.H);
    u[config.H - 1] = theta.a;
    for (std::size_t h = config.H; h >= 2; --h) {
        const Vector& uh = u[h - 1];
        const Vector& z = cache.preactivations[h - 1];
        if (z.size() != config.m) throw InputError("backward_vectors: preactivation size mismatch");
        Vector gated(config.m);
        for (std::size_t r = 0; r < config.m; ++r)
            gated[r] = config.activation.derivative(z[r]) * uh[r];
        Vector back = matvec_transposed(theta.layer(h), gated);
        for (std::size_t r = 0; r < config.m; ++r) back[r] = uh[r] + res_scale * back[r];
        u[h - 2] = std::move(back);
    }
    return u;
}

BackwardVectors backward_vectors(const Theta& theta, const ModelConfig& config,
                                 const std::vector<ForwardCache>& caches) {
    BackwardVectors out;
    out.u.reserve(caches.size());
    for (const auto& cache : caches) out.u.push_back(backward_vectors(theta, config, cache));
    return out;
}

DenseMatrix LayerGradient::dense() const {
    DenseMatrix g(left.size(), right.size());
    for (std::size_t r = 0; r < left.size(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < right.size(); ++c) row[c] = left[r] * right[c];
    }
    return g;
}

std::vector<LayerGradient> grad_per_layer(const Theta& theta, const ModelConfig& config,
                                          const ForwardCache& cache,
                                          const std::vector<Vector>& u) {
    if (u.size() != config.H || cache.preactivations.size() != config.H)
        throw InputError("grad_per_layer: backward vectors do not match depth");
    (void)theta;
    std::vector<LayerGradient> grads(config.H);
    for (std::size_t h = 1; h <= config.H; ++h) {
        const double scale = h == 1 ? config.input_scale() : config.residual_scale();
        const Vector& z = cache.preactivations[h - 1];
        const Vector& uh = u[h - 1];
        if (z.size() != config.m || uh.size() != config.m)
            throw InputError("grad_per_layer: layer " + std::to_string(h) + " shape mismatch");
        LayerGradient& g = grads[h - 1];
        g.left.resize(config.m);
        for (std::size_t r = 0; r < config.m; ++r)
            g.left[r] = scale * uh[r] * config.activation.derivative(z[r]);
        const auto in = cache.layer_input(h);
        g.right.assign(in.begin(), in.end());
    }
    return grads;
}

std::vector<std::vector<LayerGradient>> batch_gradients(const Theta& theta,
                                                        const ModelConfig& config,
                                                        const Dataset& data) {
    const BatchForward fw = batch_forward(theta, config, data);
    std::vector<std::vector<LayerGradient>> grads;
    grads.reserve(fw.caches.size());
    for (const auto& cache : fw.caches)
        grads.push_back(
            grad_per_layer(theta, config, cache, backward_vectors(theta, config, cache)));
    return grads;
}

DenseMatrix full_jacobian(const Theta& theta, const ModelConfig& config, const Dataset& data,
                          std::size_t max_entries) {
    const std::size_t p = config.parameter_count();
    const std::size_t n = data.size();
    if (p != 0 && n > max_entries / p)
        throw CapacityError("full_jacobian: " + std::to_string(n) + " x " + std::to_string(p) +
                            " exceeds the explicit-Jacobian cap of " +
                            std::to_string(max_entries) +
                            " entries; use the matrix-free gram_blocks/ntk path");
    const auto grads = batch_gradients(theta, config, data);
    DenseMatrix J(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = J.row(i);
        std::size_t offset = 0;
        for (const LayerGradient& g : grads[i]) {
            for (std::size_t r = 0; r < g.left.size(); ++r)
                for (std::size_t c = 0; c < g.right.size(); ++c)
                    row[offset + r * g.right.size() + c] = g.left[r] * g.right[c];
            offset += g.left.size() * g.right.size();
        }
    }
    return J;
}

GramBlocks gram_blocks(const Theta& theta, const ModelConfig& config, const Dataset& data) {
    const auto grads = batch_gradients(theta, config, data);
    const std::size_t n = data.size();
    GramBlocks blocks;
    blocks.G.assign(config.H, DenseMatrix(n, n));
    for (std::size_t h = 0; h < config.H; ++h) {
        DenseMatrix& G = blocks.G[h];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const LayerGradient& gi = grads[i][h];
                const LayerGradient& gj = grads[j][h];
                const double v = dot(gi.left, gj.left) * dot(gi.right, gj.right);
                G(i, j) = v;
                G(j, i) = v;
            }
    }
    return blocks;
}

NtkGram ntk_from_blocks(const GramBlocks& blocks) {
    if (blocks.G.empty()) throw InputError("ntk_from_blocks: no blocks");
    NtkGram out{DenseMatrix(blocks.G.front().rows(), blocks.G.front().cols())};
    for (const auto& G : blocks.G) out.K = add(out.K, G);
    return out;
}

NtkGram ntk(const Theta& theta, const ModelConfig& config, const Dataset& data) {
    return ntk_from_blocks(gram_blocks(theta, config, data));
}

DenseMatrix finite_diff_jacobian(const Theta& theta, const ModelConfig& config,
                                 const Dataset& data, double step) {
    if (!(step >= kMinFiniteDiffStep && step <= kMaxFiniteDiffStep))
        throw InputError("finite_diff_jacobian: step must lie in [1e-7, 1e-3]");
    return central_differences(theta, config, data, step);
}

DenseMatrix central_differences(const Theta& theta, const ModelConfig& config,
                                const Dataset& data, double step) {
    if (!(step > 0.0) || !std::isfinite(step))
        throw InputError("central_differences: step must be positive");
    const std::size_t p = config.parameter_count();
    DenseMatrix J(data.size(), p);
    Theta probe = theta;
    std::size_t col = 0;
    for (std::size_t h = 1; h <= config.H; ++h) {
        auto coords = probe.layer(h).values();
        for (std::size_t k = 0; k < coords.size(); ++k, ++col) {
            const double saved = coords[k];
            coords[k] = saved + step;
            const Vector plus = batch_outputs(probe, config, data.X);
            coords[k] = saved - step;
            const Vector minus = batch_outputs(probe, config, data.X);
            coords[k] = saved;
            for (std::size_t i = 0; i < data.size(); ++i)
                J(i, col) = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    return J;
}

double sigma_min_jacobian(const Theta& theta, const ModelConfig& config, const Dataset& data) {
    const EigenExtremes e = sym_eig_extremes(ntk(theta, config, data).K);
    return std::sqrt(std::max(0.0, e.min_eig));
}

double jacobian_spectral_norm(const Theta& theta, const ModelConfig& config,
                              const Dataset& data) {
    const EigenExtremes e = sym_eig_extremes(ntk(theta, config, data).K);
    return std::sqrt(std::max(0.0, e.max_eig));
}

} // namespace resnet_ntk
