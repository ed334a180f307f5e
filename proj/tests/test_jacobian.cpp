#include <doctest.h>

#include "resnet_ntk/errors.hpp"
#include "resnet_ntk/jacobian.hpp"

#include <cmath>

using namespace resnet_ntk;

namespace {

struct Setup {
    ModelConfig config;
    Dataset data;
    Theta theta;
};

Setup small_setup(const ActivationSpec& act, std::uint64_t seed = 7, std::size_t n = 6,
                  std::size_t d = 4, std::size_t m = 16, std::size_t H = 3) {
    Setup s{make_config(n, d, m, H, act),
            make_dataset(sphere_points(n, d, seed), random_sign_labels(n, seed)), {}};
    s.theta = init_theta(s.config, s.data.y, seed);
    return s;
}

double rel_frob(const DenseMatrix& a, const DenseMatrix& b) {
    return frobenius_distance(a, b) / frobenius_norm(b);
}

double min_eig(const DenseMatrix& s) { return sym_eig_extremes(s).min_eig; }

} // namespace

TEST_CASE("analytic Jacobian matches central differences") {
    for (const ActivationSpec& act : {softplus_activation(), tanh_activation()}) {
        const Setup s = small_setup(act);
        const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
        const DenseMatrix Jfd = finite_diff_jacobian(s.theta, s.config, s.data, 1e-5);
        CHECK(J.rows() == 6);
        CHECK(J.cols() == s.config.parameter_count());
        CHECK(rel_frob(Jfd, J) <= 1e-5);
    }
}

TEST_CASE("linear model Jacobian is exact") {
    const Setup s = small_setup(identity_activation(), 3, 5, 4, 8, 1);
    const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
    const double scale = s.config.input_scale();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t k = 0; k < 4; ++k)
                CHECK(J(i, r * 4 + k) == doctest::Approx(scale * s.theta.a[r] * s.data.X(i, k)).epsilon(1e-15));
    CHECK(rel_frob(finite_diff_jacobian(s.theta, s.config, s.data, 1e-4), J) <= 1e-10);
}

TEST_CASE("finite-difference step sweep is convex in log-log") {
    const Setup s = small_setup(softplus_activation());
    const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
    const double e4 = rel_frob(finite_diff_jacobian(s.theta, s.config, s.data, 1e-4), J);
    const double e5 = rel_frob(finite_diff_jacobian(s.theta, s.config, s.data, 1e-5), J);
    const double e6 = rel_frob(finite_diff_jacobian(s.theta, s.config, s.data, 1e-6), J);
    CHECK(std::log(e5) <= 0.5 * (std::log(e4) + std::log(e6)));
    CHECK_THROWS_AS(finite_diff_jacobian(s.theta, s.config, s.data, 1e-2), InputError);
    CHECK_THROWS_AS(finite_diff_jacobian(s.theta, s.config, s.data, 1e-8), InputError);
    // the unguarded path still evaluates, with truncation error visible
    const double e1 = rel_frob(central_differences(s.theta, s.config, s.data, 1e-1), J);
    CHECK(e1 > 1e-5);
}

TEST_CASE("NTK equals the sum of per-layer Gram blocks") {
    for (const ActivationSpec& act : {softplus_activation(), tanh_activation()}) {
        const Setup s = small_setup(act);
        const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
        const DenseMatrix JJt = multiply(J, J.transposed());
        const GramBlocks blocks = gram_blocks(s.theta, s.config, s.data);
        REQUIRE(blocks.G.size() == 3);
        DenseMatrix sum(6, 6);
        for (const DenseMatrix& G : blocks.G) {
            CHECK(G == G.transposed());
            CHECK(min_eig(G) >= -1e-9 * trace(G));
            sum = add(sum, G);
        }
        CHECK(rel_frob(sum, JJt) <= 1e-10);
        const NtkGram K = ntk(s.theta, s.config, s.data);
        CHECK(K.K == K.K.transposed());
        CHECK(rel_frob(K.K, JJt) <= 1e-10);
        CHECK(min_eig(K.K) >= min_eig(blocks.G[0]) - 1e-9 * trace(K.K));
    }
}

TEST_CASE("Gram block of the linear model") {
    const Setup s = small_setup(identity_activation(), 2, 5, 3, 8, 1);
    const GramBlocks blocks = gram_blocks(s.theta, s.config, s.data);
    const DenseMatrix XXt = gram_of_rows(s.data.X);
    const double a2 = norm2(s.theta.a) * norm2(s.theta.a);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(blocks.G[0](i, j) == doctest::Approx(s.config.c_phi / 8.0 * a2 * XXt(i, j)).epsilon(1e-13));
}

TEST_CASE("single-sample NTK is the squared gradient norm") {
    const Setup s = small_setup(softplus_activation(), 4, 1, 3, 8, 3);
    const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
    const double g2 = norm2(J.row(0)) * norm2(J.row(0));
    CHECK(ntk(s.theta, s.config, s.data).K(0, 0) == doctest::Approx(g2).epsilon(1e-13));
}

TEST_CASE("backward vectors") {
    SUBCASE("depth one") {
        const Setup s = small_setup(softplus_activation(), 1, 3, 4, 8, 1);
        const BatchForward fw = batch_forward(s.theta, s.config, s.data);
        const BackwardVectors bv = backward_vectors(s.theta, s.config, fw.caches);
        for (const auto& u : bv.u) CHECK(u[0] == s.theta.a);
    }
    SUBCASE("identity recursion") {
        const Setup s = small_setup(identity_activation(), 1, 3, 4, 8, 3);
        const BatchForward fw = batch_forward(s.theta, s.config, s.data);
        const auto u = backward_vectors(s.theta, s.config, fw.caches[0]);
        const double sc = s.config.residual_scale();
        for (std::size_t h = 3; h >= 2; --h) {
            const DenseMatrix& W = s.theta.layer(h);
            for (std::size_t k = 0; k < 8; ++k) {
                double acc = 0;
                for (std::size_t r = 0; r < 8; ++r) acc += W(r, k) * u[h - 1][r];
                CHECK(u[h - 2][k] == doctest::Approx(u[h - 1][k] + sc * acc).epsilon(1e-14));
            }
        }
    }
    SUBCASE("norm bound") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Setup s = small_setup(softplus_activation(), seed, 4, 4, 16, 4);
            const BatchForward fw = batch_forward(s.theta, s.config, s.data);
            const BackwardVectors bv = backward_vectors(s.theta, s.config, fw.caches);
            const Vector w = layer_spectral_norms(s.theta);
            double bound = norm2(s.theta.a);
            for (std::size_t l = 2; l <= 4; ++l) bound *= 1 + s.config.activation.B * s.config.residual_scale() * w[l - 1];
            for (const auto& u : bv.u) CHECK(norm2(u[0]) <= bound * (1 + 1e-12));
        }
    }
}

TEST_CASE("perturbing a layer leaves earlier layers unchanged") {
    const Setup s = small_setup(tanh_activation(), 5, 2, 4, 8, 4);
    for (std::size_t h = 1; h <= 4; ++h) {
        Theta p = s.theta;
        p.layer(h)(1, 2) += 0.37;
        const ForwardCache base = forward(s.theta, s.config, s.data.X.row(0));
        const ForwardCache moved = forward(p, s.config, s.data.X.row(0));
        for (std::size_t l = 1; l < h; ++l) CHECK(base.layer_outputs[l - 1] == moved.layer_outputs[l - 1]);
        CHECK_FALSE(base.layer_outputs[h - 1] == moved.layer_outputs[h - 1]);
    }
}

TEST_CASE("gradient blocks are rank one and scale with the readout") {
    const Setup s = small_setup(softplus_activation());
    Theta doubled = s.theta;
    for (double& v : doubled.a) v *= 2.0;
    const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
    const DenseMatrix J2 = full_jacobian(doubled, s.config, s.data);
    for (std::size_t k = 0; k < J.size(); ++k) CHECK(J2.values()[k] == 2.0 * J.values()[k]);

    const auto grads = batch_gradients(s.theta, s.config, s.data);
    for (const auto& g : grads[0]) {
        const DenseMatrix dense = g.dense();
        // second singular value of an outer product vanishes
        const auto e = sym_eigen(gram_of_rows(dense.transposed()));
        CHECK(e.values[e.values.size() - 2] <= 1e-12 * e.values.back());
    }
}

TEST_CASE("smallest singular value") {
    SUBCASE("orthonormal rows, linear model") {
        const ModelConfig c = make_config(3, 4, 8, 1, identity_activation());
        DenseMatrix X(3, 4);
        X(0, 0) = X(1, 1) = X(2, 3) = 1.0;
        const Dataset data = make_dataset(X, Vector{1, 1, -1});
        const Theta th = init_theta(c, data.y, 1);
        CHECK(sigma_min_jacobian(th, c, data) ==
              doctest::Approx(std::sqrt(c.c_phi / 8.0) * norm2(th.a)).epsilon(1e-13));
    }
    SUBCASE("duplicated rows") {
        Setup s = small_setup(softplus_activation());
        DenseMatrix X = s.data.X;
        for (std::size_t k = 0; k < 4; ++k) X(5, k) = X(0, k);
        const Dataset dup = make_dataset(X, s.data.y);
        CHECK(sigma_min_jacobian(s.theta, s.config, dup) <= 1e-8 * jacobian_spectral_norm(s.theta, s.config, dup));
    }
    SUBCASE("explicit Jacobian oracle") {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            const Setup s = small_setup(softplus_activation(), seed);
            const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
            const auto e = sym_eigen(multiply(J, J.transposed()));
            CHECK(sigma_min_jacobian(s.theta, s.config, s.data) ==
                  doctest::Approx(std::sqrt(e.values.front())).epsilon(1e-8));
            CHECK(jacobian_spectral_norm(s.theta, s.config, s.data) ==
                  doctest::Approx(spectral_norm(J, 1e-13).value).epsilon(1e-8));
        }
    }
}

TEST_CASE("explicit Jacobian respects its memory cap") {
    const Setup s = small_setup(softplus_activation());
    CHECK_THROWS_AS(full_jacobian(s.theta, s.config, s.data, 100), CapacityError);
}
