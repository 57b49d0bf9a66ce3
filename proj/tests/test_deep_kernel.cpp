#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fe/deep_kernel.hpp"
#include "fe/matrix.hpp"
#include "fe/rng.hpp"

using namespace fe;

namespace {

MlpSpec embed_spec(std::size_t embed_dim, std::size_t width = 8) {
    MlpSpec s;
    s.input_dim = 1;
    s.hidden_widths = {width};
    s.output_dim = embed_dim;
    s.n_basis = 1;
    s.activation = Activation::tanh;
    return s;
}

TaskDataset random_task(std::size_t m_eval, std::size_t m_query, std::uint64_t seed) {
    SplitMix64 rng(seed);
    TaskDataset ds;
    for (std::size_t i = 0; i < m_eval + m_query; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        ds.inputs.push_back({x});
        ds.targets.push_back({std::sin(3.0 * x)});
        if (i < m_eval) {
            ds.eval_indices.push_back(i);
        } else {
            ds.query_indices.push_back(i);
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("rbf kernel values match the closed form") {
    DeepKernelModel model(embed_spec(2), KernelKind::rbf_ard, 1e-2, 3);
    // Unit lengthscales and unit output scale at init.
    const std::vector<double> za{0.0, 0.0};
    const std::vector<double> zb{3.0, 4.0};
    CHECK(model.kernel_value(za, za) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(model.kernel_value(za, zb) == doctest::Approx(std::exp(-12.5)).epsilon(1e-12));

    // Per-dimension lengthscales (2, 0.5) and output scale 3.
    std::vector<double> p = model.flat_parameters();
    p[p.size() - 3] = std::log(2.0);
    p[p.size() - 2] = std::log(0.5);
    p[p.size() - 1] = std::log(3.0);
    model.set_flat_parameters(p);
    CHECK(model.lengthscales()[0] == doctest::Approx(2.0));
    CHECK(model.lengthscales()[1] == doctest::Approx(0.5));
    CHECK(model.output_scale() == doctest::Approx(3.0));
    const std::vector<double> zc{2.0, 1.0};
    // q = (2/2)^2 + (1/0.5)^2 = 5.
    CHECK(model.kernel_value(za, zc) == doctest::Approx(3.0 * std::exp(-2.5)).epsilon(1e-12));
    CHECK(model.kernel_value(za, za) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("rbf kernel matrix is symmetric with entries in (0, sigma^2]") {
    DeepKernelModel model(embed_spec(3), KernelKind::rbf_ard, 1e-2, 11);
    std::vector<std::vector<double>> xs;
    SplitMix64 rng(4);
    for (int i = 0; i < 25; ++i) xs.push_back({rng.uniform(-2.0, 2.0)});
    const Matrix k = model.kernel_matrix(xs, xs);
    const double s2 = model.output_scale();
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(k(i, i) == doctest::Approx(s2).epsilon(1e-14));
        for (std::size_t j = 0; j < 25; ++j) {
            CHECK(k(i, j) > 0.0);
            CHECK(k(i, j) <= s2 * (1.0 + 1e-14));
            CHECK(k(i, j) == doctest::Approx(k(j, i)).epsilon(1e-14));
        }
    }
}

TEST_CASE("linear kernel is the embedding dot product and its gram is PSD") {
    DeepKernelModel model(embed_spec(4), KernelKind::linear, 1e-2, 7);
    const std::vector<double> za{1.0, 2.0, 0.0, -1.0};
    const std::vector<double> zb{0.5, -1.0, 3.0, 2.0};
    CHECK(model.kernel_value(za, zb) == doctest::Approx(0.5 - 2.0 - 2.0).epsilon(1e-15));

    std::vector<std::vector<double>> xs;
    SplitMix64 rng(5);
    for (int i = 0; i < 20; ++i) xs.push_back({rng.uniform(-2.0, 2.0)});
    const Matrix k = model.kernel_matrix(xs, xs);
    const EigenDecomposition dec = sym_eig(k);
    CHECK(dec.eigenvalues.back() >= -1e-8 * std::fabs(dec.eigenvalues.front()));
}

TEST_CASE("ridge fit returns zero predictions for zero targets") {
    DeepKernelModel model(embed_spec(2), KernelKind::rbf_ard, 1e-2, 13);
    TaskDataset ds = random_task(10, 0, 21);
    for (auto& y : ds.targets) y[0] = 0.0;
    std::vector<std::vector<double>> queries{{0.3}, {-0.7}};
    for (double p : krr_fit_predict(model, ds, queries)) {
        CHECK(p == doctest::Approx(0.0).epsilon(1e-14));
    }
}

TEST_CASE("single-point ridge fit reduces to the scalar formula") {
    DeepKernelModel model(embed_spec(2), KernelKind::rbf_ard, 0.05, 17);
    TaskDataset ds;
    ds.inputs = {{0.4}};
    ds.targets = {{1.7}};
    ds.eval_indices = {0};
    const std::vector<std::vector<double>> queries{{-0.2}};
    const auto z1 = model.embed(ds.inputs[0]);
    const auto zq = model.embed(queries[0]);
    const double expect = model.kernel_value(zq, z1) * 1.7 /
                          (model.kernel_value(z1, z1) + 0.05);
    CHECK(krr_fit_predict(model, ds, queries)[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("vanishing ridge interpolates the eval targets") {
    DeepKernelModel model(embed_spec(2), KernelKind::rbf_ard, 1e-10, 19);
    // Short lengthscales keep the Gram well conditioned so the vanishing
    // ridge limit is visible above the solver's roundoff.
    std::vector<double> p = model.flat_parameters();
    p[p.size() - 3] = std::log(0.02);
    p[p.size() - 2] = std::log(0.02);
    model.set_flat_parameters(p);
    TaskDataset ds;
    for (int i = 0; i < 8; ++i) {
        const double x = -1.0 + 2.0 * i / 7.0;
        ds.inputs.push_back({x});
        ds.targets.push_back({std::cos(2.0 * x)});
        ds.eval_indices.push_back(static_cast<std::size_t>(i));
    }
    const std::vector<double> preds = krr_fit_predict(model, ds, ds.inputs);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i] == doctest::Approx(ds.targets[i][0]).epsilon(1e-6));
    }
}

TEST_CASE("gradient through the ridge solve matches finite differences") {
    for (KernelKind kind : {KernelKind::rbf_ard, KernelKind::linear}) {
        CAPTURE(static_cast<int>(kind));
        DeepKernelModel model(embed_spec(2, 4), kind, 0.1, 29);
        std::vector<TaskDataset> tasks{random_task(3, 3, 31)};
        auto [loss, grad] = dkl_loss_gradient(model, tasks);
        CHECK(loss > 0.0);
        std::vector<double> p = model.flat_parameters();
        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::fabs(g));
        const double h = 1e-6;
        for (std::size_t i = 0; i < p.size(); ++i) {
            std::vector<double> pp = p;
            pp[i] = p[i] + h;
            model.set_flat_parameters(pp);
            const double up = dkl_loss_gradient(model, tasks).first;
            pp[i] = p[i] - h;
            model.set_flat_parameters(pp);
            const double dn = dkl_loss_gradient(model, tasks).first;
            const double fd = (up - dn) / (2.0 * h);
            CHECK(std::fabs(grad[i] - fd) <= 1e-3 * std::max(gmax, 1e-8));
        }
        model.set_flat_parameters(p);
    }
}

TEST_CASE("short training runs are deterministic and reduce the loss") {
    std::vector<TaskDataset> tasks{random_task(8, 12, 41), random_task(8, 12, 43)};
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.learning_rate = 1e-2;
    DeepKernelModel init(embed_spec(2, 8), KernelKind::rbf_ard, 1e-2, 47);
    auto [m1, r1] = dkl_train(init, tasks, cfg);
    auto [m2, r2] = dkl_train(init, tasks, cfg);
    REQUIRE(r1.loss_curve.size() == 40);
    CHECK(r1.loss_curve == r2.loss_curve);
    CHECK(m1.flat_parameters() == m2.flat_parameters());
    CHECK(r1.loss_curve.back() < r1.loss_curve.front());
    CHECK(r1.step_wall_seconds.size() == r1.loss_curve.size());
}

TEST_CASE("gram similarity is one for identical or rescaled matrices") {
    SplitMix64 rng(53);
    Matrix k(12, 12);
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = i; j < 12; ++j) k(i, j) = k(j, i) = rng.uniform(-1.0, 1.0);
    CHECK(gram_compare(k, k).correlation == doctest::Approx(1.0).epsilon(1e-12));
    Matrix k5 = k;
    for (double& v : k5.values()) v *= 5.0;
    CHECK(gram_compare(k, k5).correlation == doctest::Approx(1.0).epsilon(1e-12));
    Matrix wrong(11, 11);
    CHECK_THROWS(gram_compare(k, wrong));
}

TEST_CASE("gram similarity is weak against an independent random matrix") {
    SplitMix64 rng(59);
    Matrix a(24, 24), b(24, 24);
    for (std::size_t i = 0; i < 24; ++i)
        for (std::size_t j = i; j < 24; ++j) {
            a(i, j) = a(j, i) = rng.uniform(-1.0, 1.0);
            b(i, j) = b(j, i) = rng.uniform(-1.0, 1.0);
        }
    CHECK(std::fabs(gram_compare(a, b).correlation) < 0.5);
}
