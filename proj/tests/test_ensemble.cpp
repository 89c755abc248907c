#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fedinfer/ensemble.hpp"
#include "fedinfer/fixedpoint.hpp"
#include "test_helpers.hpp"

using namespace fedinfer;

namespace {
constexpr int kF = 16;
}

TEST_SUITE("ensemble") {

TEST_CASE("hard vote: plurality with lowest-index ties") {
    CHECK(hard_vote({2, 2, 7}) == 2);
    CHECK(hard_vote({1, 3}) == 1);
    CHECK(hard_vote({5}) == 5);

    // brute-force counting oracle
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> cls(0, 5);
    for (int t = 0; t < 500; ++t) {
        std::vector<int> votes(7);
        for (auto& v : votes) v = cls(rng);
        int counts[6] = {0};
        for (int v : votes) ++counts[v];
        int best = 0;
        for (int c = 1; c < 6; ++c)
            if (counts[c] > counts[best]) best = c;
        CHECK(hard_vote(votes) == best);
    }
}

TEST_CASE("entropy weights: closed forms") {
    std::vector<double> uniform10(10, 0.1);
    std::vector<double> onehot10(10, 0.0);
    onehot10[3] = 1.0;

    auto symmetric = entropy_weights({uniform10, uniform10}, 1.0);
    CHECK(symmetric.w[0] == doctest::Approx(0.5).epsilon(1e-12));

    // one-hot (H=0) vs uniform (H=ln 10) at beta=1: e^0 / (e^0 + e^-ln10) = 10/11
    auto w = entropy_weights({onehot10, uniform10}, 1.0);
    CHECK(std::abs(w.w[0] - 10.0 / 11.0) <= 1e-9);
    CHECK(std::abs(w.w[1] - 1.0 / 11.0) <= 1e-9);

    // beta -> 0 limit gives uniform weights
    auto w0 = entropy_weights({onehot10, uniform10}, 1e-12);
    CHECK(w0.w[0] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("entropy weights: permutation properties") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    auto random_dist = [&](int c) {
        std::vector<double> p(static_cast<std::size_t>(c));
        double sum = 0.0;
        for (auto& v : p) {
            v = dist(rng);
            sum += v;
        }
        for (auto& v : p) v /= sum;
        return p;
    };
    auto p1 = random_dist(6), p2 = random_dist(6), p3 = random_dist(6);
    auto w = entropy_weights({p1, p2, p3}, 1.5);

    // relabeling classes inside one distribution leaves entropy unchanged
    auto p1_shuffled = p1;
    std::reverse(p1_shuffled.begin(), p1_shuffled.end());
    auto w_relabel = entropy_weights({p1_shuffled, p2, p3}, 1.5);
    for (int i = 0; i < 3; ++i)
        CHECK(w.w[static_cast<std::size_t>(i)] ==
              doctest::Approx(w_relabel.w[static_cast<std::size_t>(i)]).epsilon(1e-12));

    // permuting models permutes weights
    auto w_perm = entropy_weights({p3, p1, p2}, 1.5);
    CHECK(w_perm.w[1] == doctest::Approx(w.w[0]).epsilon(1e-12));
    CHECK(w_perm.w[2] == doctest::Approx(w.w[1]).epsilon(1e-12));
    CHECK(w_perm.w[0] == doctest::Approx(w.w[2]).epsilon(1e-12));
}

TEST_CASE("entropy weights reject invalid distributions") {
    CHECK_THROWS_AS(entropy_weights({{0.5, 0.2}}, 1.0), Error);
}

TEST_CASE("spectral weights: degenerate and symmetric cases") {
    WeightingConfig cfg;
    RealTensor constant_rows({2, 4}, {0.5, 0.5, 0.5, 0.5, 0.7, 0.7, 0.7, 0.7});
    auto w = spectral_weights(constant_rows, cfg);
    CHECK(w.degenerate);
    CHECK(w.w[0] == doctest::Approx(0.5));

    RealTensor correlated({2, 4}, {0.1, 0.9, 0.4, 0.6, 0.1, 0.9, 0.4, 0.6});
    auto wc = spectral_weights(correlated, cfg);
    CHECK(!wc.degenerate);
    CHECK(wc.w[0] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("spectral weights match a dense eigensolver oracle") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    WeightingConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        RealTensor conf({5, 200});
        for (auto& v : conf.data) v = 0.5 + 0.2 * gauss(rng);
        auto w = spectral_weights(conf, cfg);

        // oracle: full eigendecomposition of the same covariance
        RealTensor centered = conf;
        for (int i = 0; i < 5; ++i) {
            double mean = 0.0;
            for (int j = 0; j < 200; ++j) mean += centered.at(i, j);
            mean /= 200.0;
            for (int j = 0; j < 200; ++j) centered.at(i, j) -= mean;
        }
        Eigen::MatrixXd cov(5, 5);
        for (int i = 0; i < 5; ++i)
            for (int k = 0; k < 5; ++k) {
                double acc = 0.0;
                for (int j = 0; j < 200; ++j)
                    acc += centered.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                           centered.at(static_cast<std::size_t>(k), static_cast<std::size_t>(j));
                cov(i, k) = acc / 199.0;
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        Eigen::VectorXd principal = solver.eigenvectors().col(4); // largest eigenvalue

        // compare |v| directions via cosine similarity
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int i = 0; i < 5; ++i) {
            const double a = w.w[static_cast<std::size_t>(i)];
            const double b = std::abs(principal(i));
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        CHECK(dot / std::sqrt(na * nb) >= 0.999);
    }
}

TEST_CASE("spectral weights are invariant to shifting a confidence row") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    WeightingConfig cfg;
    RealTensor conf({4, 50});
    for (auto& v : conf.data) v = 0.5 + 0.1 * gauss(rng);
    auto w1 = spectral_weights(conf, cfg);
    for (int j = 0; j < 50; ++j) conf.at(2, static_cast<std::size_t>(j)) += 0.25;
    auto w2 = spectral_weights(conf, cfg);
    for (int i = 0; i < 4; ++i)
        CHECK(w1.w[static_cast<std::size_t>(i)] ==
              doctest::Approx(w2.w[static_cast<std::size_t>(i)]).epsilon(1e-9));
}

TEST_CASE("tta weights: closed form and symmetry") {
    auto w = tta_weights_from_instability({0.0, std::log(3.0)}, 1.0);
    CHECK(std::abs(w.w[0] - 0.25) <= 1e-9);
    CHECK(std::abs(w.w[1] - 0.75) <= 1e-9);

    auto u = tta_weights_from_instability({0.7, 0.7, 0.7}, 2.0);
    for (double v : u.w) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("instability favors larger deviation") {
    std::vector<double> base = {1.0, 2.0, 3.0};
    CHECK(logit_instability(base, {{1.0, 2.0, 3.0}}) == doctest::Approx(0.0));
    CHECK(logit_instability(base, {{2.0, 2.0, 3.0}, {1.0, 2.0, 4.0}}) ==
          doctest::Approx(1.0));
}

TEST_CASE("rotation by zero degrees is the identity") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    RealTensor img({8, 8});
    for (auto& v : img.data) v = dist(rng);
    auto rot = rotate_image(img, 0.0);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(rot.data[i] - img.data[i]) <= 1e-9);
}

TEST_CASE("rotation keeps values in range and moves mass") {
    RealTensor img({8, 8});
    img.at(2, 2) = 1.0;
    auto rot = rotate_image(img, 10.0);
    double total = 0.0;
    for (double v : rot.data) {
        CHECK(v >= -1e-12);
        CHECK(v <= 1.0 + 1e-12);
        total += v;
    }
    CHECK(total > 0.5); // interpolation keeps most of the mass
    CHECK_THROWS_AS(rotate_image(RealTensor({64}), 5.0), Error);
}

TEST_CASE("secure aggregation: identity, cancellation, oracle") {
    Rng rng(11);
    const int parties = 3;

    // N=1, w=[1]: output equals the single model's shares
    RealTensor y({1, 4}, {0.1, 0.2, 0.3, 0.4});
    auto ye = encode(y, kF);
    auto shares = share(ye, parties, rng, kF);
    EnsembleWeights w1 = uniform_weights(1, Scheme::soft_uniform);
    for (int p = 0; p < parties; ++p) {
        auto agg = aggregate_secure({shares[static_cast<std::size_t>(p)]}, w1, kF);
        CHECK(agg.frac_scale == 2 * kF);
    }
    std::vector<ShareTensor> aggs;
    for (int p = 0; p < parties; ++p)
        aggs.push_back(aggregate_secure({shares[static_cast<std::size_t>(p)]}, w1, kF));
    auto got = decode(reconstruct(aggs), 2 * kF);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(got.data[i] == doctest::Approx(y.data[i]).epsilon(1e-4));

    // N=2, w=[0.5,0.5], y2 = -y1: cancels to zero
    auto yneg = ye;
    for (auto& v : yneg.data) v = ~v + 1;
    auto shares_neg = share(yneg, parties, rng, kF);
    EnsembleWeights w2 = uniform_weights(2, Scheme::soft_uniform);
    std::vector<ShareTensor> agg2;
    for (int p = 0; p < parties; ++p)
        agg2.push_back(aggregate_secure(
            {shares[static_cast<std::size_t>(p)], shares_neg[static_cast<std::size_t>(p)]}, w2,
            kF));
    auto zero = decode(reconstruct(agg2), 2 * kF);
    for (double v : zero.data) CHECK(std::abs(v) <= 1e-9);
}

TEST_CASE("secure aggregation equals the plaintext ring computation exactly") {
    Rng rng(13);
    std::mt19937_64 vrng(17);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const int parties = 3;

    std::vector<RingTensor> plain;
    std::vector<std::vector<ShareTensor>> model_shares;
    for (int i = 0; i < 3; ++i) {
        RealTensor p({2, 5});
        double sum = 0.0;
        for (auto& v : p.data) {
            v = dist(vrng);
            sum += v;
        }
        for (auto& v : p.data) v /= sum;
        plain.push_back(encode(p, kF));
        model_shares.push_back(share(plain.back(), parties, rng, kF));
    }
    EnsembleWeights w;
    w.w = {0.2, 0.5, 0.3};
    w.scheme = Scheme::entropy;

    std::vector<ShareTensor> aggs;
    for (int p = 0; p < parties; ++p) {
        std::vector<ShareTensor> mine;
        for (int i = 0; i < 3; ++i)
            mine.push_back(model_shares[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)]);
        aggs.push_back(aggregate_secure(mine, w, kF));
    }
    RingTensor got = reconstruct(aggs);

    // plaintext oracle in the ring: sum of enc(w_i) * y_i
    RingTensor want(plain[0].shape);
    for (int i = 0; i < 3; ++i)
        want = ring_add(want, ring_scale(plain[static_cast<std::size_t>(i)],
                                         encode_scalar(w.w[static_cast<std::size_t>(i)], kF)));
    CHECK(got.data == want.data);

    // and decodes to the real weighted sum within fixed-point tolerance
    auto real = decode(got, 2 * kF);
    for (std::size_t q = 0; q < 2; ++q)
        for (std::size_t j = 0; j < 5; ++j) {
            double acc = 0.0;
            for (int i = 0; i < 3; ++i)
                acc += w.w[static_cast<std::size_t>(i)] *
                       decode(plain[static_cast<std::size_t>(i)], kF).at(q, j);
            CHECK(std::abs(real.at(q, j) - acc) <= std::ldexp(1.0, -kF + 2));
        }
}

TEST_CASE("aggregation validates its weights") {
    Rng rng(19);
    auto shares = share(encode(RealTensor({1, 2}), kF), 2, rng, kF);
    EnsembleWeights bad;
    bad.w = {0.7, 0.7};
    CHECK_THROWS_AS(aggregate_secure({shares[0], shares[0]}, bad, kF), Error);
}

TEST_CASE("single model: every scheme returns that model's prediction") {
    auto data = make_digit_grid(40, 0.15, 23);
    auto m = build_custom_model({64, 24, 10});
    init_weights(m, 3);
    TrainConfig tc;
    tc.epochs = 6;
    tc.seed = 7;
    m = train(m, data, tc);

    auto single = forward(m, data.inputs);
    WeightingConfig cfg;
    for (Scheme s : all_schemes()) {
        auto res = ensemble_predict_plain({m}, data, s, cfg);
        for (std::size_t q = 0; q < data.size(); ++q)
            CHECK(res.predictions[q] == argmax_row(single, q));
    }
}

TEST_CASE("all schemes produce simplex weights on random data") {
    auto data = make_digit_grid(30, 0.25, 29);
    std::vector<ModelSpec> models;
    for (int i = 0; i < 3; ++i) {
        auto m = build_custom_model({64, 16, 10});
        init_weights(m, 100 + static_cast<std::uint64_t>(i));
        models.push_back(m);
    }
    WeightingConfig cfg;
    for (Scheme s : all_schemes()) {
        auto res = ensemble_predict_plain(models, data, s, cfg);
        for (const auto& w : res.weights_per_query) {
            double sum = 0.0;
            for (double v : w.w) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

} // TEST_SUITE
