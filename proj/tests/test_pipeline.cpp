#include <cmath>

#include "doctest.h"
#include "fedinfer/pipeline.hpp"

using namespace fedinfer;

namespace {

struct Setup {
    std::vector<ModelSpec> models;
    LabeledDataset queries;
    LabeledDataset train_data;

    explicit Setup(int n_models = 3, std::size_t n_queries = 6) {
        train_data = make_digit_grid(400, 0.2, 7);
        for (int i = 0; i < n_models; ++i) {
            auto m = build_custom_model({64, 16, 10});
            init_weights(m, 50 + static_cast<std::uint64_t>(i));
            TrainConfig tc;
            tc.epochs = 4;
            tc.seed = 60 + static_cast<std::uint64_t>(i);
            models.push_back(train(m, train_data, tc));
        }
        queries = make_digit_grid(n_queries, 0.2, 17);
    }
};

InferenceJobConfig base_config(Scheme scheme) {
    InferenceJobConfig cfg;
    cfg.parties = 3;
    cfg.scheme = scheme;
    cfg.preset = "intra_zone";
    cfg.seed = 5;
    cfg.deposit = 90;
    return cfg;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("end-to-end soft voting settles the job and matches plaintext") {
    Setup s;
    EscrowLedger escrow;
    KeyRegistry keys;
    auto cfg = base_config(Scheme::soft_uniform);
    auto res = run_secure_inference(cfg, s.models, s.queries, &escrow, &keys);
    REQUIRE(!res.aborted);
    CHECK(res.job_settled);
    CHECK(res.ledger.rounds > 0);
    CHECK(escrow.job(res.job_id)->completed);
    CHECK(escrow.balance("party_0") == 30);

    auto plain = ensemble_predict_plain(s.models, s.queries, Scheme::soft_uniform, {});
    int agree = 0;
    for (std::size_t q = 0; q < s.queries.size(); ++q)
        if (plain.predictions[q] == res.predictions[q]) ++agree;
    CHECK(agree == static_cast<int>(s.queries.size()));
}

TEST_CASE("every scheme runs end to end and agrees with its plaintext reference") {
    Setup s;
    for (Scheme scheme : all_schemes()) {
        CAPTURE(scheme_name(scheme));
        auto cfg = base_config(scheme);
        auto res = run_secure_inference(cfg, s.models, s.queries);
        REQUIRE(!res.aborted);
        auto plain = ensemble_predict_plain(s.models, s.queries, scheme, cfg.weighting);
        int agree = 0;
        for (std::size_t q = 0; q < s.queries.size(); ++q)
            if (plain.predictions[q] == res.predictions[q]) ++agree;
        // approximation slack: allow one divergent query
        CHECK(agree >= static_cast<int>(s.queries.size()) - 1);
    }
}

TEST_CASE("single-party path runs without communication and matches plaintext") {
    Setup s;
    auto cfg = base_config(Scheme::soft_uniform);
    cfg.parties = 1;
    EscrowLedger escrow;
    auto res = run_single_party_inference(cfg, s.models, s.queries, &escrow);
    CHECK(res.job_settled);
    CHECK(res.ledger.rounds == 0);
    auto plain = ensemble_predict_plain(s.models, s.queries, Scheme::soft_uniform, {});
    for (std::size_t q = 0; q < s.queries.size(); ++q)
        CHECK(res.predictions[q] == plain.predictions[q]);
}

TEST_CASE("abort injection at any phase leaves no output and an open job") {
    Setup s(2, 4);
    for (int phase = 1; phase <= 5; ++phase) {
        CAPTURE(phase);
        EscrowLedger escrow;
        KeyRegistry keys;
        auto cfg = base_config(Scheme::soft_uniform);
        cfg.abort.enabled = true;
        cfg.abort.phase = phase;
        cfg.abort.party = phase % cfg.parties;
        auto res = run_secure_inference(cfg, s.models, s.queries, &escrow, &keys);
        CHECK(res.aborted);
        CHECK(res.predictions.empty());
        CHECK(!res.job_settled);
        if (res.job_created) {
            CHECK(!escrow.job(res.job_id)->completed);
            CHECK(escrow.escrow_pool() == cfg.deposit);
        }
        // fail-stop: the deposit is never released to the parties
        CHECK(escrow.balance("party_0") == 0);
    }
}

TEST_CASE("scheme cost ordering on the simulated ledger") {
    Setup s(3, 4);
    std::vector<Scheme> ordering = {Scheme::soft_uniform, Scheme::entropy, Scheme::spectral,
                                    Scheme::tta};
    std::vector<std::uint64_t> rounds, bytes;
    for (Scheme scheme : ordering) {
        auto cfg = base_config(scheme);
        auto res = run_secure_inference(cfg, s.models, s.queries);
        REQUIRE(!res.aborted);
        rounds.push_back(res.ledger.rounds);
        bytes.push_back(res.ledger.bytes_total());
    }
    for (std::size_t i = 0; i + 1 < rounds.size(); ++i) {
        CAPTURE(i);
        CHECK(rounds[i] < rounds[i + 1]);
        CHECK(bytes[i] < bytes[i + 1]);
    }
}

TEST_CASE("fixed-point forward stays close to the double forward") {
    Setup s(1, 8);
    auto fx = fixedpoint_forward(s.models[0], s.queries.inputs, RingParams{});
    auto fp = forward(s.models[0], s.queries.inputs);
    for (std::size_t i = 0; i < fx.numel(); ++i)
        CHECK(std::abs(fx.data[i] - fp.data[i]) <= 1e-2);
}

} // TEST_SUITE

TEST_SUITE("pipeline_agreement") {

TEST_CASE("secure and plaintext pipelines agree on at least 98% of 200 queries") {
    Setup s(3, 200);
    for (Scheme scheme : {Scheme::soft_uniform, Scheme::hard}) {
        CAPTURE(scheme_name(scheme));
        auto cfg = base_config(scheme);
        auto res = run_secure_inference(cfg, s.models, s.queries);
        REQUIRE(!res.aborted);
        auto plain = ensemble_predict_plain(s.models, s.queries, scheme, cfg.weighting);
        int agree = 0;
        for (std::size_t q = 0; q < s.queries.size(); ++q)
            if (plain.predictions[q] == res.predictions[q]) ++agree;
        CHECK(agree >= 196);
    }
}

} // TEST_SUITE
