#include "fedinfer/incentive.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>

#include "fedinfer/errors.hpp"
#include "fedinfer/nn.hpp"

namespace fedinfer {

MeritVector ideal_merit(const std::vector<double>& accuracies) {
    double sum = 0.0;
    for (double a : accuracies) {
        require(a >= 0.0 && a <= 1.0, Err::bad_config, "accuracy outside [0,1]");
        sum += a;
    }
    require(sum > 0.0, Err::all_zero_accuracy, "all accuracies are zero");
    MeritVector mv;
    mv.m.resize(accuracies.size());
    for (std::size_t i = 0; i < accuracies.size(); ++i) mv.m[i] = accuracies[i] / sum;
    return mv;
}

RewardVector reward_uniform(int k) {
    require(k >= 1, Err::bad_config, "need at least one party");
    RewardVector rv;
    rv.scheme = "uniform";
    rv.r.assign(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
    return rv;
}

RewardVector reward_confidence(const EvaluationBatch& batch) {
    require(!batch.probs.empty(), Err::bad_config, "empty evaluation batch");
    RewardVector rv;
    rv.scheme = "confidence";
    rv.r.resize(batch.probs.size());
    double total = 0.0;
    for (std::size_t k = 0; k < batch.probs.size(); ++k) {
        const auto& p = batch.probs[k];
        double score = 0.0;
        for (std::size_t n = 0; n < p.rows(); ++n) {
            double sum = 0.0, h = 0.0;
            for (std::size_t c = 0; c < p.cols(); ++c) {
                const double v = p.at(n, c);
                require(v >= -1e-9, Err::invalid_distribution, "negative probability");
                sum += v;
                if (v > 0.0) h -= v * std::log(v);
            }
            require(std::abs(sum - 1.0) <= 1e-6, Err::invalid_distribution,
                    "probabilities must sum to 1");
            score += std::exp(-h);
        }
        rv.r[k] = score;
        total += score;
    }
    for (auto& v : rv.r) v /= total;
    return rv;
}

RewardVector reward_agreement(const EvaluationBatch& batch) {
    require(!batch.probs.empty(), Err::bad_config, "empty evaluation batch");
    require(!batch.ensemble_predictions.empty(), Err::bad_config,
            "agreement rewards need ensemble predictions");
    RewardVector rv;
    rv.scheme = "agreement";
    rv.r.resize(batch.probs.size());
    double total = 0.0;
    for (std::size_t k = 0; k < batch.probs.size(); ++k) {
        const auto& p = batch.probs[k];
        require(p.rows() == batch.ensemble_predictions.size(), Err::dimension_mismatch,
                "batch size mismatch");
        double agree = 0.0;
        for (std::size_t n = 0; n < p.rows(); ++n)
            if (argmax_row(p, n) == batch.ensemble_predictions[n]) agree += 1.0;
        rv.r[k] = agree;
        total += agree;
    }
    if (total <= 0.0) {
        std::cerr << "[incentive] no model agrees with the ensemble anywhere, "
                     "falling back to uniform rewards\n";
        auto uni = reward_uniform(static_cast<int>(batch.probs.size()));
        uni.scheme = "agreement";
        uni.degenerate = true;
        return uni;
    }
    for (auto& v : rv.r) v /= total;
    return rv;
}

double fairness(const RewardVector& r, const MeritVector& m) {
    require(r.r.size() == m.m.size(), Err::dimension_mismatch,
            "reward/merit dimension mismatch");
    double l1 = 0.0;
    for (std::size_t i = 0; i < r.r.size(); ++i) l1 += std::abs(r.r[i] - m.m[i]);
    return 1.0 - 0.5 * l1;
}

std::string fairness_csv_header(int k) {
    std::string h = "seed,alpha,clients,scheme,fairness";
    for (int i = 1; i <= k; ++i) h += ",r_" + std::to_string(i);
    for (int i = 1; i <= k; ++i) h += ",m_" + std::to_string(i);
    return h;
}

std::string fairness_csv_row(std::uint64_t seed, double alpha, int k, const std::string& scheme,
                             double fairness_value, const RewardVector& r,
                             const MeritVector& m) {
    char buf[64];
    std::string row = std::to_string(seed);
    std::snprintf(buf, sizeof(buf), ",%g,%d,%s,%.6f", alpha, k, scheme.c_str(), fairness_value);
    row += buf;
    for (double v : r.r) {
        std::snprintf(buf, sizeof(buf), ",%.6f", v);
        row += buf;
    }
    for (double v : m.m) {
        std::snprintf(buf, sizeof(buf), ",%.6f", v);
        row += buf;
    }
    return row;
}

} // namespace fedinfer
