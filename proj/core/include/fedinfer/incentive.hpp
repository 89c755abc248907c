#pragma once

#include <string>
#include <vector>

#include "fedinfer/tensor.hpp"

namespace fedinfer {

// Accuracy-proportional oracle allocation: m_k = a_k / sum_j a_j.
struct MeritVector {
    std::vector<double> m;
};

struct RewardVector {
    std::vector<double> r;
    std::string scheme;
    bool degenerate = false; // uniform fallback happened
};

// Per-model probability outputs on an unlabeled evaluation batch, plus the
// optional ensemble predictions / test accuracies the schemes need.
struct EvaluationBatch {
    std::vector<RealTensor> probs;        // one [S x C] tensor per model
    std::vector<int> ensemble_predictions; // size S (agreement scheme)
    std::vector<double> accuracies;        // size K (merit oracle)
};

MeritVector ideal_merit(const std::vector<double>& accuracies);
RewardVector reward_uniform(int k);
// r_k proportional to sum_n exp(-H_{k,n}), natural-log entropy.
RewardVector reward_confidence(const EvaluationBatch& batch);
// r_k = A_k / sum_j A_j, A_k = #samples whose argmax matches the ensemble.
RewardVector reward_agreement(const EvaluationBatch& batch);

// Reward fairness: 1 - 0.5 * ||r - m||_1, in [0, 1], 1 iff r = m.
double fairness(const RewardVector& r, const MeritVector& m);

// CSV row: seed,alpha,K,scheme,fairness,r_1..r_K,m_1..m_K
std::string fairness_csv_header(int k);
std::string fairness_csv_row(std::uint64_t seed, double alpha, int k, const std::string& scheme,
                             double fairness_value, const RewardVector& r,
                             const MeritVector& m);

} // namespace fedinfer
