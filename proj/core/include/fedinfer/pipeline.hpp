#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedinfer/ensemble.hpp"
#include "fedinfer/escrow.hpp"
#include "fedinfer/secure_nn.hpp"
#include "fedinfer/transport.hpp"

namespace fedinfer {

// Workflow phases of one collaborative inference job.
enum class Phase : int {
    input_sharing = 1,
    escrow_init = 2,
    model_execution = 3,
    aggregation = 4,
    reconstruction = 5,
};

struct AbortInjection {
    bool enabled = false;
    int phase = 0; // 1..5
    int party = 0;
};

struct InferenceJobConfig {
    int parties = 3;
    RingParams ring;
    ApproxConfig approx;
    Scheme scheme = Scheme::soft_uniform;
    WeightingConfig weighting;
    std::string preset = "intra_zone";
    std::uint64_t seed = 1;
    std::uint64_t deposit = 90;
    AbortInjection abort;
};

struct InferenceResult {
    bool aborted = false;
    int abort_phase = 0;
    std::vector<int> predictions;      // empty when aborted
    RealTensor aggregated;             // decoded ensemble output
    std::vector<EnsembleWeights> weights; // revealed weights (when the scheme has them)
    RoundLedger ledger;
    std::string job_id;
    bool job_created = false;
    bool job_settled = false;
    std::uint64_t escrowed_deposit = 0;
};

// End-to-end protected inference: share the query batch, escrow the fee,
// run the protected forward passes and secure aggregation across K logical
// party threads, reconstruct at the client and settle against signatures.
//
// When escrow/keys are null an internal throwaway ledger is used.
InferenceResult run_secure_inference(const InferenceJobConfig& cfg,
                                     const std::vector<ModelSpec>& models,
                                     const LabeledDataset& queries,
                                     EscrowLedger* escrow = nullptr,
                                     KeyRegistry* keys = nullptr);

// Single-party baseline: the same fixed-point arithmetic with no
// communication (rounds = 0), plaintext weighting.
InferenceResult run_single_party_inference(const InferenceJobConfig& cfg,
                                           const std::vector<ModelSpec>& models,
                                           const LabeledDataset& queries,
                                           EscrowLedger* escrow = nullptr,
                                           KeyRegistry* keys = nullptr);

// Fixed-point (non-shared) forward pass used by the 1P path and tests:
// ring matmul + exact local truncation + sign-tested ReLU.
RealTensor fixedpoint_forward(const ModelSpec& m, const RealTensor& x, const RingParams& ring);

} // namespace fedinfer
