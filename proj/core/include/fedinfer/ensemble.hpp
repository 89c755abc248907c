#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedinfer/nn.hpp"
#include "fedinfer/secret_sharing.hpp"

namespace fedinfer {

enum class Scheme { hard, soft_uniform, entropy, spectral, tta };

Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);
const std::vector<Scheme>& all_schemes();

// Normalized per-model aggregation weights.
struct EnsembleWeights {
    std::vector<double> w;
    Scheme scheme = Scheme::soft_uniform;
    bool per_query = false;
    bool degenerate = false; // a fallback to uniform happened

    void check() const;
};

struct WeightingConfig {
    double beta = 1.0;               // entropy sharpness
    double gamma = 1.0;              // tta sharpness
    int tta_views = 2;               // T
    double rotation_range_deg = 10.0;
    std::size_t calibration_size = 32; // S (spectral)
    double power_iter_tol = 1e-9;
    int power_iter_max = 1000;
    std::uint64_t seed = 0; // run-level seed for augmentation angles
};

EnsembleWeights uniform_weights(std::size_t n, Scheme scheme);

// Plurality vote, ties broken by lowest class index.
int hard_vote(const std::vector<int>& votes);

// w_i = exp(-beta H_i) / sum_j exp(-beta H_j), H = Shannon entropy (nats).
EnsembleWeights entropy_weights(const std::vector<std::vector<double>>& probs, double beta);

// Principal-eigenvector weights from the covariance of centered per-model
// confidence rows (N x S). Constant rows degenerate to uniform with a warning.
EnsembleWeights spectral_weights(const RealTensor& confidences, const WeightingConfig& cfg);

// w_i = exp(gamma d_i) / sum_j exp(gamma d_j): larger instability, larger weight.
EnsembleWeights tta_weights_from_instability(const std::vector<double>& instability,
                                             double gamma);

// Mean L2 deviation of augmented-view logits from the base view.
double logit_instability(const std::vector<double>& base,
                         const std::vector<std::vector<double>>& views);

// Bilinear rotation about the image center, zero padding outside.
RealTensor rotate_image(const RealTensor& image, double degrees); // [h x w x c] or [h x w]

// Draw T rotation angles from the run-level seed.
std::vector<double> tta_angles(const WeightingConfig& cfg, std::uint64_t query_index);

// Weighted sum of N shared predictions with public weights: zero rounds.
// Weights are encoded at ring precision f; the result scale rises by f and
// is exact in the ring (truncation deferred to decode).
ShareTensor aggregate_secure(const std::vector<ShareTensor>& y_shares,
                             const EnsembleWeights& weights, int frac_bits);

// Plaintext reference pipeline: per-query predictions of the ensemble.
struct PlainEnsembleResult {
    std::vector<int> predictions;
    std::vector<EnsembleWeights> weights_per_query; // one entry when static
    RealTensor aggregated;                          // [n x C] combined output
};

// Scheme math on precomputed base logits; forward_fn supplies augmented-view
// logits for TTA (so the same code serves the double and fixed-point paths).
using ForwardFn = std::function<RealTensor(std::size_t model, const RealTensor& batch)>;
PlainEnsembleResult ensemble_aggregate_outputs(const std::vector<RealTensor>& base_logits,
                                               const ForwardFn& forward_fn,
                                               const LabeledDataset& queries, Scheme scheme,
                                               const WeightingConfig& cfg);

PlainEnsembleResult ensemble_predict_plain(const std::vector<ModelSpec>& models,
                                           const LabeledDataset& queries, Scheme scheme,
                                           const WeightingConfig& cfg);

} // namespace fedinfer
