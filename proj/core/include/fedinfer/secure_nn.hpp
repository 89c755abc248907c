#pragma once

#include <string>
#include <vector>

#include "fedinfer/mpc.hpp"
#include "fedinfer/nn.hpp"

namespace fedinfer {

// Iteration counts and domains of the MPC-friendly approximation kernels.
//
// exp uses the limit approximation (1 + x/2^n)^(2^n); reciprocal uses Newton
// iterations with the exp-based initial guess 3*exp(0.5 - s) + 0.003; log
// uses Householder iterations around y <- y - sum_k h^k/k, h = 1 - x*e^-y.
struct ApproxConfig {
    int exp_iterations = 12;
    int reciprocal_newton_iters = 10;
    int log_householder_iters = 2;
    double input_clamp_lo = -8.0;
    double input_clamp_hi = 8.0;

    int kernel_frac_bits = 24; // softmax internal precision
    int log_frac_bits = 20;    // log/entropy internal precision
    int householder_order = 8;

    void validate() const {
        require(exp_iterations >= 1 && reciprocal_newton_iters >= 1 &&
                    log_householder_iters >= 1,
                Err::bad_config, "approx iteration counts must be >= 1");
        require(input_clamp_lo < input_clamp_hi, Err::bad_config, "bad clamp range");
    }
};

// One party's view of a secret-shared model: layer structure is public,
// weights and biases are additive shares. Biases are encoded at twice the
// weight precision so they align with matmul outputs without rescaling.
struct ProtectedModelParty {
    std::vector<LayerSpec> layers;
    std::vector<ShareTensor> weights;
    std::vector<ShareTensor> biases;
};

// Simulation container holding every party's view.
struct ProtectedModel {
    std::vector<LayerSpec> layers;
    int parties = 0;
    std::vector<ProtectedModelParty> views;
};

// Secret-share every weight and bias of a model; no party view contains the
// plaintext. Throws InvalidPartyCount for parties < 2.
ProtectedModel provision(const ModelSpec& m, int parties, Rng& rng, const RingParams& params);

// Reassemble the plaintext model from all party views (test/client side).
ModelSpec reconstruct_model(const ProtectedModel& pm, const RingParams& params);

// One share file per party, secretsharing wire format (W then b per layer).
void save_protected_model(const std::string& dir, const ProtectedModel& pm,
                          const RingParams& params);
ProtectedModel load_protected_model(const std::string& dir, int parties,
                                    const RingParams& params);

// Protected forward pass: 1 round per FC layer, ell+1 rounds per ReLU (the
// ReLU comparison's masked opening also rescales the preceding product back
// to precision f). Returns logit shares at precision 2f.
ShareTensor secure_forward(PartyContext& ctx, const ProtectedModelParty& pm,
                           const ShareTensor& x);

// Local share helpers (zero rounds).
ShareTensor row_sum_shares(const ShareTensor& t);                  // [n x c] -> [n]
ShareTensor broadcast_col(const ShareTensor& v, std::size_t cols); // [n] -> [n x c]
ShareTensor add_bias_rows_shares(const ShareTensor& h, const ShareTensor& b);
ShareTensor scale_up(const ShareTensor& x, int target_scale);

// Change precision, one statistical-masking round.
ShareTensor rescale_to(PartyContext& ctx, const ShareTensor& x, int target_scale,
                       int magnitude_bits);

// exp(u) for u <= max_input (value bound needed to size the rescale masks).
ShareTensor secure_exp(PartyContext& ctx, const ShareTensor& u, double max_input,
                       const ApproxConfig& cfg);
// 1/s for s in ~[2^-9, 64].
ShareTensor secure_reciprocal(PartyContext& ctx, const ShareTensor& s, const ApproxConfig& cfg);
// log(x) for x in [2^-10, ~1.5].
ShareTensor secure_log(PartyContext& ctx, const ShareTensor& x, const ApproxConfig& cfg);

// Row-wise softmax of logit shares: clamp into the configured range, subtract
// the secure row maximum, limit-exp, Newton reciprocal of the row sum. Output
// at out_scale (default: ring frac_bits).
ShareTensor secure_softmax(PartyContext& ctx, const ShareTensor& logits,
                           const ApproxConfig& cfg, int out_scale = -1);

// Softmax that also returns the row entropies via H = log S - sum_c p_c u_c,
// reusing the kernel's own exponents; much cheaper than a standalone entropy
// pass because the log runs on the scalar row sums only.
struct SoftmaxEntropyOutput {
    ShareTensor probs;   // [n x c] at out_scale
    ShareTensor entropy; // [n] at log_frac_bits
};
SoftmaxEntropyOutput secure_softmax_with_entropy(PartyContext& ctx, const ShareTensor& logits,
                                                 const ApproxConfig& cfg, int out_scale = -1);

// Shannon entropy in nats of each row of a shared probability matrix.
ShareTensor secure_entropy(PartyContext& ctx, const ShareTensor& probs,
                           const ApproxConfig& cfg);

// Tournament maximum over the class axis: ceil(log2 c) * (ell + 1) rounds.
ShareTensor secure_row_max(PartyContext& ctx, const ShareTensor& t); // [n x c] -> [n]

// One-hot of the row argmax, ties broken toward the lowest class index.
ShareTensor secure_argmax_onehot(PartyContext& ctx, const ShareTensor& t); // [n x c]

} // namespace fedinfer
