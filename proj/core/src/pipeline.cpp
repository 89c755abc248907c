#include "fedinfer/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "fedinfer/mpc.hpp"

namespace fedinfer {

namespace {

std::string make_job_id(std::uint64_t seed) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "job-%016llx",
                  static_cast<unsigned long long>(seed * 0x9e3779b97f4a7c15ULL + 1));
    return buf;
}

int argmax_lowest(const double* v, std::size_t n) {
    int best = 0;
    for (std::size_t j = 1; j < n; ++j)
        if (v[j] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    return best;
}

// Client-side view generation for TTA: base view first, then T rotations.
std::vector<RealTensor> make_views(const LabeledDataset& queries, const WeightingConfig& cfg) {
    std::vector<RealTensor> views;
    views.push_back(queries.inputs);
    require(queries.image_shape.has_value(), Err::not_image_shaped,
            "tta requires image-shaped queries");
    const auto [h, w, c] = *queries.image_shape;
    for (int t = 0; t < cfg.tta_views; ++t) views.emplace_back(queries.inputs.shape);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto angles = tta_angles(cfg, q);
        RealTensor img({h, w, c});
        std::copy_n(&queries.inputs.data[q * queries.dim()], queries.dim(), img.data.begin());
        for (int t = 0; t < cfg.tta_views; ++t) {
            RealTensor rot = rotate_image(img, angles[static_cast<std::size_t>(t)]);
            std::copy_n(rot.data.begin(), queries.dim(),
                        &views[static_cast<std::size_t>(t) + 1].data[q * queries.dim()]);
        }
    }
    return views;
}

struct PartyOutput {
    std::optional<ShareTensor> aggregate;
    bool withheld = false;
};

} // namespace

RealTensor fixedpoint_forward(const ModelSpec& m, const RealTensor& x, const RingParams& ring) {
    const int f = ring.frac_bits;
    RingTensor h = encode(x, f);
    std::size_t fc = 0;
    for (const auto& layer : m.layers) {
        if (layer.kind == LayerKind::fully_connected) {
            RingTensor w = encode(m.weights[fc], f);
            h = ring_matmul(h, w); // scale 2f
            RingTensor b = encode(m.biases[fc], 2 * f);
            const std::size_t rows = h.shape[0], cols = h.shape[1];
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) h.data[i * cols + j] += b.data[j];
            h = truncate(h, f); // back to scale f
            ++fc;
        } else if (layer.kind == LayerKind::relu) {
            for (auto& v : h.data)
                if (to_signed(v) < 0) v = 0;
        }
    }
    return decode(h, f);
}

namespace {

// Shared state of one simulated job, owned by the coordinator thread.
struct JobState {
    const InferenceJobConfig& cfg;
    const std::vector<ModelSpec>& models;
    const LabeledDataset& queries;
    std::vector<ProtectedModel> provisioned; // per model
    std::vector<std::vector<std::vector<ShareTensor>>> input_shares; // [view][party][model]
    Transport* transport = nullptr;
    TrustedDealer* dealer = nullptr;
    std::vector<PartyOutput> outputs;
    std::vector<EnsembleWeights> weights_party0; // revealed weights, written by party 0
};

void maybe_abort(const InferenceJobConfig& cfg, PartyContext& ctx, Phase phase) {
    if (cfg.abort.enabled && cfg.abort.phase == static_cast<int>(phase) &&
        cfg.abort.party == ctx.party) {
        ctx.transport->abort(ctx.party);
        fail(Err::party_abort, "injected abort at phase " + std::to_string(cfg.abort.phase));
    }
}

// Reveal a shared tensor to every party and decode it (public weights path).
RealTensor open_decode(PartyContext& ctx, const ShareTensor& s) {
    RingTensor t = open_shares(ctx, s);
    return decode(t, s.frac_scale);
}

std::vector<EnsembleWeights> per_query_weights_from_matrix(const RealTensor& w_nq,
                                                           Scheme scheme) {
    // w_nq: [n x N] per-query weights, renormalized against approximation drift
    std::vector<EnsembleWeights> out;
    const std::size_t n = w_nq.rows(), models = w_nq.cols();
    out.reserve(n);
    for (std::size_t q = 0; q < n; ++q) {
        EnsembleWeights ew;
        ew.scheme = scheme;
        ew.per_query = true;
        ew.w.resize(models);
        double sum = 0.0;
        for (std::size_t i = 0; i < models; ++i) {
            ew.w[i] = std::max(0.0, w_nq.at(q, i));
            sum += ew.w[i];
        }
        if (sum <= 0.0) {
            ew = uniform_weights(models, scheme);
            ew.degenerate = true;
        } else {
            for (auto& v : ew.w) v /= sum;
        }
        out.push_back(std::move(ew));
    }
    return out;
}

// Aggregate per-query weighted probabilities: zero communication rounds.
ShareTensor aggregate_per_query(const std::vector<ShareTensor>& probs,
                                const std::vector<EnsembleWeights>& wq, int frac_bits) {
    const std::size_t n = probs[0].shape()[0], c = probs[0].shape()[1];
    ShareTensor acc;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        RingTensor wt({n, c});
        for (std::size_t q = 0; q < n; ++q) {
            const u64 enc_w = encode_scalar(wq[q].w[i], frac_bits);
            for (std::size_t j = 0; j < c; ++j) wt.data[q * c + j] = enc_w;
        }
        ShareTensor term = scale_public(probs[i], wt, frac_bits);
        acc = (i == 0) ? term : add_shares(acc, term);
    }
    return acc;
}

// The body every logical party runs for phases 3 and 4.
void party_main(JobState& st, int party) {
    const auto& cfg = st.cfg;
    PartyContext ctx{party, cfg.parties, cfg.ring, st.transport, st.dealer};
    const int f = cfg.ring.frac_bits;
    const std::size_t n_models = st.models.size();
    const std::size_t n = st.queries.size();
    const std::size_t classes = st.models[0].output_dim();

    maybe_abort(cfg, ctx, Phase::model_execution);

    // Phase 3: protected forward passes, one model at a time.
    std::vector<ShareTensor> logits; // base view, per model, scale 2f
    logits.reserve(n_models);
    for (std::size_t i = 0; i < n_models; ++i)
        logits.push_back(secure_forward(
            ctx, st.provisioned[i].views[static_cast<std::size_t>(party)],
            st.input_shares[0][static_cast<std::size_t>(party)][i]));

    // Extra augmented views for the TTA scheme.
    std::vector<std::vector<ShareTensor>> view_logits; // [view-1][model]
    if (cfg.scheme == Scheme::tta) {
        for (std::size_t v = 1; v < st.input_shares.size(); ++v) {
            std::vector<ShareTensor> row;
            row.reserve(n_models);
            for (std::size_t i = 0; i < n_models; ++i)
                row.push_back(secure_forward(
                    ctx, st.provisioned[i].views[static_cast<std::size_t>(party)],
                    st.input_shares[v][static_cast<std::size_t>(party)][i]));
            view_logits.push_back(std::move(row));
        }
    }

    maybe_abort(cfg, ctx, Phase::aggregation);

    // Phase 4: secure ensemble aggregation.
    PartyOutput out;
    if (cfg.scheme == Scheme::hard) {
        // Per-model secure argmax one-hots, tallied in shares; only the tally
        // is opened.
        ShareTensor tally;
        for (std::size_t i = 0; i < n_models; ++i) {
            ShareTensor oh = secure_argmax_onehot(ctx, logits[i]);
            tally = (i == 0) ? oh : add_shares(tally, oh);
        }
        RingTensor public_tally = open_shares(ctx, tally);
        // carry the public tally through as the "aggregate" (scale 0)
        ShareTensor result{ctx.party, ctx.parties, tally.group_id, public_tally, 0};
        if (ctx.party != 0) // one party holds the public value, others zero
            result.payload = RingTensor(public_tally.shape);
        out.aggregate = result;
    } else {
        // All probability-averaging schemes softmax the base logits.
        const int kernel_scale = cfg.approx.kernel_frac_bits;
        const int ls = cfg.approx.log_frac_bits;
        const bool need_kernel_probs =
            cfg.scheme == Scheme::entropy || cfg.scheme == Scheme::spectral;

        // one stacked softmax over all models' logits; the entropy scheme
        // picks up the per-row entropies from the same kernel state
        std::vector<ShareTensor> probs;
        ShareTensor stacked_probs; // [N*n x C], kept for batch statistics
        ShareTensor entropies;     // [N*n] at log scale, entropy scheme only
        {
            RingTensor stacked({n_models * n, classes});
            for (std::size_t i = 0; i < n_models; ++i)
                std::copy(logits[i].payload.data.begin(), logits[i].payload.data.end(),
                          stacked.data.begin() +
                              static_cast<std::ptrdiff_t>(i * n * classes));
            GroupId gid = logits[0].group_id;
            for (std::size_t i = 1; i < n_models; ++i)
                gid = combine_group_ids(gid, logits[i].group_id);
            ShareTensor all{ctx.party, ctx.parties, gid, std::move(stacked),
                            logits[0].frac_scale};
            ShareTensor p;
            if (cfg.scheme == Scheme::entropy) {
                auto se = secure_softmax_with_entropy(ctx, all, cfg.approx, kernel_scale);
                p = std::move(se.probs);
                entropies = std::move(se.entropy);
            } else {
                p = secure_softmax(ctx, all, cfg.approx,
                                   need_kernel_probs ? kernel_scale : f);
            }
            probs.reserve(n_models);
            for (std::size_t i = 0; i < n_models; ++i) {
                RingTensor slice({n, classes});
                std::copy_n(p.payload.data.begin() +
                                static_cast<std::ptrdiff_t>(i * n * classes),
                            n * classes, slice.data.begin());
                probs.push_back(ShareTensor{ctx.party, ctx.parties, p.group_id,
                                            std::move(slice), p.frac_scale});
            }
            stacked_probs = std::move(p);
        }

        if (cfg.scheme == Scheme::soft_uniform) {
            EnsembleWeights w = uniform_weights(n_models, cfg.scheme);
            if (party == 0) st.weights_party0 = {w};
            out.aggregate = aggregate_secure(probs, w, f);
        } else if (cfg.scheme == Scheme::entropy) {
            // shared-domain entropies -> shared softmax over models -> open
            // only the normalized weights
            RingTensor hmat({n, n_models});
            for (std::size_t i = 0; i < n_models; ++i)
                for (std::size_t q = 0; q < n; ++q)
                    hmat.data[q * n_models + i] = entropies.payload.data[i * n + q];
            ShareTensor hs{ctx.party, ctx.parties, entropies.group_id, std::move(hmat), ls};
            // u = -beta * H, brought to kernel scale; structurally <= ~0
            ShareTensor u =
                scale_public_scalar(hs, encode_scalar(-cfg.weighting.beta, 12), 12);
            u = rescale_shares(ctx, u, ls + 12 - kernel_scale, 40);
            ShareTensor ex = secure_exp(ctx, u, 0.5, cfg.approx);
            ShareTensor inv = secure_reciprocal(ctx, row_sum_shares(ex), cfg.approx);
            ShareTensor wsh = beaver_mul_elem(ctx, ex, broadcast_col(inv, n_models));
            wsh = rescale_shares(ctx, wsh, kernel_scale, std::min(60, 2 * kernel_scale + 2));
            RealTensor w_public = open_decode(ctx, wsh); // [n x N]
            auto wq = per_query_weights_from_matrix(w_public, cfg.scheme);
            if (party == 0) st.weights_party0 = wq;
            // kernel-scale probs must come back to ambient f for aggregation
            std::vector<ShareTensor> probs_f;
            probs_f.reserve(n_models);
            for (auto& p : probs)
                probs_f.push_back(rescale_shares(ctx, p, kernel_scale - f, kernel_scale + 2));
            out.aggregate = aggregate_per_query(probs_f, wq, f);
        } else if (cfg.scheme == Scheme::spectral) {
            // batch confidences (one tree over all models' rows), opened as
            // batch statistics
            ShareTensor mx = secure_row_max(ctx, stacked_probs); // [N*n]@kernel
            RingTensor conf({n_models, n});
            for (std::size_t i = 0; i < n_models; ++i)
                for (std::size_t q = 0; q < n; ++q)
                    conf.data[i * n + q] = mx.payload.data[i * n + q];
            ShareTensor conf_sh{ctx.party, ctx.parties, mx.group_id, std::move(conf),
                                kernel_scale};
            RealTensor phi = open_decode(ctx, conf_sh); // [N x S]
            EnsembleWeights w = spectral_weights(phi, cfg.weighting);
            if (party == 0) st.weights_party0 = {w};
            std::vector<ShareTensor> probs_f;
            probs_f.reserve(n_models);
            for (auto& p : probs)
                probs_f.push_back(rescale_shares(ctx, p, kernel_scale - f, kernel_scale + 2));
            out.aggregate = aggregate_secure(probs_f, w, f);
        } else { // tta
            // squared logit deviations per (model, view), opened as
            // instability statistics; weights computed publicly
            std::vector<RingTensor> locals;
            for (std::size_t i = 0; i < n_models; ++i)
                for (std::size_t v = 0; v < view_logits.size(); ++v) {
                    ShareTensor diff = sub_shares(view_logits[v][i], logits[i]); // @2f
                    diff = rescale_shares(ctx, diff, f, 44);
                    ShareTensor sq = beaver_mul_elem(ctx, diff, diff); // @2f
                    locals.push_back(row_sum_shares(sq).payload);
                }
            auto opened = open_many(ctx, locals); // one round for all statistics
            RealTensor w_nq({n, n_models});
            const auto views_n = view_logits.size();
            for (std::size_t q = 0; q < n; ++q) {
                std::vector<double> inst(n_models, 0.0);
                for (std::size_t i = 0; i < n_models; ++i) {
                    for (std::size_t v = 0; v < views_n; ++v)
                        inst[i] += std::sqrt(std::max(
                            0.0, decode_scalar(opened[i * views_n + v].data[q], 2 * f)));
                    inst[i] /= static_cast<double>(views_n);
                }
                double mx = *std::max_element(inst.begin(), inst.end());
                double sum = 0.0;
                for (std::size_t i = 0; i < n_models; ++i) {
                    w_nq.at(q, i) = std::exp(cfg.weighting.gamma * (inst[i] - mx));
                    sum += w_nq.at(q, i);
                }
                for (std::size_t i = 0; i < n_models; ++i) w_nq.at(q, i) /= sum;
            }
            auto wq = per_query_weights_from_matrix(w_nq, cfg.scheme);
            if (party == 0) st.weights_party0 = wq;
            out.aggregate = aggregate_per_query(probs, wq, f);
        }
    }

    // Phase 5 withholding: the aborting party never hands over its result.
    if (cfg.abort.enabled && cfg.abort.phase == static_cast<int>(Phase::reconstruction) &&
        cfg.abort.party == party) {
        out.withheld = true;
        out.aggregate.reset();
    }
    st.outputs[static_cast<std::size_t>(party)] = std::move(out);
}

} // namespace

InferenceResult run_secure_inference(const InferenceJobConfig& cfg,
                                     const std::vector<ModelSpec>& models,
                                     const LabeledDataset& queries, EscrowLedger* escrow,
                                     KeyRegistry* keys) {
    require(!models.empty(), Err::bad_config, "no models to serve");
    require(cfg.parties >= 2, Err::invalid_party_count,
            "secure inference needs at least two parties");
    cfg.ring.validate();

    EscrowLedger local_escrow;
    KeyRegistry local_keys;
    if (!escrow) escrow = &local_escrow;
    if (!keys) keys = &local_keys;

    InferenceResult res;
    res.job_id = make_job_id(cfg.seed);

    const AccountId client = "client";
    std::vector<PartyAccount> roster;
    for (int k = 0; k < cfg.parties; ++k) {
        const AccountId id = "party_" + std::to_string(k);
        if (!keys->has(id)) keys->register_account(id, cfg.seed ^ (0xabcdef00ULL + static_cast<std::uint64_t>(k)));
        roster.push_back(PartyAccount{id, keys->get(id).pk});
    }
    if (escrow->balance(client) < cfg.deposit) escrow->fund(client, cfg.deposit);

    Rng rng(cfg.seed);
    JobState st{cfg, models, queries, {}, {}, nullptr, nullptr, {}, {}};

    // Secure model provisioning (offline distribution, not metered).
    for (const auto& m : models)
        st.provisioned.push_back(provision(m, cfg.parties, rng, cfg.ring));

    // Phase 1: the client secret-shares the query batch (per view for TTA).
    if (cfg.abort.enabled && cfg.abort.phase == static_cast<int>(Phase::input_sharing)) {
        res.aborted = true;
        res.abort_phase = 1;
        return res;
    }
    std::vector<RealTensor> views =
        cfg.scheme == Scheme::tta ? make_views(queries, cfg.weighting)
                                  : std::vector<RealTensor>{queries.inputs};
    st.input_shares.resize(views.size());
    for (std::size_t v = 0; v < views.size(); ++v) {
        auto shares = share(encode(views[v], cfg.ring.frac_bits), cfg.parties, rng,
                            cfg.ring.frac_bits);
        st.input_shares[v].resize(static_cast<std::size_t>(cfg.parties));
        // every model consumes the same input shares; store per party per model
        for (int k = 0; k < cfg.parties; ++k)
            st.input_shares[v][static_cast<std::size_t>(k)] =
                std::vector<ShareTensor>(models.size(), shares[static_cast<std::size_t>(k)]);
    }

    // Phase 2: on-chain escrow initialization.
    escrow->create_job(res.job_id, client, roster, cfg.deposit);
    res.job_created = true;
    res.escrowed_deposit = cfg.deposit;
    if (cfg.abort.enabled && cfg.abort.phase == static_cast<int>(Phase::escrow_init)) {
        res.aborted = true;
        res.abort_phase = 2;
        return res;
    }

    // Phases 3-4 run on K lockstep party threads.
    Transport transport(load_preset(cfg.preset, cfg.parties));
    TrustedDealer dealer(cfg.seed ^ 0x5eed0123ULL, cfg.parties);
    st.transport = &transport;
    st.dealer = &dealer;
    st.outputs.assign(static_cast<std::size_t>(cfg.parties), PartyOutput{});

    const bool aborted =
        run_parties(cfg.parties, transport, [&](int p) { party_main(st, p); });
    res.ledger = transport.ledger();
    res.weights = st.weights_party0;

    if (aborted) {
        res.aborted = true;
        res.abort_phase = cfg.abort.enabled ? cfg.abort.phase : 0;
        return res;
    }

    // Phase 5: reconstruction at the client, then settlement.
    std::vector<ShareTensor> agg_shares;
    for (auto& o : st.outputs) {
        if (!o.aggregate.has_value()) {
            res.aborted = true;
            res.abort_phase = static_cast<int>(Phase::reconstruction);
            return res;
        }
        agg_shares.push_back(*o.aggregate);
    }
    RingTensor agg_ring = reconstruct(agg_shares);
    res.aggregated = decode(agg_ring, agg_shares[0].frac_scale);
    const std::size_t n = queries.size();
    const std::size_t classes = models[0].output_dim();
    res.predictions.resize(n);
    for (std::size_t q = 0; q < n; ++q)
        res.predictions[q] = argmax_lowest(&res.aggregated.data[q * classes], classes);

    CompletionProof proof;
    for (const auto& p : roster)
        proof.signatures.push_back(keys->sign_completion(p.id, res.job_id, client));
    escrow->complete_job(res.job_id, client, proof);
    res.job_settled = true;
    res.escrowed_deposit = 0;
    return res;
}

InferenceResult run_single_party_inference(const InferenceJobConfig& cfg,
                                           const std::vector<ModelSpec>& models,
                                           const LabeledDataset& queries,
                                           EscrowLedger* escrow, KeyRegistry* keys) {
    require(!models.empty(), Err::bad_config, "no models to serve");
    EscrowLedger local_escrow;
    KeyRegistry local_keys;
    if (!escrow) escrow = &local_escrow;
    if (!keys) keys = &local_keys;

    InferenceResult res;
    res.job_id = make_job_id(cfg.seed);
    const AccountId client = "client";
    const AccountId solo = "party_0";
    if (!keys->has(solo)) keys->register_account(solo, cfg.seed ^ 0xabcdef00ULL);
    if (escrow->balance(client) < cfg.deposit) escrow->fund(client, cfg.deposit);
    escrow->create_job(res.job_id, client, {PartyAccount{solo, keys->get(solo).pk}},
                       cfg.deposit);
    res.job_created = true;

    // fixed-point forwards (same ring arithmetic, no communication),
    // plaintext weighting on the decoded logits
    std::vector<RealTensor> logits;
    logits.reserve(models.size());
    for (const auto& m : models)
        logits.push_back(fixedpoint_forward(m, queries.inputs, cfg.ring));
    ForwardFn fwd = [&](std::size_t i, const RealTensor& batch) {
        return fixedpoint_forward(models[i], batch, cfg.ring);
    };
    PlainEnsembleResult plain =
        ensemble_aggregate_outputs(logits, fwd, queries, cfg.scheme, cfg.weighting);
    res.predictions = plain.predictions;
    res.weights = plain.weights_per_query;
    res.aggregated = plain.aggregated;

    CompletionProof proof;
    proof.signatures.push_back(keys->sign_completion(solo, res.job_id, client));
    escrow->complete_job(res.job_id, client, proof);
    res.job_settled = true;
    return res;
}

} // namespace fedinfer
