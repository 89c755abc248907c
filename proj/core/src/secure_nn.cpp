#include "fedinfer/secure_nn.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fedinfer {

ProtectedModel provision(const ModelSpec& m, int parties, Rng& rng, const RingParams& params) {
    require(parties >= 2, Err::invalid_party_count, "provisioning requires at least two parties");
    const int f = params.frac_bits;
    ProtectedModel pm;
    pm.layers = m.layers;
    pm.parties = parties;
    pm.views.resize(static_cast<std::size_t>(parties));
    for (auto& v : pm.views) v.layers = m.layers;

    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        auto w_shares = share(encode(m.weights[l], f), parties, rng, f);
        auto b_shares = share(encode(m.biases[l], 2 * f), parties, rng, 2 * f);
        for (int k = 0; k < parties; ++k) {
            pm.views[static_cast<std::size_t>(k)].weights.push_back(w_shares[k]);
            pm.views[static_cast<std::size_t>(k)].biases.push_back(b_shares[k]);
        }
    }
    return pm;
}

ModelSpec reconstruct_model(const ProtectedModel& pm, const RingParams& params) {
    std::vector<std::size_t> dims;
    for (const auto& l : pm.layers)
        if (l.kind == LayerKind::fully_connected) {
            if (dims.empty()) dims.push_back(l.in_dim);
            dims.push_back(l.out_dim);
        }
    ModelSpec m = build_custom_model(dims);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        std::vector<ShareTensor> ws, bs;
        for (const auto& view : pm.views) {
            ws.push_back(view.weights[l]);
            bs.push_back(view.biases[l]);
        }
        m.weights[l] = decode(reconstruct(ws), params.frac_bits);
        m.biases[l] = decode(reconstruct(bs), 2 * params.frac_bits);
    }
    return m;
}

void save_protected_model(const std::string& dir, const ProtectedModel& pm,
                          const RingParams&) {
    std::filesystem::create_directories(dir);
    for (int k = 0; k < pm.parties; ++k) {
        const auto path = dir + "/party_" + std::to_string(k) + ".shares";
        std::ofstream os(path, std::ios::binary);
        require(os.good(), Err::io_error, "cannot write " + path);
        const auto& view = pm.views[static_cast<std::size_t>(k)];
        for (std::size_t l = 0; l < view.weights.size(); ++l) {
            write_share(os, view.weights[l]);
            write_share(os, view.biases[l]);
        }
    }
}

ProtectedModel load_protected_model(const std::string& dir, int parties,
                                    const RingParams& params) {
    ProtectedModel pm;
    pm.parties = parties;
    pm.views.resize(static_cast<std::size_t>(parties));
    std::vector<std::size_t> dims;
    for (int k = 0; k < parties; ++k) {
        const auto path = dir + "/party_" + std::to_string(k) + ".shares";
        std::ifstream is(path, std::ios::binary);
        require(is.good(), Err::io_error, "cannot read " + path);
        auto& view = pm.views[static_cast<std::size_t>(k)];
        while (is.peek() != std::char_traits<char>::eof()) {
            ShareTensor w = read_share(is, parties, params.frac_bits);
            ShareTensor b = read_share(is, parties, 2 * params.frac_bits);
            if (k == 0) {
                if (dims.empty()) dims.push_back(w.shape()[0]);
                dims.push_back(w.shape()[1]);
            }
            view.weights.push_back(std::move(w));
            view.biases.push_back(std::move(b));
        }
    }
    ModelSpec skeleton = build_custom_model(dims);
    pm.layers = skeleton.layers;
    for (auto& v : pm.views) v.layers = pm.layers;
    return pm;
}

ShareTensor row_sum_shares(const ShareTensor& t) {
    require(t.shape().size() == 2, Err::shape_mismatch, "row_sum expects a matrix");
    const std::size_t n = t.shape()[0], c = t.shape()[1];
    RingTensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        u64 s = 0;
        for (std::size_t j = 0; j < c; ++j) s += t.payload.data[i * c + j];
        out.data[i] = s;
    }
    return ShareTensor{t.party_id, t.parties, t.group_id, std::move(out), t.frac_scale};
}

ShareTensor broadcast_col(const ShareTensor& v, std::size_t cols) {
    require(v.shape().size() == 1, Err::shape_mismatch, "broadcast_col expects a vector");
    const std::size_t n = v.shape()[0];
    RingTensor out({n, cols});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] = v.payload.data[i];
    return ShareTensor{v.party_id, v.parties, v.group_id, std::move(out), v.frac_scale};
}

ShareTensor add_bias_rows_shares(const ShareTensor& h, const ShareTensor& b) {
    require(h.shape().size() == 2 && b.shape().size() == 1 && h.shape()[1] == b.shape()[0],
            Err::shape_mismatch, "bias shape mismatch");
    require(h.frac_scale == b.frac_scale, Err::shape_mismatch, "bias scale mismatch");
    const std::size_t n = h.shape()[0], c = h.shape()[1];
    RingTensor out = h.payload;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += b.payload.data[j];
    return ShareTensor{h.party_id, h.parties, combine_group_ids(h.group_id, b.group_id),
                       std::move(out), h.frac_scale};
}

ShareTensor scale_up(const ShareTensor& x, int target_scale) {
    require(target_scale >= x.frac_scale, Err::bad_config, "scale_up cannot reduce scale");
    if (target_scale == x.frac_scale) return x;
    ShareTensor out = x;
    const int shift = target_scale - x.frac_scale;
    for (auto& v : out.payload.data) v <<= shift;
    out.frac_scale = target_scale;
    return out;
}

ShareTensor rescale_to(PartyContext& ctx, const ShareTensor& x, int target_scale,
                       int magnitude_bits) {
    if (x.frac_scale == target_scale) return x;
    if (x.frac_scale < target_scale) return scale_up(x, target_scale);
    return rescale_shares(ctx, x, x.frac_scale - target_scale, magnitude_bits);
}

ShareTensor secure_forward(PartyContext& ctx, const ProtectedModelParty& pm,
                           const ShareTensor& x) {
    const int f = ctx.params.frac_bits;
    require(x.frac_scale == f, Err::shape_mismatch, "input must be at ring precision f");
    ShareTensor h = x;
    std::size_t fc = 0;
    for (std::size_t i = 0; i < pm.layers.size(); ++i) {
        const auto& layer = pm.layers[i];
        if (layer.kind == LayerKind::fully_connected) {
            h = beaver_matmul(ctx, h, pm.weights[fc]); // scale 2f, one round
            h = add_bias_rows_shares(h, pm.biases[fc]);
            ++fc;
        } else if (layer.kind == LayerKind::relu) {
            // The comparison's masked opening doubles as the rescale 2f -> f.
            auto rnd = ctx.dealer->compare_bundle(ctx.party, h.shape(),
                                                  ctx.params.compare_bits, f);
            auto cmp = secure_compare_ge_zero(ctx, h, rnd);
            h = beaver_mul_elem(ctx, cmp.ge, cmp.trunc); // {0,1} x value, scale f
        }
    }
    return h; // logits at scale 2f
}

ShareTensor secure_exp(PartyContext& ctx, const ShareTensor& u, double max_input,
                       const ApproxConfig& cfg) {
    cfg.validate();
    const int s = u.frac_scale;
    const int n = cfg.exp_iterations;
    const double vmax = std::exp(std::max(max_input, 0.5));
    const int value_bits = std::max(1, static_cast<int>(std::ceil(std::log2(vmax))) + 1);

    // t = 1 + u / 2^n
    ShareTensor t = rescale_shares(ctx, u, n, s + 6);
    t.frac_scale = s; // reinterpret: ring value divided by 2^n at unchanged scale
    t = add_public_scalar(t, u64{1} << s);
    // square n times; intermediates stay within exp(max_input)
    for (int i = 0; i < n; ++i) {
        ShareTensor sq = beaver_mul_elem(ctx, t, t);
        t = rescale_shares(ctx, sq, s, std::min(60, 2 * s + 2 * value_bits));
    }
    return t;
}

ShareTensor secure_reciprocal(PartyContext& ctx, const ShareTensor& sum,
                              const ApproxConfig& cfg) {
    cfg.validate();
    const int s = sum.frac_scale;
    // y0 = 3 exp(0.5 - s) + 0.003, valid for s in (0, ~60)
    ShareTensor arg = neg_share(sum);
    arg = add_public_scalar(arg, encode_scalar(0.5, s));
    ShareTensor y = secure_exp(ctx, arg, 0.5, cfg);
    y = scale_public_scalar(y, 3, 0);
    y = add_public_scalar(y, encode_scalar(0.003, s));

    for (int it = 0; it < cfg.reciprocal_newton_iters; ++it) {
        ShareTensor sy = beaver_mul_elem(ctx, sum, y);
        sy = rescale_shares(ctx, sy, s, std::min(60, 2 * s + 2)); // s*y in (0,2)
        ShareTensor two_minus = neg_share(sy);
        two_minus = add_public_scalar(two_minus, encode_scalar(2.0, s));
        ShareTensor yn = beaver_mul_elem(ctx, y, two_minus);
        y = rescale_shares(ctx, yn, s, std::min(60, 2 * s + 10)); // y*(2-sy) < 2^10
    }
    return y;
}

ShareTensor secure_log(PartyContext& ctx, const ShareTensor& x, const ApproxConfig& cfg) {
    cfg.validate();
    const int s = x.frac_scale;

    // y0 = x/120 - 20 exp(-2x - 1) + 3
    ShareTensor x120 = scale_public_scalar(x, encode_scalar(1.0 / 120.0, s), s);
    x120 = rescale_shares(ctx, x120, s, s + 4);
    ShareTensor arg = scale_public_scalar(x, to_ring(-2), 0);
    arg = add_public_scalar(arg, to_ring(-to_signed(u64{1} << s))); // -1
    ShareTensor e0 = secure_exp(ctx, arg, -1.0, cfg);
    ShareTensor y = sub_shares(x120, scale_public_scalar(e0, 20, 0));
    y = add_public_scalar(y, encode_scalar(3.0, s));

    for (int it = 0; it < cfg.log_householder_iters; ++it) {
        // h = 1 - x * exp(-y); y in [ln(2^-10), ~3.1] so exp(-y) <= ~2^10
        ShareTensor em = secure_exp(ctx, neg_share(y), 7.0, cfg);
        ShareTensor xh = beaver_mul_elem(ctx, x, em);
        xh = rescale_shares(ctx, xh, s, std::min(60, 2 * s + 6));
        ShareTensor h = neg_share(xh);
        h = add_public_scalar(h, u64{1} << s);

        // y <- y - sum_{k=1..order} h^k / k  (coefficient products stay at 2s,
        // accumulated locally, one rescale at the end)
        ShareTensor hk = h;
        ShareTensor acc = scale_public_scalar(h, encode_scalar(1.0, s), s); // h/1 at 2s
        for (int k = 2; k <= cfg.householder_order; ++k) {
            ShareTensor nxt = beaver_mul_elem(ctx, hk, h);
            // transient |h| can exceed 1, so powers need generous mask bounds
            hk = rescale_shares(ctx, nxt, s, std::min(60, 2 * s + 18));
            acc = add_shares(acc, scale_public_scalar(hk, encode_scalar(1.0 / k, s), s));
        }
        ShareTensor corr = rescale_shares(ctx, acc, s, std::min(60, 2 * s + 8));
        corr.frac_scale = s;
        y = sub_shares(y, corr);
    }
    return y;
}

namespace {

// max(a, b) = b + (a >= b) * (a - b), pairs batched into one tensor per level.
ShareTensor tournament_max(PartyContext& ctx, const ShareTensor& t) {
    const std::size_t n = t.shape()[0];
    std::size_t c = t.shape()[1];
    ShareTensor cur = t;
    while (c > 1) {
        const std::size_t pairs = c / 2;
        RingTensor a({n, pairs}), b({n, pairs});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < pairs; ++j) {
                a.data[i * pairs + j] = cur.payload.data[i * c + 2 * j];
                b.data[i * pairs + j] = cur.payload.data[i * c + 2 * j + 1];
            }
        ShareTensor sa{cur.party_id, cur.parties, cur.group_id, std::move(a), cur.frac_scale};
        ShareTensor sb{cur.party_id, cur.parties, cur.group_id, std::move(b), cur.frac_scale};
        ShareTensor d = sub_shares(sa, sb);
        ShareTensor ge = secure_ge_zero(ctx, d);
        ShareTensor mx = add_shares(sb, beaver_mul_elem(ctx, ge, d));

        const std::size_t next_c = pairs + (c % 2);
        RingTensor nxt({n, next_c});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < pairs; ++j)
                nxt.data[i * next_c + j] = mx.payload.data[i * pairs + j];
            if (c % 2) nxt.data[i * next_c + pairs] = cur.payload.data[i * c + (c - 1)];
        }
        cur = ShareTensor{cur.party_id, cur.parties, mx.group_id, std::move(nxt),
                          cur.frac_scale};
        c = next_c;
    }
    RingTensor flat({n});
    for (std::size_t i = 0; i < n; ++i) flat.data[i] = cur.payload.data[i];
    return ShareTensor{cur.party_id, cur.parties, cur.group_id, std::move(flat),
                       cur.frac_scale};
}

} // namespace

ShareTensor secure_row_max(PartyContext& ctx, const ShareTensor& t) {
    require(t.shape().size() == 2, Err::shape_mismatch, "row max expects a matrix");
    return tournament_max(ctx, t);
}

namespace {

struct SoftmaxParts {
    ShareTensor probs; // at out_scale
    ShareTensor u;     // shifted exponents, kernel scale
    ShareTensor row;   // row sums of the exponentials, kernel scale
};

SoftmaxParts softmax_kernel(PartyContext& ctx, const ShareTensor& logits,
                            const ApproxConfig& cfg, int out_scale) {
    cfg.validate();
    require(logits.shape().size() == 2, Err::shape_mismatch, "softmax expects [n x c] logits");
    const int s = cfg.kernel_frac_bits;
    const int f = ctx.params.frac_bits;
    if (out_scale < 0) out_scale = f;

    const double hi = cfg.input_clamp_hi, lo = cfg.input_clamp_lo;
    ShareTensor z = rescale_to(ctx, logits, s, 40);

    // clamp into [lo, hi]
    {
        ShareTensor d = add_public_scalar(z, encode_scalar(-hi, s));
        ShareTensor over = secure_ge_zero(ctx, d);
        z = sub_shares(z, beaver_mul_elem(ctx, over, d));
        ShareTensor d2 = add_public_scalar(z, encode_scalar(-lo, s));
        ShareTensor ge2 = secure_ge_zero(ctx, d2);
        ShareTensor under = neg_share(ge2);
        if (ctx.party == 0) under = add_public_scalar(under, 1);
        z = sub_shares(z, beaver_mul_elem(ctx, under, d2));
    }

    // subtract the secure row maximum: exponents land in [lo - hi, 0] and the
    // row sum in [1, C], where the Newton reciprocal always converges
    ShareTensor mx = secure_row_max(ctx, z);
    ShareTensor u = sub_shares(z, broadcast_col(mx, logits.shape()[1]));
    ShareTensor exps = secure_exp(ctx, u, 0.0, cfg);

    ShareTensor row = row_sum_shares(exps);
    ShareTensor inv = secure_reciprocal(ctx, row, cfg);

    ShareTensor p = beaver_mul_elem(ctx, exps, broadcast_col(inv, logits.shape()[1]));
    p = rescale_shares(ctx, p, 2 * s - out_scale, std::min(60, 2 * s + 2));
    p.frac_scale = out_scale;
    return SoftmaxParts{std::move(p), std::move(u), std::move(row)};
}

} // namespace

ShareTensor secure_softmax(PartyContext& ctx, const ShareTensor& logits,
                           const ApproxConfig& cfg, int out_scale) {
    return softmax_kernel(ctx, logits, cfg, out_scale).probs;
}

SoftmaxEntropyOutput secure_softmax_with_entropy(PartyContext& ctx, const ShareTensor& logits,
                                                 const ApproxConfig& cfg, int out_scale) {
    const int s = cfg.kernel_frac_bits;
    const int ls = cfg.log_frac_bits;
    SoftmaxParts parts = softmax_kernel(ctx, logits, cfg, out_scale);

    // H = log(S) - sum_c p_c u_c with p at out_scale and u at kernel scale
    ShareTensor log_s = secure_log(ctx, rescale_to(ctx, parts.row, ls, 30), cfg); // [n]@ls
    ShareTensor pu = beaver_mul_elem(ctx, parts.u, parts.probs);
    const int pu_scale = s + parts.probs.frac_scale;
    ShareTensor sum_pu = row_sum_shares(pu); // [n] at pu_scale, |value| <= |lo-hi|
    sum_pu = rescale_shares(ctx, sum_pu, pu_scale - ls, std::min(60, pu_scale + 6));
    SoftmaxEntropyOutput out;
    out.entropy = sub_shares(log_s, sum_pu);
    out.probs = std::move(parts.probs);
    return out;
}

ShareTensor secure_entropy(PartyContext& ctx, const ShareTensor& probs,
                           const ApproxConfig& cfg) {
    cfg.validate();
    require(probs.shape().size() == 2, Err::shape_mismatch, "entropy expects [n x c] probs");
    const int s = cfg.log_frac_bits;
    ShareTensor p = rescale_to(ctx, probs, s, 30);

    // log(p + eps): eps keeps the log kernel inside its domain; the p*log
    // product kills the eps contribution where p is genuinely zero.
    ShareTensor q = add_public_scalar(p, u64{1} << (s - 10));
    ShareTensor lg = secure_log(ctx, q, cfg);
    ShareTensor t = beaver_mul_elem(ctx, p, lg);
    t = rescale_shares(ctx, t, s, std::min(60, 2 * s + 6));
    return neg_share(row_sum_shares(t)); // [n], scale s
}

ShareTensor secure_argmax_onehot(PartyContext& ctx, const ShareTensor& t) {
    require(t.shape().size() == 2, Err::shape_mismatch, "argmax expects a matrix");
    const std::size_t n = t.shape()[0], c = t.shape()[1];
    ShareTensor mx = secure_row_max(ctx, t);
    ShareTensor d = sub_shares(t, broadcast_col(mx, c));
    ShareTensor hits = secure_ge_zero(ctx, d); // 1 on every maximal entry

    // keep only the lowest-index hit per row
    RingTensor seen({n}); // shares of "a hit already taken"
    ShareTensor seen_sh{ctx.party, ctx.parties, hits.group_id, std::move(seen), 0};
    RingTensor out({n, c});
    for (std::size_t j = 0; j < c; ++j) {
        RingTensor col({n});
        for (std::size_t i = 0; i < n; ++i) col.data[i] = hits.payload.data[i * c + j];
        ShareTensor bj{ctx.party, ctx.parties, hits.group_id, std::move(col), 0};
        ShareTensor not_seen = neg_share(seen_sh);
        if (ctx.party == 0) not_seen = add_public_scalar(not_seen, 1);
        ShareTensor keep = beaver_mul_elem(ctx, bj, not_seen);
        for (std::size_t i = 0; i < n; ++i) out.data[i * c + j] = keep.payload.data[i];
        seen_sh = add_shares(seen_sh, keep);
    }
    return ShareTensor{ctx.party, ctx.parties, hits.group_id, std::move(out), 0};
}

} // namespace fedinfer
