#include "fedinfer/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

#include "fedinfer/fixedpoint.hpp"

namespace fedinfer {

Scheme parse_scheme(const std::string& name) {
    if (name == "hard") return Scheme::hard;
    if (name == "soft" || name == "soft_uniform") return Scheme::soft_uniform;
    if (name == "entropy") return Scheme::entropy;
    if (name == "spectral") return Scheme::spectral;
    if (name == "tta") return Scheme::tta;
    fail(Err::bad_config, "unknown ensemble scheme: " + name);
}

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::hard: return "hard";
        case Scheme::soft_uniform: return "soft";
        case Scheme::entropy: return "entropy";
        case Scheme::spectral: return "spectral";
        case Scheme::tta: return "tta";
    }
    return "?";
}

const std::vector<Scheme>& all_schemes() {
    static const std::vector<Scheme> v = {Scheme::hard, Scheme::soft_uniform, Scheme::entropy,
                                          Scheme::spectral, Scheme::tta};
    return v;
}

void EnsembleWeights::check() const {
    double sum = 0.0;
    for (double x : w) {
        require(x >= -1e-12, Err::weight_sum_violation, "negative ensemble weight");
        sum += x;
    }
    require(std::abs(sum - 1.0) <= 1e-9, Err::weight_sum_violation,
            "ensemble weights must sum to 1");
}

EnsembleWeights uniform_weights(std::size_t n, Scheme scheme) {
    EnsembleWeights ew;
    ew.scheme = scheme;
    ew.w.assign(n, 1.0 / static_cast<double>(n));
    return ew;
}

int hard_vote(const std::vector<int>& votes) {
    require(!votes.empty(), Err::bad_config, "hard vote needs at least one vote");
    int max_class = *std::max_element(votes.begin(), votes.end());
    std::vector<int> counts(static_cast<std::size_t>(max_class) + 1, 0);
    for (int v : votes) {
        require(v >= 0, Err::bad_config, "negative class index");
        ++counts[static_cast<std::size_t>(v)];
    }
    int best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;
}

namespace {

std::vector<double> softmax_vec(const std::vector<double>& scores) {
    double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

} // namespace

EnsembleWeights entropy_weights(const std::vector<std::vector<double>>& probs, double beta) {
    require(!probs.empty(), Err::invalid_distribution, "no distributions given");
    std::vector<double> scores(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double sum = 0.0;
        for (double p : probs[i]) {
            require(p >= -1e-9, Err::invalid_distribution, "negative probability");
            sum += p;
        }
        require(std::abs(sum - 1.0) <= 1e-6, Err::invalid_distribution,
                "probabilities must sum to 1");
        scores[i] = -beta * entropy_nats(probs[i]);
    }
    EnsembleWeights ew;
    ew.scheme = Scheme::entropy;
    ew.per_query = true;
    ew.w = softmax_vec(scores);
    return ew;
}

EnsembleWeights spectral_weights(const RealTensor& confidences, const WeightingConfig& cfg) {
    require(confidences.shape.size() == 2, Err::shape_mismatch, "confidences must be N x S");
    const std::size_t n = confidences.shape[0], s = confidences.shape[1];
    require(s >= 2, Err::shape_mismatch, "spectral weighting needs a batch of at least 2");

    // center each model's confidence row
    RealTensor centered = confidences;
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < s; ++j) mean += centered.at(i, j);
        mean /= static_cast<double>(s);
        for (std::size_t j = 0; j < s; ++j) centered.at(i, j) -= mean;
    }

    // C = centered centered^T / (S-1)
    RealTensor cov({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < s; ++j) acc += centered.at(i, j) * centered.at(k, j);
            cov.at(i, k) = acc / static_cast<double>(s - 1);
        }

    double frob = 0.0;
    for (double v : cov.data) frob += v * v;
    if (frob < 1e-24) {
        std::cerr << "[ensemble] degenerate confidence covariance, falling back to uniform "
                     "spectral weights\n";
        EnsembleWeights ew = uniform_weights(n, Scheme::spectral);
        ew.degenerate = true;
        return ew;
    }

    // power iteration, all-ones start
    std::vector<double> v(n, 1.0), nv(n, 0.0);
    double norm = std::sqrt(static_cast<double>(n));
    for (auto& x : v) x /= norm;
    for (int it = 0; it < cfg.power_iter_max; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            nv[i] = 0.0;
            for (std::size_t k = 0; k < n; ++k) nv[i] += cov.at(i, k) * v[k];
        }
        norm = 0.0;
        for (double x : nv) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-300) break;
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nv[i] /= norm;
            delta = std::max(delta, std::abs(std::abs(nv[i]) - std::abs(v[i])));
        }
        v = nv;
        if (delta < cfg.power_iter_tol) break;
    }

    EnsembleWeights ew;
    ew.scheme = Scheme::spectral;
    ew.w.resize(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ew.w[i] = std::abs(v[i]);
        sum += ew.w[i];
    }
    if (sum < 1e-300) return uniform_weights(n, Scheme::spectral);
    for (auto& x : ew.w) x /= sum;
    return ew;
}

EnsembleWeights tta_weights_from_instability(const std::vector<double>& instability,
                                             double gamma) {
    std::vector<double> scores(instability.size());
    for (std::size_t i = 0; i < instability.size(); ++i) scores[i] = gamma * instability[i];
    EnsembleWeights ew;
    ew.scheme = Scheme::tta;
    ew.per_query = true;
    ew.w = softmax_vec(scores);
    return ew;
}

double logit_instability(const std::vector<double>& base,
                         const std::vector<std::vector<double>>& views) {
    require(!views.empty(), Err::bad_config, "instability needs at least one view");
    double acc = 0.0;
    for (const auto& view : views) {
        require(view.size() == base.size(), Err::shape_mismatch, "logit dim mismatch");
        double sq = 0.0;
        for (std::size_t j = 0; j < base.size(); ++j) {
            const double d = view[j] - base[j];
            sq += d * d;
        }
        acc += std::sqrt(sq);
    }
    return acc / static_cast<double>(views.size());
}

RealTensor rotate_image(const RealTensor& image, double degrees) {
    require(image.shape.size() == 2 || image.shape.size() == 3, Err::not_image_shaped,
            "rotation needs an h x w (x c) tensor");
    const std::size_t h = image.shape[0], w = image.shape[1];
    const std::size_t c = image.shape.size() == 3 ? image.shape[2] : 1;

    const double theta = degrees * M_PI / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;

    RealTensor out(image.shape);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t col = 0; col < w; ++col) {
            // inverse map into the source image
            const double dy = static_cast<double>(r) - cy;
            const double dx = static_cast<double>(col) - cx;
            const double sy = cy + (sn * dx + cs * dy);
            const double sx = cx + (cs * dx - sn * dy);
            const double fy = std::floor(sy), fx = std::floor(sx);
            const double wy = sy - fy, wx = sx - fx;
            for (std::size_t ch = 0; ch < c; ++ch) {
                auto sample = [&](double yy, double xx) -> double {
                    const auto iy = static_cast<long>(yy), ix = static_cast<long>(xx);
                    if (iy < 0 || iy >= static_cast<long>(h) || ix < 0 ||
                        ix >= static_cast<long>(w))
                        return 0.0;
                    return image.data[(static_cast<std::size_t>(iy) * w +
                                       static_cast<std::size_t>(ix)) *
                                          c +
                                      ch];
                };
                const double v = (1 - wy) * ((1 - wx) * sample(fy, fx) + wx * sample(fy, fx + 1)) +
                                 wy * ((1 - wx) * sample(fy + 1, fx) + wx * sample(fy + 1, fx + 1));
                out.data[(r * w + col) * c + ch] = v;
            }
        }
    return out;
}

std::vector<double> tta_angles(const WeightingConfig& cfg, std::uint64_t query_index) {
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + query_index + 1);
    std::uniform_real_distribution<double> dist(-cfg.rotation_range_deg, cfg.rotation_range_deg);
    std::vector<double> angles(static_cast<std::size_t>(cfg.tta_views));
    for (auto& a : angles) a = dist(rng);
    return angles;
}

ShareTensor aggregate_secure(const std::vector<ShareTensor>& y_shares,
                             const EnsembleWeights& weights, int frac_bits) {
    require(!y_shares.empty(), Err::shape_mismatch, "no predictions to aggregate");
    require(weights.w.size() == y_shares.size(), Err::shape_mismatch,
            "weight count does not match prediction count");
    weights.check();

    ShareTensor acc = scale_public_scalar(y_shares[0], encode_scalar(weights.w[0], frac_bits),
                                          frac_bits);
    for (std::size_t i = 1; i < y_shares.size(); ++i) {
        require(y_shares[i].shape() == y_shares[0].shape(), Err::shape_mismatch,
                "prediction shape mismatch");
        require(y_shares[i].frac_scale == y_shares[0].frac_scale, Err::shape_mismatch,
                "prediction scale mismatch");
        acc = add_shares(acc, scale_public_scalar(
                                  y_shares[i], encode_scalar(weights.w[i], frac_bits), frac_bits));
    }
    return acc;
}

namespace {

std::vector<double> row_of(const RealTensor& t, std::size_t row) {
    std::vector<double> out(t.cols());
    for (std::size_t j = 0; j < t.cols(); ++j) out[j] = t.at(row, j);
    return out;
}

RealTensor query_image(const LabeledDataset& queries, std::size_t idx) {
    require(queries.image_shape.has_value(), Err::not_image_shaped,
            "tta requires image-shaped inputs");
    const auto [h, w, c] = *queries.image_shape;
    RealTensor img({h, w, c});
    std::copy_n(&queries.inputs.data[idx * queries.dim()], queries.dim(), img.data.begin());
    return img;
}

} // namespace

PlainEnsembleResult ensemble_aggregate_outputs(const std::vector<RealTensor>& base_logits,
                                               const ForwardFn& forward_fn,
                                               const LabeledDataset& queries, Scheme scheme,
                                               const WeightingConfig& cfg) {
    require(!base_logits.empty(), Err::bad_config, "no model outputs");
    const std::size_t n_models = base_logits.size();
    const std::size_t n = queries.size();
    const std::size_t classes = base_logits[0].cols();

    std::vector<RealTensor> probs;
    probs.reserve(n_models);
    for (const auto& l : base_logits) probs.push_back(softmax(l));

    PlainEnsembleResult res;
    res.predictions.resize(n);
    res.aggregated = RealTensor({n, classes});

    if (scheme == Scheme::hard) {
        for (std::size_t q = 0; q < n; ++q) {
            std::vector<int> votes(n_models);
            for (std::size_t i = 0; i < n_models; ++i)
                votes[i] = argmax_row(base_logits[i], q);
            res.predictions[q] = hard_vote(votes);
            for (std::size_t i = 0; i < n_models; ++i)
                res.aggregated.at(q, static_cast<std::size_t>(votes[i])) += 1.0;
        }
        res.weights_per_query.push_back(uniform_weights(n_models, scheme));
        return res;
    }

    // weighted probability averaging for the remaining schemes
    EnsembleWeights static_w = uniform_weights(n_models, scheme);

    if (scheme == Scheme::spectral) {
        RealTensor conf({n_models, n});
        for (std::size_t i = 0; i < n_models; ++i)
            for (std::size_t q = 0; q < n; ++q) {
                double mx = 0.0;
                for (std::size_t j = 0; j < classes; ++j)
                    mx = std::max(mx, probs[i].at(q, j));
                conf.at(i, q) = mx;
            }
        static_w = spectral_weights(conf, cfg);
    }

    // precompute augmented-view logits for tta (batched per view)
    std::vector<std::vector<RealTensor>> view_logits; // [view][model]
    if (scheme == Scheme::tta) {
        require(static_cast<bool>(forward_fn), Err::bad_config,
                "tta needs a forward function for views");
        std::vector<RealTensor> views(static_cast<std::size_t>(cfg.tta_views),
                                      RealTensor(queries.inputs.shape));
        for (std::size_t q = 0; q < n; ++q) {
            auto angles = tta_angles(cfg, q);
            RealTensor img = query_image(queries, q);
            for (int t = 0; t < cfg.tta_views; ++t) {
                RealTensor rot = rotate_image(img, angles[static_cast<std::size_t>(t)]);
                std::copy_n(rot.data.begin(), queries.dim(),
                            &views[static_cast<std::size_t>(t)].data[q * queries.dim()]);
            }
        }
        view_logits.resize(views.size());
        for (std::size_t t = 0; t < views.size(); ++t) {
            view_logits[t].reserve(n_models);
            for (std::size_t i = 0; i < n_models; ++i)
                view_logits[t].push_back(forward_fn(i, views[t]));
        }
    }

    for (std::size_t q = 0; q < n; ++q) {
        EnsembleWeights w = static_w;
        if (scheme == Scheme::entropy) {
            std::vector<std::vector<double>> pq(n_models);
            for (std::size_t i = 0; i < n_models; ++i) pq[i] = row_of(probs[i], q);
            w = entropy_weights(pq, cfg.beta);
        } else if (scheme == Scheme::tta) {
            std::vector<double> inst(n_models);
            for (std::size_t i = 0; i < n_models; ++i) {
                std::vector<std::vector<double>> vl;
                vl.reserve(view_logits.size());
                for (const auto& per_view : view_logits) vl.push_back(row_of(per_view[i], q));
                inst[i] = logit_instability(row_of(base_logits[i], q), vl);
            }
            w = tta_weights_from_instability(inst, cfg.gamma);
        }

        for (std::size_t i = 0; i < n_models; ++i)
            for (std::size_t j = 0; j < classes; ++j)
                res.aggregated.at(q, j) += w.w[i] * probs[i].at(q, j);
        int best = 0;
        for (std::size_t j = 1; j < classes; ++j)
            if (res.aggregated.at(q, j) > res.aggregated.at(q, static_cast<std::size_t>(best)))
                best = static_cast<int>(j);
        res.predictions[q] = best;
        if (w.per_query || res.weights_per_query.empty()) res.weights_per_query.push_back(w);
    }
    return res;
}

PlainEnsembleResult ensemble_predict_plain(const std::vector<ModelSpec>& models,
                                           const LabeledDataset& queries, Scheme scheme,
                                           const WeightingConfig& cfg) {
    require(!models.empty(), Err::bad_config, "no models");
    std::vector<RealTensor> logits;
    logits.reserve(models.size());
    for (const auto& m : models) logits.push_back(forward(m, queries.inputs));
    ForwardFn fwd = [&models](std::size_t i, const RealTensor& batch) {
        return forward(models[i], batch);
    };
    return ensemble_aggregate_outputs(logits, fwd, queries, scheme, cfg);
}

} // namespace fedinfer
