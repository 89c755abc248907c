#include "fedinfer/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fedinfer/errors.hpp"

namespace fedinfer {

std::size_t ModelSpec::input_dim() const {
    for (const auto& l : layers)
        if (l.kind == LayerKind::fully_connected) return l.in_dim;
    return 0;
}

std::size_t ModelSpec::output_dim() const {
    std::size_t out = 0;
    for (const auto& l : layers)
        if (l.kind == LayerKind::fully_connected) out = l.out_dim;
    return out;
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        if (l.kind == LayerKind::fully_connected) n += l.in_dim * l.out_dim + l.out_dim;
    return n;
}

ModelSpec build_custom_model(const std::vector<std::size_t>& dims) {
    require(dims.size() >= 2, Err::unknown_architecture, "need at least input and output dims");
    ModelSpec m;
    m.name = "custom";
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        m.layers.push_back({LayerKind::fully_connected, dims[i], dims[i + 1]});
        if (i + 2 < dims.size()) m.layers.push_back({LayerKind::relu, 0, 0});
        m.weights.emplace_back(RealTensor({dims[i], dims[i + 1]}));
        m.biases.emplace_back(RealTensor({dims[i + 1]}));
    }
    m.layers.push_back({LayerKind::softmax, 0, 0});
    return m;
}

ModelSpec build_model(const std::string& name) {
    std::vector<std::size_t> dims;
    if (name == "small_mlp") dims = {3072, 256, 10};
    else if (name == "medium_mlp") dims = {3072, 512, 256, 10};
    else if (name == "large_mlp") dims = {3072, 1024, 512, 256, 10};
    else fail(Err::unknown_architecture, "unknown architecture: " + name);
    ModelSpec m = build_custom_model(dims);
    m.name = name;
    return m;
}

void init_weights(ModelSpec& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(m.weights[l].shape[0]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& w : m.weights[l].data) w = dist(rng);
        for (auto& b : m.biases[l].data) b = 0.0;
    }
}

namespace {

RealTensor as_matrix(const RealTensor& x, std::size_t dim) {
    if (x.shape.size() == 2) return x;
    require(x.numel() % dim == 0, Err::shape_mismatch, "input does not match model dim");
    RealTensor out = x;
    out.shape = {x.numel() / dim, dim};
    return out;
}

void add_bias_rows(RealTensor& z, const RealTensor& b) {
    const std::size_t n = z.rows(), c = z.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) z.data[i * c + j] += b.data[j];
}

} // namespace

RealTensor forward(const ModelSpec& m, const RealTensor& x) {
    RealTensor h = as_matrix(x, m.input_dim());
    require(h.cols() == m.input_dim(), Err::shape_mismatch, "input dim mismatch");
    std::size_t fc = 0;
    for (const auto& layer : m.layers) {
        if (layer.kind == LayerKind::fully_connected) {
            h = real_matmul(h, m.weights[fc]);
            add_bias_rows(h, m.biases[fc]);
            ++fc;
        } else if (layer.kind == LayerKind::relu) {
            for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
        }
        // softmax marker: logits are returned unnormalized
    }
    return h;
}

RealTensor softmax(const RealTensor& logits) {
    RealTensor p = logits;
    const std::size_t n = p.rows(), c = p.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, p.data[i * c + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            p.data[i * c + j] = std::exp(p.data[i * c + j] - mx);
            sum += p.data[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) p.data[i * c + j] /= sum;
    }
    return p;
}

double entropy_nats(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

int argmax_row(const RealTensor& t, std::size_t row) {
    const std::size_t c = t.cols();
    int best = 0;
    double bv = t.data[row * c];
    for (std::size_t j = 1; j < c; ++j)
        if (t.data[row * c + j] > bv) {
            bv = t.data[row * c + j];
            best = static_cast<int>(j);
        }
    return best;
}

ModelSpec train(const ModelSpec& model, const LabeledDataset& data, const TrainConfig& cfg) {
    ModelSpec m = model;
    require(data.dim() == m.input_dim(), Err::shape_mismatch, "dataset dim mismatch");
    const std::size_t n = data.size();
    const std::size_t out_dim = m.output_dim();
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bs = std::min(cfg.batch_size, n - start);
            RealTensor xb({bs, data.dim()});
            std::vector<int> yb(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(&data.inputs.data[src * data.dim()], data.dim(),
                            &xb.data[i * data.dim()]);
                yb[i] = data.labels[src];
            }

            // forward with cached activations
            std::vector<RealTensor> acts; // inputs of each fc layer
            RealTensor h = xb;
            std::size_t fc = 0;
            std::vector<RealTensor> pre; // pre-relu outputs, aligned to fc index
            for (const auto& layer : m.layers) {
                if (layer.kind == LayerKind::fully_connected) {
                    acts.push_back(h);
                    h = real_matmul(h, m.weights[fc]);
                    add_bias_rows(h, m.biases[fc]);
                    pre.push_back(h);
                    ++fc;
                } else if (layer.kind == LayerKind::relu) {
                    for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
                }
            }

            RealTensor p = softmax(h);
            double loss = 0.0;
            for (std::size_t i = 0; i < bs; ++i)
                loss -= std::log(std::max(p.data[i * out_dim + static_cast<std::size_t>(yb[i])],
                                          1e-300));
            loss /= static_cast<double>(bs);
            require(std::isfinite(loss), Err::non_finite_loss, "training loss diverged");

            // grad wrt logits
            RealTensor g = p;
            for (std::size_t i = 0; i < bs; ++i)
                g.data[i * out_dim + static_cast<std::size_t>(yb[i])] -= 1.0;
            for (auto& v : g.data) v /= static_cast<double>(bs);

            // backward through fc layers (relu between them)
            for (std::size_t l = m.weights.size(); l-- > 0;) {
                const RealTensor& a = acts[l];
                // dW = a^T g
                const std::size_t in = a.cols(), out = g.cols();
                RealTensor dW({in, out});
                for (std::size_t i = 0; i < a.rows(); ++i)
                    for (std::size_t k = 0; k < in; ++k) {
                        const double av = a.data[i * in + k];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < out; ++j)
                            dW.data[k * out + j] += av * g.data[i * out + j];
                    }
                RealTensor db({out});
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < out; ++j) db.data[j] += g.data[i * out + j];

                if (l > 0) {
                    // g_prev = (g W^T) * relu'(pre[l-1])
                    RealTensor gp({g.rows(), in});
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < out; ++j) {
                            const double gv = g.data[i * out + j];
                            if (gv == 0.0) continue;
                            for (std::size_t k = 0; k < in; ++k)
                                gp.data[i * in + k] += gv * m.weights[l].data[k * out + j];
                        }
                    for (std::size_t i = 0; i < gp.numel(); ++i)
                        if (pre[l - 1].data[i] <= 0.0) gp.data[i] = 0.0;
                    g = std::move(gp);
                }

                for (std::size_t i = 0; i < dW.numel(); ++i)
                    m.weights[l].data[i] -= cfg.learning_rate * dW.data[i];
                for (std::size_t j = 0; j < out; ++j)
                    m.biases[l].data[j] -= cfg.learning_rate * db.data[j];
            }
        }
    }
    return m;
}

double evaluate_accuracy(const ModelSpec& m, const LabeledDataset& data) {
    if (data.size() == 0) return 0.0;
    RealTensor logits = forward(m, data.inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (argmax_row(logits, i) == data.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

LabeledDataset make_gaussian_blobs(std::size_t n, int classes, std::size_t dim,
                                   double separation, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // fixed unit directions per class, scaled by separation
    RealTensor means({static_cast<std::size_t>(classes), dim});
    for (auto& v : means.data) v = gauss(rng);
    for (int c = 0; c < classes; ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) norm += means.at(c, j) * means.at(c, j);
        norm = std::sqrt(std::max(norm, 1e-12));
        for (std::size_t j = 0; j < dim; ++j) means.at(c, j) *= separation / norm;
    }

    LabeledDataset out;
    out.classes = classes;
    out.inputs = RealTensor({n, dim});
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
        out.labels[i] = c;
        for (std::size_t j = 0; j < dim; ++j)
            out.inputs.at(i, j) = means.at(c, j) + noise * gauss(rng);
    }
    return out;
}

namespace {

// 8x8 bitmap digits, one byte per row, MSB = leftmost pixel.
constexpr std::uint8_t kDigitFont[10][8] = {
    {0x7C, 0xC6, 0xCE, 0xDE, 0xF6, 0xE6, 0x7C, 0x00}, // 0
    {0x30, 0x70, 0x30, 0x30, 0x30, 0x30, 0xFC, 0x00}, // 1
    {0x78, 0xCC, 0x0C, 0x38, 0x60, 0xCC, 0xFC, 0x00}, // 2
    {0x78, 0xCC, 0x0C, 0x38, 0x0C, 0xCC, 0x78, 0x00}, // 3
    {0x1C, 0x3C, 0x6C, 0xCC, 0xFE, 0x0C, 0x1E, 0x00}, // 4
    {0xFC, 0xC0, 0xF8, 0x0C, 0x0C, 0xCC, 0x78, 0x00}, // 5
    {0x38, 0x60, 0xC0, 0xF8, 0xCC, 0xCC, 0x78, 0x00}, // 6
    {0xFC, 0xCC, 0x0C, 0x18, 0x30, 0x30, 0x30, 0x00}, // 7
    {0x78, 0xCC, 0xCC, 0x78, 0xCC, 0xCC, 0x78, 0x00}, // 8
    {0x78, 0xCC, 0xCC, 0x7C, 0x0C, 0x18, 0x70, 0x00}, // 9
};

} // namespace

LabeledDataset make_digit_grid(std::size_t n, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> jitter(-1, 1);

    LabeledDataset out;
    out.classes = 10;
    out.inputs = RealTensor({n, 64});
    out.labels.resize(n);
    out.image_shape = {{8, 8, 1}};
    for (std::size_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(i % 10);
        out.labels[i] = digit;
        const int dx = jitter(rng), dy = jitter(rng);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                const int sr = r - dy, sc = c - dx;
                double v = 0.0;
                if (sr >= 0 && sr < 8 && sc >= 0 && sc < 8)
                    v = (kDigitFont[digit][sr] >> (7 - sc)) & 1 ? 1.0 : 0.0;
                out.inputs.at(i, static_cast<std::size_t>(r * 8 + c)) = v + noise * gauss(rng);
            }
    }
    return out;
}

void save_dataset_csv(const std::string& path, const LabeledDataset& data) {
    std::ofstream os(path);
    require(os.good(), Err::io_error, "cannot write " + path);
    os.precision(10);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.dim(); ++j) os << data.inputs.at(i, j) << ",";
        os << data.labels[i] << "\n";
    }
}

LabeledDataset load_dataset_csv(const std::string& path, int classes) {
    std::ifstream is(path);
    require(is.good(), Err::io_error, "cannot read " + path);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        require(vals.size() >= 2, Err::io_error, "bad csv row");
        labels.push_back(static_cast<int>(vals.back()));
        vals.pop_back();
        rows.push_back(std::move(vals));
    }
    LabeledDataset out;
    const std::size_t n = rows.size();
    const std::size_t d = n ? rows[0].size() : 0;
    out.inputs = RealTensor({n, d});
    out.labels = std::move(labels);
    int max_label = -1;
    for (std::size_t i = 0; i < n; ++i) {
        require(rows[i].size() == d, Err::io_error, "ragged csv");
        std::copy(rows[i].begin(), rows[i].end(), &out.inputs.data[i * d]);
        max_label = std::max(max_label, out.labels[i]);
    }
    out.classes = classes > 0 ? classes : max_label + 1;
    if (d == 64) out.image_shape = {{8, 8, 1}};
    return out;
}

void save_model(const std::string& path, const ModelSpec& m) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), Err::io_error, "cannot write " + path);
    auto put_u32 = [&](std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        os.write(b, 4);
    };
    put_u32(static_cast<std::uint32_t>(m.weights.size()));
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        put_u32(static_cast<std::uint32_t>(m.weights[l].shape[0]));
        put_u32(static_cast<std::uint32_t>(m.weights[l].shape[1]));
    }
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        os.write(reinterpret_cast<const char*>(m.weights[l].data.data()),
                 static_cast<std::streamsize>(m.weights[l].data.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(m.biases[l].data.data()),
                 static_cast<std::streamsize>(m.biases[l].data.size() * sizeof(double)));
    }
}

ModelSpec load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), Err::io_error, "cannot read " + path);
    auto get_u32 = [&] {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    };
    const std::uint32_t fc = get_u32();
    std::vector<std::size_t> dims;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    for (std::uint32_t l = 0; l < fc; ++l) {
        std::size_t in = get_u32(), out = get_u32();
        shapes.emplace_back(in, out);
        if (l == 0) dims.push_back(in);
        dims.push_back(out);
    }
    ModelSpec m = build_custom_model(dims);
    for (std::uint32_t l = 0; l < fc; ++l) {
        is.read(reinterpret_cast<char*>(m.weights[l].data.data()),
                static_cast<std::streamsize>(m.weights[l].data.size() * sizeof(double)));
        is.read(reinterpret_cast<char*>(m.biases[l].data.data()),
                static_cast<std::streamsize>(m.biases[l].data.size() * sizeof(double)));
    }
    require(is.good(), Err::io_error, "truncated model file");
    return m;
}

} // namespace fedinfer
