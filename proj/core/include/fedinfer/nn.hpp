#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedinfer/tensor.hpp"

namespace fedinfer {

enum class LayerKind { fully_connected, relu, softmax };

struct LayerSpec {
    LayerKind kind = LayerKind::fully_connected;
    std::size_t in_dim = 0;  // fully_connected only
    std::size_t out_dim = 0; // fully_connected only
};

// Ordered layer list plus the weights of every fully-connected layer.
// W[l] is [in_dim x out_dim] row-major, b[l] is [out_dim].
struct ModelSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    std::vector<RealTensor> weights;
    std::vector<RealTensor> biases;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;
    std::size_t fc_count() const { return weights.size(); }
};

// Architectures from the experiment table: small_mlp / medium_mlp / large_mlp,
// ReLU between consecutive FC layers, final softmax marker. Weights start at
// zero; call init_weights or train before use.
ModelSpec build_model(const std::string& name);
ModelSpec build_custom_model(const std::vector<std::size_t>& dims);

// He-uniform init, seeded.
void init_weights(ModelSpec& m, std::uint64_t seed);

// Affine + ReLU composition; returns logits (the softmax marker is not applied).
RealTensor forward(const ModelSpec& m, const RealTensor& x);

// Row-wise softmax with max-subtraction; sums to 1 within 1e-9.
RealTensor softmax(const RealTensor& logits);
// Shannon entropy (natural log, 0 log 0 = 0) of one probability vector.
double entropy_nats(const std::vector<double>& p);

int argmax_row(const RealTensor& t, std::size_t row);

struct LabeledDataset {
    RealTensor inputs; // [n x d]
    std::vector<int> labels;
    int classes = 0;
    // set when samples are images (needed by test-time augmentation)
    std::optional<std::array<std::size_t, 3>> image_shape; // h, w, channels

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.cols(); }
};

struct TrainConfig {
    int epochs = 20;
    double learning_rate = 0.1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

// Plain SGD with softmax cross-entropy. Deterministic under seed; throws
// NonFiniteLoss if the loss diverges.
ModelSpec train(const ModelSpec& m, const LabeledDataset& data, const TrainConfig& cfg);

double evaluate_accuracy(const ModelSpec& m, const LabeledDataset& data);

// Synthetic desk-scale datasets.
LabeledDataset make_gaussian_blobs(std::size_t n, int classes, std::size_t dim,
                                   double separation, double noise, std::uint64_t seed);
// 8x8 glyph digits (d = 64, 10 classes): fixed bitmap font + pixel noise and
// +-1 pixel jitter. Stands in for image benchmarks at desk scale.
LabeledDataset make_digit_grid(std::size_t n, double noise, std::uint64_t seed);

// CSV rows: feature_0,...,feature_{d-1},label
void save_dataset_csv(const std::string& path, const LabeledDataset& data);
LabeledDataset load_dataset_csv(const std::string& path, int classes = 0);

// Binary weights: header {fc count u32, per-layer in/out u32}, then row-major
// 64-bit floats (W then b per layer).
void save_model(const std::string& path, const ModelSpec& m);
ModelSpec load_model(const std::string& path);

} // namespace fedinfer
