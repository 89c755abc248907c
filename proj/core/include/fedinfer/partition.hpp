#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedinfer/nn.hpp"

namespace fedinfer {

struct PartitionConfig {
    double alpha = 0.5;
    int clients = 2;
    std::uint64_t seed = 0;
    std::size_t min_samples_per_client = 2;
    int max_attempts = 100;
};

// Class-wise Dirichlet split: for each class, client proportions are drawn
// from Dirichlet(alpha * 1_K) (normalized Gamma draws) and the class samples
// are divided by cumulative rounding, so the partitions are disjoint and
// cover the dataset exactly. Draws are repeated (up to max_attempts) until
// every client holds at least min_samples_per_client samples.
std::vector<LabeledDataset> dirichlet_partition(const LabeledDataset& data,
                                                const PartitionConfig& cfg);

// The alpha sweep used throughout the experiments.
const std::vector<double>& canonical_alpha_grid();

std::vector<std::vector<std::size_t>> label_histograms(
    const std::vector<LabeledDataset>& parts, int classes);

// Mean pairwise total-variation distance between client label histograms.
double heterogeneity_tv(const std::vector<LabeledDataset>& parts, int classes);

// Per-client CSV files plus a JSON label-histogram manifest.
void save_partition(const std::string& dir, const std::vector<LabeledDataset>& parts,
                    int classes);

} // namespace fedinfer
