#include "fedinfer/partition.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "fedinfer/errors.hpp"

namespace fedinfer {

const std::vector<double>& canonical_alpha_grid() {
    static const std::vector<double> grid = {0.05, 0.1, 0.3, 0.5, 1000.0};
    return grid;
}

namespace {

std::vector<double> dirichlet_draw(double alpha, int k, std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (auto& v : p) {
        v = gamma(rng);
        sum += v;
    }
    if (sum <= 0.0) {
        // all-zero gamma draws are possible for tiny alpha; dump mass on one client
        std::uniform_int_distribution<int> pick(0, k - 1);
        std::fill(p.begin(), p.end(), 0.0);
        p[static_cast<std::size_t>(pick(rng))] = 1.0;
        return p;
    }
    for (auto& v : p) v /= sum;
    return p;
}

} // namespace

std::vector<LabeledDataset> dirichlet_partition(const LabeledDataset& data,
                                                const PartitionConfig& cfg) {
    require(cfg.alpha > 0.0, Err::bad_config, "alpha must be positive");
    require(cfg.clients >= 2, Err::invalid_client_count, "partitioning requires K >= 2");
    const int k = cfg.clients;
    const int classes = data.classes;
    require(classes >= 1, Err::bad_config, "dataset has no classes");

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < data.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    for (int c = 0; c < classes; ++c)
        require(!by_class[static_cast<std::size_t>(c)].empty(), Err::partition_infeasible,
                "class " + std::to_string(c) + " has no samples");

    std::mt19937_64 rng(cfg.seed);
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        std::vector<std::vector<std::size_t>> assigned(static_cast<std::size_t>(k));
        for (int c = 0; c < classes; ++c) {
            auto idx = by_class[static_cast<std::size_t>(c)];
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto n_c = idx.size();
            auto p = dirichlet_draw(cfg.alpha, k, rng);
            // cumulative rounding keeps the split disjoint and exactly covering
            double cum = 0.0;
            std::size_t start = 0;
            for (int cl = 0; cl < k; ++cl) {
                cum += p[static_cast<std::size_t>(cl)];
                const auto end = (cl == k - 1)
                                     ? n_c
                                     : std::min(n_c, static_cast<std::size_t>(
                                                         std::llround(cum * static_cast<double>(n_c))));
                for (std::size_t i = start; i < end; ++i)
                    assigned[static_cast<std::size_t>(cl)].push_back(idx[i]);
                start = std::max(start, end);
            }
        }

        bool ok = true;
        for (const auto& a : assigned)
            if (a.size() < cfg.min_samples_per_client) ok = false;
        if (!ok) continue;

        std::vector<LabeledDataset> parts(static_cast<std::size_t>(k));
        for (int cl = 0; cl < k; ++cl) {
            auto& idx = assigned[static_cast<std::size_t>(cl)];
            std::sort(idx.begin(), idx.end());
            auto& part = parts[static_cast<std::size_t>(cl)];
            part.classes = classes;
            part.image_shape = data.image_shape;
            part.inputs = RealTensor({idx.size(), data.dim()});
            part.labels.resize(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                std::copy_n(&data.inputs.data[idx[i] * data.dim()], data.dim(),
                            &part.inputs.data[i * data.dim()]);
                part.labels[i] = data.labels[idx[i]];
            }
        }
        return parts;
    }
    fail(Err::partition_infeasible,
         "no partition satisfied min_samples_per_client after " +
             std::to_string(cfg.max_attempts) + " attempts");
}

std::vector<std::vector<std::size_t>> label_histograms(
    const std::vector<LabeledDataset>& parts, int classes) {
    std::vector<std::vector<std::size_t>> h(parts.size(),
                                            std::vector<std::size_t>(
                                                static_cast<std::size_t>(classes), 0));
    for (std::size_t p = 0; p < parts.size(); ++p)
        for (int label : parts[p].labels) ++h[p][static_cast<std::size_t>(label)];
    return h;
}

double heterogeneity_tv(const std::vector<LabeledDataset>& parts, int classes) {
    const auto hist = label_histograms(parts, classes);
    std::vector<std::vector<double>> dist(hist.size());
    for (std::size_t p = 0; p < hist.size(); ++p) {
        double total = 0.0;
        for (auto v : hist[p]) total += static_cast<double>(v);
        dist[p].resize(static_cast<std::size_t>(classes));
        for (int c = 0; c < classes; ++c)
            dist[p][static_cast<std::size_t>(c)] =
                total > 0 ? static_cast<double>(hist[p][static_cast<std::size_t>(c)]) / total : 0.0;
    }
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < dist.size(); ++a)
        for (std::size_t b = a + 1; b < dist.size(); ++b) {
            double tv = 0.0;
            for (int c = 0; c < classes; ++c)
                tv += std::abs(dist[a][static_cast<std::size_t>(c)] -
                               dist[b][static_cast<std::size_t>(c)]);
            acc += 0.5 * tv;
            ++pairs;
        }
    return pairs ? acc / static_cast<double>(pairs) : 0.0;
}

void save_partition(const std::string& dir, const std::vector<LabeledDataset>& parts,
                    int classes) {
    std::filesystem::create_directories(dir);
    for (std::size_t p = 0; p < parts.size(); ++p)
        save_dataset_csv(dir + "/client_" + std::to_string(p) + ".csv", parts[p]);

    const auto hist = label_histograms(parts, classes);
    std::ofstream os(dir + "/manifest.json");
    require(os.good(), Err::io_error, "cannot write manifest");
    os << "{\n  \"clients\": " << parts.size() << ",\n  \"classes\": " << classes
       << ",\n  \"label_histograms\": [\n";
    for (std::size_t p = 0; p < hist.size(); ++p) {
        os << "    [";
        for (int c = 0; c < classes; ++c)
            os << hist[p][static_cast<std::size_t>(c)] << (c + 1 < classes ? ", " : "");
        os << "]" << (p + 1 < hist.size() ? "," : "") << "\n";
    }
    os << "  ]\n}\n";
}

} // namespace fedinfer
