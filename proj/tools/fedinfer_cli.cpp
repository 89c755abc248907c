// Experiment driver: end-to-end protected ensemble inference plus the
// latency / non-IID / reward-fairness sweeps, emitting machine-readable
// reports (JSON for single runs, CSV for sweeps).

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fedinfer/incentive.hpp"
#include "fedinfer/partition.hpp"
#include "fedinfer/pipeline.hpp"

using namespace fedinfer;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

#ifndef FEDINFER_GIT_HASH
#define FEDINFER_GIT_HASH "unknown"
#endif

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(const std::string& s) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(s)));
    return buf;
}

struct Options {
    std::uint64_t seed = 1;
    std::string preset = "intra_zone";
    std::vector<double> alphas;
    int clients = 3;
    int parties = 3;
    std::vector<std::string> schemes;
    std::string model = "tiny";
    std::string out;
    std::string data;
    std::string models_dir;
    int seeds = 3;
    int queries = 8;
    std::size_t samples = 1200;
    std::uint64_t deposit = 90;
    int epochs = 15;
    int abort_phase = 0;
    int abort_party = 0;
    double beta = 1.0;
    double gamma = 1.0;
    int tta_views = 2;
    double rotation_deg = 10.0;

    std::string canonical(const std::string& command) const {
        std::ostringstream os;
        os << command << ";seed=" << seed << ";preset=" << preset << ";clients=" << clients
           << ";parties=" << parties << ";model=" << model << ";seeds=" << seeds
           << ";queries=" << queries << ";samples=" << samples << ";deposit=" << deposit
           << ";epochs=" << epochs << ";beta=" << beta << ";gamma=" << gamma
           << ";tta_views=" << tta_views << ";rotation=" << rotation_deg << ";alphas=";
        for (double a : alphas) os << a << ",";
        os << ";schemes=";
        for (const auto& s : schemes) os << s << ",";
        return os.str();
    }
};

std::vector<double> default_alphas() { return canonical_alpha_grid(); }

std::vector<std::string> default_schemes() { return {"soft", "entropy"}; }

bool is_builtin_mlp(const std::string& name) {
    return name == "small_mlp" || name == "medium_mlp" || name == "large_mlp";
}

ModelSpec make_arch(const std::string& name) {
    if (name == "tiny") return build_custom_model({64, 16, 10});
    return build_model(name);
}

// Train one model per client on a Dirichlet split of the desk-scale dataset.
std::vector<ModelSpec> train_client_models(const Options& opt, double alpha,
                                           std::uint64_t seed,
                                           const LabeledDataset& train_data,
                                           std::vector<double>* accuracies,
                                           const LabeledDataset* test_data) {
    PartitionConfig pc;
    pc.alpha = alpha;
    pc.clients = opt.clients;
    pc.seed = seed;
    pc.min_samples_per_client = 2;
    auto parts = dirichlet_partition(train_data, pc);

    std::vector<ModelSpec> models;
    for (int k = 0; k < opt.clients; ++k) {
        ModelSpec m = make_arch(opt.model);
        init_weights(m, seed * 131 + static_cast<std::uint64_t>(k));
        TrainConfig tc;
        tc.epochs = opt.epochs;
        tc.learning_rate = 0.3;
        tc.seed = seed * 977 + static_cast<std::uint64_t>(k);
        m = train(m, parts[static_cast<std::size_t>(k)], tc);
        if (accuracies && test_data) accuracies->push_back(evaluate_accuracy(m, *test_data));
        models.push_back(std::move(m));
    }
    return models;
}

LabeledDataset make_queries(const Options& opt, std::uint64_t seed) {
    if (opt.model == "tiny") return make_digit_grid(static_cast<std::size_t>(opt.queries), 0.2, seed);
    // the big MLPs take CIFAR-shaped inputs; latency studies use random queries
    LabeledDataset q;
    q.classes = 10;
    q.inputs = RealTensor({static_cast<std::size_t>(opt.queries), 3072});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : q.inputs.data) v = dist(rng);
    q.labels.assign(static_cast<std::size_t>(opt.queries), 0);
    return q;
}

std::vector<ModelSpec> make_models(const Options& opt, std::uint64_t seed, int count) {
    std::vector<ModelSpec> models;
    if (!opt.models_dir.empty()) {
        for (int i = 0; i < count; ++i)
            models.push_back(
                load_model(opt.models_dir + "/model_" + std::to_string(i) + ".bin"));
        return models;
    }
    if (opt.model == "tiny") {
        auto data = make_digit_grid(opt.samples, 0.2, seed + 7000);
        Options tmp = opt;
        tmp.clients = count;
        return train_client_models(tmp, 1000.0, seed, data, nullptr, nullptr);
    }
    for (int i = 0; i < count; ++i) {
        ModelSpec m = make_arch(opt.model);
        init_weights(m, seed * 31 + static_cast<std::uint64_t>(i));
        models.push_back(std::move(m));
    }
    return models;
}

InferenceJobConfig job_config(const Options& opt, Scheme scheme, std::uint64_t seed) {
    InferenceJobConfig cfg;
    cfg.parties = opt.parties;
    cfg.scheme = scheme;
    cfg.preset = opt.preset;
    cfg.seed = seed;
    cfg.deposit = opt.deposit;
    cfg.weighting.beta = opt.beta;
    cfg.weighting.gamma = opt.gamma;
    cfg.weighting.tta_views = opt.tta_views;
    cfg.weighting.rotation_range_deg = opt.rotation_deg;
    cfg.weighting.seed = seed;
    if (opt.abort_phase > 0) {
        cfg.abort.enabled = true;
        cfg.abort.phase = opt.abort_phase;
        cfg.abort.party = opt.abort_party;
    }
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream os(path);
    require(os.good(), Err::io_error, "cannot write " + path);
    os << text;
}

int cmd_infer(const Options& opt) {
    const std::string config_hash = hash_hex(opt.canonical("infer"));
    Scheme scheme = parse_scheme(opt.schemes.empty() ? "soft" : opt.schemes.front());

    const int n_models = opt.clients;
    auto models = make_models(opt, opt.seed, n_models);
    auto queries = make_queries(opt, opt.seed + 500);

    EscrowLedger escrow;
    KeyRegistry keys;
    InferenceJobConfig cfg = job_config(opt, scheme, opt.seed);

    InferenceResult res;
    if (opt.parties == 1) {
        res = run_single_party_inference(cfg, models, queries, &escrow, &keys);
    } else {
        res = run_secure_inference(cfg, models, queries, &escrow, &keys);
    }

    nlohmann::json report;
    report["command"] = "infer";
    report["config_hash"] = config_hash;
    report["seed"] = opt.seed;
    report["scheme"] = scheme_name(scheme);
    report["preset"] = opt.preset;
    report["parties"] = opt.parties;
    report["models"] = n_models;
    report["model"] = opt.model;
    report["aborted"] = res.aborted;
    report["abort_phase"] = res.abort_phase;
    report["predictions"] = res.predictions;
    report["job_id"] = res.job_id;
    report["job_created"] = res.job_created;
    report["job_settled"] = res.job_settled;
    report["escrow_pool"] = escrow.escrow_pool();
    report["ledger"] = {{"rounds", res.ledger.rounds},
                        {"bytes_total", res.ledger.bytes_total()},
                        {"elapsed_ms", res.ledger.elapsed_ms}};
    {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        report["provenance"] = {{"git", FEDINFER_GIT_HASH}, {"version", "1.0"},
                                {"timestamp", stamp}};
    }
    write_text(opt.out, report.dump(2) + "\n");
    return res.aborted ? kExitAbort : 0;
}

int cmd_latency_sweep(const Options& opt) {
    const std::string config_hash = hash_hex(opt.canonical("latency-sweep"));
    Scheme scheme = parse_scheme(opt.schemes.empty() ? "soft" : opt.schemes.front());
    auto models = make_models(opt, opt.seed, opt.clients);
    auto queries = make_queries(opt, opt.seed + 500);

    std::ostringstream csv;
    csv << "seed,preset,scheme,rounds,bytes_total,elapsed_ms,config_hash\n";
    for (const auto& preset : preset_names()) {
        Options cell = opt;
        cell.preset = preset;
        InferenceJobConfig cfg = job_config(cell, scheme, opt.seed);
        auto res = run_secure_inference(cfg, models, queries);
        require(!res.aborted, Err::party_abort, "sweep cell aborted");
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3f", res.ledger.elapsed_ms);
        csv << opt.seed << "," << preset << "," << scheme_name(scheme) << ","
            << res.ledger.rounds << "," << res.ledger.bytes_total() << "," << buf << ","
            << config_hash << "\n";
    }
    write_text(opt.out, csv.str());
    return 0;
}

int cmd_ensemble_sweep(const Options& opt) {
    const std::string config_hash = hash_hex(opt.canonical("ensemble-sweep"));
    std::ostringstream csv;
    csv << "seed,alpha,clients,scheme,accuracy,single_avg,single_best,config_hash\n";
    for (double alpha : opt.alphas) {
        for (int s = 0; s < opt.seeds; ++s) {
            const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(s);
            auto train_data = make_digit_grid(opt.samples, 0.2, seed);
            auto test_data = make_digit_grid(opt.samples / 3, 0.2, seed + 10000);
            std::vector<double> accs;
            std::vector<ModelSpec> models;
            try {
                models = train_client_models(opt, alpha, seed, train_data, &accs, &test_data);
            } catch (const Error& e) {
                csv << seed << "," << alpha << "," << opt.clients << ",FAILED,0,0,0,"
                    << config_hash << "\n";
                continue;
            }
            double avg = 0.0, best = 0.0;
            for (double a : accs) {
                avg += a;
                best = std::max(best, a);
            }
            avg /= static_cast<double>(accs.size());

            WeightingConfig wc;
            wc.beta = opt.beta;
            wc.gamma = opt.gamma;
            wc.tta_views = opt.tta_views;
            wc.rotation_range_deg = opt.rotation_deg;
            wc.seed = seed;
            for (const auto& scheme_str : opt.schemes) {
                Scheme scheme = parse_scheme(scheme_str);
                auto res = ensemble_predict_plain(models, test_data, scheme, wc);
                std::size_t hits = 0;
                for (std::size_t q = 0; q < test_data.size(); ++q)
                    if (res.predictions[q] == test_data.labels[q]) ++hits;
                const double acc = static_cast<double>(hits) /
                                   static_cast<double>(test_data.size());
                char buf[96];
                std::snprintf(buf, sizeof(buf), "%llu,%g,%d,%s,%.6f,%.6f,%.6f,",
                              static_cast<unsigned long long>(seed), alpha, opt.clients,
                              scheme_name(scheme).c_str(), acc, avg, best);
                csv << buf << config_hash << "\n";
            }
        }
    }
    write_text(opt.out, csv.str());
    return 0;
}

int cmd_fairness_sweep(const Options& opt) {
    const std::string config_hash = hash_hex(opt.canonical("fairness-sweep"));
    std::ostringstream csv;
    csv << fairness_csv_header(opt.clients) << ",config_hash\n";
    for (double alpha : opt.alphas) {
        for (int s = 0; s < opt.seeds; ++s) {
            const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(s);
            auto train_data = make_digit_grid(opt.samples, 0.2, seed);
            auto test_data = make_digit_grid(opt.samples / 3, 0.2, seed + 10000);
            std::vector<double> accs;
            std::vector<ModelSpec> models;
            try {
                models = train_client_models(opt, alpha, seed, train_data, &accs, &test_data);
            } catch (const Error&) {
                csv << seed << "," << alpha << "," << opt.clients << ",FAILED,0";
                for (int i = 0; i < 2 * opt.clients; ++i) csv << ",0";
                csv << "," << config_hash << "\n";
                continue;
            }
            MeritVector merit = ideal_merit(accs);

            EvaluationBatch batch;
            for (const auto& m : models) batch.probs.push_back(softmax(forward(m, test_data.inputs)));
            auto ens = ensemble_predict_plain(models, test_data, Scheme::soft_uniform, {});
            batch.ensemble_predictions = ens.predictions;
            batch.accuracies = accs;

            std::vector<RewardVector> rewards = {reward_uniform(opt.clients),
                                                 reward_confidence(batch),
                                                 reward_agreement(batch)};
            for (const auto& r : rewards) {
                const double f = fairness(r, merit);
                csv << fairness_csv_row(seed, alpha, opt.clients, r.scheme, f, r, merit) << ","
                    << config_hash << "\n";
            }
        }
    }
    write_text(opt.out, csv.str());
    return 0;
}

int cmd_partition(const Options& opt) {
    LabeledDataset data = opt.data.empty() ? make_digit_grid(opt.samples, 0.2, opt.seed)
                                           : load_dataset_csv(opt.data);
    PartitionConfig pc;
    pc.alpha = opt.alphas.empty() ? 0.5 : opt.alphas.front();
    pc.clients = opt.clients;
    pc.seed = opt.seed;
    auto parts = dirichlet_partition(data, pc);
    require(!opt.out.empty(), Err::bad_config, "partition requires --out DIR");
    save_partition(opt.out, parts, data.classes);
    std::cout << "wrote " << parts.size() << " client datasets to " << opt.out << "\n";
    return 0;
}

int cmd_train(const Options& opt) {
    LabeledDataset data = opt.data.empty() ? make_digit_grid(opt.samples, 0.2, opt.seed)
                                           : load_dataset_csv(opt.data);
    ModelSpec m = make_arch(opt.model);
    init_weights(m, opt.seed);
    TrainConfig tc;
    tc.epochs = opt.epochs;
    tc.learning_rate = 0.3;
    tc.seed = opt.seed;
    m = train(m, data, tc);
    require(!opt.out.empty(), Err::bad_config, "train requires --out FILE");
    save_model(opt.out, m);
    std::cout << "trained " << opt.model << ": accuracy "
              << evaluate_accuracy(m, data) << ", saved to " << opt.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"privacy-preserving collaborative ensemble inference"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;

    app.set_config("--config", "", "flat key=value config file (flags win)");
    app.add_option("--seed", opt.seed, "run seed (mandatory for reproducibility)")
        ->capture_default_str();
    app.add_option("--preset", opt.preset, "network preset")->capture_default_str();
    app.add_option("--alpha", opt.alphas, "Dirichlet alpha value(s)");
    app.add_option("--clients", opt.clients, "number of model owners K")
        ->capture_default_str();
    app.add_option("--parties", opt.parties, "number of computing parties")
        ->capture_default_str();
    app.add_option("--scheme", opt.schemes, "ensemble scheme(s): hard|soft|entropy|spectral|tta");
    app.add_option("--model", opt.model, "tiny | small_mlp | medium_mlp | large_mlp")
        ->capture_default_str();
    app.add_option("--out", opt.out, "output path (JSON or CSV; '-' for stdout)");
    app.add_option("--data", opt.data, "input dataset CSV (default: bundled digit grid)");
    app.add_option("--models-dir", opt.models_dir, "directory with model_<i>.bin files");
    app.add_option("--seeds", opt.seeds, "seeds per sweep cell")->capture_default_str();
    app.add_option("--queries", opt.queries, "query batch size")->capture_default_str();
    app.add_option("--samples", opt.samples, "dataset size")->capture_default_str();
    app.add_option("--deposit", opt.deposit, "escrow deposit")->capture_default_str();
    app.add_option("--epochs", opt.epochs, "training epochs")->capture_default_str();
    app.add_option("--abort-phase", opt.abort_phase, "inject a party abort at phase 1..5");
    app.add_option("--abort-party", opt.abort_party, "aborting party id");
    app.add_option("--beta", opt.beta, "entropy weighting sharpness")->capture_default_str();
    app.add_option("--gamma", opt.gamma, "tta weighting sharpness")->capture_default_str();
    app.add_option("--tta-views", opt.tta_views, "augmented views T")->capture_default_str();
    app.add_option("--rotation-deg", opt.rotation_deg, "tta rotation range")
        ->capture_default_str();

    auto* infer = app.add_subcommand("infer", "one end-to-end protected inference job");
    auto* latency = app.add_subcommand("latency-sweep", "elapsed time across network presets");
    auto* ensemble = app.add_subcommand("ensemble-sweep", "scheme accuracy across alpha grid");
    auto* fairness_cmd = app.add_subcommand("fairness-sweep", "reward fairness across alpha");
    auto* part = app.add_subcommand("partition", "write a Dirichlet split to --out DIR");
    auto* train_cmd = app.add_subcommand("train", "train one model, save to --out FILE");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (opt.alphas.empty()) opt.alphas = default_alphas();
    if (opt.schemes.empty()) opt.schemes = default_schemes();

    try {
        if (infer->parsed()) return cmd_infer(opt);
        if (latency->parsed()) return cmd_latency_sweep(opt);
        if (ensemble->parsed()) return cmd_ensemble_sweep(opt);
        if (fairness_cmd->parsed()) return cmd_fairness_sweep(opt);
        if (part->parsed()) return cmd_partition(opt);
        if (train_cmd->parsed()) return cmd_train(opt);
    } catch (const Error& e) {
        if (e.code() == Err::party_abort) {
            std::cerr << "protocol abort: " << e.what() << "\n";
            return kExitAbort;
        }
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
