#include "fedinfer/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fedinfer {

NetworkPreset::NetworkPreset(std::string name, int parties, LinkProfile uniform)
    : name_(std::move(name)) {
    require(parties >= 1, Err::bad_preset_config, "preset needs at least one party");
    links_.assign(parties, std::vector<LinkProfile>(parties, uniform));
    for (int i = 0; i < parties; ++i) links_[i][i] = LinkProfile{0.0, uniform.bandwidth_bps};
    rtt_ms_summary = uniform.rtt_ms;
    bandwidth_bps_summary = uniform.bandwidth_bps;
    check();
}

NetworkPreset::NetworkPreset(std::string name, std::vector<std::vector<LinkProfile>> links)
    : name_(std::move(name)), links_(std::move(links)) {
    double rtt_lo = 1e300, rtt_hi = 0.0, bw_lo = 1e300, bw_hi = 0.0;
    for (int i = 0; i < parties(); ++i)
        for (int j = 0; j < parties(); ++j) {
            if (i == j) continue;
            rtt_lo = std::min(rtt_lo, links_[i][j].rtt_ms);
            rtt_hi = std::max(rtt_hi, links_[i][j].rtt_ms);
            bw_lo = std::min(bw_lo, links_[i][j].bandwidth_bps);
            bw_hi = std::max(bw_hi, links_[i][j].bandwidth_bps);
        }
    if (parties() > 1) {
        rtt_ms_summary = 0.5 * (rtt_lo + rtt_hi);
        bandwidth_bps_summary = 0.5 * (bw_lo + bw_hi);
    }
    check();
}

void NetworkPreset::check() const {
    for (int i = 0; i < parties(); ++i) {
        require(static_cast<int>(links_[i].size()) == parties(), Err::bad_preset_config,
                "link matrix not square");
        require(links_[i][i].rtt_ms == 0.0, Err::bad_preset_config, "diagonal rtt must be zero");
        for (int j = 0; j < parties(); ++j) {
            require(links_[i][j].rtt_ms >= 0.0, Err::bad_preset_config, "negative rtt");
            require(links_[i][j].bandwidth_bps > 0.0, Err::bad_preset_config,
                    "bandwidth must be positive");
            require(links_[i][j].rtt_ms == links_[j][i].rtt_ms &&
                        links_[i][j].bandwidth_bps == links_[j][i].bandwidth_bps,
                    Err::bad_preset_config, "link matrix not symmetric");
        }
    }
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"intra_zone", "inter_zone", "multi_zone_eu",
                                                   "inter_continent", "global"};
    return names;
}

namespace {

constexpr double kGbps = 1e9;
constexpr double kMbps = 1e6;

// Three-region preset: distinct region pairs get the low / mid / high values
// of the published rtt range (and high / mid / low bandwidth), parties are
// assigned regions round-robin, same-region links get the fastest profile.
NetworkPreset make_three_region(const std::string& name, int parties, double rtt_lo, double rtt_hi,
                                double bw_lo, double bw_hi) {
    const double rtt_mid = 0.5 * (rtt_lo + rtt_hi);
    const double bw_mid = 0.5 * (bw_lo + bw_hi);
    auto pair_profile = [&](int ra, int rb) -> LinkProfile {
        if (ra == rb) return {rtt_lo, bw_hi};
        int lo = std::min(ra, rb), hi = std::max(ra, rb);
        if (lo == 0 && hi == 1) return {rtt_lo, bw_hi};
        if (lo == 1 && hi == 2) return {rtt_mid, bw_mid};
        return {rtt_hi, bw_lo};
    };
    std::vector<std::vector<LinkProfile>> links(parties, std::vector<LinkProfile>(parties));
    for (int i = 0; i < parties; ++i)
        for (int j = 0; j < parties; ++j)
            links[i][j] = (i == j) ? LinkProfile{0.0, bw_hi} : pair_profile(i % 3, j % 3);
    return NetworkPreset(name, std::move(links));
}

} // namespace

NetworkPreset load_preset(const std::string& name, int parties) {
    require(parties >= 1, Err::bad_preset_config, "preset needs at least one party");
    if (name == "intra_zone") return NetworkPreset(name, parties, {0.20, 4.9 * kGbps});
    if (name == "inter_zone") return NetworkPreset(name, parties, {1.16, 4.9 * kGbps});
    if (name == "multi_zone_eu")
        return make_three_region(name, parties, 6.0, 32.0, 0.9 * kGbps, 2.7 * kGbps);
    if (name == "inter_continent") return NetworkPreset(name, parties, {250.0, 120.0 * kMbps});
    if (name == "global")
        return make_three_region(name, parties, 170.0, 295.0, 95.0 * kMbps, 180.0 * kMbps);
    fail(Err::unknown_preset, "unknown network preset: " + name);
}

namespace {

std::vector<std::vector<double>> parse_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::stringstream row_stream(text);
    std::string row;
    while (std::getline(row_stream, row, ';')) {
        std::vector<double> vals;
        std::stringstream cell_stream(row);
        std::string cell;
        while (std::getline(cell_stream, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail(Err::bad_preset_config, "bad numeric value in preset file: " + cell);
            }
        }
        if (!vals.empty()) rows.push_back(std::move(vals));
    }
    return rows;
}

} // namespace

NetworkPreset load_preset_file(const std::string& path, int parties) {
    std::ifstream in(path);
    require(in.good(), Err::io_error, "cannot open preset file: " + path);
    std::string name = "custom";
    std::string rtt_text, bw_text;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const char* ws = " \t\r\n";
            s.erase(0, s.find_first_not_of(ws));
            auto end = s.find_last_not_of(ws);
            s.erase(end == std::string::npos ? 0 : end + 1);
            return s;
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "name") name = val;
        else if (key == "rtt_ms") rtt_text = val;
        else if (key == "bandwidth_bps") bw_text = val;
    }
    require(!rtt_text.empty() && !bw_text.empty(), Err::bad_preset_config,
            "preset file must define rtt_ms and bandwidth_bps");

    auto rtt = parse_matrix(rtt_text);
    auto bw = parse_matrix(bw_text);
    const bool rtt_scalar = rtt.size() == 1 && rtt[0].size() == 1;
    const bool bw_scalar = bw.size() == 1 && bw[0].size() == 1;
    if (rtt_scalar && bw_scalar)
        return NetworkPreset(name, parties, {rtt[0][0], bw[0][0]});

    const std::size_t k = rtt_scalar ? bw.size() : rtt.size();
    std::vector<std::vector<LinkProfile>> links(k, std::vector<LinkProfile>(k));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double r = rtt_scalar ? (i == j ? 0.0 : rtt[0][0]) : rtt.at(i).at(j);
            double b = bw_scalar ? bw[0][0] : bw.at(i).at(j);
            links[i][j] = {r, b};
        }
    return NetworkPreset(name, std::move(links));
}

std::uint64_t RoundLedger::bytes_total() const {
    std::uint64_t total = 0;
    for (const auto& row : bytes_sent)
        for (auto b : row) total += b;
    return total;
}

std::string RoundLedger::to_json() const {
    std::ostringstream os;
    os << "{\"rounds\": " << rounds << ", \"bytes_total\": " << bytes_total()
       << ", \"elapsed_ms\": " << elapsed_ms << "}";
    return os.str();
}

Transport::Transport(NetworkPreset preset)
    : preset_(std::move(preset)), parties_(preset_.parties()) {
    staged_.resize(parties_);
    delivery_.resize(parties_);
    ledger_.bytes_sent.assign(parties_, std::vector<std::uint64_t>(parties_, 0));
}

void Transport::account_round_locked() {
    ledger_.rounds += 1;
    if (observer_)
        for (int i = 0; i < parties_; ++i) observer_(ledger_.rounds, i, staged_[i]);
    double round_ms = 0.0;
    for (int i = 0; i < parties_; ++i)
        for (int j = 0; j < parties_; ++j) {
            if (i == j) continue;
            const auto bytes = static_cast<std::uint64_t>(staged_[i].size());
            ledger_.bytes_sent[i][j] += bytes;
            const auto& l = preset_.link(i, j);
            round_ms = std::max(round_ms,
                                l.rtt_ms + static_cast<double>(bytes) * 8.0 * 1e3 / l.bandwidth_bps);
        }
    ledger_.elapsed_ms += round_ms;
}

std::vector<Bytes> Transport::exchange(int party, Bytes payload) {
    std::unique_lock<std::mutex> lk(mu_);
    require(party >= 0 && party < parties_, Err::transport_failure, "bad party id");
    if (aborted_) fail(Err::party_abort, "protocol aborted by party " + std::to_string(aborter_));

    const std::uint64_t my_gen = generation_;
    staged_[party] = std::move(payload);
    ++arrived_;
    if (arrived_ == parties_) {
        account_round_locked();
        delivery_ = staged_;
        for (auto& s : staged_) s.clear();
        arrived_ = 0;
        ++generation_;
        cv_.notify_all();
    } else {
        cv_.wait(lk, [&] { return generation_ != my_gen || aborted_; });
        if (aborted_ && generation_ == my_gen)
            fail(Err::party_abort, "protocol aborted by party " + std::to_string(aborter_));
    }
    return delivery_;
}

void Transport::abort(int party) {
    std::lock_guard<std::mutex> lk(mu_);
    if (!aborted_) {
        aborted_ = true;
        aborter_ = party;
    }
    cv_.notify_all();
}

bool Transport::aborted() const {
    std::lock_guard<std::mutex> lk(mu_);
    return aborted_;
}

int Transport::aborter() const {
    std::lock_guard<std::mutex> lk(mu_);
    return aborter_;
}

RoundLedger Transport::ledger() const {
    std::lock_guard<std::mutex> lk(mu_);
    return ledger_;
}

void Transport::set_observer(PayloadObserver observer) {
    std::lock_guard<std::mutex> lk(mu_);
    observer_ = std::move(observer);
}

void Transport::reset_ledger() {
    std::lock_guard<std::mutex> lk(mu_);
    ledger_ = RoundLedger{};
    ledger_.bytes_sent.assign(parties_, std::vector<std::uint64_t>(parties_, 0));
}

} // namespace fedinfer
