#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "fedinfer/errors.hpp"

namespace fedinfer {

using Bytes = std::vector<std::uint8_t>;

// One directed link between two parties.
struct LinkProfile {
    double rtt_ms = 0.0;
    double bandwidth_bps = 1e12;
};

// Symmetric K x K link matrix with zero-rtt diagonal.
class NetworkPreset {
  public:
    NetworkPreset() = default;
    NetworkPreset(std::string name, int parties, LinkProfile uniform);
    NetworkPreset(std::string name, std::vector<std::vector<LinkProfile>> links);

    const std::string& name() const { return name_; }
    int parties() const { return static_cast<int>(links_.size()); }
    const LinkProfile& link(int i, int j) const { return links_[i][j]; }

    // Midpoint summaries of the preset's link ranges.
    double rtt_ms_summary = 0.0;
    double bandwidth_bps_summary = 0.0;

  private:
    std::string name_;
    std::vector<std::vector<LinkProfile>> links_;
    void check() const;
};

// Canonical preset names, in increasing-latency order.
const std::vector<std::string>& preset_names();

// Build one of the five deployment presets for a K-party session.
// Range-valued presets (multi_zone_eu, global) assign parties to the three
// named regions round-robin and give distinct region pairs the low / mid /
// high values of the published range; scalar presets use uniform links.
NetworkPreset load_preset(const std::string& name, int parties = 3);

// Key-value preset file: name, rtt_ms (scalar or ';'-rows/','-cols matrix),
// bandwidth_bps (same forms).
NetworkPreset load_preset_file(const std::string& path, int parties = 3);

struct RoundLedger {
    std::uint64_t rounds = 0;
    std::vector<std::vector<std::uint64_t>> bytes_sent; // [from][to]
    double elapsed_ms = 0.0;

    std::uint64_t bytes_total() const;
    std::string to_json() const; // {rounds, bytes_total, elapsed_ms}
};

// Lockstep all-to-all message exchange for K logical party threads.
//
// Each round, every party contributes exactly one payload; once all K have
// arrived the payloads are delivered to everyone, the round counter ticks and
// the simulated clock advances by the slowest link's rtt + serialization time.
// abort() wakes all waiters with a PartyAbort error (fail-stop semantics).
class Transport {
  public:
    explicit Transport(NetworkPreset preset);

    int party_count() const { return parties_; }
    const NetworkPreset& preset() const { return preset_; }

    // Blocks until all parties have contributed, then returns all K payloads
    // (indexed by party id). Throws Error(party_abort) if any party aborted.
    std::vector<Bytes> exchange(int party, Bytes payload);

    void abort(int party);
    bool aborted() const;
    int aborter() const;

    RoundLedger ledger() const;
    void reset_ledger();

    // Observation tap for tests: called once per (round, sender) with the
    // payload every other party receives.
    using PayloadObserver = std::function<void(std::uint64_t round, int from, const Bytes&)>;
    void set_observer(PayloadObserver observer);

  private:
    void account_round_locked();

    NetworkPreset preset_;
    int parties_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::vector<Bytes> staged_;
    std::vector<Bytes> delivery_;
    int arrived_ = 0;
    std::uint64_t generation_ = 0;
    bool aborted_ = false;
    int aborter_ = -1;
    RoundLedger ledger_;
    PayloadObserver observer_;
};

} // namespace fedinfer
