#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedinfer/errors.hpp"

namespace fedinfer {

using AccountId = std::string;
using Digest = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;
using PublicKey = std::array<std::uint8_t, 32>;
using SecretKey = std::array<std::uint8_t, 64>;

struct Keypair {
    PublicKey pk{};
    SecretKey sk{};
};

// Deterministic Ed25519 keypair from a 64-bit seed.
Keypair generate_keypair(std::uint64_t seed);

// SHA-256 over job_id || client.
Digest completion_digest(const std::string& job_id, const AccountId& client);
Signature sign_digest(const SecretKey& sk, const Digest& digest);
bool verify_digest(const Digest& digest, const Signature& sig, const PublicKey& pk);

// Signing-key registry for the simulated parties / clients.
class KeyRegistry {
  public:
    const Keypair& register_account(const AccountId& id, std::uint64_t seed);
    const Keypair& get(const AccountId& id) const; // UnregisteredKey if absent
    bool has(const AccountId& id) const;
    Signature sign_completion(const AccountId& id, const std::string& job_id,
                              const AccountId& client) const;

  private:
    std::map<AccountId, Keypair> keys_;
};

struct PartyAccount {
    AccountId id;
    PublicKey pubkey{};
};

struct JobRecord {
    std::string job_id;
    AccountId client;
    std::vector<PartyAccount> parties;
    std::uint64_t deposit = 0;
    bool completed = false;
};

// One signature per roster member, in roster order.
struct CompletionProof {
    std::vector<Signature> signatures;
};

// floor split with the remainder returned to the client.
struct RewardSplit {
    std::vector<std::uint64_t> amounts;
    std::uint64_t remainder = 0;
};
RewardSplit allocate_reward(std::uint64_t deposit, std::size_t parties);

// Deterministic settlement state machine over an in-process ledger.
//
// Operations are applied one at a time in a total order and appended to a
// JSON-lines journal; replaying the journal reproduces the state bit-exactly.
// Total currency (balances + open escrow deposits) is conserved by every
// operation.
class EscrowLedger {
  public:
    // test/bootstrap funding
    void fund(const AccountId& account, std::uint64_t amount);

    void create_job(const std::string& job_id, const AccountId& client,
                    const std::vector<PartyAccount>& parties, std::uint64_t deposit);
    void complete_job(const std::string& job_id, const AccountId& caller,
                      const CompletionProof& proof);

    std::uint64_t balance(const AccountId& account) const;
    const JobRecord* job(const std::string& job_id) const;
    std::uint64_t escrow_pool() const; // sum of open deposits
    std::uint64_t total_currency() const;

    const std::vector<std::string>& journal() const { return journal_; }
    std::string state_json() const;

    // Re-execute a journal into a fresh ledger.
    static EscrowLedger replay(const std::vector<std::string>& journal_lines);

  private:
    void append_journal(const std::string& op, const std::string& job_id,
                        const AccountId& caller, const std::vector<std::uint64_t>& amounts,
                        const std::string& result, const std::vector<AccountId>& roster = {});

    std::map<AccountId, std::uint64_t> balances_;
    std::map<std::string, JobRecord> jobs_;
    std::vector<std::string> journal_;
};

} // namespace fedinfer
