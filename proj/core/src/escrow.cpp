#include "fedinfer/escrow.hpp"

#include <sodium.h>

#include <mutex>
#include <sstream>

#include "json.hpp"

namespace fedinfer {

namespace {

void ensure_sodium() {
    static std::once_flag flag;
    std::call_once(flag, [] {
        if (sodium_init() < 0) fail(Err::bad_config, "libsodium initialization failed");
    });
}

} // namespace

Keypair generate_keypair(std::uint64_t seed) {
    ensure_sodium();
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed_bytes{};
    for (int i = 0; i < 8; ++i) seed_bytes[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(seed >> (8 * i));
    // stretch the 8-byte seed over the full 32 bytes
    crypto_hash_sha256(seed_bytes.data(), seed_bytes.data(), 8);
    Keypair kp;
    crypto_sign_seed_keypair(kp.pk.data(), kp.sk.data(), seed_bytes.data());
    return kp;
}

Digest completion_digest(const std::string& job_id, const AccountId& client) {
    ensure_sodium();
    std::string msg = job_id;
    msg += client;
    Digest d{};
    crypto_hash_sha256(d.data(), reinterpret_cast<const unsigned char*>(msg.data()),
                       msg.size());
    return d;
}

Signature sign_digest(const SecretKey& sk, const Digest& digest) {
    ensure_sodium();
    Signature sig{};
    unsigned long long len = 0;
    crypto_sign_detached(sig.data(), &len, digest.data(), digest.size(), sk.data());
    return sig;
}

bool verify_digest(const Digest& digest, const Signature& sig, const PublicKey& pk) {
    ensure_sodium();
    return crypto_sign_verify_detached(sig.data(), digest.data(), digest.size(), pk.data()) == 0;
}

const Keypair& KeyRegistry::register_account(const AccountId& id, std::uint64_t seed) {
    auto [it, inserted] = keys_.emplace(id, generate_keypair(seed));
    (void)inserted;
    return it->second;
}

const Keypair& KeyRegistry::get(const AccountId& id) const {
    auto it = keys_.find(id);
    require(it != keys_.end(), Err::unregistered_key, "no keypair registered for " + id);
    return it->second;
}

bool KeyRegistry::has(const AccountId& id) const { return keys_.count(id) > 0; }

Signature KeyRegistry::sign_completion(const AccountId& id, const std::string& job_id,
                                       const AccountId& client) const {
    return sign_digest(get(id).sk, completion_digest(job_id, client));
}

RewardSplit allocate_reward(std::uint64_t deposit, std::size_t parties) {
    require(deposit > 0, Err::zero_deposit, "deposit must be positive");
    require(parties > 0, Err::bad_config, "no parties");
    RewardSplit out;
    out.amounts.assign(parties, deposit / parties);
    out.remainder = deposit % parties;
    return out;
}

void EscrowLedger::append_journal(const std::string& op, const std::string& job_id,
                                  const AccountId& caller,
                                  const std::vector<std::uint64_t>& amounts,
                                  const std::string& result,
                                  const std::vector<AccountId>& roster) {
    nlohmann::json j;
    j["op"] = op;
    j["job_id"] = job_id;
    j["caller"] = caller;
    j["amounts"] = amounts;
    j["result"] = result;
    if (!roster.empty()) j["parties"] = roster;
    journal_.push_back(j.dump());
}

void EscrowLedger::fund(const AccountId& account, std::uint64_t amount) {
    balances_[account] += amount;
    append_journal("fund", "", account, {amount}, "ok");
}

void EscrowLedger::create_job(const std::string& job_id, const AccountId& client,
                              const std::vector<PartyAccount>& parties,
                              std::uint64_t deposit) {
    try {
        require(jobs_.find(job_id) == jobs_.end(), Err::duplicate_job,
                "job already exists: " + job_id);
        require(deposit > 0, Err::zero_deposit, "deposit must be positive");
        require(!parties.empty(), Err::bad_config, "empty party roster");
        auto it = balances_.find(client);
        require(it != balances_.end() && it->second >= deposit, Err::insufficient_balance,
                "client balance below deposit");
        it->second -= deposit;
        JobRecord rec;
        rec.job_id = job_id;
        rec.client = client;
        rec.parties = parties;
        rec.deposit = deposit;
        rec.completed = false;
        jobs_.emplace(job_id, std::move(rec));
        std::vector<AccountId> roster;
        for (const auto& p : parties) roster.push_back(p.id);
        append_journal("create_job", job_id, client, {deposit}, "ok", roster);
    } catch (const Error& e) {
        append_journal("create_job", job_id, client, {deposit},
                       std::string("rejected: ") + e.what());
        throw;
    }
}

void EscrowLedger::complete_job(const std::string& job_id, const AccountId& caller,
                                const CompletionProof& proof) {
    std::vector<std::uint64_t> paid;
    try {
        auto it = jobs_.find(job_id);
        require(it != jobs_.end(), Err::unknown_job, "unknown job: " + job_id);
        JobRecord& job = it->second;
        require(!job.completed, Err::already_completed, "job already completed: " + job_id);
        require(caller == job.client, Err::not_client, "caller is not the job client");
        require(proof.signatures.size() == job.parties.size(), Err::bad_signature,
                "proof must carry one signature per registered party");

        const Digest m = completion_digest(job_id, job.client);
        for (std::size_t k = 0; k < job.parties.size(); ++k)
            require(verify_digest(m, proof.signatures[k], job.parties[k].pubkey),
                    Err::bad_signature,
                    "signature verification failed for party " + std::to_string(k));

        const RewardSplit split = allocate_reward(job.deposit, job.parties.size());
        for (std::size_t k = 0; k < job.parties.size(); ++k) {
            balances_[job.parties[k].id] += split.amounts[k];
            paid.push_back(split.amounts[k]);
        }
        balances_[job.client] += split.remainder;
        paid.push_back(split.remainder);
        job.completed = true;
        append_journal("complete_job", job_id, caller, paid, "ok");
    } catch (const Error& e) {
        append_journal("complete_job", job_id, caller, paid,
                       std::string("rejected: ") + e.what());
        throw;
    }
}

std::uint64_t EscrowLedger::balance(const AccountId& account) const {
    auto it = balances_.find(account);
    return it == balances_.end() ? 0 : it->second;
}

const JobRecord* EscrowLedger::job(const std::string& job_id) const {
    auto it = jobs_.find(job_id);
    return it == jobs_.end() ? nullptr : &it->second;
}

std::uint64_t EscrowLedger::escrow_pool() const {
    std::uint64_t pool = 0;
    for (const auto& [id, job] : jobs_)
        if (!job.completed) pool += job.deposit;
    return pool;
}

std::uint64_t EscrowLedger::total_currency() const {
    std::uint64_t total = escrow_pool();
    for (const auto& [id, bal] : balances_) total += bal;
    return total;
}

std::string EscrowLedger::state_json() const {
    nlohmann::json j;
    j["balances"] = nlohmann::json::object();
    for (const auto& [id, bal] : balances_) j["balances"][id] = bal;
    j["jobs"] = nlohmann::json::object();
    for (const auto& [id, job] : jobs_) {
        nlohmann::json rec;
        rec["client"] = job.client;
        rec["deposit"] = job.deposit;
        rec["completed"] = job.completed;
        std::vector<std::string> roster;
        for (const auto& p : job.parties) roster.push_back(p.id);
        rec["parties"] = roster;
        j["jobs"][id] = rec;
    }
    return j.dump(2);
}

EscrowLedger EscrowLedger::replay(const std::vector<std::string>& journal_lines) {
    // The journal is a state-transition log: rejected entries are no-ops and
    // completions replay the recorded transfers (signatures are not re-checked).
    EscrowLedger out;
    for (const auto& line : journal_lines) {
        const auto j = nlohmann::json::parse(line);
        const std::string op = j.at("op");
        const std::string result = j.at("result");
        const std::string job_id = j.at("job_id");
        const AccountId caller = j.at("caller");
        const std::vector<std::uint64_t> amounts = j.at("amounts");
        out.journal_.push_back(line);
        if (result != "ok") continue;
        if (op == "fund") {
            out.balances_[caller] += amounts.at(0);
        } else if (op == "create_job") {
            out.balances_[caller] -= amounts.at(0);
            JobRecord rec;
            rec.job_id = job_id;
            rec.client = caller;
            rec.deposit = amounts.at(0);
            rec.completed = false;
            for (const auto& id : j.at("parties"))
                rec.parties.push_back(PartyAccount{id.get<AccountId>(), PublicKey{}});
            out.jobs_.emplace(job_id, std::move(rec));
        } else if (op == "complete_job") {
            auto it = out.jobs_.find(job_id);
            require(it != out.jobs_.end(), Err::unknown_job, "replay: unknown job");
            auto& job = it->second;
            require(!job.completed, Err::already_completed, "replay: double completion");
            require(amounts.size() == job.parties.size() + 1, Err::bad_config,
                    "replay: transfer count mismatch");
            for (std::size_t k = 0; k < job.parties.size(); ++k)
                out.balances_[job.parties[k].id] += amounts[k];
            out.balances_[job.client] += amounts.back();
            job.completed = true;
            (void)caller;
        }
    }
    return out;
}

} // namespace fedinfer
