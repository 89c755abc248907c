#pragma once

#include <stdexcept>
#include <string>

namespace fedinfer {

enum class Err {
    // fixed point
    range_overflow,
    // secret sharing / protocols
    invalid_party_count,
    missing_share,
    shape_mismatch,
    triple_shape_mismatch,
    transport_failure,
    insufficient_randomness,
    party_abort,
    // transport
    unknown_preset,
    bad_preset_config,
    // plaintext nn
    unknown_architecture,
    non_finite_loss,
    // secure nn
    approximation_domain,
    // ensemble
    weight_sum_violation,
    invalid_distribution,
    degenerate_covariance,
    not_image_shaped,
    // partition
    partition_infeasible,
    invalid_client_count,
    // incentive
    all_zero_accuracy,
    no_agreement_anywhere,
    dimension_mismatch,
    // escrow
    duplicate_job,
    zero_deposit,
    insufficient_balance,
    unknown_job,
    already_completed,
    not_client,
    bad_signature,
    unregistered_key,
    // cli / config
    bad_config,
    io_error,
};

class Error : public std::runtime_error {
  public:
    Error(Err code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Err code() const { return code_; }

  private:
    Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Err code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

} // namespace fedinfer
