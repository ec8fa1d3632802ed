#pragma once

#include <stdexcept>
#include <string>

namespace dba {

enum class Errc {
    format_unsupported,
    decode_error,
    base64_error,
    model_not_found,
    bad_top_k,
    shape_mismatch,
    weight_file_error,
    io_error,
    query_failed,
    budget_exhausted,
    attack_exhausted,
    queue_full,
    config_error,
    contract_violation,
};

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const { return code_; }

  private:
    Errc code_;
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::format_unsupported: return "FormatUnsupported";
        case Errc::decode_error: return "DecodeError";
        case Errc::base64_error: return "Base64Error";
        case Errc::model_not_found: return "ModelNotFound";
        case Errc::bad_top_k: return "BadTopK";
        case Errc::shape_mismatch: return "ShapeMismatch";
        case Errc::weight_file_error: return "WeightFileError";
        case Errc::io_error: return "IoError";
        case Errc::query_failed: return "QueryFailed";
        case Errc::budget_exhausted: return "BudgetExhausted";
        case Errc::attack_exhausted: return "AttackExhausted";
        case Errc::queue_full: return "QueueFull";
        case Errc::config_error: return "ConfigError";
        case Errc::contract_violation: return "ContractViolation";
    }
    return "UnknownError";
}

} // namespace dba
