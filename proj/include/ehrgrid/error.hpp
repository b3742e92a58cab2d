#pragma once

#include <stdexcept>
#include <string>

namespace ehrgrid {

// Every failure the pipeline can report deliberately. The CLI maps these to
// exit codes: config problems -> 2, data problems -> 3, anything else -> 4.
enum class ErrorCode {
    missing_file,
    schema_mismatch,
    parse_error,
    integrity_error,
    duplicate_itemid,
    unknown_unit_class,
    range_order_violation,
    unknown_intervention_name,
    negative_age,
    bad_ratios,
    degenerate_labels,
    non_finite_loss,
    missing_tables,
    bad_config,
    internal_error,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::missing_file: return "missing_file";
        case ErrorCode::schema_mismatch: return "schema_mismatch";
        case ErrorCode::parse_error: return "parse_error";
        case ErrorCode::integrity_error: return "integrity_error";
        case ErrorCode::duplicate_itemid: return "duplicate_itemid";
        case ErrorCode::unknown_unit_class: return "unknown_unit_class";
        case ErrorCode::range_order_violation: return "range_order_violation";
        case ErrorCode::unknown_intervention_name: return "unknown_intervention_name";
        case ErrorCode::negative_age: return "negative_age";
        case ErrorCode::bad_ratios: return "bad_ratios";
        case ErrorCode::degenerate_labels: return "degenerate_labels";
        case ErrorCode::non_finite_loss: return "non_finite_loss";
        case ErrorCode::missing_tables: return "missing_tables";
        case ErrorCode::bad_config: return "bad_config";
        case ErrorCode::internal_error: return "internal_error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

    // 2 = configuration, 3 = data, 4 = internal.
    int exit_code() const {
        switch (code_) {
            case ErrorCode::bad_config:
            case ErrorCode::bad_ratios:
                return 2;
            case ErrorCode::internal_error:
                return 4;
            default:
                return 3;
        }
    }

private:
    ErrorCode code_;
};

}  // namespace ehrgrid
