#pragma once

#include <stdexcept>
#include <string>

namespace acwm {

// Error categories mirror the acwm_status codes of the C API so that
// exceptions thrown anywhere in the core map 1:1 onto the boundary.
enum class ErrorCategory {
    invalid_argument,
    io,
    format,
    numeric,
    not_found,
    state,
    internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, const std::string& msg)
        : std::runtime_error(msg), category_(cat) {}

    ErrorCategory category() const { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void raise(ErrorCategory cat, const std::string& msg) {
    throw Error(cat, msg);
}

inline const char* category_name(ErrorCategory cat) {
    switch (cat) {
        case ErrorCategory::invalid_argument: return "invalid_argument";
        case ErrorCategory::io: return "io";
        case ErrorCategory::format: return "format";
        case ErrorCategory::numeric: return "numeric";
        case ErrorCategory::not_found: return "not_found";
        case ErrorCategory::state: return "state";
        case ErrorCategory::internal: return "internal";
    }
    return "internal";
}

#define ACWM_CHECK(cond, cat, msg)                                  \
    do {                                                            \
        if (!(cond)) ::acwm::raise(::acwm::ErrorCategory::cat, msg); \
    } while (0)

}  // namespace acwm
