#pragma once

#include <stdexcept>
#include <string>

namespace coea {

// Error taxonomy maps onto CLI exit codes: usage=1, data=2, backend=3.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BackendError : std::runtime_error {
    bool retryable = false;
    explicit BackendError(const std::string& msg, bool retryable_ = false)
        : std::runtime_error(msg), retryable(retryable_) {}
};

}  // namespace coea
