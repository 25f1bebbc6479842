#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace fedbud {

/// Raised when an argument falls outside the mathematical domain of an
/// operation (non-positive payment, b*eps < 1 at payment time, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised for malformed or invalid configuration; names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& what)
        : std::invalid_argument(key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline WarningHandler& warning_handler() {
    static WarningHandler handler = [](const std::string& msg) {
        std::cerr << "fedbud warning: " << msg << '\n';
    };
    return handler;
}
}  // namespace detail

/// Replaces the process-wide warning sink. Returns the previous handler.
inline WarningHandler set_warning_handler(WarningHandler handler) {
    return std::exchange(detail::warning_handler(), std::move(handler));
}

inline void warn(const std::string& msg) {
    if (detail::warning_handler()) detail::warning_handler()(msg);
}

inline void require_domain(bool ok, const char* what) {
    if (!ok) throw DomainError(what);
}

}  // namespace fedbud
