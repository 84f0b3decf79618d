#pragma once

#include <stdexcept>
#include <string>

namespace logprobe {

// ==== error taxonomy ====
//
// Every failure surfaced to callers carries a stable machine-readable id.
// The CLI prints "error[<id>]: <message>" and exits 2; library consumers
// can switch on id() without parsing message text.

class Error : public std::runtime_error {
public:
    Error(std::string id, const std::string& msg)
        : std::runtime_error(msg), id_(std::move(id)) {}

    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

// Caller passed arguments that violate a documented precondition.
class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& msg) : Error("invalid-input", msg) {}
};

// An exhaustive computation would exceed its configured cap.
class CapExceeded : public Error {
public:
    explicit CapExceeded(const std::string& msg) : Error("cap-exceeded", msg) {}
};

// Persistent store is damaged in a way that cannot be attributed to a
// torn final write.
class StorageError : public Error {
public:
    explicit StorageError(const std::string& msg) : Error("storage", msg) {}
};

// An append would violate per-series timestamp monotonicity.
class OrderingError : public Error {
public:
    explicit OrderingError(const std::string& msg) : Error("ordering", msg) {}
};

// Bad configuration file or flag combination.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

// A component failed to start (e.g. a port could not be bound).
class StartupError : public Error {
public:
    explicit StartupError(const std::string& msg) : Error("startup", msg) {}
};

} // namespace logprobe
