#pragma once

#include <cassert>
#include <string>
#include <utility>
#include <variant>

namespace permkron {

enum class ErrorKind {
    io,          // unreadable/unwritable paths
    format,      // malformed container header
    corruption,  // truncated or inconsistent payload
    validation,  // caller-supplied values out of contract
    shape,       // dimension mismatch
    reference,   // unknown tensor/layer name
    numerical,   // non-finite values where finite required
    training,    // non-finite loss mid-run
};

struct Error {
    ErrorKind kind;
    std::string message;
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::io: return "io";
        case ErrorKind::format: return "format";
        case ErrorKind::corruption: return "corruption";
        case ErrorKind::validation: return "validation";
        case ErrorKind::shape: return "shape";
        case ErrorKind::reference: return "reference";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::training: return "training";
    }
    return "unknown";
}

// Process exit code contract: 0 success, 1 I/O, 2 validation, 3 numerical failure.
inline int error_exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::io: return 1;
        case ErrorKind::numerical:
        case ErrorKind::training: return 3;
        default: return 2;
    }
}

// Recoverable-error carrier; programming errors stay assertions.
template <typename T>
class Result {
public:
    Result(T value) : v_(std::move(value)) {}
    Result(Error err) : v_(std::move(err)) {}

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }

    T& value() {
        assert(ok());
        return std::get<T>(v_);
    }
    const T& value() const {
        assert(ok());
        return std::get<T>(v_);
    }
    const Error& error() const {
        assert(!ok());
        return std::get<Error>(v_);
    }

private:
    std::variant<T, Error> v_;
};

template <>
class Result<void> {
public:
    Result() = default;
    Result(Error err) : err_(std::move(err)), has_err_(true) {}

    bool ok() const { return !has_err_; }
    explicit operator bool() const { return ok(); }
    const Error& error() const {
        assert(has_err_);
        return err_;
    }

private:
    Error err_{};
    bool has_err_ = false;
};

inline Error make_error(ErrorKind kind, std::string message) {
    return Error{kind, std::move(message)};
}

}  // namespace permkron
