#pragma once

#include <stdexcept>
#include <string>

namespace poseidon {

enum class ErrorKind {
    UnsupportedFormat,
    CorruptCapture,
    Io,
    InvalidArgument,
    NoModel,
    Training,
    StoreFormat,
    StoreVersion,
    Truth,
    Config,
};

const char* to_string(ErrorKind kind);

/// Base exception for every recoverable failure raised by the library.
/// Precondition violations (wrong vector lengths, empty payloads) throw
/// std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace poseidon
