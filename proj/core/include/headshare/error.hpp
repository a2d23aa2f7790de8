#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace headshare {

// Domain error carrying a stable machine-readable code ("ShapeMismatch",
// "AlphaOutOfRange", ...) next to the human-readable message. The CLI prints
// the code verbatim so callers can match on it.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

}  // namespace headshare
