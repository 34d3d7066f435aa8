#pragma once

#include <stdexcept>
#include <string>

namespace mss {

enum class ErrorKind {
    argument,
    dimension,
    state,
    parse,
    ordering,
    bounds,
    alignment,
    metric,
    validation,
    io,
    numerical,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so the
// C API can map it onto a status code without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

} // namespace mss
