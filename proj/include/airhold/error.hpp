#pragma once

#include <stdexcept>
#include <string>

namespace airhold {

// Every failure raised by the library carries a short machine-readable kind
// ("schema", "row", "graph", ...) so the CLI and the HTTP layer can map it to
// an exit code or status without string matching.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class UnknownNodeError : public Error {
public:
    explicit UnknownNodeError(const std::string& code)
        : Error("unknown_node", "unknown airport '" + code + "'"), code_(code) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& message, double residual)
        : Error("convergence", message), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace airhold
