#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rlq {

enum class ErrorKind {
    input,
    parse,
    structural,
    capacity,
    simulation,
    singularity,
    blow_up,
    convergence,
    unsupported,
    internal,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base class of every error raised by the library. `kind()` is stable and
/// is what the CLI maps onto exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class InputError : public Error {
public:
    explicit InputError(const std::string& message) : Error(ErrorKind::input, message) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& message) : Error(ErrorKind::parse, message) {}
};

/// Dimension or shape mismatch. Carries the offending table name and step
/// (step is -1 for time-independent data).
class StructuralError : public Error {
public:
    StructuralError(std::string table, int step, const std::string& message)
        : Error(ErrorKind::structural, message), table_(std::move(table)), step_(step) {}

    [[nodiscard]] const std::string& table() const noexcept { return table_; }
    [[nodiscard]] int step() const noexcept { return step_; }

private:
    std::string table_;
    int step_;
};

class CapacityError : public Error {
public:
    CapacityError(std::uint64_t requested, std::uint64_t budget, const std::string& message)
        : Error(ErrorKind::capacity, message), requested_(requested), budget_(budget) {}

    [[nodiscard]] std::uint64_t requested_bytes() const noexcept { return requested_; }
    [[nodiscard]] std::uint64_t budget_bytes() const noexcept { return budget_; }

private:
    std::uint64_t requested_;
    std::uint64_t budget_;
};

class SimulationError : public Error {
public:
    SimulationError(std::int64_t path, int step, const std::string& message)
        : Error(ErrorKind::simulation, message), path_(path), step_(step) {}

    [[nodiscard]] std::int64_t path() const noexcept { return path_; }
    [[nodiscard]] int step() const noexcept { return step_; }

private:
    std::int64_t path_;
    int step_;
};

class SingularityError : public Error {
public:
    SingularityError(double time, double min_eigenvalue, const std::string& message)
        : Error(ErrorKind::singularity, message), time_(time), min_eigenvalue_(min_eigenvalue) {}

    [[nodiscard]] double time() const noexcept { return time_; }
    [[nodiscard]] double min_eigenvalue() const noexcept { return min_eigenvalue_; }

private:
    double time_;
    double min_eigenvalue_;
};

class BlowUpError : public Error {
public:
    BlowUpError(double time, const std::string& message)
        : Error(ErrorKind::blow_up, message), time_(time) {}

    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

/// Bisection ran out of iterations. The final bracket is kept for diagnostics.
class ConvergenceError : public Error {
public:
    ConvergenceError(double lower, double upper, double gap, const std::string& message)
        : Error(ErrorKind::convergence, message), lower_(lower), upper_(upper), gap_(gap) {}

    [[nodiscard]] double lower() const noexcept { return lower_; }
    [[nodiscard]] double upper() const noexcept { return upper_; }
    [[nodiscard]] double gap() const noexcept { return gap_; }

private:
    double lower_;
    double upper_;
    double gap_;
};

class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& message) : Error(ErrorKind::unsupported, message) {}
};

class InternalError : public Error {
public:
    explicit InternalError(const std::string& message) : Error(ErrorKind::internal, message) {}
};

}  // namespace rlq
