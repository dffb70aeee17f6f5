#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frida {

// Dimension mismatch between tensors or network layers.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Domain index does not fit in the configured code width.
struct CapacityError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Violated precondition on an operation's inputs or model state.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Benchmark or run configuration that cannot be realized.
struct SpecError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, std::size_t epoch)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_index(epoch) {}
    std::size_t epoch_index;
};

// Checkpoint that is truncated, tampered with, or from another version.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace frida
