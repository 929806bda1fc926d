#pragma once

#include <stdexcept>
#include <string>

namespace fusionnet {

// Shape/dimension mismatches between tensors or between a tensor and an op contract.
struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced by a forward or backward computation. The step is aborted,
// nothing propagates.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An operation precondition other than a shape was violated (value ranges,
// non-scalar backward roots, ...).
struct contract_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Filesystem-level failures; messages carry the offending path.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed binary payloads (checkpoints, PNG streams); messages carry an offset
// or chunk where known.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed text inputs (XML annotations, config files).
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Semantically invalid configuration or generator specs.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fusionnet
