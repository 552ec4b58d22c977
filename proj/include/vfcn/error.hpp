#pragma once

#include <stdexcept>

namespace vfcn {

/// Raised when an operation receives arguments that violate its contract
/// (shape mismatch, out-of-range label, non-finite value, ...).
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for malformed or unsupported files (weights, DICOM, PGM, CSV, ...).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vfcn
