#pragma once
#include <stdexcept>
#include <string>

namespace qtlab {

// Base for everything thrown by the library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input text (CSV rows, config files, result JSONs).
struct parse_error : error {
    using error::error;
};

// Structurally valid input that violates a domain invariant.
struct validation_error : error {
    using error::error;
};

// Bad run configuration: missing files, inconsistent ablation settings.
struct config_error : error {
    using error::error;
};

// API misuse: stepping a finished episode, mismatched shapes, unknown ids.
struct contract_error : error {
    using error::error;
};

// Training aborted (non-finite loss, simulator failure mid-run).
struct training_error : error {
    using error::error;
};

// File I/O and serialization failures (bad magic, version mismatch).
struct io_error : error {
    using error::error;
};

}  // namespace qtlab
