#pragma once

#include <stdexcept>
#include <string>

namespace demark {

// Bad inputs, bad config, bad shapes: the caller asked for something invalid.
// The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};

struct ShapeError : ValidationError {
    using ValidationError::ValidationError;
};

// Environment/runtime failures (I/O, corrupt files, aborted training).
// The CLI maps these (and any other std::exception) to exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace demark
