#pragma once

#include <stdexcept>
#include <string>

namespace dynemu {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid argument values or shape mismatches detected at entry.
struct argument_error : error {
    using error::error;
};

// A symmetric matrix that was expected to be positive definite is not.
struct singular_error : error {
    singular_error(const std::string& msg, int pivot_index)
        : error(msg), pivot(pivot_index) {}
    int pivot;
};

// Rank-one update hit a non-positive Schur complement.
struct degeneracy_error : error {
    using error::error;
};

// Response matrix carries no signal (zero after centering).
struct degenerate_response_error : error {
    using error::error;
};

// Scoring denominator is not positive (constant truth series).
struct degenerate_denominator_error : error {
    using error::error;
};

// Malformed text input; message carries file, line and cell position.
struct parse_error : error {
    using error::error;
};

// Neighborhood search state is unusable (e.g. empty candidate set).
struct state_error : error {
    using error::error;
};

// A run was refused by a resource guard and not forced.
struct guard_error : error {
    using error::error;
};

}  // namespace dynemu
