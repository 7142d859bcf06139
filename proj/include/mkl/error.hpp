#pragma once

#include <stdexcept>
#include <string>

namespace mkl {

/// Bad input: dimension mismatch, out-of-range parameter, malformed file.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine failed: factorization breakdown, iteration cap hit.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

} // namespace mkl
