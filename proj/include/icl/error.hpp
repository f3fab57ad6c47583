#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icl {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape, range, symmetry).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Matrix has an eigenvalue below the negative clamp.
class NotPsd : public Error {
public:
    using Error::Error;
};

/// exp() argument beyond the double-precision range guard.
class Overflow : public Error {
public:
    using Error::Error;
};

/// Linear system is singular even after regularization.
class Singular : public Error {
public:
    using Error::Error;
};

/// Training loss blew up past the divergence guard.
class Diverged : public Error {
public:
    Diverged(std::size_t step, double loss)
        : Error("training diverged at step " + std::to_string(step) +
                " (loss " + std::to_string(loss) + ")"),
          step_(step),
          loss_(loss) {}

    std::size_t step() const noexcept { return step_; }
    double loss() const noexcept { return loss_; }

private:
    std::size_t step_;
    double loss_;
};

namespace detail {

inline void require(bool cond, const char* what) {
    if (!cond) throw ContractViolation(what);
}

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

}  // namespace detail
}  // namespace icl
