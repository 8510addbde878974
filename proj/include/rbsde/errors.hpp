#pragma once

#include <stdexcept>
#include <string>

namespace rbsde {

/// A caller broke an operation's precondition (level mismatch, tree mismatch,
/// malformed input). Never raised for numerical trouble.
class ContractError : public std::invalid_argument {
public:
    explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// The driver Lipschitz bound and the step size violate mu * dt < 1/2.
class StabilityError : public ContractError {
public:
    explicit StabilityError(const std::string& what) : ContractError(what) {}
};

/// An iterative solve failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Full path enumeration was requested above the configured level cap.
class EnumerationRefused : public std::runtime_error {
public:
    explicit EnumerationRefused(const std::string& what) : std::runtime_error(what) {}
};

/// Local solutions could not be glued into a global one.
class PatchError : public std::runtime_error {
public:
    explicit PatchError(const std::string& what) : std::runtime_error(what) {}
};

/// A random-instance recipe cannot be satisfied.
class GenerationError : public std::invalid_argument {
public:
    explicit GenerationError(const std::string& what) : std::invalid_argument(what) {}
};

/// An oracle was asked about an input outside its domain.
class UnsupportedInput : public std::invalid_argument {
public:
    explicit UnsupportedInput(const std::string& what) : std::invalid_argument(what) {}
};

/// An instance or result file could not be read.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rbsde
