#pragma once

#include <stdexcept>
#include <string>

namespace asfnet {

// Error taxonomy used across the library. The CLI maps these onto process
// exit codes: ShapeError/SpecError/FormatError -> 2, NumericError -> 3.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimensions disagree with what an operation requires.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A configuration value is internally inconsistent (e.g. a convolution
// whose output would be empty).
class SpecError : public Error {
public:
    explicit SpecError(const std::string& msg) : Error(msg) {}
};

// A file's bytes do not match the declared on-disk format.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Non-finite values or failed numeric procedures.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace asfnet
