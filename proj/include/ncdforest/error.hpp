#pragma once

#include <stdexcept>
#include <string>

namespace ncdforest {

/// Runtime failure inside the library (I/O, codec, inconsistent inputs).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied arguments that violate an operation's preconditions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace ncdforest
