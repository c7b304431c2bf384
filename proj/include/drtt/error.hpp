#pragma once

#include <stdexcept>
#include <string>

namespace drtt {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, inconsistent arguments, invalid config.
class InputError : public Error {
  public:
    using Error::Error;
};

/// A backend (mock or remote) failed to answer a request.
class BackendError : public Error {
  public:
    using Error::Error;
};

} // namespace drtt
