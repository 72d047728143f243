#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mp3net {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed container or config text.
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input that uses a codec, bit depth or layout we don't handle.
// Configuration values that parse but make no sense together.
class ConfigError : public Error {
public:
    using Error::Error;
};

class UnsupportedFormat : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : Error(what), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

}  // namespace mp3net
