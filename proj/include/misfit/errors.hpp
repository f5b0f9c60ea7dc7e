#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace misfit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// Raised when the analytic path cannot be checked because the oracle itself produced garbage.
class OracleFailure : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class FileError : public Error {
public:
    FileError(const std::string& what, std::string path)
        : Error(what + ": " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class DecodeError : public Error {
public:
    DecodeError(const std::string& what, std::size_t offset)
        : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace misfit
