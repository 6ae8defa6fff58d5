#pragma once

#include <stdexcept>
#include <string>

namespace fre {

// Base of every error raised by the library. Subclasses carry the extra
// context callers need to react programmatically.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A tensor shape did not satisfy an operation's contract.
class ShapeError : public Error {
public:
    ShapeError(std::string op, std::string dimension, long expected, long actual)
        : Error(op + ": dimension '" + dimension + "' expected " + std::to_string(expected) +
                ", got " + std::to_string(actual)),
          op_(std::move(op)), dimension_(std::move(dimension)), expected_(expected), actual_(actual) {}

    ShapeError(std::string op, std::string message)
        : Error(op + ": " + message), op_(std::move(op)) {}

    const std::string& op() const noexcept { return op_; }
    const std::string& dimension() const noexcept { return dimension_; }
    long expected() const noexcept { return expected_; }
    long actual() const noexcept { return actual_; }

private:
    std::string op_;
    std::string dimension_;
    long expected_ = 0;
    long actual_ = 0;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    DataError(std::string file, std::string message)
        : Error(file.empty() ? message : file + ": " + message), file_(std::move(file)) {}

    const std::string& file() const noexcept { return file_; }

private:
    std::string file_;
};

// Raised when training produces a non-finite loss.
class NumericError : public Error {
public:
    NumericError(int epoch, int batch, const std::string& what)
        : Error("non-finite " + what + " at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

class TapeError : public Error {
public:
    using Error::Error;
};

}  // namespace fre
