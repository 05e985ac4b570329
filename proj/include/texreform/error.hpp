#pragma once

#include <stdexcept>
#include <string>

namespace texreform {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A numeric argument is out of its valid range.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Feature map too small for the global patch size rule.
class DegenerateFeature : public Error {
public:
    using Error::Error;
};

// Weight file errors. Each failure class is distinct so callers can tell a
// corrupt file from an incomplete export.
class WeightFileError : public Error {
public:
    using Error::Error;
};

class MissingTensor : public WeightFileError {
public:
    explicit MissingTensor(std::string name)
        : WeightFileError("missing tensor '" + name + "'"), name_(std::move(name)) {}
    const std::string& tensor_name() const noexcept { return name_; }

private:
    std::string name_;
};

class ShapeMismatch : public WeightFileError {
public:
    using WeightFileError::WeightFileError;
};

class BadFormat : public WeightFileError {
public:
    using WeightFileError::WeightFileError;
};

class TruncatedPayload : public WeightFileError {
public:
    using WeightFileError::WeightFileError;
};

/// Image decode/encode or file access failed.
class ImageIOError : public Error {
public:
    using Error::Error;
};

class TooManyLabels : public Error {
public:
    using Error::Error;
};

/// An engine error annotated with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Cooperative cancellation: the request deadline passed between steps.
class DeadlineExceeded : public Error {
public:
    using Error::Error;
};

}  // namespace texreform
