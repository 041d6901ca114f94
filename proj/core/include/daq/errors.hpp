#pragma once

#include <stdexcept>
#include <string>

namespace daq {

/// Base of every error the library raises. `kind()` is a stable, lowercase
/// tag used by the CLI for its machine-readable error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error("data", what) {}
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& what) : Error("checkpoint", what) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& what) : Error("training", what) {}
};

}  // namespace daq
