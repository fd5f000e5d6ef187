#pragma once

#include <stdexcept>
#include <string>

namespace dban {

enum class ErrorKind {
    Shape,
    Bounds,
    Config,
    Argument,
    Io,
    Version,
    Training,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorKind::Shape, what) {}
};
struct BoundsError : Error {
    explicit BoundsError(const std::string& what) : Error(ErrorKind::Bounds, what) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error(ErrorKind::Argument, what) {}
};
struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};
struct VersionError : Error {
    explicit VersionError(const std::string& what) : Error(ErrorKind::Version, what) {}
};
struct TrainingError : Error {
    explicit TrainingError(const std::string& what) : Error(ErrorKind::Training, what) {}
};

} // namespace dban
