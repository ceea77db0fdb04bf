#pragma once

#include <stdexcept>
#include <string>

namespace vg {

/// Error categories mirrored one-to-one by the C API status codes.
enum class Status {
    Ok = 0,
    Parse = 1,
    Topology = 2,
    Validation = 3,
    Numeric = 4,
    State = 5,
    Config = 6,
    Io = 7,
};

class Error : public std::runtime_error {
public:
    Error(Status status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
    Status status() const noexcept { return status_; }

private:
    Status status_;
};

struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error(Status::Parse, m) {}
};
struct TopologyError : Error {
    explicit TopologyError(const std::string& m) : Error(Status::Topology, m) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& m) : Error(Status::Validation, m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error(Status::Numeric, m) {}
};
struct StateError : Error {
    explicit StateError(const std::string& m) : Error(Status::State, m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(Status::Config, m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(Status::Io, m) {}
};

}  // namespace vg
