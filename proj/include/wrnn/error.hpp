#pragma once

#include <stdexcept>
#include <string>

namespace wrnn {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    ok = 0,
    usage = 1,
    data = 2,
    numeric = 3,
};

/// Base of every error thrown by the library. Carries the exit code the CLI
/// maps it to.
class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad configuration or command-line usage.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::usage, what) {}
};

/// Missing, malformed or inconsistent input data (also shape mismatches).
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// Non-finite values or a failed gradient check.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ExitCode::numeric, what) {}
};

}  // namespace wrnn
