#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace clab {

// %.6g rendering for messages.
inline std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}


// Bad input: malformed configs, inconsistent dimensions, unknown labels.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Config loading collects every problem before failing.
class ConfigError : public ValidationError {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

// Non-finite values, stability guard violations, quadrature failure.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// The audit declined to certify a configuration, or an audit assertion failed.
class AuditError : public std::runtime_error {
public:
    explicit AuditError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace clab
