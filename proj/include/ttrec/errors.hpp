#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttrec {

/// Invalid configuration or shape (rejects at construction/validation time).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File or stream failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or numerically impossible state during training.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string extents_str(const std::vector<std::int64_t>& e) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (i) os << ", ";
        os << e[i];
    }
    os << ")";
    return os.str();
}

} // namespace ttrec
