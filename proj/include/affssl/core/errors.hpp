#pragma once

#include <stdexcept>
#include <string>

namespace affssl {

// Error categories map onto CLI exit codes: config -> 2, data -> 3, run -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ContractError : std::logic_error {
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct IngestionError : std::runtime_error {
    explicit IngestionError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace affssl
