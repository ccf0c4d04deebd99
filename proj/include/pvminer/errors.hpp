#pragma once

#include <stdexcept>
#include <string>

namespace pvminer {

// Error categories shared by every module. The CLI maps each one to its own
// exit code, so callers should throw the most specific type that applies.

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An upstream pipeline artifact (vocabulary, checkpoint, split...) is missing.
class DependencyError : public std::runtime_error {
public:
    DependencyError(std::string stage, const std::string& detail)
        : std::runtime_error("missing upstream artifact from stage '" + stage + "': " + detail),
          m_stage(std::move(stage)) {}

    const std::string& stage() const noexcept { return m_stage; }

private:
    std::string m_stage;
};

class FitFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pvminer
