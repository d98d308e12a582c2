#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdco {

// One violated constraint: which field, what went wrong, what value was seen.
struct ValidationIssue {
    std::string field;
    std::string message;
    double actual = 0.0;
};

// Base class for everything thrown by this library. CLI maps it to exit 2.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Bad configuration or out-of-domain argument. CLI maps it to exit 1.
// Carries every violation found, not just the first.
class ValidationError : public Error {
  public:
    explicit ValidationError(std::vector<ValidationIssue> issues);
    ValidationError(std::string field, std::string message, double actual);

    const std::vector<ValidationIssue>& issues() const { return issues_; }

  private:
    static std::string format(const std::vector<ValidationIssue>& issues);
    std::vector<ValidationIssue> issues_;
};

// A scenario whose sifted-key rate is exactly zero; carries the component
// that vanished. The CLI treats this as success with skr = 0.
class NoKeyError : public Error {
  public:
    NoKeyError(std::string component, const std::string& message)
        : Error(message), component_(std::move(component)) {}

    const std::string& component() const { return component_; }

  private:
    std::string component_;
};

// run_block hit its pulse cap before filling the block.
class PartialBlockError : public Error {
  public:
    PartialBlockError(double collected, double target, std::uint64_t pulses);

    double collected() const { return collected_; }
    double target() const { return target_; }
    std::uint64_t pulses() const { return pulses_; }

  private:
    double collected_;
    double target_;
    std::uint64_t pulses_;
};

// Finite-key input with no Z-basis clicks at all.
class EmptyBlockError : public Error {
  public:
    using Error::Error;
};

}  // namespace qkdco
