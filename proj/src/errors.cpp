#include "qkdco/errors.hpp"

#include <cstdio>

namespace qkdco {

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

}  // namespace

std::string ValidationError::format(const std::vector<ValidationIssue>& issues) {
    std::string out = "invalid configuration";
    for (const auto& i : issues) {
        out += "\n  " + i.field + ": " + i.message + " (got " + num(i.actual) + ")";
    }
    return out;
}

ValidationError::ValidationError(std::vector<ValidationIssue> issues)
    : Error(format(issues)), issues_(std::move(issues)) {}

ValidationError::ValidationError(std::string field, std::string message, double actual)
    : ValidationError(std::vector<ValidationIssue>{
          ValidationIssue{std::move(field), std::move(message), actual}}) {}

PartialBlockError::PartialBlockError(double collected, double target, std::uint64_t pulses)
    : Error("block incomplete: collected " + num(collected) + " of " + num(target) +
            " sifted key bits after " + std::to_string(pulses) + " pulses"),
      collected_(collected),
      target_(target),
      pulses_(pulses) {}

}  // namespace qkdco
