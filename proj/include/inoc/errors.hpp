#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace inoc {

// Exit-code contract shared with the CLI:
//   0 ok, 2 config, 3 schema, 4 gateway, 5 statistics, 6 training.
class Error : public std::runtime_error {
public:
    Error(std::string message, int exit_code)
        : std::runtime_error(std::move(message)), exit_code_(exit_code) {}

    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

#define INOC_ERROR(NAME, CODE)                                    \
    class NAME : public Error {                                   \
    public:                                                       \
        explicit NAME(const std::string& msg)                     \
            : Error(std::string(#NAME) + ": " + msg, CODE) {}     \
    };

// config / usage
INOC_ERROR(ConfigError, 2)
INOC_ERROR(IoError, 2)
INOC_ERROR(TemplateError, 2)
INOC_ERROR(InsufficientData, 2)
INOC_ERROR(IndexError, 2)

// data schema
INOC_ERROR(SchemaError, 3)

// gateway
INOC_ERROR(AuthError, 4)
INOC_ERROR(TransportError, 4)
INOC_ERROR(ReplayMiss, 4)
INOC_ERROR(JudgeUnavailable, 4)
INOC_ERROR(AllSamplesUnparseable, 4)

// statistics / scoring
INOC_ERROR(EmptyInput, 5)
INOC_ERROR(RatingParseError, 5)
INOC_ERROR(ExecError, 5)
INOC_ERROR(DegenerateVariance, 5)
INOC_ERROR(LengthMismatch, 5)
INOC_ERROR(UndefinedK, 5)
INOC_ERROR(NonpositiveK, 5)
INOC_ERROR(DegenerateInput, 5)

// training
INOC_ERROR(TrainingDiverged, 6)
INOC_ERROR(NonfiniteLoss, 6)

#undef INOC_ERROR

}  // namespace inoc
