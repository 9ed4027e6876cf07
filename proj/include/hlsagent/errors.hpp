#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hlsagent {

/// Base of every error raised by the library. `kind()` is a stable short
/// name used in transcripts and CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

/// Bad input data: malformed files, violated invariants, failed preconditions.
/// The CLI maps these to exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

/// Failures talking to an LLM backend. The CLI maps these to exit code 3.
class BackendError : public Error {
public:
    using Error::Error;
};

// dataset

class MalformedRecord : public DataError {
public:
    MalformedRecord(std::size_t line_no, const std::string& reason)
        : DataError("MalformedRecord", "line " + std::to_string(line_no) + ": " + reason),
          line_no(line_no) {}
    std::size_t line_no;
};

class DuplicateDesignId : public DataError {
public:
    explicit DuplicateDesignId(const std::string& id)
        : DataError("DuplicateDesignId", "duplicate design_id \"" + id + "\""), design_id(id) {}
    std::string design_id;
};

class InvalidTargetValue : public DataError {
public:
    InvalidTargetValue(const std::string& field, const std::string& value)
        : DataError("InvalidTargetValue", "invalid value for " + field + ": " + value),
          field(field) {}
    std::string field;
};

class IoError : public DataError {
public:
    explicit IoError(const std::string& what) : DataError("IoError", what) {}
};

// kernel analysis

class ParseError : public DataError {
public:
    ParseError(int line, const std::string& reason)
        : DataError("ParseError", "line " + std::to_string(line) + ": " + reason), line(line) {}
    int line;
};

class UnattachedPragma : public DataError {
public:
    explicit UnattachedPragma(int line)
        : DataError("UnattachedPragma",
                    "line " + std::to_string(line) + ": pragma placeholder is not followed by a loop"),
          line(line) {}
    int line;
};

class UnknownCategory : public DataError {
public:
    explicit UnknownCategory(const std::string& token)
        : DataError("UnknownCategory", "unknown pragma category in \"" + token + "\""), token(token) {}
    std::string token;
};

class UnresolvedSlot : public DataError {
public:
    explicit UnresolvedSlot(const std::string& slot_id)
        : DataError("UnresolvedSlot", "pragma slot \"" + slot_id + "\" does not exist in the kernel"),
          slot_id(slot_id) {}
    std::string slot_id;
};

// embeddings

class DimensionMismatch : public DataError {
public:
    explicit DimensionMismatch(const std::string& design_id)
        : DataError("DimensionMismatch", "dimension mismatch for \"" + design_id + "\""),
          design_id(design_id) {}
    std::string design_id;
};

class NonFiniteComponent : public DataError {
public:
    NonFiniteComponent(const std::string& design_id, std::size_t index)
        : DataError("NonFiniteComponent",
                    "non-finite component " + std::to_string(index) + " for \"" + design_id + "\""),
          design_id(design_id), index(index) {}
    std::string design_id;
    std::size_t index;
};

class TooFewPoints : public DataError {
public:
    explicit TooFewPoints(std::size_t n)
        : DataError("TooFewPoints", "t-SNE needs at least 4 points, got " + std::to_string(n)) {}
};

class PerplexityOutOfRange : public DataError {
public:
    PerplexityOutOfRange(double perplexity, double max_allowed)
        : DataError("PerplexityOutOfRange",
                    "perplexity " + std::to_string(perplexity) + " outside [1, " +
                        std::to_string(max_allowed) + "]") {}
};

class MissingEmbedding : public DataError {
public:
    explicit MissingEmbedding(const std::string& id)
        : DataError("MissingEmbedding", "no embedding for design \"" + id + "\""), design_id(id) {}
    std::string design_id;
};

// evaluation

class LengthMismatch : public DataError {
public:
    LengthMismatch(std::size_t a, std::size_t b)
        : DataError("LengthMismatch",
                    "length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class EmptyInput : public DataError {
public:
    EmptyInput() : DataError("EmptyInput", "empty input") {}
};

class MissingPrediction : public DataError {
public:
    explicit MissingPrediction(const std::string& id)
        : DataError("MissingPrediction", "no prediction for design \"" + id + "\""), design_id(id) {}
    std::string design_id;
};

class EmptyTrainSet : public DataError {
public:
    EmptyTrainSet() : DataError("EmptyTrainSet", "training set has no usable neighbours") {}
};

// prediction parsing

class NoStructuredObject : public DataError {
public:
    NoStructuredObject() : DataError("NoStructuredObject", "no JSON object found in model output") {}
};

class MissingField : public DataError {
public:
    explicit MissingField(const std::string& name)
        : DataError("MissingField", "missing field \"" + name + "\""), name(name) {}
    std::string name;
};

class OutOfRange : public DataError {
public:
    OutOfRange(const std::string& field, const std::string& value)
        : DataError("OutOfRange", "field \"" + field + "\" out of range: " + value), field(field) {}
    std::string field;
};

class TemplateError : public DataError {
public:
    explicit TemplateError(const std::string& what) : DataError("TemplateError", what) {}
};

// backends

class BackendUnavailable : public BackendError {
public:
    explicit BackendUnavailable(const std::string& what) : BackendError("BackendUnavailable", what) {}
};

/// Retryable single-attempt failure (timeout, HTTP 429, HTTP 5xx). Never
/// escapes LlmClient::complete; exhausted retries become BackendUnavailable.
class TransientBackendError : public BackendError {
public:
    TransientBackendError(int status, const std::string& what)
        : BackendError("TransientBackendError", what), status(status) {}
    int status;
};

class MalformedResponse : public BackendError {
public:
    explicit MalformedResponse(const std::string& what) : BackendError("MalformedResponse", what) {}
};

class ConfigError : public BackendError {
public:
    explicit ConfigError(const std::string& what) : BackendError("ConfigError", what) {}
};

class PredictionUnparseable : public BackendError {
public:
    PredictionUnparseable(int cycle, const std::string& detail)
        : BackendError("PredictionUnparseable",
                       "cycle " + std::to_string(cycle) + ": unparseable prediction after repair (" +
                           detail + ")"),
          cycle(cycle) {}
    int cycle;
};

}  // namespace hlsagent
