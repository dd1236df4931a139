#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace comfyflow {

enum class ErrorCode {
    MalformedJson,
    SchemaViolation,
    BadLinkArity,
    BadNodeRef,
    BadPortName,
    DuplicateInputSlot,
    NonDenseOrdinals,
    UnnamedPort,
    AmbiguousBroadcast,
    EmptyGraph,
    EmptyDiagram,
    DuplicateNodeName,
    EmbeddingFailure,
    DimensionMismatch,
    ProviderMismatch,
    EmptyBase,
    NodeUnknown,
    PortUnknown,
    InvalidWorkflow,
    NoJsonFound,
    LlmFailure,
    ParseFailure,
    MissingSlot,
    UnknownSlot,
    EmptyDataset,
    MalformedRecord,
    Transport,
    InvalidArgument,
    Io,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedJson: return "MalformedJson";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::BadLinkArity: return "BadLinkArity";
        case ErrorCode::BadNodeRef: return "BadNodeRef";
        case ErrorCode::BadPortName: return "BadPortName";
        case ErrorCode::DuplicateInputSlot: return "DuplicateInputSlot";
        case ErrorCode::NonDenseOrdinals: return "NonDenseOrdinals";
        case ErrorCode::UnnamedPort: return "UnnamedPort";
        case ErrorCode::AmbiguousBroadcast: return "AmbiguousBroadcast";
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::EmptyDiagram: return "EmptyDiagram";
        case ErrorCode::DuplicateNodeName: return "DuplicateNodeName";
        case ErrorCode::EmbeddingFailure: return "EmbeddingFailure";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ProviderMismatch: return "ProviderMismatch";
        case ErrorCode::EmptyBase: return "EmptyBase";
        case ErrorCode::NodeUnknown: return "NodeUnknown";
        case ErrorCode::PortUnknown: return "PortUnknown";
        case ErrorCode::InvalidWorkflow: return "InvalidWorkflow";
        case ErrorCode::NoJsonFound: return "NoJsonFound";
        case ErrorCode::LlmFailure: return "LlmFailure";
        case ErrorCode::ParseFailure: return "ParseFailure";
        case ErrorCode::MissingSlot: return "MissingSlot";
        case ErrorCode::UnknownSlot: return "UnknownSlot";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::Transport: return "Transport";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library. `subject` names the offending element:
/// a JSON pointer for schema errors, a node name or slot name otherwise.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string subject, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + (subject.empty() ? "" : " at " + subject) + ": " +
                             message),
          code_(code),
          subject_(std::move(subject)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }

private:
    ErrorCode code_;
    std::string subject_;
};

}  // namespace comfyflow
