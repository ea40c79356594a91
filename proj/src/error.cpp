#include "alertsieve/error.hpp"

namespace alertsieve {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::InsufficientComplexity: return "InsufficientComplexity";
    case ErrorCode::MalformedDigest: return "MalformedDigest";
    case ErrorCode::EmptyCommandLine: return "EmptyCommandLine";
    case ErrorCode::UndigestibleAlert: return "UndigestibleAlert";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::UnknownCluster: return "UnknownCluster";
    case ErrorCode::DegenerateContext: return "DegenerateContext";
    case ErrorCode::OutOfOrderBatch: return "OutOfOrderBatch";
    case ErrorCode::SingleClassData: return "SingleClassData";
    case ErrorCode::ImpossibleTarget: return "ImpossibleTarget";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InsufficientLabeledData: return "InsufficientLabeledData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BundleMismatch: return "BundleMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace alertsieve
