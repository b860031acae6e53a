#include "emdstream/error.hpp"

namespace emdstream {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::weight_mismatch: return "WeightMismatch";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::too_large: return "TooLarge";
    case ErrorCode::infeasible: return "Infeasible";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::range_error: return "RangeError";
    case ErrorCode::size_mismatch: return "SizeMismatch";
    case ErrorCode::empty_stream: return "EmptyStream";
    case ErrorCode::deletion_unsupported: return "DeletionUnsupported";
    case ErrorCode::distinct_bound_exceeded: return "DistinctBoundExceeded";
    case ErrorCode::all_levels_overflowed: return "AllLevelsOverflowed";
    case ErrorCode::cycle_encountered: return "CycleEncountered";
    case ErrorCode::model_violation: return "ModelViolation";
    case ErrorCode::corrupt_blob: return "CorruptBlob";
  }
  return "Unknown";
}

}  // namespace emdstream
