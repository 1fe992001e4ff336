#include "tgseg/error.hpp"

namespace tgseg {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::degenerate_vector: return "degenerate-vector";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::invalid_prompt: return "invalid-prompt";
    case ErrorCode::invalid_size: return "invalid-size";
    case ErrorCode::invalid_box: return "invalid-box";
    case ErrorCode::empty_prompt: return "empty-prompt";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::empty_dataset: return "empty-dataset";
    case ErrorCode::empty_manifest: return "empty-manifest";
    case ErrorCode::unextractable_prompt: return "unextractable-prompt";
    case ErrorCode::non_finite_loss: return "non-finite-loss";
    case ErrorCode::unknown_regime: return "unknown-regime";
    case ErrorCode::backend_unavailable: return "backend-unavailable";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::io: return "io";
    case ErrorCode::count_mismatch: return "count-mismatch";
  }
  return "unknown";
}

}  // namespace tgseg
