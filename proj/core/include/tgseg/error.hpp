#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tgseg {

enum class ErrorCode {
  invalid_input,
  degenerate_vector,
  configuration,
  invalid_prompt,
  invalid_size,
  invalid_box,
  empty_prompt,
  shape_mismatch,
  empty_dataset,
  empty_manifest,
  unextractable_prompt,
  non_finite_loss,
  unknown_regime,
  backend_unavailable,
  not_found,
  io,
  count_mismatch,
};

/// Kebab-case identifier used in CLI and HTTP error bodies.
std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tgseg
