#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tgseg {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Standard alphabet with padding; throws invalid_input on malformed text.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace tgseg
