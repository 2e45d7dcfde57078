#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace realface::base64 {

std::string encode(std::span<const std::uint8_t> bytes);

/// Throws ParseError on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> decode(std::string_view text);

/// Little-endian float64 packing used by the model file and the wire protocol.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

}  // namespace realface::base64
