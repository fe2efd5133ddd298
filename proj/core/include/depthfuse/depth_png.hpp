#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "depthfuse/confidence.hpp"
#include "depthfuse/depth_map.hpp"

namespace depthfuse {

/// 16-bit single-channel PNG, stored value = round(depth_m * 256), 0 = no
/// measurement. Throws RangeError if a depth does not fit the 16-bit range.
/// Output bytes are deterministic for a given map.
std::vector<std::uint8_t> encode_depth_png(const DepthMap& map);

/// Inverse of encode_depth_png: depth_m = stored / 256.0, stored 0 = invalid.
/// Corrupt bytes throw CodecError; an 8-bit or multi-channel PNG throws
/// FormatError.
DepthMap decode_depth_png(std::span<const std::uint8_t> bytes);

/// Diagnostic confidence image: 16-bit gray, value = round(conf * 65535).
std::vector<std::uint8_t> encode_confidence_png(const ConfidenceMap& map);
ConfidenceMap decode_confidence_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

DepthMap load_depth_png(const std::filesystem::path& path);
void save_depth_png(const std::filesystem::path& path, const DepthMap& map);
ConfidenceMap load_confidence_png(const std::filesystem::path& path);
void save_confidence_png(const std::filesystem::path& path, const ConfidenceMap& map);

}  // namespace depthfuse
