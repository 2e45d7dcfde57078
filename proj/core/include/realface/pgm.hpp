#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "realface/corpus.hpp"

namespace realface {

/// Binary P5 with maxval <= 255; pixel v reads as v / maxval.
FaceVector decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const FaceVector& image);

FaceVector read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const FaceVector& image);

/// Row-major numeric CSV, one vector per line.
std::vector<Eigen::VectorXd> read_csv_matrix(const std::filesystem::path& path);

}  // namespace realface
