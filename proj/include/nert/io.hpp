#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nert/image.hpp"

namespace nert::io {

/// Reads an 8-bit PNG (or any format OpenCV decodes) as RGB in [0,1].
Image read_image(const std::filesystem::path& path);

/// Writes RGB (or single-channel) image as 8-bit PNG; values are clamped.
void write_png(const std::filesystem::path& path, const Image& image);

/// Area-averaging resize; no-op when the size already matches.
Image resize(const Image& image, int rows, int cols);

/// Lowercase hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes to a sibling temporary then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// PNG files of a directory in lexical order, skipping ground_truth.png.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

}  // namespace nert::io
