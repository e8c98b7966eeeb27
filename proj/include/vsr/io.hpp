// SPDX-License-Identifier: Apache-2.0
/**
 * @file   io.hpp
 * @brief  VSRT tensor files and atomic file writes.
 *
 * VSRT layout: the 4 bytes "VSRT", u32 LE rank, rank x u32 LE dims, then the
 * values as row-major little-endian IEEE-754 float64.
 */
#ifndef VSR_IO_HPP
#define VSR_IO_HPP

#include <vsr/tensor.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vsr {

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string encode_vsrt(const Tensor &t);
Tensor decode_vsrt(std::string_view bytes);

void write_vsrt(const std::filesystem::path &path, const Tensor &t);
Tensor read_vsrt(const std::filesystem::path &path);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path &path, std::string_view contents);
std::string read_file(const std::filesystem::path &path);

} // namespace vsr

#endif // VSR_IO_HPP
