// SPDX-License-Identifier: Apache-2.0
#include <vsr/io.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vsr {

namespace {

void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string &out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(std::string_view bytes, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

} // namespace

std::string encode_vsrt(const Tensor &t) {
  std::string out = "VSRT";
  out.reserve(8 + 4 * t.shape().size() + 8 * static_cast<std::size_t>(t.size()));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.shape())
    put_u32(out, static_cast<std::uint32_t>(d));
  for (Index i = 0; i < t.size(); ++i)
    put_f64(out, t.data()[i]);
  return out;
}

Tensor decode_vsrt(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != "VSRT")
    throw FormatError("not a VSRT tensor (bad magic)");
  const auto rank = static_cast<std::size_t>(get_le(bytes, 4, 4));
  if (rank == 0 || bytes.size() < 8 + 4 * rank)
    throw FormatError("VSRT header truncated");
  Shape shape(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<Index>(get_le(bytes, 8 + 4 * i, 4));
    if (shape[i] == 0)
      throw FormatError("VSRT dimension of size zero");
    count *= static_cast<std::size_t>(shape[i]);
  }
  const std::size_t payload = 8 + 4 * rank;
  if (bytes.size() != payload + 8 * count)
    throw FormatError("VSRT payload size mismatch");
  Array values(static_cast<Index>(count));
  for (std::size_t i = 0; i < count; ++i)
    values[static_cast<Index>(i)] = std::bit_cast<double>(get_le(bytes, payload + 8 * i, 8));
  return Tensor(std::move(shape), std::move(values));
}

void write_vsrt(const std::filesystem::path &path, const Tensor &t) {
  write_file_atomic(path, encode_vsrt(t));
}

Tensor read_vsrt(const std::filesystem::path &path) {
  try {
    return decode_vsrt(read_file(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path &path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os)
      throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace vsr
