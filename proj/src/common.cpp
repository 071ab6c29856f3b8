#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"

namespace hybridct {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kEmptyDataset: return "empty dataset";
    case ErrorCode::kStratification: return "stratification error";
    case ErrorCode::kLoad: return "load error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kWeightsUnavailable: return "weights unavailable";
    case ErrorCode::kNotFound: return "not found";
    case ErrorCode::kIntegrity: return "integrity error";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kInput: return "input error";
    case ErrorCode::kAlignment: return "alignment error";
    case ErrorCode::kUndefinedMetric: return "undefined metric";
    case ErrorCode::kIo: return "I/O error";
    case ErrorCode::kStaleArtifact: return "stale artifact";
    case ErrorCode::kNumeric: return "numeric error";
  }
  return "error";
}

namespace io {

namespace fs = std::filesystem;

std::vector<std::byte> read_file(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, "no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) fail(ErrorCode::kIo, "failed reading " + path.string());
  return bytes;
}

std::string read_text_file(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_file(const fs::path& path, std::span<const std::byte> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::kIo, "cannot create directory " + path.parent_path().string());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot finalize " + path.string() + ": " + ec.message());
}

void write_text_file(const fs::path& path, std::string_view text) {
  write_file(path, std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace io
}  // namespace hybridct
