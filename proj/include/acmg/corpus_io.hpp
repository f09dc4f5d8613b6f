#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "acmg/corpus.hpp"

namespace acmg {

inline constexpr int kCorpusFormatVersion = 1;
inline constexpr const char* kManifestName = "corpus.json";
inline constexpr const char* kBlobName = "corpus.bin";

struct CorpusFiles {
  std::filesystem::path manifest;
  std::filesystem::path blob;
  std::uint32_t blob_crc32 = 0;
  std::uint64_t blob_bytes = 0;
};

/// Writes `dir`/corpus.json and `dir`/corpus.bin. Features go to disk as
/// little-endian float32.
CorpusFiles write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Reads a corpus from a directory or a manifest path. Validates version,
/// checksum and every blob region before touching the data. Throws
/// VersionError, ChecksumError, BoundsError or FormatError (all FormatError).
Corpus read_corpus(const std::filesystem::path& path);

/// Same validation on in-memory manifest text and blob bytes.
Corpus parse_corpus(const std::string& manifest_text, const std::string& blob);

std::uint32_t crc32_of(const std::string& bytes);

}  // namespace acmg
