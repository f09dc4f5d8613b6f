#include "acmg/corpus_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "acmg/error.hpp"
#include "acmg/json_util.hpp"

namespace acmg {

using json = nlohmann::json;

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

static_assert(sizeof(float) == 4);

void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32(const std::string& in, std::uint64_t off) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + static_cast<std::uint64_t>(i)])) << (8 * i);
  }
  return std::bit_cast<float>(bits);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("error reading " + p.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& bytes) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + p.string() + ": " + ec.message());
}

struct Region {
  std::uint64_t offset;
  std::uint64_t count;  // number of float32 values
  std::string what;
};

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const std::string& what) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw BoundsError("corpus: size of " + what + " overflows");
  }
  return a * b;
}

}  // namespace

CorpusFiles write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  corpus.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  std::string blob;
  json samples = json::array();
  auto emit_matrix = [&blob](const Matrix& m, std::size_t rows) {
    const auto off = blob.size();
    for (std::size_t i = 0; i < rows * m.cols(); ++i) put_f32(blob, m[i]);
    return off;
  };
  for (const Sample& s : corpus.samples) {
    json rec;
    rec["id"] = s.id;
    rec["label"] = s.label;
    if (s.subject) rec["subject"] = *s.subject;
    rec["T_a"] = s.acoustic.valid_count();
    rec["T_t"] = s.textual.valid_count();
    if (s.acoustic.length() != s.acoustic.valid_count()) rec["padded_T_a"] = s.acoustic.length();
    if (s.textual.length() != s.textual.valid_count()) rec["padded_T_t"] = s.textual.length();
    json offsets;
    offsets["acoustic"] = emit_matrix(s.acoustic.features(), s.acoustic.valid_count());
    offsets["textual"] = emit_matrix(s.textual.features(), s.textual.valid_count());
    json present;
    auto emit_channel = [&](const char* name, const auto& channel) {
      present[name] = channel.has_value();
      if (!channel) return;
      offsets[name] = blob.size();
      for (auto v : *channel) put_f32(blob, static_cast<double>(v));
    };
    emit_channel("energy", s.energy);
    emit_channel("negative_token_flags", s.negative_token_flags);
    emit_channel("diagnostic_a", s.diagnostic_a);
    emit_channel("diagnostic_t", s.diagnostic_t);
    rec["offsets"] = std::move(offsets);
    rec["side_channels"] = std::move(present);
    samples.push_back(std::move(rec));
  }

  json m;
  m["format_version"] = kCorpusFormatVersion;
  m["n_samples"] = corpus.size();
  m["d_a"] = corpus.d_a;
  m["d_t"] = corpus.d_t;
  m["class_names"] = corpus.class_names;
  CorpusFiles files;
  files.blob_bytes = blob.size();
  files.blob_crc32 = crc32_of(blob);
  m["blob"] = {{"file", kBlobName}, {"bytes", files.blob_bytes}, {"crc32", files.blob_crc32}};
  m["samples"] = std::move(samples);

  files.manifest = dir / kManifestName;
  files.blob = dir / kBlobName;
  write_file_atomic(files.blob, blob);
  write_file_atomic(files.manifest, m.dump(1) + "\n");
  return files;
}

Corpus parse_corpus(const std::string& manifest_text, const std::string& blob) {
  json m;
  try {
    m = json::parse(manifest_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("corpus manifest is not valid JSON: ") + e.what());
  }
  const json_util::Reader<FormatError> r{"corpus manifest"};
  if (!m.is_object()) throw FormatError("corpus manifest: expected an object");

  const json& version = r.field(m, "format_version");
  if (!version.is_number_integer() || version.get<std::int64_t>() != kCorpusFormatVersion) {
    throw VersionError("corpus manifest: unsupported format_version " + version.dump() +
                       " (this reader supports " + std::to_string(kCorpusFormatVersion) + ")");
  }

  const json& blob_info = r.field(m, "blob");
  const std::uint64_t expected_bytes = r.u64(r.field(blob_info, "bytes"), "blob.bytes");
  const std::uint64_t expected_crc = r.u64(r.field(blob_info, "crc32"), "blob.crc32");
  if (blob.size() != expected_bytes) {
    throw ChecksumError("corpus blob length mismatch: manifest expects " +
                        std::to_string(expected_bytes) + " bytes, found " +
                        std::to_string(blob.size()));
  }
  const std::uint32_t actual_crc = crc32_of(blob);
  if (actual_crc != expected_crc) {
    throw ChecksumError("corpus blob checksum mismatch: manifest crc32 " +
                        std::to_string(expected_crc) + ", actual " + std::to_string(actual_crc));
  }

  Corpus c;
  const std::uint64_t d_a = r.u64(r.field(m, "d_a"), "d_a");
  const std::uint64_t d_t = r.u64(r.field(m, "d_t"), "d_t");
  if (d_a == 0 || d_t == 0 || d_a > (1u << 20) || d_t > (1u << 20)) {
    throw FormatError("corpus manifest: feature widths out of range");
  }
  c.d_a = d_a;
  c.d_t = d_t;
  const json& names = r.field(m, "class_names");
  if (!names.is_array() || names.size() < 2) {
    throw FormatError("corpus manifest: class_names must list at least two classes");
  }
  for (const auto& n : names) c.class_names.push_back(r.str(n, "class_names[]"));

  const json& samples = r.field(m, "samples");
  if (!samples.is_array()) throw FormatError("corpus manifest: samples must be an array");
  const std::uint64_t n_samples = r.u64(r.field(m, "n_samples"), "n_samples");
  if (n_samples != samples.size()) {
    throw FormatError("corpus manifest: n_samples " + std::to_string(n_samples) + " but " +
                      std::to_string(samples.size()) + " records");
  }

  std::vector<Region> regions;
  std::uint64_t total_values = 0;
  auto claim = [&](std::uint64_t offset, std::uint64_t count, const std::string& what) {
    if (offset % 4 != 0) throw BoundsError("corpus: " + what + " offset is not 4-byte aligned");
    const std::uint64_t bytes = checked_mul(count, 4, what);
    if (offset > blob.size() || bytes > blob.size() - offset) {
      throw BoundsError("corpus: " + what + " [" + std::to_string(offset) + ", +" +
                        std::to_string(bytes) + ") lies outside the " + std::to_string(blob.size()) +
                        "-byte blob");
    }
    regions.push_back({offset, count, what});
    total_values += count;
  };

  struct Pending {
    std::uint64_t off_a, off_t;
    std::optional<std::uint64_t> off_energy, off_neg, off_diag_a, off_diag_t;
    std::uint64_t T_a, T_t, pad_a, pad_t;
  };
  std::vector<Pending> pending;
  pending.reserve(samples.size());

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const json& rec = samples[i];
    const json_util::Reader<FormatError> sr{"corpus sample " + std::to_string(i)};
    Sample s;
    s.id = sr.str(sr.field(rec, "id"), "id");
    const std::uint64_t label = sr.u64(sr.field(rec, "label"), "label");
    if (label >= c.class_names.size()) {
      throw FormatError(sr.context + ": label " + std::to_string(label) + " out of range");
    }
    s.label = label;
    if (rec.contains("subject")) s.subject = sr.str(rec["subject"], "subject");
    Pending p{};
    p.T_a = sr.u64(sr.field(rec, "T_a"), "T_a");
    p.T_t = sr.u64(sr.field(rec, "T_t"), "T_t");
    if (p.T_a == 0 || p.T_t == 0) throw FormatError(sr.context + ": sequence lengths must be >= 1");
    p.pad_a = rec.contains("padded_T_a") ? sr.u64(rec["padded_T_a"], "padded_T_a") : p.T_a;
    p.pad_t = rec.contains("padded_T_t") ? sr.u64(rec["padded_T_t"], "padded_T_t") : p.T_t;
    if (p.pad_a < p.T_a || p.pad_t < p.T_t) {
      throw FormatError(sr.context + ": padded length shorter than valid length");
    }
    const json& offsets = sr.field(rec, "offsets");
    const json& present = sr.field(rec, "side_channels");
    const std::string tag = "sample " + s.id;
    p.off_a = sr.u64(sr.field(offsets, "acoustic"), "offsets.acoustic");
    claim(p.off_a, checked_mul(p.T_a, d_a, tag), tag + " acoustic");
    p.off_t = sr.u64(sr.field(offsets, "textual"), "offsets.textual");
    claim(p.off_t, checked_mul(p.T_t, d_t, tag), tag + " textual");
    auto side = [&](const char* name, std::uint64_t len) -> std::optional<std::uint64_t> {
      if (!sr.boolean(sr.field(present, name), std::string("side_channels.") + name)) return std::nullopt;
      const std::uint64_t off = sr.u64(sr.field(offsets, name), std::string("offsets.") + name);
      claim(off, len, tag + " " + name);
      return off;
    };
    p.off_energy = side("energy", p.T_a);
    p.off_neg = side("negative_token_flags", p.T_t);
    p.off_diag_a = side("diagnostic_a", p.T_a);
    p.off_diag_t = side("diagnostic_t", p.T_t);
    // Padding rows are materialized as zeros; bound how much memory they can demand.
    constexpr std::uint64_t kMaxPaddingValues = 1u << 22;
    if ((p.pad_a - p.T_a) > kMaxPaddingValues / d_a || (p.pad_t - p.T_t) > kMaxPaddingValues / d_t) {
      throw BoundsError(sr.context + ": padded length unreasonably large");
    }
    c.samples.push_back(std::move(s));
    pending.push_back(p);
  }

  if (checked_mul(total_values, 4, "blob") != blob.size()) {
    throw BoundsError("corpus: declared regions cover " + std::to_string(total_values * 4) +
                      " bytes but the blob holds " + std::to_string(blob.size()));
  }
  std::sort(regions.begin(), regions.end(),
            [](const Region& a, const Region& b) { return a.offset < b.offset; });
  for (std::size_t i = 1; i < regions.size(); ++i) {
    if (regions[i - 1].offset + regions[i - 1].count * 4 > regions[i].offset) {
      throw BoundsError("corpus: regions '" + regions[i - 1].what + "' and '" + regions[i].what +
                        "' overlap");
    }
  }

  auto read_matrix = [&](std::uint64_t off, std::uint64_t rows, std::uint64_t pad_rows,
                         std::uint64_t cols, const std::string& what) {
    Matrix mtx(pad_rows, cols);
    for (std::uint64_t k = 0; k < rows * cols; ++k) {
      const float v = get_f32(blob, off + 4 * k);
      if (!std::isfinite(v)) throw FormatError("corpus: non-finite value in " + what);
      mtx[k] = v;
    }
    return mtx;
  };
  auto read_flags = [&](std::uint64_t off, std::uint64_t n, const std::string& what) {
    std::vector<std::uint8_t> f(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      const float v = get_f32(blob, off + 4 * k);
      if (v != 0.0f && v != 1.0f) throw FormatError("corpus: flag values in " + what + " must be 0 or 1");
      f[k] = v == 1.0f;
    }
    return f;
  };

  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    Sample& s = c.samples[i];
    const Pending& p = pending[i];
    s.acoustic = MaskedSequence(read_matrix(p.off_a, p.T_a, p.pad_a, d_a, s.id + " acoustic"), p.T_a);
    s.textual = MaskedSequence(read_matrix(p.off_t, p.T_t, p.pad_t, d_t, s.id + " textual"), p.T_t);
    if (p.off_energy) s.energy = read_matrix(*p.off_energy, p.T_a, p.T_a, 1, s.id + " energy").values();
    if (p.off_neg) s.negative_token_flags = read_flags(*p.off_neg, p.T_t, s.id + " negative_token_flags");
    if (p.off_diag_a) s.diagnostic_a = read_flags(*p.off_diag_a, p.T_a, s.id + " diagnostic_a");
    if (p.off_diag_t) s.diagnostic_t = read_flags(*p.off_diag_t, p.T_t, s.id + " diagnostic_t");
  }
  return c;
}

Corpus read_corpus(const std::filesystem::path& path) {
  const auto manifest = std::filesystem::is_directory(path) ? path / kManifestName : path;
  const std::string text = read_file(manifest);
  std::string blob_name = kBlobName;
  try {
    const json m = json::parse(text);
    if (m.is_object() && m.contains("blob") && m["blob"].is_object() && m["blob"].contains("file") &&
        m["blob"]["file"].is_string()) {
      blob_name = m["blob"]["file"].get<std::string>();
    }
  } catch (const json::exception&) {
    // parse_corpus reports it.
  }
  if (blob_name.empty() || blob_name.find('/') != std::string::npos ||
      blob_name.find('\\') != std::string::npos || blob_name == "." || blob_name == "..") {
    throw FormatError("corpus manifest: blob file must be a plain file name, got '" + blob_name + "'");
  }
  const auto blob_path = manifest.parent_path() / blob_name;
  std::string blob;
  try {
    blob = read_file(blob_path);
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " (blob referenced by " + manifest.string() + ")");
  }
  return parse_corpus(text, blob);
}

}  // namespace acmg
