#include "acmg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "acmg/config.hpp"
#include "acmg/error.hpp"

namespace acmg {

// Layout (all integers little-endian):
//   "ACMGCKPT" | u32 version | u32 len, model config JSON
//   u32 n_tensors, then per tensor: u32 name_len, name, u32 rows, u32 cols, f32[rows*cols]
//   u8 has_optimizer; if 1: u64 epochs_done, u64 step, f32 m[...] and v[...] per tensor
//   u32 crc32 of every preceding byte

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'C', 'M', 'G', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void bytes(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void floats(const Matrix& m) {
    for (double v : m.values()) pod(static_cast<float>(v));
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Cursor {
 public:
  Cursor(const std::string& data, std::size_t end) : data_(data), end_(end) {}

  template <class T>
  T pod(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string bytes(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix floats(std::size_t rows, std::size_t cols, const char* what) {
    if (cols != 0 && rows > (end_ - pos_) / sizeof(float) / cols) {
      throw BoundsError(std::string("checkpoint: ") + what + " extends past the end of the file");
    }
    Matrix m(rows, cols);
    for (double& v : m.values()) {
      const float f = pod<float>(what);
      if (!std::isfinite(f)) throw FormatError(std::string("checkpoint: non-finite value in ") + what);
      v = f;
    }
    return m;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > end_ - pos_) throw BoundsError(std::string("checkpoint: truncated while reading ") + what);
  }
  const std::string& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const char* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const FusionModel& model, const OptimizerState* optimizer,
                     const std::filesystem::path& path) {
  const auto params = model.parameters();
  Writer w;
  w.buffer().append(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.bytes(to_json(model.config()).dump());
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.bytes(p->name);
    w.pod(static_cast<std::uint32_t>(p->value.rows()));
    w.pod(static_cast<std::uint32_t>(p->value.cols()));
    w.floats(p->value);
  }
  w.pod(static_cast<std::uint8_t>(optimizer != nullptr));
  if (optimizer) {
    if (optimizer->m.size() != params.size() || optimizer->v.size() != params.size()) {
      throw ConfigError("save_checkpoint: optimizer state does not match the model");
    }
    w.pod(static_cast<std::uint64_t>(optimizer->epochs_done));
    w.pod(static_cast<std::uint64_t>(optimizer->step));
    for (const auto& m : optimizer->m) w.floats(m);
    for (const auto& v : optimizer->v) w.floats(v);
  }
  w.pod(crc_of(w.buffer().data(), w.buffer().size()));

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("write failed for checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("checkpoint: bad magic, not an ACMG checkpoint");
  }
  Cursor head(bytes, bytes.size());
  for (std::size_t i = 0; i < sizeof kMagic; ++i) head.pod<char>("magic");
  const auto version = head.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < sizeof kMagic + 8) throw BoundsError("checkpoint: truncated before checksum");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  const std::uint32_t actual = crc_of(bytes.data(), body);
  if (stored != actual) {
    throw ChecksumError("checkpoint: checksum mismatch (stored " + std::to_string(stored) +
                        ", computed " + std::to_string(actual) + ")");
  }

  Cursor c(bytes, body);
  for (std::size_t i = 0; i < sizeof kMagic + 4; ++i) c.pod<char>("header");
  Checkpoint ck;
  try {
    ck.config = model_config_from_json(nlohmann::json::parse(c.bytes("model config")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: model config is not valid JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const auto n = c.pod<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    ad::Parameter p;
    p.name = c.bytes("tensor name");
    const auto rows = c.pod<std::uint32_t>("tensor rows");
    const auto cols = c.pod<std::uint32_t>("tensor cols");
    p.value = c.floats(rows, cols, "tensor data");
    ck.parameters.push_back(std::move(p));
  }
  const auto has_opt = c.pod<std::uint8_t>("optimizer flag");
  if (has_opt > 1) throw FormatError("checkpoint: optimizer flag must be 0 or 1");
  if (has_opt) {
    OptimizerState st;
    st.epochs_done = static_cast<std::size_t>(c.pod<std::uint64_t>("epochs_done"));
    st.step = c.pod<std::uint64_t>("step");
    for (const auto& p : ck.parameters) st.m.push_back(c.floats(p.value.rows(), p.value.cols(), "adam m"));
    for (const auto& p : ck.parameters) st.v.push_back(c.floats(p.value.rows(), p.value.cols(), "adam v"));
    ck.optimizer = std::move(st);
  }
  if (c.pos() != body) throw FormatError("checkpoint: trailing bytes after the optimizer section");
  return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto where = [&](const std::exception& e) { return path.string() + ": " + e.what(); };
  try {
    return parse_checkpoint(ss.str());
  } catch (const VersionError& e) {
    throw VersionError(where(e));
  } catch (const ChecksumError& e) {
    throw ChecksumError(where(e));
  } catch (const BoundsError& e) {
    throw BoundsError(where(e));
  } catch (const FormatError& e) {
    throw FormatError(where(e));
  }
}

FusionModel restore_model(const Checkpoint& ckpt) {
  FusionModel model(ckpt.config);
  auto params = model.parameters();
  if (params.size() != ckpt.parameters.size()) {
    throw FormatError("checkpoint: holds " + std::to_string(ckpt.parameters.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.parameters[i];
    if (src.name != params[i]->name || src.value.rows() != params[i]->value.rows() ||
        src.value.cols() != params[i]->value.cols()) {
      throw FormatError("checkpoint: tensor " + std::to_string(i) + " is '" + src.name + "' " +
                        src.value.shape_str() + ", model expects '" + params[i]->name + "' " +
                        params[i]->value.shape_str());
    }
    params[i]->value = src.value;
  }
  return model;
}

}  // namespace acmg
