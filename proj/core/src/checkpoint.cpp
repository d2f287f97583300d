#include "refsr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "refsr/errors.hpp"

namespace refsr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'S', 'R', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  void bytes(void* dst, std::size_t n) {
    if (n > n_ - pos_) throw CorruptionError("checkpoint truncated");
    std::memcpy(dst, p_ + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t len = u32();
    if (len > n_ - pos_) throw CorruptionError("checkpoint string overruns file");
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  bool done() const { return pos_ == n_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& NetworkParams::array(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end())
    throw ConfigurationError("parameter '" + name + "' missing from '" + arch_id + "' params");
  return it->second;
}

Tensor& NetworkParams::array(const std::string& name) {
  auto it = arrays.find(name);
  if (it == arrays.end())
    throw ConfigurationError("parameter '" + name + "' missing from '" + arch_id + "' params");
  return it->second;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : arrays) n += t.size();
  return n;
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_bundle(const std::vector<NetworkParams>& sections) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const NetworkParams& p : sections) {
    w.str(p.arch_id);
    w.u32(p.version);
    w.str(p.config.dump());
    w.u32(static_cast<std::uint32_t>(p.arrays.size()));
    for (const auto& [name, t] : p.arrays) {
      w.str(name);
      for (int d : t.shape()) w.i32(d);
      w.bytes(t.data(), t.size() * sizeof(double));
    }
  }
  const std::uint64_t sum = fnv1a64(w.buffer().data(), w.buffer().size());
  w.u64(sum);
  return std::move(w.buffer());
}

std::vector<NetworkParams> decode_bundle(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 16) throw CorruptionError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CorruptionError("not a checkpoint file (bad magic)");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (stored != fnv1a64(bytes.data(), body))
    throw CorruptionError("checkpoint checksum mismatch (file corrupt or truncated)");

  Reader r(bytes.data() + sizeof kMagic, body - sizeof kMagic);
  const std::uint32_t format = r.u32();
  if (format != kCheckpointFormatVersion)
    throw CorruptionError("unsupported checkpoint format version " + std::to_string(format));
  const std::uint32_t count = r.u32();
  std::vector<NetworkParams> out;
  for (std::uint32_t s = 0; s < count; ++s) {
    NetworkParams p;
    p.arch_id = r.str();
    p.version = r.u32();
    try {
      p.config = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(std::string("checkpoint config unreadable: ") + e.what());
    }
    const std::uint32_t arrays = r.u32();
    for (std::uint32_t a = 0; a < arrays; ++a) {
      std::string name = r.str();
      Tensor::Shape shape;
      for (int& d : shape) {
        d = r.i32();
        if (d < 0 || d > (1 << 24)) throw CorruptionError("implausible array dim in checkpoint");
      }
      Tensor t(shape);
      r.bytes(t.data(), t.size() * sizeof(double));
      p.arrays.emplace(std::move(name), std::move(t));
    }
    out.push_back(std::move(p));
  }
  if (!r.done()) throw CorruptionError("trailing bytes in checkpoint");
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void save_bundle(const std::vector<NetworkParams>& sections, const std::filesystem::path& path) {
  write_file_atomic(path, encode_bundle(sections));
}

std::vector<NetworkParams> load_bundle(const std::filesystem::path& path) {
  return decode_bundle(read_file(path));
}

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  save_bundle({params}, path);
}

NetworkParams load_params(const std::filesystem::path& path) {
  auto sections = load_bundle(path);
  if (sections.size() != 1)
    throw ConfigurationError("'" + path.string() + "' holds " + std::to_string(sections.size()) +
                             " sections, expected exactly one");
  return std::move(sections.front());
}

const NetworkParams& find_section(const std::vector<NetworkParams>& sections,
                                  const std::string& arch_id) {
  for (const NetworkParams& p : sections)
    if (p.arch_id == arch_id) return p;
  throw ConfigurationError("checkpoint has no '" + arch_id + "' section");
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace refsr
