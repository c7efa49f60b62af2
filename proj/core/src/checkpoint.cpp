#include "fcdx/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fcdx/common.hpp"

namespace fcdx {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  void bytes(void* dst, size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw data_error(path_ + ": truncated at byte " + std::to_string(off_ + in_.gcount()));
    off_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t offset() const { return off_; }

 private:
  std::istream& in_;
  std::string path_;
  std::uint64_t off_ = 0;
};

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

}  // namespace

void Checkpoint::put(std::string name, Tensor t) {
  if (find(name)) throw data_error("checkpoint: duplicate tensor name '" + name + "'");
  entries.emplace_back(std::move(name), std::move(t));
}

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

const Tensor& Checkpoint::get(std::string_view name) const {
  const Tensor* t = find(name);
  if (!t) throw data_error("checkpoint: missing tensor '" + std::string(name) + "'");
  return *t;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& [name, t] : ck.entries) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_u32(out, static_cast<std::uint32_t>(t.dim(i)));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
  }
  if (!out) throw io_error("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  Reader r(in, path);

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw data_error(path + ": bad magic at byte 0");
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw data_error(path + ": unsupported version " + std::to_string(version) + " at byte 4");
  std::uint32_t count = r.u32();

  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint32_t name_len = r.u32();
    if (name_len > 4096)
      throw data_error(path + ": implausible name length " + std::to_string(name_len) + " at byte " +
                       std::to_string(r.offset() - 4));
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    std::uint32_t ndim = r.u32();
    if (ndim > 8)
      throw data_error(path + ": implausible rank " + std::to_string(ndim) + " at byte " +
                       std::to_string(r.offset() - 4));
    std::vector<int> shape(ndim);
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      std::uint32_t ext = r.u32();
      if (ext == 0 || ext > (1u << 28))
        throw data_error(path + ": bad extent " + std::to_string(ext) + " at byte " +
                         std::to_string(r.offset() - 4));
      shape[i] = static_cast<int>(ext);
      numel *= ext;
    }
    if (ndim == 0) throw data_error(path + ": rank-0 tensor '" + name + "'");
    Tensor t(shape);
    r.bytes(t.data(), static_cast<size_t>(numel) * 4);
    ck.put(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace fcdx
