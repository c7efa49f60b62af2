#include "fcdx/volume.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "fcdx/common.hpp"

namespace fcdx {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'V', 'X'};
constexpr std::uint32_t kVersion = 1;

struct Reader {
  std::istream& in;
  const std::string& path;
  std::uint64_t off = 0;

  void bytes(void* dst, size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
      throw data_error(path + ": truncated at byte " + std::to_string(off + in.gcount()));
    off += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
};

}  // namespace

Volume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  Reader r{in, path};

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw data_error(path + ": bad magic at byte 0");
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw data_error(path + ": unsupported version " + std::to_string(version) + " at byte 4");

  std::uint32_t d = r.u32(), h = r.u32(), w = r.u32();
  if (d == 0 || h == 0 || w == 0 || static_cast<std::uint64_t>(d) * h * w > (1ull << 31))
    throw data_error(path + ": bad extents " + std::to_string(d) + "x" + std::to_string(h) + "x" +
                     std::to_string(w) + " at byte 8");
  Volume v;
  v.spacing = {r.f32(), r.f32(), r.f32()};
  for (float s : v.spacing)
    if (!(s > 0.0f)) throw data_error(path + ": non-positive spacing at byte 20");

  std::uint8_t dtype;
  r.bytes(&dtype, 1);
  if (dtype > 1)
    throw data_error(path + ": unknown dtype " + std::to_string(dtype) + " at byte " +
                     std::to_string(r.off - 1));
  v.is_mask = dtype == 1;

  std::int64_t n = static_cast<std::int64_t>(d) * h * w;
  v.data = Tensor({static_cast<int>(d), static_cast<int>(h), static_cast<int>(w)});
  if (dtype == 0) {
    r.bytes(v.data.data(), static_cast<size_t>(n) * 4);
  } else {
    std::vector<std::uint8_t> raw(static_cast<size_t>(n));
    r.bytes(raw.data(), raw.size());
    for (std::int64_t i = 0; i < n; ++i) {
      if (raw[i] > 1)
        throw data_error(path + ": mask byte " + std::to_string(raw[i]) + " at byte " +
                         std::to_string(r.off - static_cast<std::uint64_t>(n - i)));
      v.data[i] = static_cast<float>(raw[i]);
    }
  }
  return v;
}

void write_volume(const std::string& path, const Volume& v) {
  if (v.data.ndim() != 3) throw contract_error("write_volume expects [D,H,W], got " + shape_str(v.data.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open '" + path + "' for writing");

  auto u32 = [&](std::uint32_t x) { out.write(reinterpret_cast<const char*>(&x), 4); };
  out.write(kMagic, 4);
  u32(kVersion);
  u32(static_cast<std::uint32_t>(v.data.dim(0)));
  u32(static_cast<std::uint32_t>(v.data.dim(1)));
  u32(static_cast<std::uint32_t>(v.data.dim(2)));
  out.write(reinterpret_cast<const char*>(v.spacing.data()), 12);
  std::uint8_t dtype = v.is_mask ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&dtype), 1);

  std::int64_t n = v.data.numel();
  if (v.is_mask) {
    std::vector<std::uint8_t> raw(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      float x = v.data[i];
      if (x != 0.0f && x != 1.0f)
        throw contract_error("write_volume: mask value " + std::to_string(x) + " is not binary");
      raw[i] = x != 0.0f ? 1 : 0;
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  } else {
    out.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(n) * 4);
  }
  if (!out) throw io_error("write failed for '" + path + "'");
}

}  // namespace fcdx
