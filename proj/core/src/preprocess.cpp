#include "fcdx/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "fcdx/common.hpp"

namespace fcdx {

float normalize_hu_value(float hu) {
  double x = std::clamp(static_cast<double>(hu), -1024.0, 400.0);
  double k = std::floor((x + 1024.0) / 1424.0 * 255.0);
  return static_cast<float>(k / 128.0 - 1.0);
}

Volume normalize_hu(const Volume& v) {
  Volume out;
  out.spacing = v.spacing;
  out.is_mask = false;
  out.data = Tensor(v.data.shape());
  const float* src = v.data.data();
  float* dst = out.data.data();
  for (std::int64_t i = 0; i < v.data.numel(); ++i) dst[i] = normalize_hu_value(src[i]);
  return out;
}

Volume resample_isotropic(const Volume& v) {
  for (float s : v.spacing)
    if (!(s > 0.0f)) throw data_error("resample: non-positive spacing");
  int in_e[3] = {v.data.dim(0), v.data.dim(1), v.data.dim(2)};
  int out_e[3];
  for (int a = 0; a < 3; ++a) {
    out_e[a] = static_cast<int>(std::lround(in_e[a] * static_cast<double>(v.spacing[a])));
    if (out_e[a] < 1) out_e[a] = 1;
  }

  Volume out;
  out.spacing = {1.0f, 1.0f, 1.0f};
  out.is_mask = v.is_mask;
  out.data = Tensor({out_e[0], out_e[1], out_e[2]});

  // Source voxel-center coordinate of output voxel i along axis a:
  // ((i + 0.5) * 1mm) / spacing - 0.5.
  auto src_coord = [&](int i, int a) {
    double c = (i + 0.5) / static_cast<double>(v.spacing[a]) - 0.5;
    return std::clamp(c, 0.0, static_cast<double>(in_e[a] - 1));
  };
  auto at = [&](int z, int y, int x) -> float {
    return v.data[(static_cast<std::int64_t>(z) * in_e[1] + y) * in_e[2] + x];
  };

  float* dst = out.data.data();
  std::int64_t idx = 0;
  for (int z = 0; z < out_e[0]; ++z) {
    double cz = src_coord(z, 0);
    for (int y = 0; y < out_e[1]; ++y) {
      double cy = src_coord(y, 1);
      for (int x = 0; x < out_e[2]; ++x, ++idx) {
        double cx = src_coord(x, 2);
        if (v.is_mask) {
          dst[idx] = at(static_cast<int>(std::lround(cz)), static_cast<int>(std::lround(cy)),
                        static_cast<int>(std::lround(cx)));
        } else {
          int z0 = std::min(static_cast<int>(cz), in_e[0] - 1), z1 = std::min(z0 + 1, in_e[0] - 1);
          int y0 = std::min(static_cast<int>(cy), in_e[1] - 1), y1 = std::min(y0 + 1, in_e[1] - 1);
          int x0 = std::min(static_cast<int>(cx), in_e[2] - 1), x1 = std::min(x0 + 1, in_e[2] - 1);
          double wz = cz - z0, wy = cy - y0, wx = cx - x0;
          double v00 = (1 - wx) * at(z0, y0, x0) + wx * at(z0, y0, x1);
          double v01 = (1 - wx) * at(z0, y1, x0) + wx * at(z0, y1, x1);
          double v10 = (1 - wx) * at(z1, y0, x0) + wx * at(z1, y0, x1);
          double v11 = (1 - wx) * at(z1, y1, x0) + wx * at(z1, y1, x1);
          dst[idx] = static_cast<float>((1 - wz) * ((1 - wy) * v00 + wy * v01) +
                                        wz * ((1 - wy) * v10 + wy * v11));
        }
      }
    }
  }
  return out;
}

Volume crop_centered(const Volume& v, std::array<int, 3> center, int size, float pad_value) {
  int in_e[3] = {v.data.dim(0), v.data.dim(1), v.data.dim(2)};
  for (int a = 0; a < 3; ++a)
    if (center[a] < 0 || center[a] >= in_e[a])
      throw contract_error("crop_centered: center (" + std::to_string(center[0]) + "," +
                           std::to_string(center[1]) + "," + std::to_string(center[2]) +
                           ") outside volume " + shape_str(v.data.shape()));

  Volume out;
  out.spacing = v.spacing;
  out.is_mask = v.is_mask;
  out.data = Tensor({size, size, size});
  int lo[3];
  for (int a = 0; a < 3; ++a) lo[a] = center[a] - size / 2;

  float* dst = out.data.data();
  std::int64_t idx = 0;
  for (int z = 0; z < size; ++z) {
    int sz = lo[0] + z;
    for (int y = 0; y < size; ++y) {
      int sy = lo[1] + y;
      for (int x = 0; x < size; ++x, ++idx) {
        int sx = lo[2] + x;
        bool in = sz >= 0 && sz < in_e[0] && sy >= 0 && sy < in_e[1] && sx >= 0 && sx < in_e[2];
        dst[idx] = in ? v.data[(static_cast<std::int64_t>(sz) * in_e[1] + sy) * in_e[2] + sx] : pad_value;
      }
    }
  }
  return out;
}

Tensor rotate90(const Tensor& t, int axis, int quarter_turns) {
  if (t.ndim() != 3) throw contract_error("rotate90 expects [D,H,W]");
  if (axis < 0 || axis > 2) throw contract_error("rotate90: axis out of range");
  int q = ((quarter_turns % 4) + 4) % 4;
  Tensor cur = t;
  int a = (axis + 1) % 3, b = (axis + 2) % 3;  // plane of rotation
  for (int step = 0; step < q; ++step) {
    auto shp = cur.shape();
    std::vector<int> oshp = shp;
    std::swap(oshp[a], oshp[b]);
    Tensor next(oshp);
    int e0 = shp[0], e1 = shp[1], e2 = shp[2];
    for (int z = 0; z < e0; ++z)
      for (int y = 0; y < e1; ++y)
        for (int x = 0; x < e2; ++x) {
          int src[3] = {z, y, x};
          int dstc[3] = {z, y, x};
          // 90-degree turn in the (a,b) plane: (ia, ib) -> (ib, Ea-1-ia)
          dstc[a] = src[b];
          dstc[b] = shp[a] - 1 - src[a];
          next[(static_cast<std::int64_t>(dstc[0]) * oshp[1] + dstc[1]) * oshp[2] + dstc[2]] =
              cur[(static_cast<std::int64_t>(z) * e1 + y) * e2 + x];
        }
    cur = next;
  }
  return cur;
}

Tensor flip_axis(const Tensor& t, int axis) {
  if (t.ndim() != 3) throw contract_error("flip_axis expects [D,H,W]");
  auto shp = t.shape();
  Tensor out(shp);
  for (int z = 0; z < shp[0]; ++z)
    for (int y = 0; y < shp[1]; ++y)
      for (int x = 0; x < shp[2]; ++x) {
        int c[3] = {z, y, x};
        c[axis] = shp[axis] - 1 - c[axis];
        out[(static_cast<std::int64_t>(c[0]) * shp[1] + c[1]) * shp[2] + c[2]] =
            t[(static_cast<std::int64_t>(z) * shp[1] + y) * shp[2] + x];
      }
  return out;
}

Tensor shift_axis(const Tensor& t, int axis, int offset, float pad_value) {
  if (t.ndim() != 3) throw contract_error("shift_axis expects [D,H,W]");
  if (offset == 0) return t;
  auto shp = t.shape();
  Tensor out = Tensor::full(shp, pad_value);
  for (int z = 0; z < shp[0]; ++z)
    for (int y = 0; y < shp[1]; ++y)
      for (int x = 0; x < shp[2]; ++x) {
        int c[3] = {z, y, x};
        c[axis] -= offset;  // out(i) = in(i - offset)
        if (c[axis] < 0 || c[axis] >= shp[axis]) continue;
        out[(static_cast<std::int64_t>(z) * shp[1] + y) * shp[2] + x] =
            t[(static_cast<std::int64_t>(c[0]) * shp[1] + c[1]) * shp[2] + c[2]];
      }
  return out;
}

void augment(Tensor& image, std::vector<Tensor*> masks, RandomStream& stream) {
  int rot_axis = static_cast<int>(stream.uniform_int(3));
  int quarters = static_cast<int>(stream.uniform_int(4));
  bool do_flip = stream.uniform() < 0.5;
  int flip_ax = static_cast<int>(stream.uniform_int(3));
  int shift_ax = static_cast<int>(stream.uniform_int(3));
  int offset = static_cast<int>(stream.uniform_int(3)) - 1;

  auto apply = [&](Tensor& t, float pad) {
    if (quarters) t = rotate90(t, rot_axis, quarters);
    if (do_flip) t = flip_axis(t, flip_ax);
    if (offset) t = shift_axis(t, shift_ax, offset, pad);
  };
  apply(image, -1.0f);
  for (Tensor* m : masks) apply(*m, 0.0f);
}

}  // namespace fcdx
