#include "fcdx/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fcdx/common.hpp"
#include "fcdx/preprocess.hpp"
#include "fcdx/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fcdx {

namespace {

constexpr int kGrid = 32;
constexpr int kRaters = 4;

// Count of face-neighbors (6-connectivity) inside the mask; grid borders
// count as outside.
int inside_neighbors(const Tensor& m, int z, int y, int x) {
  int n = 0;
  auto at = [&](int zz, int yy, int xx) {
    if (zz < 0 || zz >= kGrid || yy < 0 || yy >= kGrid || xx < 0 || xx >= kGrid) return 0.0f;
    return m[(static_cast<std::int64_t>(zz) * kGrid + yy) * kGrid + xx];
  };
  n += at(z - 1, y, x) != 0.0f;
  n += at(z + 1, y, x) != 0.0f;
  n += at(z, y - 1, x) != 0.0f;
  n += at(z, y + 1, x) != 0.0f;
  n += at(z, y, x - 1) != 0.0f;
  n += at(z, y, x + 1) != 0.0f;
  return n;
}

// Gentle rank-based morphology: one jitter step moves only voxels with at
// least 3 of 6 face-neighbors on the other side, keeping inter-rater dice
// high on small blobs while still producing visibly different masks.
Tensor morph_jitter(const Tensor& m, int direction) {
  if (direction == 0) return m;
  Tensor out = m.clone();
  for (int z = 0; z < kGrid; ++z)
    for (int y = 0; y < kGrid; ++y)
      for (int x = 0; x < kGrid; ++x) {
        std::int64_t i = (static_cast<std::int64_t>(z) * kGrid + y) * kGrid + x;
        int nb = inside_neighbors(m, z, y, x);
        if (direction > 0 && m[i] == 0.0f && nb >= 3) out[i] = 1.0f;
        if (direction < 0 && m[i] != 0.0f && 6 - nb >= 3) out[i] = 0.0f;
      }
  return out;
}

std::int64_t mask_count(const Tensor& m) {
  std::int64_t c = 0;
  for (std::int64_t i = 0; i < m.numel(); ++i) c += m[i] != 0.0f;
  return c;
}

struct Spike {
  double dir[3];
  double amp;
  double width;
};

}  // namespace

CohortSummary generate_cohort(const CohortConfig& cfg) {
  if (cfg.count < 1) throw config_error("cohort: count must be >= 1");
  if (cfg.ambiguity < 0.0 || cfg.ambiguity > 1.0)
    throw config_error("cohort: ambiguity must be in [0,1], got " + std::to_string(cfg.ambiguity));

  fs::path root(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (ec) throw io_error("cannot create cohort directories under '" + cfg.out_dir + "': " + ec.message());

  RandomStream cohort_stream(cfg.seed);
  std::vector<NoduleRecord> records;
  CohortSummary summary{};

  for (int i = 0; i < cfg.count; ++i) {
    RandomStream rs = cohort_stream.child("record").child(static_cast<std::uint64_t>(i));

    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "n%05d", i);
    std::string id(idbuf);

    // Latent malignancy score drives shape (spiculation) and intensity.
    double s = rs.uniform();

    double center[3];
    for (double& c : center) c = 15.5 + (static_cast<double>(rs.uniform_int(5)) - 2.0);
    double r0 = 3.5 + 3.0 * rs.uniform();
    double radii[3];
    for (double& r : radii) r = std::min(9.0, r0 * (0.8 + 0.4 * rs.uniform()));

    int n_spikes = static_cast<int>(std::lround(2.0 + 10.0 * s));
    std::vector<Spike> spikes(static_cast<size_t>(n_spikes));
    for (Spike& sp : spikes) {
      double n0 = rs.normal(), n1 = rs.normal(), n2 = rs.normal();
      double len = std::sqrt(n0 * n0 + n1 * n1 + n2 * n2);
      if (len < 1e-9) len = 1.0;
      sp.dir[0] = n0 / len;
      sp.dir[1] = n1 / len;
      sp.dir[2] = n2 / len;
      sp.amp = 0.5 + 0.5 * rs.uniform();
      sp.width = 0.05 + 0.05 * rs.uniform();
    }

    // Shape field: normalized ellipsoid distance minus spike extensions.
    Tensor true_mask({kGrid, kGrid, kGrid});
    Tensor hu({kGrid, kGrid, kGrid});
    std::int64_t idx = 0;
    for (int z = 0; z < kGrid; ++z)
      for (int y = 0; y < kGrid; ++y)
        for (int x = 0; x < kGrid; ++x, ++idx) {
          double q[3] = {z - center[0], y - center[1], x - center[2]};
          double e = std::sqrt((q[0] / radii[0]) * (q[0] / radii[0]) + (q[1] / radii[1]) * (q[1] / radii[1]) +
                               (q[2] / radii[2]) * (q[2] / radii[2]));
          double qlen = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
          double spike = 0.0;
          if (qlen > 1e-9) {
            for (const Spike& sp : spikes) {
              double c = (q[0] * sp.dir[0] + q[1] * sp.dir[1] + q[2] * sp.dir[2]) / qlen;
              spike += 0.6 * s * sp.amp * std::exp((c - 1.0) / sp.width);
            }
          }
          double boundary = 1.0 + spike;
          bool inside = e <= boundary;
          true_mask[idx] = inside ? 1.0f : 0.0f;

          double noise = rs.normal();
          double t = std::clamp((boundary - e) / 0.35, 0.0, 1.0);
          double mean_hu = -800.0 + t * ((-120.0 + 170.0 * s) - (-800.0));
          double sigma_hu = 45.0 + t * (25.0 - 45.0);
          hu[idx] = static_cast<float>(mean_hu + sigma_hu * noise);
        }

    Volume crop;
    crop.data = hu;
    crop.spacing = {1.0f, 1.0f, 1.0f};
    crop = normalize_hu(crop);

    NoduleRecord rec;
    rec.id = id;
    rec.crop_path = "images/" + id + ".prvx";
    rec.fold = i % 5;
    summary.fold_counts[static_cast<size_t>(rec.fold)]++;
    write_volume((root / rec.crop_path).string(), crop);

    int first_rating = -1;
    bool disagree = false;
    for (int r = 0; r < kRaters; ++r) {
      RandomStream rr = rs.child("rater").child(static_cast<std::uint64_t>(r));
      double eps = rr.normal() * (0.25 * cfg.ambiguity);
      int rating = std::clamp(static_cast<int>(std::lround(1.0 + 4.0 * (s + eps))), 1, 5);
      double u = rr.uniform();
      int jitter = u < cfg.ambiguity / 2.0 ? -1 : (u < cfg.ambiguity ? 1 : 0);

      Tensor mask = morph_jitter(true_mask, jitter);
      if (mask_count(mask) == 0) mask = true_mask;

      ExpertAnnotation ann;
      ann.rater = r;
      ann.rating = rating;
      ann.mask_path = "masks/" + id + "_r" + std::to_string(r) + ".prvx";
      Volume mv;
      mv.data = mask;
      mv.spacing = {1.0f, 1.0f, 1.0f};
      mv.is_mask = true;
      write_volume((root / ann.mask_path).string(), mv);

      summary.rating_hist[static_cast<size_t>(rating - 1)]++;
      if (first_rating < 0) first_rating = rating;
      if (rating != first_rating) disagree = true;
      rec.annotations.push_back(std::move(ann));
    }
    if (disagree) summary.disagreement_records++;
    records.push_back(std::move(rec));
  }

  save_manifest((root / "manifest.jsonl").string(), records);

  json side;
  side["count"] = cfg.count;
  side["ambiguity"] = cfg.ambiguity;
  side["seed"] = cfg.seed;
  std::ofstream sf(root / "cohort.json");
  if (!sf) throw io_error("cannot write cohort sidecar under '" + cfg.out_dir + "'");
  sf << side.dump(2) << "\n";

  return summary;
}

void save_manifest(const std::string& manifest_path, const std::vector<NoduleRecord>& records) {
  std::ofstream out(manifest_path);
  if (!out) throw io_error("cannot open '" + manifest_path + "' for writing");
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.id;
    j["crop_path"] = rec.crop_path;
    j["fold"] = rec.fold;
    json anns = json::array();
    for (const auto& a : rec.annotations)
      anns.push_back({{"rater", a.rater}, {"rating", a.rating}, {"mask_path", a.mask_path}});
    j["annotations"] = anns;
    out << j.dump() << "\n";
  }
  if (!out) throw io_error("write failed for '" + manifest_path + "'");
}

std::string manifest_dir(const std::string& manifest_path) {
  fs::path p(manifest_path);
  auto d = p.parent_path();
  return d.empty() ? std::string(".") : d.string();
}

std::vector<NoduleRecord> load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw io_error("cannot open '" + manifest_path + "' for reading");
  fs::path dir(manifest_dir(manifest_path));

  std::vector<NoduleRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw data_error(manifest_path + ":" + std::to_string(line_no) + ": invalid JSON record");
    auto fail = [&](const std::string& what) {
      return data_error(manifest_path + ":" + std::to_string(line_no) + ": " + what);
    };
    if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field 'id'");
    NoduleRecord rec;
    rec.id = j["id"].get<std::string>();
    if (!j.contains("crop_path") || !j["crop_path"].is_string())
      throw fail("record '" + rec.id + "' missing 'crop_path'");
    rec.crop_path = j["crop_path"].get<std::string>();
    if (!j.contains("fold") || !j["fold"].is_number_integer())
      throw fail("record '" + rec.id + "' missing integer 'fold'");
    rec.fold = j["fold"].get<int>();
    if (rec.fold < 0 || rec.fold > 4)
      throw fail("record '" + rec.id + "' fold " + std::to_string(rec.fold) + " outside 0..4");
    if (!j.contains("annotations") || !j["annotations"].is_array() || j["annotations"].empty())
      throw fail("record '" + rec.id + "' has no annotations");
    for (const auto& a : j["annotations"]) {
      ExpertAnnotation ann;
      if (!a.contains("rater") || !a.contains("rating") || !a.contains("mask_path"))
        throw fail("record '" + rec.id + "' annotation missing rater/rating/mask_path");
      ann.rater = a["rater"].get<int>();
      ann.rating = a["rating"].get<int>();
      if (ann.rating < 1 || ann.rating > 5)
        throw fail("record '" + rec.id + "' rating " + std::to_string(ann.rating) + " outside 1..5");
      ann.mask_path = a["mask_path"].get<std::string>();
      if (!fs::exists(dir / ann.mask_path))
        throw data_error(manifest_path + ": record '" + rec.id + "' references missing file '" +
                         ann.mask_path + "'");
      rec.annotations.push_back(std::move(ann));
    }
    if (!fs::exists(dir / rec.crop_path))
      throw data_error(manifest_path + ": record '" + rec.id + "' references missing file '" +
                       rec.crop_path + "'");
    for (const auto& prev : records)
      if (prev.id == rec.id) throw fail("duplicate record id '" + rec.id + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace fcdx
