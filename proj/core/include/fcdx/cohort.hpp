#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fcdx/volume.hpp"

namespace fcdx {

struct ExpertAnnotation {
  int rater = 0;
  int rating = 0;           // 1..5
  std::string mask_path;    // relative to the manifest directory
};

struct NoduleRecord {
  std::string id;
  std::string crop_path;  // relative to the manifest directory
  int fold = 0;           // 0..4
  std::vector<ExpertAnnotation> annotations;
};

struct CohortConfig {
  int count = 0;
  double ambiguity = 0.0;  // in [0,1]
  std::uint64_t seed = 0;
  std::string out_dir;
};

struct CohortSummary {
  std::array<int, 5> fold_counts{};
  std::array<int, 5> rating_hist{};  // over all annotations
  int disagreement_records = 0;      // records whose raters do not all agree
};

// Synthesizes `count` nodules (image crop + 4 rater annotations each), writes
// volumes plus a JSON-lines manifest under out_dir, and returns counting
// stats for the summary line. Byte-deterministic in (count, ambiguity, seed).
CohortSummary generate_cohort(const CohortConfig& cfg);

// Reads a JSON-lines manifest; validates structure and that every referenced
// file exists (reported with the offending record id).
std::vector<NoduleRecord> load_manifest(const std::string& manifest_path);
void save_manifest(const std::string& manifest_path, const std::vector<NoduleRecord>& records);

// Directory containing a manifest; record paths resolve against it.
std::string manifest_dir(const std::string& manifest_path);

}  // namespace fcdx
