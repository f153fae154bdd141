#pragma once

#include <filesystem>
#include <random>

#include "pan/image.hpp"

namespace pan {

struct ManifestEntry {
    std::string hr_path;
    std::string lr_path;
    int width = 0;   // HR dims; LR is exactly width/scale x height/scale
    int height = 0;
    std::string hr_hash;
    std::string lr_hash;
};

/// Line-oriented TSV, sorted by hr_path. First line carries the scale.
struct DatasetManifest {
    int scale = 0;
    std::vector<ManifestEntry> entries;
};

/// Bicubic-downsamples every PNG under hr_dir into out_dir (cropping HR to a
/// multiple of the scale first) and writes out_dir/manifest.tsv.
DatasetManifest degrade(const std::filesystem::path& hr_dir, int scale,
                        const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// The 8 symmetries of the square: variant & 3 selects the 90-degree
/// rotation count, bit 2 applies a horizontal flip first. Variant 0 is the
/// identity.
void apply_dihedral(const float* src, float* dst, int c, int size, int variant);

struct PatchRecord {
    int image = 0;
    int lr_y = 0;
    int lr_x = 0;
    int variant = 0;
};

struct PatchBatch {
    TensorPtr lr;  // (b, 3, p/s, p/s)
    TensorPtr hr;  // (b, 3, p, p)
    std::vector<PatchRecord> records;
};

struct SamplerConfig {
    int hr_patch = 256;
    int batch = 32;
    bool augment = true;
};

/// Uniform image + aligned patch + dihedral-variant sampling, with
/// replacement. Decoded images are cached. Deterministic given the RNG state.
class PatchSampler {
  public:
    PatchSampler(DatasetManifest manifest, SamplerConfig cfg,
                 const std::filesystem::path& base_dir);

    PatchBatch sample(std::mt19937_64& rng) const;
    const DatasetManifest& manifest() const { return manifest_; }

  private:
    DatasetManifest manifest_;
    SamplerConfig cfg_;
    std::vector<TensorPtr> lr_images_;
    std::vector<TensorPtr> hr_images_;
};

}  // namespace pan
