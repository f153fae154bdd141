#include "pan/data.hpp"

#include <algorithm>
#include <sstream>

#include "pan/io_util.hpp"

namespace pan {

namespace {

std::string hash_file(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    return hex64(fnv1a64(raw.data(), raw.size()));
}

std::vector<std::filesystem::path> sorted_pngs(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .png files in '" + dir.string() + "'");
    return files;
}

}  // namespace

DatasetManifest degrade(const std::filesystem::path& hr_dir, int scale,
                        const std::filesystem::path& out_dir) {
    check_supported(scale == 2 || scale == 3 || scale == 4, "degrade: scale must be 2, 3 or 4");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "hr");
    fs::create_directories(out_dir / "lr");

    DatasetManifest m;
    m.scale = scale;
    for (const auto& src : sorted_pngs(hr_dir)) {
        ImageBuffer hr = load_png(src);
        const int w = hr.width - hr.width % scale;
        const int h = hr.height - hr.height % scale;
        if (w == 0 || h == 0)
            throw DataError("degrade: '" + src.string() + "' too small for scale " +
                            std::to_string(scale));
        if (w != hr.width || h != hr.height) hr = crop(hr, 0, 0, w, h);
        const ImageBuffer lr = bicubic_resize(hr, 1, scale, /*antialias=*/true);

        const fs::path hr_out = out_dir / "hr" / src.filename();
        const fs::path lr_out = out_dir / "lr" / src.filename();
        save_png(hr_out, hr);
        save_png(lr_out, lr);

        ManifestEntry e;
        e.hr_path = fs::path("hr") / src.filename();
        e.lr_path = fs::path("lr") / src.filename();
        e.width = w;
        e.height = h;
        e.hr_hash = hash_file(hr_out);
        e.lr_hash = hash_file(lr_out);
        m.entries.push_back(std::move(e));
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.hr_path < b.hr_path; });
    save_manifest(m, out_dir / "manifest.tsv");
    return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "# pan-manifest\tscale=" << m.scale << "\n";
    for (const auto& e : m.entries)
        os << e.hr_path << "\t" << e.lr_path << "\t" << e.width << "\t" << e.height << "\t"
           << e.hr_hash << "\t" << e.lr_hash << "\n";
    write_file_atomic(path, os.str());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("scale=");
            if (pos != std::string::npos) m.scale = std::stoi(line.substr(pos + 6));
            continue;
        }
        std::istringstream ls(line);
        ManifestEntry e;
        if (!(ls >> e.hr_path >> e.lr_path >> e.width >> e.height >> e.hr_hash >> e.lr_hash))
            throw DataError("manifest: malformed line " + std::to_string(lineno) + " in '" +
                            path.string() + "'");
        m.entries.push_back(std::move(e));
    }
    if (m.scale == 0) throw DataError("manifest: missing scale header in '" + path.string() + "'");
    if (m.entries.empty()) throw DataError("manifest: no entries in '" + path.string() + "'");
    return m;
}

void apply_dihedral(const float* src, float* dst, int c, int size, int variant) {
    check_supported(variant >= 0 && variant < 8, "dihedral variant must be in [0,8)");
    const int rot = variant & 3;
    const bool flip = variant & 4;
    const std::int64_t plane = std::int64_t(size) * size;
    for (int ch = 0; ch < c; ++ch) {
        const float* sp = src + ch * plane;
        float* dp = dst + ch * plane;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                int sx = flip ? size - 1 - x : x;
                int sy = y;
                for (int r = 0; r < rot; ++r) {
                    // 90-degree counter-clockwise on the source coordinates
                    const int tx = sy;
                    const int ty = size - 1 - sx;
                    sx = tx;
                    sy = ty;
                }
                dp[std::int64_t(y) * size + x] = sp[std::int64_t(sy) * size + sx];
            }
    }
}

PatchSampler::PatchSampler(DatasetManifest manifest, SamplerConfig cfg,
                           const std::filesystem::path& base_dir)
    : manifest_(std::move(manifest)), cfg_(cfg) {
    check_supported(manifest_.scale >= 2 && manifest_.scale <= 4, "sampler: bad manifest scale");
    check_supported(cfg_.hr_patch % manifest_.scale == 0,
                    "sampler: hr_patch must be divisible by the scale");
    for (const auto& e : manifest_.entries) {
        hr_images_.push_back(image_to_tensor(load_png(base_dir / e.hr_path)));
        lr_images_.push_back(image_to_tensor(load_png(base_dir / e.lr_path)));
        const auto& hs = hr_images_.back()->shape;
        const auto& ls = lr_images_.back()->shape;
        if (hs.h != e.height || hs.w != e.width || ls.h * manifest_.scale != hs.h ||
            ls.w * manifest_.scale != hs.w)
            throw DataError("sampler: '" + e.hr_path + "' does not match its manifest entry");
    }
}

PatchBatch PatchSampler::sample(std::mt19937_64& rng) const {
    const int s = manifest_.scale;
    const int p = cfg_.hr_patch;
    const int lp = p / s;

    PatchBatch batch;
    batch.lr = make_tensor<float>({cfg_.batch, 3, lp, lp});
    batch.hr = make_tensor<float>({cfg_.batch, 3, p, p});
    std::vector<float> lr_buf(std::size_t(3) * lp * lp);
    std::vector<float> hr_buf(std::size_t(3) * p * p);

    std::uniform_int_distribution<int> pick_image(0, int(manifest_.entries.size()) - 1);
    for (int b = 0; b < cfg_.batch; ++b) {
        PatchRecord rec;
        rec.image = pick_image(rng);
        const auto& lr_img = lr_images_[std::size_t(rec.image)];
        const auto& hr_img = hr_images_[std::size_t(rec.image)];
        if (lr_img->shape.h < lp || lr_img->shape.w < lp)
            throw DataError("sampler: patch " + std::to_string(p) + " larger than image '" +
                            manifest_.entries[std::size_t(rec.image)].hr_path + "'");
        rec.lr_y = std::uniform_int_distribution<int>(0, lr_img->shape.h - lp)(rng);
        rec.lr_x = std::uniform_int_distribution<int>(0, lr_img->shape.w - lp)(rng);
        rec.variant = cfg_.augment ? std::uniform_int_distribution<int>(0, 7)(rng) : 0;

        // LR patch at (lr_y, lr_x); the HR patch corner is exactly scale times that.
        for (int ch = 0; ch < 3; ++ch) {
            const float* src = lr_img->plane(0, ch);
            for (int y = 0; y < lp; ++y)
                std::copy_n(src + std::int64_t(rec.lr_y + y) * lr_img->shape.w + rec.lr_x, lp,
                            lr_buf.data() + (std::int64_t(ch) * lp + y) * lp);
        }
        for (int ch = 0; ch < 3; ++ch) {
            const float* src = hr_img->plane(0, ch);
            for (int y = 0; y < p; ++y)
                std::copy_n(src + std::int64_t(rec.lr_y * s + y) * hr_img->shape.w + rec.lr_x * s,
                            p, hr_buf.data() + (std::int64_t(ch) * p + y) * p);
        }
        apply_dihedral(lr_buf.data(), batch.lr->plane(b, 0), 3, lp, rec.variant);
        apply_dihedral(hr_buf.data(), batch.hr->plane(b, 0), 3, p, rec.variant);
        batch.records.push_back(rec);
    }
    return batch;
}

}  // namespace pan
