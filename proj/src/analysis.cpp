#include "pan/analysis.hpp"

#include <fstream>
#include <sstream>

#include "pan/io_util.hpp"

namespace pan {

namespace {

// Execution pixel count for a layer running at `up` times the LR grid.
// Exact rational arithmetic so odd cases like x3 at 1280x720 (fractional LR
// width but integral pixel count) are handled without rounding.
std::int64_t exec_pixels(const ModelConfig& cfg, const ConvSpec& spec, int hr_w, int hr_h) {
    if (spec.per_image) return 1;
    const std::int64_t s2 = std::int64_t(cfg.scale) * cfg.scale;
    const std::int64_t scaled =
        std::int64_t(hr_w) * hr_h * spec.up_factor * spec.up_factor;
    check_supported(scaled % s2 == 0,
                    "mult-adds: resolution " + std::to_string(hr_w) + "x" + std::to_string(hr_h) +
                        " is not divisible for scale " + std::to_string(cfg.scale));
    return scaled / s2;
}

std::string axis_string(std::int64_t hr_dim, int up, int scale) {
    const std::int64_t num = hr_dim * up;
    if (num % scale == 0) return std::to_string(num / scale);
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << double(num) / scale;
    return os.str();
}

std::string out_shape_string(const ModelConfig& cfg, const ConvSpec& spec, int hr_w, int hr_h) {
    if (spec.per_image) return std::to_string(spec.out_c) + "x1x1";
    return std::to_string(spec.out_c) + "x" + axis_string(hr_h, spec.up_factor, cfg.scale) + "x" +
           axis_string(hr_w, spec.up_factor, cfg.scale);
}

}  // namespace

CostReport cost_report(const ModelStructure& st, int hr_w, int hr_h) {
    check_supported(hr_w > 0 && hr_h > 0, "mult-adds: resolution must be positive");
    CostReport report;
    report.hr_w = hr_w;
    report.hr_h = hr_h;
    for (const auto& spec : st.convs) {
        CostRow row;
        row.layer = spec.name;
        row.out_shape = out_shape_string(st.config, spec, hr_w, hr_h);
        row.params = spec.param_count();
        row.mult_adds =
            std::int64_t(spec.out_c) * spec.in_c * spec.k * spec.k * exec_pixels(st.config, spec, hr_w, hr_h);
        report.total_params += row.params;
        report.total_mult_adds += row.mult_adds;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::int64_t count_mult_adds(const ModelStructure& st, int hr_w, int hr_h) {
    return cost_report(st, hr_w, hr_h).total_mult_adds;
}

void write_ledger_csv(const CostReport& report, std::ostream& os) {
    os << "layer,out_shape,params,mult_adds\n";
    for (const auto& row : report.rows)
        os << row.layer << "," << row.out_shape << "," << row.params << "," << row.mult_adds
           << "\n";
    os << "total,," << report.total_params << "," << report.total_mult_adds << "\n";
}

void write_ledger_csv(const CostReport& report, const std::filesystem::path& path) {
    std::ostringstream os;
    write_ledger_csv(report, os);
    write_file_atomic(path, os.str());
}

void emit_reproduction_ledger(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const int hr_w = 1280, hr_h = 720;
    auto total_row = [&](std::ostream& os, const std::string& label, const ModelConfig& cfg) {
        const auto st = build_structure(cfg);
        os << label << ",3x" << hr_h << "x" << hr_w << "," << structure_param_count(st) << ","
           << count_mult_adds(st, hr_w, hr_h) << "\n";
    };

    {
        std::ostringstream os;
        os << "layer,out_shape,params,mult_adds\n";
        for (BlockType bt : {BlockType::RB, BlockType::RB_CA, BlockType::RB_SA, BlockType::RB_PA})
            total_row(os, to_string(bt) + "_x4", ModelConfig::ablation(bt, 4));
        write_file_atomic(dir / "block_comparison.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "layer,out_shape,params,mult_adds\n";
        for (bool in_scpa : {false, true})
            for (bool in_upa : {false, true}) {
                ModelConfig cfg = ModelConfig::pan(4);
                cfg.pa_in_scpa = in_scpa;
                cfg.pa_in_upa = in_upa;
                std::string label = std::string("pan_x4_pa_scpa_") + (in_scpa ? "on" : "off") +
                                    "_pa_upa_" + (in_upa ? "on" : "off");
                total_row(os, label, cfg);
            }
        write_file_atomic(dir / "pa_sites.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "layer,out_shape,params,mult_adds\n";
        for (int scale : {2, 3, 4})
            total_row(os, "pan_x" + std::to_string(scale), ModelConfig::pan(scale));
        write_file_atomic(dir / "pan_family.csv", os.str());
    }
}

}  // namespace pan
