#pragma once

#include <filesystem>
#include <iosfwd>

#include "pan/nn.hpp"

namespace pan {

struct CostRow {
    std::string layer;
    std::string out_shape;
    std::int64_t params = 0;
    std::int64_t mult_adds = 0;
};

/// Per-layer parameter and multiply-accumulate accounting at a stated HR
/// resolution. Params are resolution-independent; mult_adds scale with the
/// layer's output pixel count.
struct CostReport {
    int hr_w = 0;
    int hr_h = 0;
    std::vector<CostRow> rows;
    std::int64_t total_params = 0;
    std::int64_t total_mult_adds = 0;
};

/// Sum of weight and bias element counts of a built model.
template <typename T>
std::int64_t count_params(const PanModelT<T>& model) {
    return model.param_count();
}

CostReport cost_report(const ModelStructure& st, int hr_w, int hr_h);
std::int64_t count_mult_adds(const ModelStructure& st, int hr_w, int hr_h);

/// CSV: header `layer,out_shape,params,mult_adds`, UTF-8, LF endings.
void write_ledger_csv(const CostReport& report, std::ostream& os);
void write_ledger_csv(const CostReport& report, const std::filesystem::path& path);

/// Writes one CSV per reproduced efficiency table into `dir`
/// (block_comparison.csv, pa_sites.csv, pan_family.csv). Byte-stable across
/// runs.
void emit_reproduction_ledger(const std::filesystem::path& dir);

}  // namespace pan
