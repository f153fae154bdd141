#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pan/analysis.hpp"
#include "pan/io_util.hpp"

using namespace pan;

namespace {

double rel_diff(double a, double b) { return std::abs(a - b) / b; }

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("pan_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("single conv param counts") {
    ModelConfig cfg = ModelConfig::pan(4);
    const auto st = build_structure(cfg);
    for (const auto& c : st.convs)
        if (c.name == "fe.conv") {
            CHECK(c.in_c == 3);
            CHECK(c.out_c == 40);
            CHECK(c.param_count() == 1120);  // 3*40*9 + 40
        }
}

TEST_CASE("one 1x1 conv on a 320x180 grid") {
    ModelConfig cfg = ModelConfig::pan(4);
    cfg.num_blocks = 1;
    const auto st = build_structure(cfg);
    const auto report = cost_report(st, 1280, 720);
    for (const auto& row : report.rows)
        if (row.layer == "body.0.split_a") {
            // 40->20 1x1 on the LR grid: 800 MACs per pixel * 57600 pixels.
            CHECK(row.mult_adds == 46080000);
            CHECK(row.out_shape == "20x180x320");
        }
}

TEST_CASE("pan family mult-adds land on the published totals within 2%") {
    const double g = 1e9;
    CHECK(rel_diff(double(count_mult_adds(build_structure(ModelConfig::pan(2)), 1280, 720)),
                   70.5 * g) < 0.02);
    CHECK(rel_diff(double(count_mult_adds(build_structure(ModelConfig::pan(3)), 1280, 720)),
                   39.0 * g) < 0.02);
    CHECK(rel_diff(double(count_mult_adds(build_structure(ModelConfig::pan(4)), 1280, 720)),
                   28.2 * g) < 0.02);
}

TEST_CASE("8-block ablation totals within 5% of the published values") {
    CHECK(rel_diff(double(structure_param_count(build_structure(ModelConfig::ablation(BlockType::RB, 4)))),
                   272009.0) < 0.05);
    CHECK(rel_diff(double(structure_param_count(
                       build_structure(ModelConfig::ablation(BlockType::RB_CA, 4)))),
                   285379.0) < 0.05);
    CHECK(rel_diff(double(structure_param_count(
                       build_structure(ModelConfig::ablation(BlockType::RB_SA, 4)))),
                   272427.0) < 0.05);
    CHECK(rel_diff(double(structure_param_count(
                       build_structure(ModelConfig::ablation(BlockType::RB_PA, 4)))),
                   285219.0) < 0.05);
}

TEST_CASE("sc-pa adds far fewer parameters over rb than rb-pa does") {
    const auto rb = structure_param_count(build_structure(ModelConfig::ablation(BlockType::RB, 4)));
    const auto rb_pa =
        structure_param_count(build_structure(ModelConfig::ablation(BlockType::RB_PA, 4)));
    const auto scpa = structure_param_count(build_structure(ModelConfig::pan(4)));
    CHECK(scpa > rb);
    CHECK(rb_pa - rb > 10 * (scpa - rb));
}

TEST_CASE("mult-adds quadruple when both dimensions double") {
    const auto st = build_structure(ModelConfig::pan(4));
    const auto base = cost_report(st, 640, 360);
    const auto big = cost_report(st, 1280, 720);
    REQUIRE(base.rows.size() == big.rows.size());
    for (std::size_t i = 0; i < base.rows.size(); ++i)
        if (!base.rows[i].out_shape.ends_with("x1x1"))
            CHECK(big.rows[i].mult_adds == 4 * base.rows[i].mult_adds);
}

TEST_CASE("params are independent of the stated resolution") {
    const auto st = build_structure(ModelConfig::pan(4));
    CHECK(cost_report(st, 640, 360).total_params == cost_report(st, 1280, 720).total_params);
}

TEST_CASE("analytic mult-adds equal an instrumented forward pass") {
    for (BlockType bt : {BlockType::SCPA, BlockType::RB_CA, BlockType::RB_SA}) {
        CAPTURE(to_string(bt));
        ModelConfig cfg;
        cfg.scale = 4;
        cfg.block_type = bt;
        cfg.num_blocks = 2;
        cfg.nf = 8;
        cfg.unf = 6;
        auto model = build_pan<float>(cfg, 5);
        const int hr = 16;  // LR grid 4x4
        auto input = make_tensor<float>({1, 3, hr / 4, hr / 4}, 0.5f);
        Tape tape;
        tape.set_recording(false);
        CostTally tally;
        model.forward(tape, input, &tally);
        CHECK(tally.mult_adds == count_mult_adds(model.structure(), hr, hr));
        const auto report = cost_report(model.structure(), hr, hr);
        for (const auto& row : report.rows) CHECK(tally.per_layer.at(row.layer) == row.mult_adds);
    }
}

TEST_CASE("indivisible resolutions are rejected") {
    const auto st = build_structure(ModelConfig::pan(3));
    CHECK_THROWS_AS(count_mult_adds(st, 1279, 719), UnsupportedError);
    CHECK(count_mult_adds(st, 1280, 720) > 0);  // 720p works for x3
}

TEST_CASE("ledger csv format and totals") {
    const auto st = build_structure(ModelConfig::pan(4));
    const auto report = cost_report(st, 1280, 720);
    std::ostringstream os;
    write_ledger_csv(report, os);
    const std::string csv = os.str();
    CHECK(csv.rfind("layer,out_shape,params,mult_adds\n", 0) == 0);
    CHECK(csv.find("\r") == std::string::npos);
    CHECK(csv.find("total,,272419,") != std::string::npos);
    CHECK(report.total_params == 272419);
}

TEST_CASE("reproduction ledger contents and byte stability") {
    const auto dir = temp_dir("ledger");
    emit_reproduction_ledger(dir);
    const std::string pa_sites = read_file(dir / "pa_sites.csv");
    for (const char* total : {"264499", "271219", "265699", "272419"})
        CHECK(pa_sites.find(total) != std::string::npos);

    const std::string family = read_file(dir / "pan_family.csv");
    CHECK(family.find("pan_x2") != std::string::npos);
    CHECK(family.find("261403") != std::string::npos);

    const std::string blocks = read_file(dir / "block_comparison.csv");
    CHECK(blocks.find("rb_pa_x4") != std::string::npos);

    emit_reproduction_ledger(dir);  // re-run must be bytewise identical
    CHECK(read_file(dir / "pa_sites.csv") == pa_sites);
    CHECK(read_file(dir / "pan_family.csv") == family);
    CHECK(read_file(dir / "block_comparison.csv") == blocks);
    std::filesystem::remove_all(dir);
}
