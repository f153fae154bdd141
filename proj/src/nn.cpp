#include "pan/nn.hpp"

#include <sstream>

namespace pan {

std::string to_string(BlockType t) {
    switch (t) {
        case BlockType::SCPA: return "scpa";
        case BlockType::RB: return "rb";
        case BlockType::RB_CA: return "rb_ca";
        case BlockType::RB_SA: return "rb_sa";
        case BlockType::RB_PA: return "rb_pa";
    }
    return "?";
}

BlockType block_type_from_string(const std::string& s) {
    if (s == "scpa") return BlockType::SCPA;
    if (s == "rb") return BlockType::RB;
    if (s == "rb_ca") return BlockType::RB_CA;
    if (s == "rb_sa") return BlockType::RB_SA;
    if (s == "rb_pa") return BlockType::RB_PA;
    throw UnsupportedError("unknown block type '" + s + "' (scpa|rb|rb_ca|rb_sa|rb_pa)");
}

ModelConfig ModelConfig::pan(int scale) {
    ModelConfig cfg;
    cfg.scale = scale;
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::ablation(BlockType block, int scale) {
    ModelConfig cfg;
    cfg.scale = scale;
    cfg.block_type = block;
    cfg.num_blocks = block == BlockType::SCPA ? 16 : 8;
    cfg.validate();
    return cfg;
}

void ModelConfig::validate() const {
    check_supported(scale == 2 || scale == 3 || scale == 4,
                    "unsupported scale " + std::to_string(scale) + " (must be 2, 3 or 4)");
    check_supported(nf > 0 && nf % 2 == 0, "nf must be positive and even (channel split)");
    check_supported(unf > 0, "unf must be positive");
    check_supported(num_blocks >= 0, "num_blocks must be >= 0");
    check_supported(in_channels > 0 && out_channels > 0, "channel counts must be positive");
    if (block_type == BlockType::RB_CA)
        check_supported(nf % ca_reduction == 0,
                        "nf=" + std::to_string(nf) + " not divisible by ca_reduction=" +
                            std::to_string(ca_reduction));
    if (block_type == BlockType::RB_SA)
        check_supported(sa_kernel > 0 && sa_kernel % 2 == 1, "sa_kernel must be odd");
}

ModelStructure build_structure(const ModelConfig& cfg) {
    cfg.validate();
    ModelStructure st;
    st.config = cfg;
    auto conv = [&st](std::string name, int in_c, int out_c, int k, bool bias, int up = 1,
                      bool per_image = false) {
        st.convs.push_back(ConvSpec{std::move(name), in_c, out_c, k, bias, up, per_image});
    };

    conv("fe.conv", cfg.in_channels, cfg.nf, 3, cfg.outer_conv_bias);

    for (int i = 0; i < cfg.num_blocks; ++i) {
        const std::string p = "body." + std::to_string(i) + ".";
        if (cfg.block_type == BlockType::SCPA) {
            const int g = cfg.nf / 2;
            conv(p + "split_a", cfg.nf, g, 1, cfg.block_conv_bias);
            conv(p + "split_b", cfg.nf, g, 1, cfg.block_conv_bias);
            if (cfg.pa_in_scpa) conv(p + "att", g, g, 1, cfg.attention_bias);
            conv(p + "conv_a1", g, g, 3, cfg.block_conv_bias);
            conv(p + "conv_a2", g, g, 3, cfg.block_conv_bias);
            conv(p + "conv_b", g, g, 3, cfg.block_conv_bias);
            conv(p + "fuse", cfg.nf, cfg.nf, 1, cfg.block_conv_bias);
        } else {
            conv(p + "conv1", cfg.nf, cfg.nf, 3, cfg.block_conv_bias);
            conv(p + "conv2", cfg.nf, cfg.nf, 3, cfg.block_conv_bias);
            if (cfg.block_type == BlockType::RB_CA) {
                conv(p + "att.down", cfg.nf, cfg.nf / cfg.ca_reduction, 1, cfg.attention_bias, 1,
                     true);
                conv(p + "att.up", cfg.nf / cfg.ca_reduction, cfg.nf, 1, cfg.attention_bias, 1,
                     true);
            } else if (cfg.block_type == BlockType::RB_SA) {
                conv(p + "att.conv", 2, 1, cfg.sa_kernel, cfg.attention_bias);
            } else if (cfg.block_type == BlockType::RB_PA) {
                conv(p + "att", cfg.nf, cfg.nf, 1, cfg.attention_bias);
            }
        }
    }

    conv("trunk.conv", cfg.nf, cfg.nf, 3, cfg.outer_conv_bias);

    int up = 1;
    int width = cfg.nf;
    for (int stage = 0; stage < cfg.upsample_stages(); ++stage) {
        const std::string p = "up." + std::to_string(stage) + ".";
        up *= cfg.stage_factor(stage);
        conv(p + "conv1", width, cfg.unf, 3, cfg.outer_conv_bias, up);
        if (cfg.pa_in_upa) conv(p + "att", cfg.unf, cfg.unf, 1, cfg.attention_bias, up);
        conv(p + "conv2", cfg.unf, cfg.unf, 3, cfg.outer_conv_bias, up);
        width = cfg.unf;
    }
    conv("tail.conv", cfg.unf, cfg.out_channels, 3, cfg.outer_conv_bias, up);
    return st;
}

std::int64_t structure_param_count(const ModelStructure& st) {
    std::int64_t total = 0;
    for (const auto& c : st.convs) total += c.param_count();
    return total;
}

std::string model_summary(const ModelStructure& st) {
    std::ostringstream os;
    for (const auto& c : st.convs) {
        os << c.name << "  (" << c.out_c << "," << c.in_c << "," << c.k << "," << c.k << ")"
           << (c.bias ? "+bias" : "") << "  " << c.param_count() << "\n";
    }
    os << "total  " << structure_param_count(st) << "\n";
    return os.str();
}

}  // namespace pan
