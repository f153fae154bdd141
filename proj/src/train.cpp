#include "pan/train.hpp"

#include <cstring>
#include <sstream>

#include "pan/io_util.hpp"

namespace pan {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& s, std::uint64_t v) { s.append(reinterpret_cast<const char*>(&v), 8); }

struct Reader {
    const std::string& raw;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > raw.size()) throw DataError("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, raw.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, raw.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = raw.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, kVersion);
    put_u64(out, ck.iteration);
    put_u32(out, std::uint32_t(ck.rng_state.size()));
    out += ck.rng_state;
    put_u32(out, std::uint32_t(ck.config_echo.size()));
    out += ck.config_echo;
    put_u32(out, std::uint32_t(ck.tensors.size()));
    for (const auto& t : ck.tensors) {
        put_u32(out, std::uint32_t(t.name.size()));
        out += t.name;
        out.push_back(0);  // dtype: f32
        put_u32(out, std::uint32_t(t.shape.n));
        put_u32(out, std::uint32_t(t.shape.c));
        put_u32(out, std::uint32_t(t.shape.h));
        put_u32(out, std::uint32_t(t.shape.w));
    }
    const std::size_t payload_start = out.size();
    for (const auto& t : ck.tensors)
        out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * 4);
    put_u64(out, fnv1a64(out.data() + payload_start, out.size() - payload_start));
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    Reader r{raw};
    if (r.bytes(8) != std::string(kMagic, 8))
        throw DataError("checkpoint: bad magic in '" + path.string() + "'");
    if (r.u32() != kVersion) throw DataError("checkpoint: unsupported format version");
    Checkpoint ck;
    ck.iteration = r.u64();
    ck.rng_state = r.bytes(r.u32());
    ck.config_echo = r.bytes(r.u32());
    const std::uint32_t count = r.u32();
    ck.tensors.resize(count);
    for (auto& t : ck.tensors) {
        t.name = r.bytes(r.u32());
        const std::string dtype = r.bytes(1);
        if (dtype[0] != 0) throw DataError("checkpoint: unsupported dtype for '" + t.name + "'");
        t.shape.n = int(r.u32());
        t.shape.c = int(r.u32());
        t.shape.h = int(r.u32());
        t.shape.w = int(r.u32());
    }
    const std::size_t payload_start = r.pos;
    for (auto& t : ck.tensors) {
        const std::size_t n = std::size_t(t.shape.numel());
        const std::string bytes = r.bytes(n * 4);
        t.data.resize(n);
        std::memcpy(t.data.data(), bytes.data(), n * 4);
    }
    const std::uint64_t stored = r.u64();
    const std::uint64_t actual = fnv1a64(raw.data() + payload_start, r.pos - 8 - payload_start);
    if (stored != actual) throw DataError("checkpoint: payload checksum mismatch");
    return ck;
}

Checkpoint snapshot(const PanModel& model, const AdamState& adam, std::uint64_t iteration,
                    const std::string& rng_state, const std::string& config_echo) {
    Checkpoint ck;
    ck.iteration = iteration;
    ck.rng_state = rng_state;
    ck.config_echo = config_echo;
    std::size_t slot = 0;
    auto push = [&ck](const std::string& name, const Shape4& shape, const std::vector<float>& data) {
        ck.tensors.push_back(NamedTensorView{name, shape, data});
    };
    for (const auto& p : model.params()) {
        push("param/" + p.name + ".weight", p.weight->shape, p.weight->data);
        push("adam_m/" + p.name + ".weight", p.weight->shape, adam.m[slot]);
        push("adam_v/" + p.name + ".weight", p.weight->shape, adam.v[slot]);
        ++slot;
        if (p.bias) {
            push("param/" + p.name + ".bias", p.bias->shape, p.bias->data);
            push("adam_m/" + p.name + ".bias", p.bias->shape, adam.m[slot]);
            push("adam_v/" + p.name + ".bias", p.bias->shape, adam.v[slot]);
            ++slot;
        }
    }
    return ck;
}

void restore(const Checkpoint& ck, PanModel& model, AdamState& adam) {
    std::unordered_map<std::string, const NamedTensorView*> by_name;
    for (const auto& t : ck.tensors) by_name[t.name] = &t;

    std::vector<std::string> missing, mismatched;
    std::unordered_map<std::string, bool> used;
    auto pull = [&](const std::string& name, const Shape4& shape, std::vector<float>& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            missing.push_back(name);
            return;
        }
        used[name] = true;
        if (!(it->second->shape == shape)) {
            mismatched.push_back(name + ": checkpoint " + to_string(it->second->shape) +
                                 " vs model " + to_string(shape));
            return;
        }
        dst = it->second->data;
    };

    std::size_t slot = 0;
    for (auto& p : model.params()) {
        pull("param/" + p.name + ".weight", p.weight->shape, p.weight->data);
        pull("adam_m/" + p.name + ".weight", p.weight->shape, adam.m[slot]);
        pull("adam_v/" + p.name + ".weight", p.weight->shape, adam.v[slot]);
        ++slot;
        if (p.bias) {
            pull("param/" + p.name + ".bias", p.bias->shape, p.bias->data);
            pull("adam_m/" + p.name + ".bias", p.bias->shape, adam.m[slot]);
            pull("adam_v/" + p.name + ".bias", p.bias->shape, adam.v[slot]);
            ++slot;
        }
    }
    std::vector<std::string> unexpected;
    for (const auto& t : ck.tensors)
        if (!used.count(t.name)) unexpected.push_back(t.name);

    if (!missing.empty() || !mismatched.empty() || !unexpected.empty()) {
        std::ostringstream os;
        os << "checkpoint does not match the model architecture:\n";
        for (const auto& s : missing) os << "  missing in checkpoint: " << s << "\n";
        for (const auto& s : unexpected) os << "  unexpected in checkpoint: " << s << "\n";
        for (const auto& s : mismatched) os << "  shape mismatch: " << s << "\n";
        throw DataError(os.str());
    }
}

std::string config_echo_text(const ModelConfig& mc, const TrainConfig& tc) {
    std::ostringstream os;
    os.precision(17);
    os << "model.scale=" << mc.scale << "\n";
    os << "model.block_type=" << to_string(mc.block_type) << "\n";
    os << "model.num_blocks=" << mc.num_blocks << "\n";
    os << "model.nf=" << mc.nf << "\n";
    os << "model.unf=" << mc.unf << "\n";
    os << "model.in_channels=" << mc.in_channels << "\n";
    os << "model.out_channels=" << mc.out_channels << "\n";
    os << "model.pa_in_scpa=" << (mc.pa_in_scpa ? 1 : 0) << "\n";
    os << "model.pa_in_upa=" << (mc.pa_in_upa ? 1 : 0) << "\n";
    os << "model.ca_reduction=" << mc.ca_reduction << "\n";
    os << "model.sa_kernel=" << mc.sa_kernel << "\n";
    os << "model.act_slope=" << mc.act_slope << "\n";
    os << "model.block_conv_bias=" << (mc.block_conv_bias ? 1 : 0) << "\n";
    os << "model.attention_bias=" << (mc.attention_bias ? 1 : 0) << "\n";
    os << "model.outer_conv_bias=" << (mc.outer_conv_bias ? 1 : 0) << "\n";
    os << "train.max_lr=" << tc.max_lr << "\n";
    os << "train.min_lr=" << tc.min_lr << "\n";
    os << "train.cosine_period=" << tc.cosine_period << "\n";
    os << "train.batch=" << tc.batch << "\n";
    os << "train.hr_patch=" << tc.hr_patch << "\n";
    os << "train.total_iters=" << tc.total_iters << "\n";
    os << "train.seed=" << tc.seed << "\n";
    os << "train.eval_every=" << tc.eval_every << "\n";
    os << "train.augment=" << (tc.augment ? 1 : 0) << "\n";
    os << "train.single_decay=" << (tc.single_decay ? 1 : 0) << "\n";
    os << "train.adam_beta1=" << tc.adam_beta1 << "\n";
    os << "train.adam_beta2=" << tc.adam_beta2 << "\n";
    os << "train.adam_eps=" << tc.adam_eps << "\n";
    return os.str();
}

namespace {

void apply_key(const std::string& key, const std::string& value, ModelConfig& mc, TrainConfig& tc,
               int lineno) {
    try {
        if (key == "model.scale") mc.scale = std::stoi(value);
        else if (key == "model.block_type") mc.block_type = block_type_from_string(value);
        else if (key == "model.num_blocks") mc.num_blocks = std::stoi(value);
        else if (key == "model.nf") mc.nf = std::stoi(value);
        else if (key == "model.unf") mc.unf = std::stoi(value);
        else if (key == "model.in_channels") mc.in_channels = std::stoi(value);
        else if (key == "model.out_channels") mc.out_channels = std::stoi(value);
        else if (key == "model.pa_in_scpa") mc.pa_in_scpa = std::stoi(value) != 0;
        else if (key == "model.pa_in_upa") mc.pa_in_upa = std::stoi(value) != 0;
        else if (key == "model.ca_reduction") mc.ca_reduction = std::stoi(value);
        else if (key == "model.sa_kernel") mc.sa_kernel = std::stoi(value);
        else if (key == "model.act_slope") mc.act_slope = std::stof(value);
        else if (key == "model.block_conv_bias") mc.block_conv_bias = std::stoi(value) != 0;
        else if (key == "model.attention_bias") mc.attention_bias = std::stoi(value) != 0;
        else if (key == "model.outer_conv_bias") mc.outer_conv_bias = std::stoi(value) != 0;
        else if (key == "train.max_lr") tc.max_lr = std::stod(value);
        else if (key == "train.min_lr") tc.min_lr = std::stod(value);
        else if (key == "train.cosine_period") tc.cosine_period = std::stoll(value);
        else if (key == "train.batch") tc.batch = std::stoi(value);
        else if (key == "train.hr_patch") tc.hr_patch = std::stoi(value);
        else if (key == "train.total_iters") tc.total_iters = std::stoll(value);
        else if (key == "train.seed") tc.seed = std::stoull(value);
        else if (key == "train.eval_every") tc.eval_every = std::stoll(value);
        else if (key == "train.augment") tc.augment = std::stoi(value) != 0;
        else if (key == "train.single_decay") tc.single_decay = std::stoi(value) != 0;
        else if (key == "train.adam_beta1") tc.adam_beta1 = std::stod(value);
        else if (key == "train.adam_beta2") tc.adam_beta2 = std::stod(value);
        else if (key == "train.adam_eps") tc.adam_eps = std::stod(value);
        else
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(lineno) + ": bad value '" + value +
                          "' for key '" + key + "'");
    }
}

}  // namespace

void parse_config_echo(const std::string& text, ModelConfig& mc, TrainConfig& tc) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" +
                              line + "'");
        apply_key(line.substr(0, eq), line.substr(eq + 1), mc, tc, lineno);
    }
}

double eval_entry_psnr(const PanModel& model, const DatasetManifest& manifest,
                       const std::filesystem::path& data_dir, std::size_t index) {
    const auto& entry = manifest.entries.at(index);
    const ImageBuffer lr = load_png(data_dir / entry.lr_path);
    const ImageBuffer hr = load_png(data_dir / entry.hr_path);
    Tape tape;
    tape.set_recording(false);
    const auto sr = model.forward(tape, image_to_tensor(lr));
    const int shave = model.config().scale;
    return psnr(rgb_to_y(tensor_to_image(*sr)), rgb_to_y(hr), shave);
}

TrainResult train(PanModel& model, const DatasetManifest& manifest,
                  const std::filesystem::path& data_dir, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, const std::filesystem::path& resume) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const std::string echo = config_echo_text(model.config(), cfg);

    AdamState adam = AdamState::zeros_like(model);
    std::mt19937_64 rng(cfg.seed);
    std::int64_t start_iter = 0;

    if (!resume.empty()) {
        const Checkpoint ck = load_checkpoint(resume);
        restore(ck, model, adam);
        start_iter = std::int64_t(ck.iteration);
        adam.t = start_iter;
        std::istringstream rs(ck.rng_state);
        rs >> rng;
        if (!rs) throw DataError("checkpoint: unreadable rng state");
    }

    PatchSampler sampler(manifest, SamplerConfig{cfg.hr_patch, cfg.batch, cfg.augment}, data_dir);

    std::ostringstream log;
    log << "iter,lr,loss\n";
    std::ostringstream eval_log;
    eval_log << "iter,psnr\n";
    auto rng_string = [&rng]() {
        std::ostringstream os;
        os << rng;
        return os.str();
    };
    auto emit_checkpoint = [&](std::int64_t iter, const std::filesystem::path& path) {
        save_checkpoint(path, snapshot(model, adam, std::uint64_t(iter), rng_string(), echo));
    };

    TrainResult result;
    Tape tape;
    for (std::int64_t iter = start_iter; iter < cfg.total_iters; ++iter) {
        const double lr = cosine_lr(iter, cfg);
        const PatchBatch batch = sampler.sample(rng);
        batch.lr->requires_grad = false;
        batch.hr->requires_grad = false;

        tape.clear();
        const auto pred = model.forward(tape, batch.lr);
        const auto loss = l1_loss(tape, pred, batch.hr);
        const double loss_v = double(loss->data[0]);
        if (!std::isfinite(loss_v)) {
            std::ostringstream os;
            os << "non-finite loss at iteration " << iter << "; batch was";
            for (const auto& r : batch.records)
                os << " (image=" << r.image << " y=" << r.lr_y << " x=" << r.lr_x
                   << " variant=" << r.variant << ")";
            throw NumericError(os.str());
        }

        for (auto& p : model.params()) {
            p.weight->zero_grad();
            if (p.bias) p.bias->zero_grad();
        }
        tape.backward(loss);
        adam_step(model, adam, lr, cfg);

        char line[96];
        std::snprintf(line, sizeof line, "%lld,%.9g,%.9g\n", static_cast<long long>(iter), lr,
                      loss_v);
        log << line;
        result.final_loss = loss_v;

        const std::int64_t done = iter + 1;
        if (cfg.eval_every > 0 && done % cfg.eval_every == 0 && done < cfg.total_iters) {
            emit_checkpoint(done, out_dir / ("ckpt_" + std::to_string(done) + ".pan"));
            char eline[64];
            std::snprintf(eline, sizeof eline, "%lld,%.6f\n", static_cast<long long>(done),
                          eval_entry_psnr(model, manifest, data_dir, 0));
            eval_log << eline;
        }
    }
    tape.clear();

    result.iterations = cfg.total_iters;
    result.final_checkpoint = out_dir / "final.pan";
    emit_checkpoint(cfg.total_iters, result.final_checkpoint);
    write_file_atomic(out_dir / "loss.csv", log.str());
    result.eval_psnr = eval_entry_psnr(model, manifest, data_dir, 0);
    char eline[64];
    std::snprintf(eline, sizeof eline, "%lld,%.6f\n", static_cast<long long>(cfg.total_iters),
                  result.eval_psnr);
    eval_log << eline;
    write_file_atomic(out_dir / "eval.csv", eval_log.str());
    return result;
}

}  // namespace pan
