#include "fusionnet/trainer.hpp"

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fusionnet/rng.hpp"

namespace fusionnet {

namespace fs = std::filesystem;

// ---- config ----

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_double_field(const std::string& key, const std::string& value) {
    try {
        size_t consumed = 0;
        const double v = std::stod(value, &consumed);
        if (consumed != value.size()) throw parse_error("");
        return v;
    } catch (const std::exception&) {
        throw parse_error("config field '" + key + "' is not a number: '" + value + "'");
    }
}

int64_t parse_int_field(const std::string& key, const std::string& value) {
    try {
        size_t consumed = 0;
        const long long v = std::stoll(value, &consumed);
        if (consumed != value.size()) throw parse_error("");
        return static_cast<int64_t>(v);
    } catch (const std::exception&) {
        throw parse_error("config field '" + key + "' is not an integer: '" + value + "'");
    }
}

uint64_t parse_uint_field(const std::string& key, const std::string& value) {
    try {
        size_t consumed = 0;
        const unsigned long long v = std::stoull(value, &consumed);
        if (consumed != value.size()) throw parse_error("");
        return static_cast<uint64_t>(v);
    } catch (const std::exception&) {
        throw parse_error("config field '" + key + "' is not an unsigned integer: '" + value + "'");
    }
}

} // namespace

void TrainConfig::validate() const {
    if (lr <= 0) throw config_error("lr must be positive");
    if (batch != 1) throw config_error("batch must be 1 (one optimizer step per image)");
    if (epochs < 0) throw config_error("epochs must be >= 0");
    if (channels < 2 || channels % 2 != 0) throw config_error("channels must be even and >= 2");
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
        throw config_error("loss weights must be non-negative");
    if (height < 4 || width < 4) throw config_error("target size must be at least 4x4");
    if (entropy_bins < 2) throw config_error("entropy_bins must be >= 2");
    if (checkpoint_every < 0) throw config_error("checkpoint_every must be >= 0");
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig config;
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("config line " + std::to_string(line_no) + " is not 'key = value': '" +
                              line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "lr") config.lr = parse_double_field(key, value);
        else if (key == "batch") config.batch = parse_int_field(key, value);
        else if (key == "epochs") config.epochs = parse_int_field(key, value);
        else if (key == "channels") config.channels = parse_int_field(key, value);
        else if (key == "lambda1") config.lambda1 = parse_double_field(key, value);
        else if (key == "lambda2") config.lambda2 = parse_double_field(key, value);
        else if (key == "lambda3") config.lambda3 = parse_double_field(key, value);
        else if (key == "seed") config.seed = parse_uint_field(key, value);
        else if (key == "height") config.height = parse_int_field(key, value);
        else if (key == "width") config.width = parse_int_field(key, value);
        else if (key == "grad_target") config.grad_target = grad_target_from_string(value);
        else if (key == "entropy_bins") config.entropy_bins = parse_int_field(key, value);
        else if (key == "checkpoint_every") config.checkpoint_every = parse_int_field(key, value);
        else if (key == "out_dir") config.out_dir = value;
        else throw parse_error("unknown config key '" + key + "' on line " + std::to_string(line_no));
    }
    config.validate();
    return config;
}

TrainConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read config file: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string serialize_config(const TrainConfig& config) {
    std::ostringstream out;
    out << "lr = " << format_double(config.lr) << "\n";
    out << "batch = " << config.batch << "\n";
    out << "epochs = " << config.epochs << "\n";
    out << "channels = " << config.channels << "\n";
    out << "lambda1 = " << format_double(config.lambda1) << "\n";
    out << "lambda2 = " << format_double(config.lambda2) << "\n";
    out << "lambda3 = " << format_double(config.lambda3) << "\n";
    out << "seed = " << config.seed << "\n";
    out << "height = " << config.height << "\n";
    out << "width = " << config.width << "\n";
    out << "grad_target = " << to_string(config.grad_target) << "\n";
    out << "entropy_bins = " << config.entropy_bins << "\n";
    out << "checkpoint_every = " << config.checkpoint_every << "\n";
    out << "out_dir = " << config.out_dir << "\n";
    return out.str();
}

// ---- checkpoint serialization ----

namespace {

constexpr char kMagic[4] = {'F', 'N', 'C', 'K'};
constexpr uint64_t kTrainerRngStream = 0x7261696e; // consumed only via the stored state

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw format_error(std::string("checkpoint truncated at offset ") + std::to_string(pos) +
                               " while reading " + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) {
        const uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string bytes(size_t n, const char* what) {
        need(n, what);
        std::string v = buf.substr(pos, n);
        pos += n;
        return v;
    }
};

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int64_t a = 0; a < t.rank(); ++a) put_u64(out, static_cast<uint64_t>(t.extent(a)));
    for (int64_t i = 0; i < t.numel(); ++i) {
        uint32_t bits;
        const float v = t[i];
        std::memcpy(&bits, &v, sizeof(bits));
        put_u32(out, bits);
    }
}

Tensor read_tensor(Reader& r, const std::string& expected_name) {
    const uint32_t name_len = r.u32("tensor name length");
    const std::string name = r.bytes(name_len, "tensor name");
    if (name != expected_name)
        throw format_error("checkpoint tensor order mismatch at offset " + std::to_string(r.pos) +
                           ": expected '" + expected_name + "', found '" + name + "'");
    const uint32_t rank = r.u32("tensor rank");
    Shape shape(rank);
    for (uint32_t a = 0; a < rank; ++a) shape[a] = static_cast<int64_t>(r.u64("tensor extent"));
    const int64_t count = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const uint32_t bits = r.u32("tensor data");
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        data[static_cast<size_t>(i)] = v;
    }
    return Tensor(std::move(shape), std::move(data));
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, Checkpoint::kVersion);

    const std::string config_text = serialize_config(ckpt.config);
    put_u64(out, config_text.size());
    out.append(config_text);

    put_u64(out, static_cast<uint64_t>(ckpt.epoch));
    put_u64(out, static_cast<uint64_t>(ckpt.step));
    for (uint64_t word : ckpt.rng_state) put_u64(out, word);

    // Parameter states advance in lockstep, so hyperparameters and the step
    // are stored once.
    const AdamState& head = ckpt.opt_states.front();
    put_f64(out, head.beta1);
    put_f64(out, head.beta2);
    put_f64(out, head.epsilon);
    put_u64(out, static_cast<uint64_t>(head.step));

    auto named = const_cast<Checkpoint&>(ckpt).params.named_tensors();
    put_u32(out, static_cast<uint32_t>(named.size() * 3));
    for (const auto& [name, tensor] : named) put_tensor(out, name, *tensor);
    for (size_t i = 0; i < named.size(); ++i) {
        put_tensor(out, named[i].first + ".m", ckpt.opt_states[i].m);
        put_tensor(out, named[i].first + ".v", ckpt.opt_states[i].v);
    }
    return out;
}

} // namespace

Checkpoint Checkpoint::fresh(const TrainConfig& config) {
    config.validate();
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.params = init_params<float>(config.seed, InitScheme::he_xavier, config.channels);
    for (const auto& [name, tensor] : ckpt.params.named_tensors())
        ckpt.opt_states.push_back(AdamState::for_param(*tensor));
    ckpt.rng_state = Rng(config.seed, kTrainerRngStream).state();
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    if (ckpt.opt_states.size() != 16)
        throw contract_error("checkpoint must carry one optimizer state per parameter tensor");
    const std::string payload = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write checkpoint: " + path.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw io_error("short write for checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read checkpoint: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string payload = buffer.str();

    Reader r{payload};
    const std::string magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw format_error("not a checkpoint (bad magic at offset 0): " + path.string());
    const uint32_t version = r.u32("version");
    if (version != Checkpoint::kVersion)
        throw format_error("unsupported checkpoint version " + std::to_string(version) + " in " +
                           path.string());

    Checkpoint ckpt;
    const uint64_t config_len = r.u64("config length");
    ckpt.config = parse_config(r.bytes(config_len, "config text"));

    ckpt.epoch = static_cast<int64_t>(r.u64("epoch counter"));
    ckpt.step = static_cast<int64_t>(r.u64("step counter"));
    for (auto& word : ckpt.rng_state) word = r.u64("rng state");

    const double beta1 = r.f64("adam beta1");
    const double beta2 = r.f64("adam beta2");
    const double epsilon = r.f64("adam epsilon");
    const auto adam_step_count = static_cast<int64_t>(r.u64("adam step"));

    ckpt.params = make_params<float>(ckpt.config.channels);
    auto named = ckpt.params.named_tensors();
    const uint32_t n_tensors = r.u32("tensor count");
    if (n_tensors != named.size() * 3)
        throw format_error("checkpoint tensor count " + std::to_string(n_tensors) + " != expected " +
                           std::to_string(named.size() * 3));
    for (auto& [name, tensor] : named) {
        Tensor loaded = read_tensor(r, name);
        if (!loaded.same_shape(*tensor))
            throw format_error("checkpoint tensor '" + name + "' has shape " +
                               shape_to_string(loaded.shape()) + ", expected " +
                               shape_to_string(tensor->shape()));
        *tensor = std::move(loaded);
    }
    for (auto& [name, tensor] : named) {
        AdamState state;
        state.beta1 = beta1;
        state.beta2 = beta2;
        state.epsilon = epsilon;
        state.step = adam_step_count;
        state.m = read_tensor(r, name + ".m");
        state.v = read_tensor(r, name + ".v");
        if (!state.m.same_shape(*tensor) || !state.v.same_shape(*tensor))
            throw format_error("checkpoint moment shape mismatch for '" + name + "'");
        ckpt.opt_states.push_back(std::move(state));
    }
    if (r.pos != payload.size())
        throw format_error("checkpoint has " + std::to_string(payload.size() - r.pos) +
                           " trailing bytes at offset " + std::to_string(r.pos));
    return ckpt;
}

// ---- training loop ----

std::string loss_log_header() { return "step,epoch,id,mse,grad,entropy,roi,total"; }

std::string format_log_row(const TrainLogRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%" PRId64 ",%" PRId64 ",%s,%.9g,%.9g,%.9g,%.9g,%.9g",
                  row.step, row.epoch, row.id.c_str(), row.loss.mse, row.loss.grad,
                  row.loss.entropy, row.loss.roi, row.loss.total);
    return buf;
}

namespace {

std::vector<std::string> epoch_order(const DatasetManifest& manifest, uint64_t seed, int64_t epoch) {
    std::vector<std::string> order = manifest.ids;
    Rng rng(seed, 0xe70c0000ull + static_cast<uint64_t>(epoch));
    rng.shuffle(order);
    return order;
}

TrainResult run_training(Checkpoint ckpt, const DatasetManifest& manifest) {
    const TrainConfig& config = ckpt.config;
    config.validate();
    if (manifest.empty()) throw config_error("training requires a non-empty dataset manifest");

    // Position within the schedule is fully determined by the step counter;
    // the epoch field is the completed-epoch floor of it.
    const int64_t pairs_per_epoch = static_cast<int64_t>(manifest.size());
    const int64_t start_epoch = ckpt.step / pairs_per_epoch;
    const int64_t start_pos = ckpt.step % pairs_per_epoch;

    std::ofstream log_file;
    if (!config.out_dir.empty()) {
        fs::create_directories(config.out_dir);
        const fs::path log_path = fs::path(config.out_dir) / "loss_log.csv";
        const bool resuming = ckpt.step > 0 && fs::exists(log_path);
        log_file.open(log_path, resuming ? std::ios::app : std::ios::trunc);
        if (!log_file) throw io_error("cannot write loss log: " + log_path.string());
        if (!resuming) log_file << loss_log_header() << "\n";
    }

    TrainResult result;
    auto named = ckpt.params.named_tensors();
    int64_t step = ckpt.step;

    for (int64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(manifest, config.seed, epoch);
        for (int64_t pos = epoch == start_epoch ? start_pos : 0; pos < pairs_per_epoch; ++pos) {
            const std::string& id = order[static_cast<size_t>(pos)];
            ++step;
            LoadedPair item = load_pair(manifest, id, {{config.height, config.width}});

            TrainLogRow row;
            row.step = step;
            row.epoch = epoch;
            row.id = id;
            try {
                auto leaves = make_leaves(ckpt.params);
                auto graph = forward_graph(make_const(item.pair.ir), make_const(item.pair.vis),
                                           make_const(item.pair.vis_y), leaves);
                auto total = loss_total(graph.fused, make_const(item.pair.ir),
                                        make_const(item.pair.vis_y), item.annotations,
                                        config.weights(), config.grad_target, config.entropy_bins);
                row.loss = total.values;
                backward(total.total);
                for (size_t i = 0; i < named.size(); ++i)
                    adam_step(*named[i].second, leaves[i]->grad(), ckpt.opt_states[i], config.lr);
            } catch (const numeric_error& e) {
                throw numeric_error("training aborted at step " + std::to_string(step) + " (pair '" +
                                    id + "'): " + e.what());
            }

            result.log.push_back(row);
            if (log_file) {
                log_file << format_log_row(row) << "\n";
                log_file.flush();
            }

            ckpt.step = step;
            ckpt.epoch = step / pairs_per_epoch;
            if (!config.out_dir.empty() && config.checkpoint_every > 0 &&
                step % config.checkpoint_every == 0) {
                char name[48];
                std::snprintf(name, sizeof(name), "ckpt_step_%06lld.fnck",
                              static_cast<long long>(step));
                save_checkpoint(ckpt, fs::path(config.out_dir) / name);
            }
        }
    }

    if (!config.out_dir.empty())
        save_checkpoint(ckpt, fs::path(config.out_dir) / "ckpt_final.fnck");
    result.checkpoint = std::move(ckpt);
    return result;
}

} // namespace

TrainResult train(const TrainConfig& config, const DatasetManifest& manifest) {
    return run_training(Checkpoint::fresh(config), manifest);
}

TrainResult train_from(const Checkpoint& start, const DatasetManifest& manifest) {
    return run_training(start, manifest);
}

MetricReport evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest,
                      std::optional<double> force_alpha) {
    if (manifest.empty()) throw config_error("evaluation requires a non-empty dataset manifest");
    MetricReport report;
    for (const auto& id : manifest.ids) {
        LoadedPair item = load_pair(manifest, id);
        Tensor fused;
        if (force_alpha) {
            Tensor alpha({1, item.pair.height(), item.pair.width()});
            alpha.fill(static_cast<float>(*force_alpha));
            fused = blend(alpha, item.pair.ir, item.pair.vis_y);
        } else {
            fused = forward(item.pair.ir, item.pair.vis, item.pair.vis_y, ckpt.params).fused;
        }
        MetricRow row;
        row.id = id;
        row.ssim = ssim(fused, item.pair.ir);
        row.mse = mse_metric(fused, item.pair.ir);
        row.entropy = entropy_metric(fused);
        const RoiSsimResult roi = roi_ssim(fused, item.pair.ir, item.annotations);
        row.roi_ssim = roi.value;
        row.roi_boxes_skipped = roi.skipped;
        report.rows.push_back(std::move(row));
    }
    report.compute_means();
    return report;
}

} // namespace fusionnet
