#include "rmap/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "json.hpp"
#include "rmap/checkpoint.hpp"
#include "rmap/ops.hpp"
#include "rmap/tensor_io.hpp"

namespace rmap::train {
namespace {

using nlohmann::json;

json sim_to_json(const dpm::SimConfig& cfg) {
    json j;
    j["frequency_hz"] = cfg.frequency_hz;
    j["pathloss_exponent"] = cfg.pathloss_exponent;
    j["tx_power_dbm"] = cfg.tx_power_dbm;
    j["bandwidth_hz"] = cfg.bandwidth_hz;
    j["noise_density_dbm_per_hz"] = cfg.noise_density_dbm_per_hz;
    j["noise_figure_db"] = cfg.noise_figure_db;
    j["waveguiding_db"] = cfg.waveguiding_db;
    j["max_pathloss_db"] = cfg.max_pathloss_db;
    j["interaction_cap_db"] = cfg.interaction_cap_db;
    j["rx_heights_m"] = cfg.rx_heights_m;
    const dpm::Thresholds t = dpm::compute_thresholds(cfg);
    j["derived"] = {{"noise_floor_dbm", dpm::compute_noise_floor_dbm(cfg)},
                    {"l_thr_db", t.l_thr_db},
                    {"l_trnc_db", t.l_trnc_db},
                    {"wavelength_m", cfg.wavelength_m()}};
    return j;
}

dpm::SimConfig sim_from_json(const json& j) {
    dpm::SimConfig cfg;
    cfg.frequency_hz = j.at("frequency_hz").get<double>();
    cfg.pathloss_exponent = j.at("pathloss_exponent").get<double>();
    cfg.tx_power_dbm = j.at("tx_power_dbm").get<double>();
    cfg.bandwidth_hz = j.at("bandwidth_hz").get<double>();
    cfg.noise_density_dbm_per_hz = j.at("noise_density_dbm_per_hz").get<double>();
    cfg.noise_figure_db = j.at("noise_figure_db").get<double>();
    cfg.waveguiding_db = j.at("waveguiding_db").get<double>();
    cfg.max_pathloss_db = j.at("max_pathloss_db").get<double>();
    cfg.interaction_cap_db = j.at("interaction_cap_db").get<double>();
    cfg.rx_heights_m = j.at("rx_heights_m").get<std::vector<float>>();
    return cfg;
}

Tensor stack_batch(const std::vector<Sample>& set, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end, bool maps) {
    const Tensor& first = maps ? set[order[begin]].map : set[order[begin]].image;
    const std::int64_t c = first.dim(0), h = first.dim(1), w = first.dim(2);
    const auto b = static_cast<std::int64_t>(end - begin);
    Tensor out = Tensor::zeros(Shape{b, c, h, w});
    float* dst = out.mutable_data().data();
    for (std::size_t i = begin; i < end; ++i) {
        const Tensor& t = maps ? set[order[i]].map : set[order[i]].image;
        if (!(t.shape() == first.shape()))
            fail("stack_batch: sample shape " + t.shape().str() + " != " + first.shape().str());
        std::memcpy(dst + (i - begin) * c * h * w, t.data().data(),
                    t.data().size() * sizeof(float));
    }
    return out;
}

}  // namespace

std::string sim_config_to_json(const dpm::SimConfig& cfg) { return sim_to_json(cfg).dump(2); }

dpm::SimConfig sim_config_from_json(const std::string& text) {
    return sim_from_json(json::parse(text));
}

std::string DatasetManifest::to_json() const {
    json j;
    j["format"] = "rmap-dataset";
    j["version"] = 1;
    j["grid"] = {{"cells", grid.cells}, {"pixel_m", grid.pixel_m}};
    j["extent_m"] = grid.extent_m();
    j["embed"] = {{"h_max", embed.h_max}, {"epsilon", embed.epsilon}};
    j["sim"] = sim_to_json(sim);
    j["seed"] = seed;
    j["generator"] = "synthetic recursive-partition floorplans";
    json arr = json::array();
    for (const auto& s : samples) {
        arr.push_back(json{{"id", s.id},
                           {"env", s.env_path},
                           {"image", s.image_path},
                           {"map", s.map_path},
                           {"raw_map", s.raw_map_path},
                           {"env_id", s.env_id},
                           {"tx_index", s.tx_index},
                           {"seed", s.seed},
                           {"split", s.split}});
    }
    j["samples"] = arr;
    return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("format", "") != "rmap-dataset")
        fail("manifest: not a dataset manifest (missing format tag)");
    DatasetManifest m;
    m.grid.cells = j.at("grid").at("cells").get<std::int64_t>();
    m.grid.pixel_m = j.at("grid").at("pixel_m").get<float>();
    m.embed.h_max = j.at("embed").at("h_max").get<float>();
    m.embed.epsilon = j.at("embed").at("epsilon").get<float>();
    m.sim = sim_from_json(j.at("sim"));
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& sj : j.at("samples")) {
        SampleRecord s;
        s.id = sj.at("id").get<std::string>();
        s.env_path = sj.at("env").get<std::string>();
        s.image_path = sj.at("image").get<std::string>();
        s.map_path = sj.at("map").get<std::string>();
        s.raw_map_path = sj.at("raw_map").get<std::string>();
        s.env_id = sj.at("env_id").get<int>();
        s.tx_index = sj.at("tx_index").get<int>();
        s.seed = sj.at("seed").get<std::uint64_t>();
        s.split = sj.at("split").get<std::string>();
        m.samples.push_back(s);
    }
    return m;
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    DatasetManifest m = from_json(io::read_text_file(path));
    m.root = std::filesystem::path(path).parent_path().string();
    return m;
}

void DatasetManifest::save(const std::string& path) const {
    io::write_text_file(path, to_json());
}

void split_dataset(DatasetManifest& manifest, double r_train, double r_val, double r_test,
                   RandomStream& rng) {
    if (r_train <= 0 || r_val < 0 || r_test < 0) fail("split_dataset: bad ratios");
    std::set<int> env_ids;
    for (const auto& s : manifest.samples) env_ids.insert(s.env_id);
    std::vector<int> envs(env_ids.begin(), env_ids.end());
    // Fisher-Yates with the provided stream
    for (std::size_t i = envs.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(envs[i - 1], envs[j]);
    }
    const double total = r_train + r_val + r_test;
    const auto n = static_cast<double>(envs.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * r_train / total));
    const auto n_val = std::min(envs.size() - n_train,
                                static_cast<std::size_t>(std::llround(n * r_val / total)));
    std::unordered_map<int, std::string> assignment;
    for (std::size_t i = 0; i < envs.size(); ++i) {
        if (i < n_train) assignment[envs[i]] = "train";
        else if (i < n_train + n_val) assignment[envs[i]] = "val";
        else assignment[envs[i]] = "test";
    }
    for (auto& s : manifest.samples) s.split = assignment[s.env_id];
}

std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& split) {
    std::vector<Sample> out;
    const std::filesystem::path root(manifest.root);
    for (const auto& s : manifest.samples) {
        if (!split.empty() && s.split != split) continue;
        Sample sample;
        sample.image = io::read_tensor((root / s.image_path).string());
        sample.map = io::read_tensor((root / s.map_path).string());
        out.push_back(std::move(sample));
    }
    if (out.empty()) fail("load_split: no samples in split '" + split + "'");
    return out;
}

ValidationResult validate(net::R2Net& model, const std::vector<Sample>& split, int batch_size) {
    if (split.empty()) fail("validate: empty split");
    NoGradGuard ng;
    double sq_sum = 0.0;
    std::int64_t elems_per_sample = 0;
    std::vector<std::size_t> order(split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t b = 0; b < split.size(); b += batch_size) {
        const std::size_t e = std::min(split.size(), b + batch_size);
        Tensor x = stack_batch(split, order, b, e, false);
        Tensor y = stack_batch(split, order, b, e, true);
        Tensor est = model.forward(x, false);
        // per-sample squared-norm sum over the batch
        Tensor loss = mse_loss(est, y);
        sq_sum += static_cast<double>(loss.item()) * static_cast<double>(e - b);
        elems_per_sample = y.numel() / y.dim(0);
    }
    ValidationResult r;
    r.sq_per_sample = sq_sum / static_cast<double>(split.size());
    r.per_element = r.sq_per_sample / static_cast<double>(elems_per_sample);
    return r;
}

Tensor infer(net::R2Net& model, const Tensor& env_image_stack) {
    if (env_image_stack.shape().rank() != 3)
        fail("infer: expected a (C_in, H, W) stack, got " + env_image_stack.shape().str());
    NoGradGuard ng;
    Tensor x = Tensor::from_data(
        Shape{1, env_image_stack.dim(0), env_image_stack.dim(1), env_image_stack.dim(2)},
        {env_image_stack.data().begin(), env_image_stack.data().end()});
    Tensor out = model.forward(x, false);
    return Tensor::from_data(Shape{out.dim(1), out.dim(2), out.dim(3)},
                             {out.data().begin(), out.data().end()});
}

namespace {

void write_metrics_log(const std::string& out_dir, const std::vector<EpochStats>& history,
                       int best_epoch) {
    if (out_dir.empty()) return;
    json j;
    j["loss_conventions"] = {
        {"per_element", "mean squared error per map element (optimized)"},
        {"sq_per_sample", "mean over samples of squared L2 norms"}};
    j["best_epoch"] = best_epoch;
    json arr = json::array();
    for (const auto& s : history) {
        arr.push_back(json{{"epoch", s.epoch},
                           {"train_loss_per_element", s.train_loss_per_element},
                           {"train_loss_sq_per_sample", s.train_loss_sq_per_sample},
                           {"val_loss_per_element", s.val_loss_per_element},
                           {"val_loss_sq_per_sample", s.val_loss_sq_per_sample},
                           {"wall_seconds", s.wall_seconds}});
    }
    j["epochs"] = arr;
    io::write_text_file(out_dir + "/metrics.json", j.dump(2));
}

}  // namespace

TrainResult train_in_memory(net::R2Net& model, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& val_set, const TrainConfig& cfg) {
    if (train_set.empty()) fail("train: empty training set");
    if (cfg.batch_size < 1 || cfg.epochs < 0) fail("train: bad batch size or epoch count");

    TrainResult result;
    AdamState adam(AdamConfig{cfg.lr, 0.9f, 0.999f, 1e-8f});
    CheckpointMeta meta;
    meta.spec = model.spec();
    meta.train_seed = cfg.seed;
    int start_epoch = 0;

    if (!cfg.resume_prefix.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(cfg.resume_prefix);
        if (!(loaded.meta.spec.plan.c_in == model.spec().plan.c_in) ||
            loaded.meta.spec.variant != model.spec().variant)
            fail("train: resume checkpoint does not match the requested model");
        model = std::move(loaded.model);
        if (loaded.has_adam) adam = std::move(loaded.adam);
        meta = loaded.meta;
        start_epoch = meta.epoch;
        result.history = meta.history;
        result.best_epoch = meta.best_epoch;
        result.best_val_sq_per_sample =
            meta.best_epoch >= 0 ? meta.best_val_sq_per_sample
                                 : std::numeric_limits<double>::infinity();
    }

    std::vector<Tensor> params = model.parameters();
    RandomStream master(cfg.seed);
    const bool has_val = !val_set.empty();

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        RandomStream shuffle_rng = master.derive(0x5C0FF1E0ULL + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double pe_sum = 0.0;
        std::int64_t elems_per_sample = 0;
        std::size_t batch_index = 0;
        for (std::size_t b = 0; b < train_set.size(); b += cfg.batch_size, ++batch_index) {
            const std::size_t e = std::min(train_set.size(), b + cfg.batch_size);
            Tensor x = stack_batch(train_set, order, b, e, false);
            Tensor y = stack_batch(train_set, order, b, e, true);
            for (auto& p : params) p.zero_grad();
            Tensor est = model.forward(x, true);
            Tensor loss = mse_loss_per_element(est, y);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " batch " +
                                         std::to_string(batch_index));
            loss.backward();
            adam.step(params);
            pe_sum += lv * static_cast<double>(e - b);
            elems_per_sample = y.numel() / y.dim(0);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss_per_element = pe_sum / static_cast<double>(train_set.size());
        stats.train_loss_sq_per_sample =
            stats.train_loss_per_element * static_cast<double>(elems_per_sample);
        if (has_val) {
            const ValidationResult v = validate(model, val_set, cfg.batch_size);
            stats.val_loss_per_element = v.per_element;
            stats.val_loss_sq_per_sample = v.sq_per_sample;
        } else {
            stats.val_loss_per_element = stats.train_loss_per_element;
            stats.val_loss_sq_per_sample = stats.train_loss_sq_per_sample;
        }
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(stats);

        meta.epoch = epoch + 1;
        // wall times stay out of checkpoints so reruns are byte-identical;
        // they live in metrics.json only
        meta.history = result.history;
        for (auto& h : meta.history) h.wall_seconds = 0.0;
        const bool is_best = stats.val_loss_sq_per_sample < result.best_val_sq_per_sample;
        if (is_best) {
            result.best_val_sq_per_sample = stats.val_loss_sq_per_sample;
            result.best_epoch = epoch;
            meta.best_epoch = epoch;
            meta.best_val_sq_per_sample = stats.val_loss_sq_per_sample;
        }
        if (!cfg.out_dir.empty()) {
            std::filesystem::create_directories(cfg.out_dir);
            save_checkpoint(cfg.out_dir + "/last", model, &adam, meta);
            result.last_checkpoint_prefix = cfg.out_dir + "/last";
            if (is_best) {
                save_checkpoint(cfg.out_dir + "/best", model, &adam, meta);
                result.best_checkpoint_prefix = cfg.out_dir + "/best";
            }
            write_metrics_log(cfg.out_dir, result.history, result.best_epoch);
        }
    }
    return result;
}

TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg) {
    const std::vector<Sample> train_set = load_split(manifest, "train");
    std::vector<Sample> val_set;
    bool has_val = false;
    for (const auto& s : manifest.samples) has_val = has_val || s.split == "val";
    if (has_val) val_set = load_split(manifest, "val");

    net::ModelSpec spec;
    spec.variant = cfg.variant;
    spec.plan = cfg.plan;
    spec.resolution = manifest.grid.cells;
    net::R2Net model(spec, cfg.seed);
    TrainConfig effective = cfg;
    return train_in_memory(model, train_set, val_set, effective);
}

}  // namespace rmap::train
