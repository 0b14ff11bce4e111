#include "rmap/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "rmap/tensor_io.hpp"

namespace rmap::train {
namespace {

using nlohmann::json;

json shape_to_json(const Shape& s) {
    json arr = json::array();
    for (auto d : s.dims) arr.push_back(d);
    return arr;
}

Shape shape_from_json(const json& arr) {
    std::vector<std::int64_t> dims;
    for (const auto& v : arr) dims.push_back(v.get<std::int64_t>());
    return Shape(std::move(dims));
}

json stats_to_json(const EpochStats& s) {
    return json{{"epoch", s.epoch},
                {"train_loss_per_element", s.train_loss_per_element},
                {"train_loss_sq_per_sample", s.train_loss_sq_per_sample},
                {"val_loss_per_element", s.val_loss_per_element},
                {"val_loss_sq_per_sample", s.val_loss_sq_per_sample},
                {"wall_seconds", s.wall_seconds}};
}

EpochStats stats_from_json(const json& j) {
    EpochStats s;
    s.epoch = j.at("epoch").get<int>();
    s.train_loss_per_element = j.at("train_loss_per_element").get<double>();
    s.train_loss_sq_per_sample = j.at("train_loss_sq_per_sample").get<double>();
    s.val_loss_per_element = j.at("val_loss_per_element").get<double>();
    s.val_loss_sq_per_sample = j.at("val_loss_sq_per_sample").get<double>();
    s.wall_seconds = j.at("wall_seconds").get<double>();
    return s;
}

void append_blob(std::vector<float>& blob, std::span<const float> data) {
    blob.insert(blob.end(), data.begin(), data.end());
}

}  // namespace

void save_checkpoint(const std::string& prefix, net::R2Net& model, const AdamState* adam,
                     const CheckpointMeta& meta) {
    net::ParamMap map = model.param_map();
    json j;
    j["format"] = "rmap-checkpoint";
    j["version"] = 1;
    j["model"] = {{"variant", net::variant_name(model.spec().variant)},
                  {"resolution", model.spec().resolution},
                  {"plan",
                   {{"c_in", model.spec().plan.c_in},
                    {"c_out", model.spec().plan.c_out},
                    {"c1", model.spec().plan.c1},
                    {"c2", model.spec().plan.c2},
                    {"c3", model.spec().plan.c3},
                    {"c4", model.spec().plan.c4},
                    {"c5", model.spec().plan.c5},
                    {"c6", model.spec().plan.c6}}}};
    std::vector<float> blob;
    json params = json::array();
    for (auto& [name, t] : map.params) {
        params.push_back(json{{"name", name},
                              {"shape", shape_to_json(t.shape())},
                              {"offset", blob.size()}});
        append_blob(blob, t.data());
    }
    j["params"] = params;
    json buffers = json::array();
    for (auto& [name, t] : map.buffers) {
        buffers.push_back(json{{"name", name},
                               {"shape", shape_to_json(t.shape())},
                               {"offset", blob.size()}});
        append_blob(blob, t.data());
    }
    j["buffers"] = buffers;
    json streams = json::array();
    for (auto& [name, s] : map.streams)
        streams.push_back(json{{"name", name}, {"seed", s->seed()}, {"counter", s->counter()}});
    j["streams"] = streams;
    if (adam) {
        json moments = json::array();
        const auto& m = adam->first_moments();
        const auto& v = adam->second_moments();
        if (!m.empty() && m.size() != map.params.size())
            fail("save_checkpoint: optimizer tracks " + std::to_string(m.size()) +
                 " parameters, model has " + std::to_string(map.params.size()));
        for (std::size_t i = 0; i < m.size(); ++i) {
            json entry;
            entry["m_offset"] = blob.size();
            blob.insert(blob.end(), m[i].begin(), m[i].end());
            entry["v_offset"] = blob.size();
            blob.insert(blob.end(), v[i].begin(), v[i].end());
            entry["numel"] = m[i].size();
            moments.push_back(entry);
        }
        j["adam"] = {{"lr", adam->config().lr},
                     {"beta1", adam->config().beta1},
                     {"beta2", adam->config().beta2},
                     {"eps", adam->config().eps},
                     {"step", adam->step_count()},
                     {"moments", moments}};
    }
    j["meta"] = {{"epoch", meta.epoch},
                 {"best_epoch", meta.best_epoch},
                 {"best_val_sq_per_sample", meta.best_val_sq_per_sample},
                 {"train_seed", meta.train_seed}};
    json hist = json::array();
    for (const auto& s : meta.history) hist.push_back(stats_to_json(s));
    j["history"] = hist;

    io::write_text_file(prefix + ".json", j.dump(2));
    io::write_tensor(prefix + ".blob",
                     Tensor::from_data(Shape{static_cast<std::int64_t>(blob.size())},
                                       std::move(blob)));
}

LoadedCheckpoint load_checkpoint(const std::string& prefix) {
    const json j = json::parse(io::read_text_file(prefix + ".json"));
    if (j.value("format", "") != "rmap-checkpoint")
        fail(prefix + ".json: not a checkpoint manifest");
    net::ModelSpec spec;
    spec.variant = net::variant_from_name(j.at("model").at("variant").get<std::string>());
    spec.resolution = j.at("model").at("resolution").get<std::int64_t>();
    const auto& pj = j.at("model").at("plan");
    spec.plan = {pj.at("c_in").get<std::int64_t>(), pj.at("c_out").get<std::int64_t>(),
                 pj.at("c1").get<std::int64_t>(),   pj.at("c2").get<std::int64_t>(),
                 pj.at("c3").get<std::int64_t>(),   pj.at("c4").get<std::int64_t>(),
                 pj.at("c5").get<std::int64_t>(),   pj.at("c6").get<std::int64_t>()};

    LoadedCheckpoint out{net::R2Net(spec, 0), AdamState{}, false, {}};
    const Tensor blob_t = io::read_tensor(prefix + ".blob");
    const auto blob = blob_t.data();

    net::ParamMap map = out.model.param_map();
    const auto& params_json = j.at("params");
    if (params_json.size() != map.params.size())
        fail(prefix + ": checkpoint has " + std::to_string(params_json.size()) +
             " parameters, model expects " + std::to_string(map.params.size()));
    for (std::size_t i = 0; i < map.params.size(); ++i) {
        const auto& entry = params_json[i];
        auto& [name, t] = map.params[i];
        if (entry.at("name").get<std::string>() != name)
            fail(prefix + ": parameter order mismatch at '" + name + "'");
        const Shape shape = shape_from_json(entry.at("shape"));
        if (!(shape == t.shape()))
            fail(prefix + ": parameter '" + name + "' has shape " + shape.str() +
                 ", model expects " + t.shape().str());
        const auto off = entry.at("offset").get<std::size_t>();
        if (off + t.data().size() > blob.size()) fail(prefix + ": blob too short");
        std::memcpy(t.mutable_data().data(), blob.data() + off,
                    t.data().size() * sizeof(float));
    }
    const auto& buffers_json = j.at("buffers");
    if (buffers_json.size() != map.buffers.size()) fail(prefix + ": buffer count mismatch");
    for (std::size_t i = 0; i < map.buffers.size(); ++i) {
        const auto& entry = buffers_json[i];
        auto& [name, t] = map.buffers[i];
        if (entry.at("name").get<std::string>() != name)
            fail(prefix + ": buffer order mismatch at '" + name + "'");
        const auto off = entry.at("offset").get<std::size_t>();
        if (off + t.data().size() > blob.size()) fail(prefix + ": blob too short");
        std::memcpy(t.mutable_data().data(), blob.data() + off,
                    t.data().size() * sizeof(float));
    }
    const auto& streams_json = j.at("streams");
    if (streams_json.size() != map.streams.size()) fail(prefix + ": stream count mismatch");
    for (std::size_t i = 0; i < map.streams.size(); ++i) {
        const auto& entry = streams_json[i];
        auto& [name, s] = map.streams[i];
        if (entry.at("name").get<std::string>() != name)
            fail(prefix + ": stream order mismatch at '" + name + "'");
        s->restore(entry.at("seed").get<std::uint64_t>(),
                   entry.at("counter").get<std::uint64_t>());
    }
    if (j.contains("adam")) {
        const auto& aj = j.at("adam");
        AdamConfig cfg;
        cfg.lr = aj.at("lr").get<float>();
        cfg.beta1 = aj.at("beta1").get<float>();
        cfg.beta2 = aj.at("beta2").get<float>();
        cfg.eps = aj.at("eps").get<float>();
        out.adam = AdamState(cfg);
        std::vector<std::vector<float>> m, v;
        for (const auto& entry : aj.at("moments")) {
            const auto n = entry.at("numel").get<std::size_t>();
            const auto mo = entry.at("m_offset").get<std::size_t>();
            const auto vo = entry.at("v_offset").get<std::size_t>();
            if (mo + n > blob.size() || vo + n > blob.size()) fail(prefix + ": blob too short");
            m.emplace_back(blob.begin() + mo, blob.begin() + mo + n);
            v.emplace_back(blob.begin() + vo, blob.begin() + vo + n);
        }
        out.adam.restore(aj.at("step").get<std::int64_t>(), std::move(m), std::move(v));
        out.has_adam = true;
    }
    const auto& mj = j.at("meta");
    out.meta.spec = spec;
    out.meta.epoch = mj.at("epoch").get<int>();
    out.meta.best_epoch = mj.at("best_epoch").get<int>();
    out.meta.best_val_sq_per_sample = mj.at("best_val_sq_per_sample").get<double>();
    out.meta.train_seed = mj.at("train_seed").get<std::uint64_t>();
    for (const auto& hj : j.at("history")) out.meta.history.push_back(stats_from_json(hj));
    return out;
}

}  // namespace rmap::train
