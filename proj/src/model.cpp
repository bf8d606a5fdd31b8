#include "stam/model.hpp"

#include "stam/config_json.hpp"
#include "stam/dataio.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace stam {

void ModelConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("layers must be >= 1");
    if (heads < 1 || d_in % heads != 0)
        throw std::invalid_argument("d_in must be divisible by heads");
    if (d_pe < 1 || d_pe >= d_in) throw std::invalid_argument("need 1 <= d_pe < d_in");
    if (readout_hidden < 1) throw std::invalid_argument("readout_hidden must be >= 1");
    if (ffn_mult < 1) throw std::invalid_argument("ffn_mult must be >= 1");
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    if (n_nodes < 2) throw std::invalid_argument("model wants n_nodes >= 2");
    if (e_per_node < 1 || e_per_node >= n_nodes)
        throw std::invalid_argument("need 1 <= e_per_node < n_nodes");
    wavelet.validate();
}

Model::Model(const ModelConfig& cfg) : config(cfg), store(cfg.init_seed) {
    config.validate();
    embed = add_embed_params(store, "embed", cfg.window, cfg.n_nodes, cfg.d_in, cfg.d_pe);
    for (Index i = 0; i < cfg.layers; ++i) {
        const std::string prefix = "layer" + std::to_string(i);
        LayerParams lp;
        lp.temporal = add_temporal_params(store, prefix + ".temporal", cfg.d_in, cfg.heads,
                                      cfg.ffn_hidden());
        lp.spatial = add_spatial_params(store, prefix + ".spatial", cfg.d_in, cfg.heads,
                                        cfg.ffn_hidden(), cfg.n_nodes, cfg.e_per_node);
        layers.push_back(lp);
    }
    w_oe = store.add_glorot("gate.w_oe", {3, cfg.n_experts()});
    const Index readout_in = cfg.n_experts() * cfg.d_in + (cfg.readout_uses_oe ? 3 : 0);
    readout = add_mlp(store, "readout", readout_in, cfg.readout_hidden, 1);
}

Var gate_scores(Tape& t, Var x_oe, const Model& model, ForwardTrace* trace) {
    Var logits = t.linear(x_oe, t.param(model.w_oe), Var{});
    Var gates = t.softmax(logits, 2);
    record_softmax(trace, "gate", t.val(gates));
    return gates;
}

MoeForward moe_forward(Tape& t, const EmbeddedBatch& batch, const StaticGraph& graph, Model& model,
                       const MoeRunCtx& ctx) {
    const ModelConfig& cfg = model.config;
    const Shape& s = t.val(batch.x_in).shape();
    if (s.size() != 3 || s[1] != cfg.n_nodes || s[2] != cfg.d_in)
        shape_error("moe_forward input does not match the model");
    const Index t_len = s[0], n = s[1];

    MoeForward out;
    if (ctx.gate_override) {
        if (ctx.gate_override->shape() != Shape{t_len, n, cfg.n_experts()})
            shape_error("gate override shape");
        out.gates = t.input(*ctx.gate_override);
    } else {
        out.gates = gate_scores(t, batch.x_oe, model, ctx.trace);
    }

    Var x_tin = batch.x_in;
    Var x_sin = batch.x_in;
    std::vector<Var> experts;
    experts.reserve(size_t(cfg.n_experts()));
    for (Index i = 0; i < cfg.layers; ++i) {
        Var x_tout = temporal_forward(t, x_tin, model.layers[size_t(i)].temporal, ctx.trace);
        Var x_sout;
        if (ctx.spatial_identity || cfg.spatial_identity) {
            x_sout = x_sin;
        } else {
            Var fused = t.concat({x_sin, x_tout}, 2);
            SpatialRunCtx sctx;
            sctx.rng = ctx.rng;
            sctx.dynamic_graph_fusion = cfg.dynamic_graph_fusion;
            sctx.collect_graphs = ctx.collect_graphs && i + 1 == cfg.layers;
            sctx.trace = ctx.trace;
            sctx.cache = ctx.cache;
            sctx.layer_tag = int(i);
            SpatialForward sf =
                spatial_expert_forward(t, fused, graph, model.layers[size_t(i)].spatial, sctx);
            x_sout = sf.x_out;
            if (sctx.collect_graphs) out.graphs = std::move(sf.graphs);
        }
        experts.push_back(x_tout);
        experts.push_back(x_sout);
        x_tin = x_tout;
        x_sin = x_sout;
    }

    std::vector<Var> scaled;
    scaled.reserve(experts.size());
    for (size_t k = 0; k < experts.size(); ++k) {
        Var gk = t.reshape(t.slice(out.gates, 2, Index(k), 1), {t_len, n});
        scaled.push_back(t.scale_last(experts[k], gk));
    }
    Var feat = t.concat(scaled, 2);
    if (cfg.readout_uses_oe) feat = t.concat({feat, batch.x_oe}, 2);
    out.y_hat = mlp(t, feat, model.readout);
    return out;
}

Tensor merge_with_observed(const Tensor& y_hat, const TrafficWindow& raw, const NormStats& stats) {
    const Index t_len = raw.t_len(), n = raw.n_nodes();
    if (y_hat.size() != t_len * n) shape_error("merge_with_observed prediction shape");
    Tensor denorm = denormalize(y_hat.reshaped({t_len, n}), stats);
    Tensor out(Shape{t_len, n});
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j)
            out.at(i, j) = raw.mask.at(i, j) != 0.0 ? raw.values.at(i, j, Index(0)) : denorm.at(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["layers"] = cfg.layers;
    j["heads"] = cfg.heads;
    j["d_in"] = cfg.d_in;
    j["d_pe"] = cfg.d_pe;
    j["readout_hidden"] = cfg.readout_hidden;
    j["ffn_mult"] = cfg.ffn_mult;
    j["dynamic_graph_fusion"] = cfg.dynamic_graph_fusion;
    j["readout_uses_oe"] = cfg.readout_uses_oe;
    j["spatial_identity"] = cfg.spatial_identity;
    j["window"] = cfg.window;
    j["n_nodes"] = cfg.n_nodes;
    j["e_per_node"] = cfg.e_per_node;
    j["wavelet"] = {{"basis", cfg.wavelet.basis}, {"level", cfg.wavelet.level}};
    j["init_seed"] = cfg.init_seed;
    j["eval_sample_seed"] = cfg.eval_sample_seed;
    return j;
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
}

}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    reject_unknown_keys(j, {"layers", "heads", "d_in", "d_pe", "readout_hidden", "ffn_mult",
                            "dynamic_graph_fusion", "readout_uses_oe", "spatial_identity", "window",
                            "n_nodes", "e_per_node", "wavelet", "init_seed", "eval_sample_seed"},
                        "model config");
    if (j.contains("layers")) cfg.layers = j["layers"].get<Index>();
    if (j.contains("heads")) cfg.heads = j["heads"].get<int>();
    if (j.contains("d_in")) cfg.d_in = j["d_in"].get<Index>();
    if (j.contains("d_pe")) cfg.d_pe = j["d_pe"].get<Index>();
    if (j.contains("readout_hidden")) cfg.readout_hidden = j["readout_hidden"].get<Index>();
    if (j.contains("ffn_mult")) cfg.ffn_mult = j["ffn_mult"].get<Index>();
    if (j.contains("dynamic_graph_fusion")) cfg.dynamic_graph_fusion = j["dynamic_graph_fusion"].get<bool>();
    if (j.contains("readout_uses_oe")) cfg.readout_uses_oe = j["readout_uses_oe"].get<bool>();
    if (j.contains("spatial_identity")) cfg.spatial_identity = j["spatial_identity"].get<bool>();
    if (j.contains("window")) cfg.window = j["window"].get<Index>();
    if (j.contains("n_nodes")) cfg.n_nodes = j["n_nodes"].get<Index>();
    if (j.contains("e_per_node")) cfg.e_per_node = j["e_per_node"].get<Index>();
    if (j.contains("wavelet")) {
        const auto& w = j["wavelet"];
        reject_unknown_keys(w, {"basis", "level"}, "wavelet config");
        if (w.contains("basis")) cfg.wavelet.basis = w["basis"].get<std::string>();
        if (w.contains("level")) cfg.wavelet.level = w["level"].get<int>();
    }
    if (j.contains("init_seed")) cfg.init_seed = j["init_seed"].get<uint64_t>();
    if (j.contains("eval_sample_seed"))
        cfg.eval_sample_seed = j["eval_sample_seed"].get<uint64_t>();
    return cfg;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

void write_raw_le(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + path);
    for (Index i = 0; i < t.size(); ++i) {
        const double v = t[i];
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        char b[8];
        for (int k = 0; k < 8; ++k) b[k] = char((bits >> (8 * k)) & 0xff);
        out.write(b, 8);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Tensor read_raw_le(const std::string& path, const Shape& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) {
        char b[8];
        in.read(b, 8);
        if (!in) throw std::invalid_argument(path + ": truncated parameter file");
        uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= uint64_t(uint8_t(b[k])) << (8 * k);
        double v;
        std::memcpy(&v, &bits, 8);
        t[i] = v;
    }
    char extra;
    if (in.read(&extra, 1)) throw std::invalid_argument(path + ": oversized parameter file");
    return t;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Model& model) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = kCheckpointVersion;
    manifest["config"] = model_config_to_json(model.config);
    nlohmann::json params = nlohmann::json::array();
    for (int i = 0; i < model.store.count(); ++i) {
        const Parameter& p = model.store.param(i);
        const std::string file = p.name + ".bin";
        params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"file", file}});
        write_raw_le(dir + "/" + file, p.value);
    }
    manifest["params"] = params;
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Model load_checkpoint(const std::string& dir) {
    auto manifest = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
    if (!manifest.contains("version") || manifest["version"].get<int>() != kCheckpointVersion)
        throw std::invalid_argument(dir + ": checkpoint version mismatch");
    Model model(model_config_from_json(manifest["config"]));
    for (const auto& entry : manifest["params"]) {
        const std::string name = entry["name"].get<std::string>();
        const Shape shape = entry["shape"].get<Shape>();
        const int id = model.store.find(name);
        if (id < 0) throw std::invalid_argument(dir + ": unknown parameter " + name);
        Parameter& p = model.store.param(id);
        if (p.value.shape() != shape)
            throw std::invalid_argument(dir + ": shape mismatch for parameter " + name);
        p.value = read_raw_le(dir + "/" + entry["file"].get<std::string>(), shape);
    }
    return model;
}

}  // namespace stam
