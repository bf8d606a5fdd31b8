#include "stam/config.hpp"

#include "stam/config_json.hpp"
#include "stam/dataio.hpp"

#include <charconv>
#include <cstdlib>

namespace stam {

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
}

MissingSpec whiten_from_json(const nlohmann::json& j) {
    MissingSpec spec;
    spec.kind = MissingSpec::Kind::point;
    reject_unknown(j, {"kind", "rate", "failure_prob", "min_len", "max_len", "point_rate"},
                   "train.whiten");
    if (j.contains("kind")) {
        const std::string kind = j["kind"].get<std::string>();
        if (kind == "point")
            spec.kind = MissingSpec::Kind::point;
        else if (kind == "block")
            spec.kind = MissingSpec::Kind::block;
        else
            throw std::invalid_argument("whiten.kind must be point or block");
    }
    if (j.contains("rate")) spec.rate = j["rate"].get<double>();
    if (j.contains("failure_prob")) spec.failure_prob = j["failure_prob"].get<double>();
    if (j.contains("min_len")) spec.min_len = j["min_len"].get<Index>();
    if (j.contains("max_len")) spec.max_len = j["max_len"].get<Index>();
    if (j.contains("point_rate")) spec.point_rate = j["point_rate"].get<double>();
    return spec;
}

nlohmann::json whiten_to_json(const MissingSpec& spec) {
    nlohmann::json j;
    if (spec.kind == MissingSpec::Kind::point) {
        j["kind"] = "point";
        j["rate"] = spec.rate;
    } else {
        j["kind"] = "block";
        j["failure_prob"] = spec.failure_prob;
        j["min_len"] = spec.min_len;
        j["max_len"] = spec.max_len;
        j["point_rate"] = spec.point_rate;
    }
    return j;
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.train.whiten.kind = MissingSpec::Kind::point;
    cfg.train.whiten.rate = 0.25;
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    RunConfig cfg = default_run_config();
    auto j = nlohmann::json::parse(json_text);
    reject_unknown(j, {"model", "train", "seeds", "data"}, "run config");
    if (j.contains("model")) cfg.model = model_config_from_json(j["model"]);
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown(t,
                       {"epochs", "batch", "lr", "beta1", "beta2", "adam_eps", "patience",
                        "val_fraction", "whiten"},
                       "train config");
        if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int>();
        if (t.contains("batch")) cfg.train.batch = t["batch"].get<int>();
        if (t.contains("lr")) cfg.train.lr = t["lr"].get<double>();
        if (t.contains("beta1")) cfg.train.beta1 = t["beta1"].get<double>();
        if (t.contains("beta2")) cfg.train.beta2 = t["beta2"].get<double>();
        if (t.contains("adam_eps")) cfg.train.adam_eps = t["adam_eps"].get<double>();
        if (t.contains("patience")) cfg.train.patience = t["patience"].get<int>();
        if (t.contains("val_fraction")) cfg.train.val_fraction = t["val_fraction"].get<double>();
        if (t.contains("whiten")) cfg.train.whiten = whiten_from_json(t["whiten"]);
    }
    if (j.contains("seeds")) {
        const auto& s = j["seeds"];
        reject_unknown(s, {"init", "train", "eval_sample"}, "seeds");
        if (s.contains("init")) cfg.model.init_seed = s["init"].get<uint64_t>();
        if (s.contains("train")) cfg.train.train_seed = s["train"].get<uint64_t>();
        if (s.contains("eval_sample")) cfg.model.eval_sample_seed = s["eval_sample"].get<uint64_t>();
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        reject_unknown(d, {"dir", "truth", "out"}, "data paths");
        if (d.contains("dir")) cfg.data_dir = d["dir"].get<std::string>();
        if (d.contains("truth")) cfg.truth = d["truth"].get<std::string>();
        if (d.contains("out")) cfg.out = d["out"].get<std::string>();
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg = path.empty() ? default_run_config() : parse_run_config(read_text_file(path));
    if (const char* env = std::getenv("STAM_SEED")) {
        uint64_t seed = 0;
        const std::string s(env);
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
        if (ec != std::errc{} || p != s.data() + s.size())
            throw std::invalid_argument("STAM_SEED must be an unsigned integer");
        cfg.model.init_seed = Rng::derive(seed, "init");
        cfg.train.train_seed = Rng::derive(seed, "train");
        cfg.model.eval_sample_seed = Rng::derive(seed, "eval_sample");
    }
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["model"] = model_config_to_json(cfg.model);
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch", cfg.train.batch},
                  {"lr", cfg.train.lr},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"adam_eps", cfg.train.adam_eps},
                  {"patience", cfg.train.patience},
                  {"val_fraction", cfg.train.val_fraction},
                  {"whiten", whiten_to_json(cfg.train.whiten)}};
    j["seeds"] = {{"init", cfg.model.init_seed},
                  {"train", cfg.train.train_seed},
                  {"eval_sample", cfg.model.eval_sample_seed}};
    j["data"] = {{"dir", cfg.data_dir}, {"truth", cfg.truth}, {"out", cfg.out}};
    return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = run_config_to_json(cfg);
    uint64_t h = 1469598103934665603ull;
    for (char c : text) {
        h ^= uint64_t(uint8_t(c));
        h *= 1099511628211ull;
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

}  // namespace stam
