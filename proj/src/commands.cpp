#include "stam/commands.hpp"

#include "stam/config_json.hpp"
#include "stam/dataio.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace stam {

namespace fs = std::filesystem;

namespace {

TrafficWindow load_dir(const std::string& dir) {
    const std::string mask = fs::exists(dir + "/mask.csv") ? dir + "/mask.csv" : "";
    return load_dataset(dir + "/values.csv", mask, dir + "/meta.json");
}

StaticGraph load_graph(const std::string& dir, Index n_nodes, Index e_per_node) {
    const Tensor dist = read_matrix_csv(dir + "/dist.csv");
    if (dist.dim(0) != n_nodes)
        throw std::invalid_argument(dir + "/dist.csv does not match the dataset node count");
    return build_knn_graph(dist, std::min(e_per_node, n_nodes - 1));
}

Model load_model_for(const std::string& checkpoint, const TrafficWindow& data) {
    Model model = load_checkpoint(checkpoint);
    if (model.config.n_nodes != data.n_nodes())
        throw std::invalid_argument("checkpoint was trained on a different node count");
    return model;
}

Tensor load_eval_mask(const std::string& dir, Index t_len, Index n) {
    CsvTable t = read_csv(dir + "/eval_mask.csv");
    if (t.n_rows() != t_len || t.n_cols() != n)
        throw std::invalid_argument(dir + "/eval_mask.csv shape mismatch");
    Tensor m(Shape{t_len, n});
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j) {
            const double v = t.rows[size_t(i)][size_t(j)].value_or(-1.0);
            if (v != 0.0 && v != 1.0)
                throw std::invalid_argument(dir + "/eval_mask.csv cells must be 0 or 1");
            m.at(i, j) = v;
        }
    return m;
}

}  // namespace

void cmd_synth(Index nodes, Index steps, uint64_t seed, const std::string& out_dir) {
    SynthDataset d = generate_synthetic(nodes, steps, seed);
    fs::create_directories(out_dir);
    write_csv(out_dir + "/values.csv", d.window.node_names, d.window.values_tn(), nullptr);
    write_matrix_csv(out_dir + "/dist.csv", d.dist);
    nlohmann::json meta;
    meta["interval_minutes"] = d.window.interval_minutes;
    meta["start_timestamp"] = format_iso8601(d.window.timestamps[0]);
    write_text_file(out_dir + "/meta.json", meta.dump(2) + "\n");
}

void cmd_mask(const MaskOpts& opts, const std::string& in_dir, const std::string& out_dir) {
    TrafficWindow w = load_dir(in_dir);
    MissingSpec spec;
    spec.seed = opts.seed;
    if (opts.pattern == "point") {
        spec.kind = MissingSpec::Kind::point;
        spec.rate = opts.rate;
    } else if (opts.pattern == "block") {
        spec.kind = MissingSpec::Kind::block;
        spec.failure_prob = opts.failure_prob;
        spec.min_len = opts.min_len;
        spec.max_len = opts.max_len;
        spec.point_rate = opts.point_rate;
    } else {
        throw std::invalid_argument("pattern must be point or block");
    }
    spec.validate();
    MaskedWindow m = apply_missing(w, spec);

    fs::create_directories(out_dir);
    write_csv(out_dir + "/values.csv", m.window.node_names, m.window.values_tn(), &m.window.mask);
    write_csv(out_dir + "/mask.csv", m.window.node_names, m.window.mask, nullptr);
    write_csv(out_dir + "/eval_mask.csv", m.window.node_names, m.eval_mask, nullptr);
    // Carry the sidecar files so the masked directory is self-contained.
    fs::copy_file(in_dir + "/meta.json", out_dir + "/meta.json",
                  fs::copy_options::overwrite_existing);
    if (fs::exists(in_dir + "/dist.csv"))
        fs::copy_file(in_dir + "/dist.csv", out_dir + "/dist.csv",
                      fs::copy_options::overwrite_existing);
}

void cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    TrafficWindow data = load_dir(data_dir);
    RunConfig bound = cfg;
    bound.model.n_nodes = data.n_nodes();
    bound.model.e_per_node = std::min(bound.model.e_per_node, data.n_nodes() - 1);
    bound.model.validate();
    bound.train.validate();
    StaticGraph graph = load_graph(data_dir, data.n_nodes(), bound.model.e_per_node);

    Model model(bound.model);
    TrainResult result = train(model, data, graph, bound.train);

    save_checkpoint(out_dir, model);
    std::string hist = "step,loss\n";
    for (size_t i = 0; i < result.loss_history.size(); ++i)
        hist += std::to_string(i) + "," + format_double(result.loss_history[i]) + "\n";
    write_text_file(out_dir + "/loss_history.csv", hist);
}

void cmd_impute(const std::string& checkpoint, const std::string& data_dir,
                const std::string& out_csv) {
    TrafficWindow data = load_dir(data_dir);
    Model model = load_model_for(checkpoint, data);
    StaticGraph graph = load_graph(data_dir, data.n_nodes(), model.config.e_per_node);
    Tensor imputed = impute_series(model, data, graph);
    if (const auto parent = fs::path(out_csv).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_csv(out_csv, data.node_names, imputed, nullptr);
}

void cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& baseline,
              const std::string& data_dir, const std::string& truth_csv,
              const std::string& out_json) {
    if (checkpoint.empty() == baseline.empty())
        throw std::invalid_argument("pick exactly one of --checkpoint or --baseline");
    TrafficWindow data = load_dir(data_dir);
    CsvTable truth_csv_table = read_csv(truth_csv);
    if (truth_csv_table.n_rows() != data.t_len() || truth_csv_table.n_cols() != data.n_nodes())
        throw std::invalid_argument("truth shape does not match the dataset");
    Tensor truth(Shape{data.t_len(), data.n_nodes()});
    for (Index i = 0; i < data.t_len(); ++i)
        for (Index j = 0; j < data.n_nodes(); ++j) {
            const auto& cell = truth_csv_table.rows[size_t(i)][size_t(j)];
            if (!cell) throw std::invalid_argument(truth_csv + " has missing ground-truth cells");
            truth.at(i, j) = *cell;
        }
    Tensor eval_mask = load_eval_mask(data_dir, data.t_len(), data.n_nodes());

    Tensor imputed;
    if (!baseline.empty()) {
        if (baseline == "mean")
            imputed = mean_impute(data);
        else if (baseline == "knn")
            imputed = knn_impute(data, load_graph(data_dir, data.n_nodes(),
                                                  std::min(cfg.model.e_per_node, data.n_nodes() - 1)));
        else
            throw std::invalid_argument("baseline must be mean or knn");
    } else {
        Model model = load_model_for(checkpoint, data);
        StaticGraph graph = load_graph(data_dir, data.n_nodes(), model.config.e_per_node);
        imputed = impute_series(model, data, graph);
    }
    Metrics m = compute_metrics(imputed, truth, eval_mask);

    nlohmann::json j;
    j["mae"] = m.mae;
    j["rmse"] = m.rmse;
    j["cells"] = m.cells;
    j["config_hash"] = config_hash(cfg);
    if (const auto parent = fs::path(out_json).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_text_file(out_json, j.dump(2) + "\n");
}

void cmd_export_graph(const std::string& checkpoint, const std::string& data_dir,
                      const std::string& mode, const std::string& out_dir) {
    if (mode != "per-step" && mode != "mean")
        throw std::invalid_argument("mode must be per-step or mean");
    TrafficWindow data = load_dir(data_dir);
    Model model = load_model_for(checkpoint, data);
    StaticGraph graph = load_graph(data_dir, data.n_nodes(), model.config.e_per_node);

    const Index window = model.config.window, t_len = data.t_len(), n = data.n_nodes();
    if (t_len < window) throw std::invalid_argument("series shorter than the model window");
    auto [norm, stats] = normalize(data);

    std::vector<Index> starts;
    for (Index s = 0; s + window <= t_len; s += window) starts.push_back(s);
    if (t_len % window != 0) starts.push_back(t_len - window);

    std::vector<Tensor> per_step(size_t(t_len), Tensor{});
    for (Index s : starts) {
        Tape t(&model.store);
        TrafficWindow win;
        win.values = slice(norm.values, 0, s, window);
        win.mask = slice(norm.mask, 0, s, window);
        win.interval_minutes = norm.interval_minutes;
        win.node_names = norm.node_names;
        win.timestamps.assign(norm.timestamps.begin() + s, norm.timestamps.begin() + s + window);
        Rng sampler(Rng::derive(model.config.eval_sample_seed, "impute", uint64_t(s)));
        MoeRunCtx ctx;
        ctx.rng = &sampler;
        ctx.collect_graphs = true;
        EmbeddedBatch batch = embed(t, win, model.config.wavelet, model.embed);
        MoeForward fw = moe_forward(t, batch, graph, model, ctx);
        for (Index i = 0; i < window; ++i) per_step[size_t(s + i)] = fw.graphs[size_t(i)];
    }

    fs::create_directories(out_dir);
    if (mode == "per-step") {
        for (Index i = 0; i < t_len; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "adj_%05lld.csv", (long long)i);
            write_matrix_csv(out_dir + "/" + name, per_step[size_t(i)]);
        }
    } else {
        Tensor mean_adj(Shape{n, n});
        for (const Tensor& a : per_step) mean_adj.array() += a.array();
        mean_adj.array() /= double(t_len);
        write_matrix_csv(out_dir + "/adj_mean.csv", mean_adj);
    }
}

double cmd_gradcheck(const std::string& dims) {
    GradCheckDims d;
    std::string rest = dims;
    while (!rest.empty()) {
        const size_t comma = rest.find(',');
        const std::string item = rest.substr(0, comma);
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
        if (item.empty()) continue;
        const size_t eq = item.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("dims want k=v pairs");
        const std::string key = item.substr(0, eq);
        Index value = 0;
        const std::string vs = item.substr(eq + 1);
        auto [p, ec] = std::from_chars(vs.data(), vs.data() + vs.size(), value);
        if (ec != std::errc{} || p != vs.data() + vs.size())
            throw std::invalid_argument("bad dims value in '" + item + "'");
        if (key == "n")
            d.n_nodes = value;
        else if (key == "t")
            d.window = value;
        else if (key == "l")
            d.layers = value;
        else if (key == "h")
            d.heads = int(value);
        else if (key == "d")
            d.d_in = value;
        else if (key == "pe")
            d.d_pe = value;
        else if (key == "e")
            d.e_per_node = value;
        else
            throw std::invalid_argument("unknown dims key '" + key + "'");
    }
    GradCheckReport report = grad_check_model(d, 1);
    std::printf("max relative error %.3e (worst parameter: %s)\n", report.max_rel_err,
                report.worst_param.c_str());
    return report.max_rel_err;
}

void cmd_dump_features(const RunConfig& cfg, const std::string& data_dir,
                       const std::string& out_dir) {
    TrafficWindow data = load_dir(data_dir);
    auto [norm, stats] = normalize(data);
    auto [low, high] = wavelet_split_columns(norm.values_tn(), cfg.model.wavelet);
    fs::create_directories(out_dir);
    write_csv(out_dir + "/x_low.csv", data.node_names, low, nullptr);
    write_csv(out_dir + "/x_high.csv", data.node_names, high, nullptr);
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"spatio-temporal traffic imputation toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out, checkpoint, baseline, truth, mode = "mean";
    std::string dims, in_dir, pattern = "point";
    Index nodes = 30, steps = 2048;
    uint64_t seed = 0;
    MaskOpts mask_opts;

    auto* synth = app.add_subcommand("synth", "generate a synthetic traffic network");
    synth->add_option("--nodes", nodes, "sensor count (>= 4)");
    synth->add_option("--steps", steps, "timesteps");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--out-dir", out, "output directory")->required();
    synth->callback([&] { cmd_synth(nodes, steps, seed, out); });

    auto* mask = app.add_subcommand("mask", "inject a missing pattern");
    mask->add_option("--pattern", pattern, "point | block");
    mask->add_option("--rate", mask_opts.rate, "point hiding rate");
    mask->add_option("--failure-prob", mask_opts.failure_prob, "block outage start probability");
    mask->add_option("--min-len", mask_opts.min_len, "min outage length");
    mask->add_option("--max-len", mask_opts.max_len, "max outage length");
    mask->add_option("--point-rate", mask_opts.point_rate, "residual point rate after outages");
    mask->add_option("--seed", mask_opts.seed, "injection seed");
    mask->add_option("--in-dir", in_dir, "input dataset directory")->required();
    mask->add_option("--out-dir", out, "output directory")->required();
    mask->callback([&] {
        mask_opts.pattern = pattern;
        cmd_mask(mask_opts, in_dir, out);
    });

    auto* tr = app.add_subcommand("train", "train an imputation model");
    tr->add_option("--config", config_path, "run config JSON");
    tr->add_option("--data-dir", data_dir, "dataset directory")->required();
    tr->add_option("--out", out, "checkpoint directory")->required();
    tr->callback([&] { cmd_train(load_run_config(config_path), data_dir, out); });

    auto* im = app.add_subcommand("impute", "fill a masked dataset");
    im->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    im->add_option("--data-dir", data_dir, "dataset directory")->required();
    im->add_option("--out", out, "imputed CSV path")->required();
    im->callback([&] { cmd_impute(checkpoint, data_dir, out); });

    auto* ev = app.add_subcommand("eval", "score an imputation against ground truth");
    ev->add_option("--config", config_path, "run config JSON");
    ev->add_option("--checkpoint", checkpoint, "checkpoint directory");
    ev->add_option("--baseline", baseline, "mean | knn");
    ev->add_option("--data-dir", data_dir, "masked dataset directory")->required();
    ev->add_option("--truth", truth, "ground-truth values.csv")->required();
    ev->add_option("--out", out, "metrics JSON path")->required();
    ev->callback(
        [&] { cmd_eval(load_run_config(config_path), checkpoint, baseline, data_dir, truth, out); });

    auto* ex = app.add_subcommand("export-graph", "emit learned dynamic adjacency");
    ex->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    ex->add_option("--data-dir", data_dir, "dataset directory")->required();
    ex->add_option("--mode", mode, "per-step | mean");
    ex->add_option("--out-dir", out, "output directory")->required();
    ex->callback([&] { cmd_export_graph(checkpoint, data_dir, mode, out); });

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full model");
    gc->add_option("--dims", dims, "k=v list: n,t,l,h,d,pe,e");
    gc->callback([&] {
        if (cmd_gradcheck(dims) >= 1e-4) throw std::runtime_error("gradient check failed");
    });

    auto* df = app.add_subcommand("dump-features", "emit wavelet low/high streams");
    df->add_option("--config", config_path, "run config JSON");
    df->add_option("--data-dir", data_dir, "dataset directory")->required();
    df->add_option("--out-dir", out, "output directory")->required();
    df->callback([&] { cmd_dump_features(load_run_config(config_path), data_dir, out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace stam
