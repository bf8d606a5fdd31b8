#include "stam/train.hpp"

#include <algorithm>
#include <cmath>

namespace stam {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("val_fraction must be in [0,1)");
    whiten.validate();
    if (whiten.kind == MissingSpec::Kind::point && (whiten.rate <= 0.0 || whiten.rate >= 1.0))
        throw std::invalid_argument("whiten rate must be in (0,1)");
}

double masked_mae(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        shape_error("masked_mae operand sizes");
    double total = 0.0, count = 0.0;
    for (Index i = 0; i < mask.size(); ++i)
        if (mask[i] != 0.0) {
            total += std::fabs(pred[i] - target[i]);
            count += 1.0;
        }
    if (count == 0.0) throw std::invalid_argument("masked_mae over an empty mask");
    return total / count;
}

Var masked_mae_loss(Tape& t, Var pred_tn, const Tensor& target_tn, const Tensor& mask_tn) {
    const double count = mask_tn.array().sum();
    if (count == 0.0) throw std::invalid_argument("masked_mae over an empty mask");
    Var diff = t.sub(pred_tn, t.input(target_tn));
    Var masked = t.mul(t.abs(diff), t.input(mask_tn));
    return t.scale(t.sum(masked), 1.0 / count);
}

Metrics compute_metrics(const Tensor& imputed_tn, const Tensor& truth_tn, const Tensor& eval_mask) {
    if (imputed_tn.size() != truth_tn.size() || imputed_tn.size() != eval_mask.size())
        shape_error("compute_metrics operand sizes");
    Metrics m;
    double abs_total = 0.0, sq_total = 0.0;
    for (Index i = 0; i < eval_mask.size(); ++i)
        if (eval_mask[i] != 0.0) {
            const double d = imputed_tn[i] - truth_tn[i];
            abs_total += std::fabs(d);
            sq_total += d * d;
            ++m.cells;
        }
    if (m.cells == 0) throw std::invalid_argument("evaluation over an empty mask");
    m.mae = abs_total / double(m.cells);
    m.rmse = std::sqrt(sq_total / double(m.cells));
    return m;
}

namespace {

TrafficWindow slice_window(const TrafficWindow& w, Index start, Index len) {
    TrafficWindow out;
    out.values = slice(w.values, 0, start, len);
    out.mask = slice(w.mask, 0, start, len);
    out.interval_minutes = w.interval_minutes;
    out.node_names = w.node_names;
    out.timestamps.assign(w.timestamps.begin() + start, w.timestamps.begin() + start + len);
    return out;
}

// Whitened view of one window: hides part of the observed cells and returns
// the hiding mask as supervision targets.
MaskedWindow whiten_window(const TrafficWindow& w, const MissingSpec& spec, uint64_t seed) {
    MissingSpec s = spec;
    s.seed = seed;
    return apply_missing(w, s);
}

}  // namespace

TrainResult train(Model& model, const TrafficWindow& series, const StaticGraph& graph,
                  const TrainConfig& cfg) {
    cfg.validate();
    const Index window = model.config.window;
    if (series.t_len() < window)
        throw std::invalid_argument("series shorter than the model window");

    auto [norm, stats] = normalize(series);
    const Index train_len = std::max(window, Index(double(norm.t_len()) * (1.0 - cfg.val_fraction)));
    const bool has_val = norm.t_len() - train_len >= window;

    // Fixed whitened validation split over the series tail.
    std::vector<std::pair<TrafficWindow, Tensor>> val_windows;  // (whitened window, target mask)
    std::vector<TrafficWindow> val_clean;
    if (has_val) {
        for (Index start = train_len; start + window <= norm.t_len(); start += window) {
            TrafficWindow clean = slice_window(norm, start, window);
            MaskedWindow wh =
                whiten_window(clean, cfg.whiten, Rng::derive(cfg.train_seed, "val-whiten", uint64_t(start)));
            val_windows.emplace_back(std::move(wh.window), std::move(wh.eval_mask));
            val_clean.push_back(std::move(clean));
        }
    }

    Adam opt(model.store, {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2, .eps = cfg.adam_eps});
    Rng window_rng(Rng::derive(cfg.train_seed, "windows"));

    const int steps_per_epoch =
        int(std::max(Index(1), (train_len + window * cfg.batch - 1) / (window * cfg.batch)));

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params;
    int stale = 0;
    int64_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
            Tape t(&model.store);
            Rng sampler(Rng::derive(cfg.train_seed, "sampling", uint64_t(global_step)));
            std::vector<Var> abs_sums;
            double count = 0.0;
            for (int b = 0; b < cfg.batch; ++b) {
                const Index start = Index(window_rng.uniform_int(0, train_len - window));
                TrafficWindow clean = slice_window(norm, start, window);
                MaskedWindow wh = whiten_window(
                    clean, cfg.whiten,
                    Rng::derive(cfg.train_seed, "whiten", uint64_t(global_step) * 1024 + uint64_t(b)));
                if (wh.eval_mask.array().sum() == 0.0) continue;  // nothing hidden, skip item
                MoeRunCtx ctx;
                ctx.rng = &sampler;
                EmbeddedBatch batch = embed(t, wh.window, model.config.wavelet, model.embed);
                MoeForward fw = moe_forward(t, batch, graph, model, ctx);
                Var pred = t.reshape(fw.y_hat, {window, series.n_nodes()});
                Var masked = t.mul(t.abs(t.sub(pred, t.input(clean.values_tn()))),
                                   t.input(wh.eval_mask));
                abs_sums.push_back(t.sum(masked));
                count += wh.eval_mask.array().sum();
            }
            if (abs_sums.empty()) continue;
            Var total = abs_sums[0];
            for (size_t i = 1; i < abs_sums.size(); ++i) total = t.add(total, abs_sums[i]);
            Var loss = t.scale(total, 1.0 / count);
            const double loss_v = t.val(loss).item();
            if (!std::isfinite(loss_v))
                throw std::runtime_error("non-finite training loss at step " +
                                         std::to_string(global_step));
            t.backward(loss);
            opt.step();
            result.loss_history.push_back(loss_v);
        }
        result.epochs_run = epoch + 1;

        if (has_val) {
            double val_abs = 0.0, val_count = 0.0;
            for (size_t vi = 0; vi < val_windows.size(); ++vi) {
                Tape t(&model.store);
                Rng sampler(Rng::derive(model.config.eval_sample_seed, "val", uint64_t(vi)));
                MoeRunCtx ctx;
                ctx.rng = &sampler;
                EmbeddedBatch batch =
                    embed(t, val_windows[vi].first, model.config.wavelet, model.embed);
                MoeForward fw = moe_forward(t, batch, graph, model, ctx);
                const Tensor pred = t.val(fw.y_hat).reshaped({window, series.n_nodes()});
                const Tensor& target = val_clean[vi].values;
                const Tensor& m = val_windows[vi].second;
                for (Index i = 0; i < m.size(); ++i)
                    if (m[i] != 0.0) {
                        val_abs += std::fabs(pred[i] - target[i]);
                        val_count += 1.0;
                    }
            }
            if (val_count > 0.0) {
                const double val_mae = val_abs / val_count;
                if (val_mae < best_val) {
                    best_val = val_mae;
                    best_params.clear();
                    for (int i = 0; i < model.store.count(); ++i)
                        best_params.push_back(model.store.param(i).value);
                    stale = 0;
                } else if (++stale >= cfg.patience) {
                    break;
                }
            }
        }
    }
    if (!best_params.empty())
        for (int i = 0; i < model.store.count(); ++i)
            model.store.param(i).value = best_params[size_t(i)];
    result.best_val_mae = std::isfinite(best_val) ? best_val : 0.0;
    return result;
}

Tensor impute_series(Model& model, const TrafficWindow& series, const StaticGraph& graph) {
    const Index window = model.config.window, t_len = series.t_len(), n = series.n_nodes();
    if (t_len < window) throw std::invalid_argument("series shorter than the model window");
    auto [norm, stats] = normalize(series);

    std::vector<Index> starts;
    for (Index s = 0; s + window <= t_len; s += window) starts.push_back(s);
    if (t_len % window != 0) starts.push_back(t_len - window);

    Tensor pred_norm(Shape{t_len, n});
    for (Index s : starts) {
        Tape t(&model.store);
        TrafficWindow win = slice_window(norm, s, window);
        Rng sampler(Rng::derive(model.config.eval_sample_seed, "impute", uint64_t(s)));
        MoeRunCtx ctx;
        ctx.rng = &sampler;
        EmbeddedBatch batch = embed(t, win, model.config.wavelet, model.embed);
        MoeForward fw = moe_forward(t, batch, graph, model, ctx);
        const Tensor p = t.val(fw.y_hat).reshaped({window, n});
        for (Index i = 0; i < window; ++i)
            for (Index j = 0; j < n; ++j) pred_norm.at(s + i, j) = p.at(i, j);
    }

    TrafficWindow raw = series;
    return merge_with_observed(pred_norm, raw, stats);
}

Metrics evaluate(Model& model, const TrafficWindow& series, const StaticGraph& graph,
                 const Tensor& truth_tn, const Tensor& eval_mask) {
    return compute_metrics(impute_series(model, series, graph), truth_tn, eval_mask);
}

Tensor mean_impute(const TrafficWindow& series) {
    const Index t_len = series.t_len(), n = series.n_nodes();
    double global_sum = 0.0, global_count = 0.0;
    std::vector<double> node_mean(size_t(n), 0.0), node_count(size_t(n), 0.0);
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j)
            if (series.mask.at(i, j) != 0.0) {
                const double v = series.values.at(i, j, Index(0));
                node_mean[size_t(j)] += v;
                node_count[size_t(j)] += 1.0;
                global_sum += v;
                global_count += 1.0;
            }
    const double global_mean = global_count > 0.0 ? global_sum / global_count : 0.0;
    for (Index j = 0; j < n; ++j)
        node_mean[size_t(j)] =
            node_count[size_t(j)] > 0.0 ? node_mean[size_t(j)] / node_count[size_t(j)] : global_mean;

    Tensor out(Shape{t_len, n});
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j)
            out.at(i, j) = series.mask.at(i, j) != 0.0 ? series.values.at(i, j, Index(0))
                                                       : node_mean[size_t(j)];
    return out;
}

Tensor knn_impute(const TrafficWindow& series, const StaticGraph& graph) {
    const Index t_len = series.t_len(), n = series.n_nodes();
    if (graph.n_nodes != n) shape_error("knn_impute graph size");
    Tensor node_filled = mean_impute(series);  // node/global means as the fallback
    Tensor out(Shape{t_len, n});
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j) {
            if (series.mask.at(i, j) != 0.0) {
                out.at(i, j) = series.values.at(i, j, Index(0));
                continue;
            }
            double acc = 0.0, cnt = 0.0;
            for (Index k = 0; k < graph.e_per_node; ++k) {
                const Index nb = graph.neighbor(j, k);
                if (series.mask.at(i, nb) != 0.0) {
                    acc += series.values.at(i, nb, Index(0));
                    cnt += 1.0;
                }
            }
            out.at(i, j) = cnt > 0.0 ? acc / cnt : node_filled.at(i, j);
        }
    return out;
}

GradCheckReport grad_check(ParamStore& store, const std::function<Var(Tape&)>& loss, double h,
                           const FaultInjection* fault) {
    std::vector<Tensor> analytic;
    {
        store.zero_grads();
        Tape t(&store);
        Var l = loss(t);
        t.backward(l);
        for (int i = 0; i < store.count(); ++i) analytic.push_back(store.param(i).grad);
        store.zero_grads();
    }
    if (fault) {
        Tensor& g = analytic.at(size_t(fault->param_id));
        g[fault->entry] = 2.0 * g[fault->entry] + 1.0;
    }
    GradCheckReport report;
    for (int p = 0; p < store.count(); ++p) {
        Tensor& w = store.param(p).value;
        for (Index i = 0; i < w.size(); ++i) {
            const double keep = w[i];
            w[i] = keep + h;
            Tape tp(&store);
            const double fp = tp.val(loss(tp)).item();
            w[i] = keep - h;
            Tape tm(&store);
            const double fm = tm.val(loss(tm)).item();
            w[i] = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[size_t(p)][i];
            const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-4});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = store.param(p).name;
            }
        }
    }
    return report;
}

GradCheckReport grad_check_model(const GradCheckDims& dims, uint64_t seed, double h,
                                 bool inject_fault) {
    SynthDataset data = generate_synthetic(dims.n_nodes, dims.window, seed, {.noise = 1.0});
    MaskedWindow observed = apply_point_missing(data.window, 0.2, Rng::derive(seed, "gc-miss"));
    auto [norm, stats] = normalize(observed.window);
    MaskedWindow whitened = apply_point_missing(norm, 0.25, Rng::derive(seed, "gc-whiten"));

    ModelConfig cfg;
    cfg.layers = dims.layers;
    cfg.heads = dims.heads;
    cfg.d_in = dims.d_in;
    cfg.d_pe = dims.d_pe;
    cfg.readout_hidden = 2 * dims.d_in;
    cfg.ffn_mult = 2;
    cfg.window = dims.window;
    cfg.n_nodes = dims.n_nodes;
    cfg.e_per_node = dims.e_per_node;
    cfg.init_seed = Rng::derive(seed, "gc-init");
    Model model(cfg);
    StaticGraph graph = build_knn_graph(data.dist, dims.e_per_node);

    // Freeze the sampling indices so finite differences see a fixed graph.
    SampleCache cache;
    {
        Tape t(&model.store);
        Rng sampler(Rng::derive(seed, "gc-sample"));
        MoeRunCtx ctx;
        ctx.rng = &sampler;
        ctx.cache = &cache;
        EmbeddedBatch batch = embed(t, whitened.window, cfg.wavelet, model.embed);
        moe_forward(t, batch, graph, model, ctx);
    }

    auto loss = [&](Tape& t) {
        MoeRunCtx ctx;
        ctx.cache = &cache;
        EmbeddedBatch batch = embed(t, whitened.window, cfg.wavelet, model.embed);
        MoeForward fw = moe_forward(t, batch, graph, model, ctx);
        Var pred = t.reshape(fw.y_hat, {dims.window, dims.n_nodes});
        return masked_mae_loss(t, pred, norm.values_tn(), whitened.eval_mask);
    };
    FaultInjection fault{0, 0};
    return grad_check(model.store, loss, h, inject_fault ? &fault : nullptr);
}

}  // namespace stam
