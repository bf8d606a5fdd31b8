#include "stam/data.hpp"

#include "stam/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

namespace stam {

void MissingSpec::validate() const {
    if (kind == Kind::point) {
        if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("point rate must be in [0,1]");
        return;
    }
    if (failure_prob < 0.0 || failure_prob > 1.0)
        throw std::invalid_argument("failure_prob must be in [0,1]");
    if (point_rate < 0.0 || point_rate > 1.0)
        throw std::invalid_argument("point_rate must be in [0,1]");
    if (min_len < 1 || min_len > max_len)
        throw std::invalid_argument("block lengths need 1 <= min_len <= max_len");
}

TrafficWindow load_dataset(const std::string& values_csv, const std::string& mask_csv,
                           const std::string& meta_json) {
    CsvTable vals = read_csv(values_csv);
    const Index t_len = vals.n_rows(), n = vals.n_cols();
    if (t_len < 1 || n < 1) throw std::invalid_argument(values_csv + ": need T,N >= 1");

    TrafficWindow w;
    w.node_names = vals.header;
    w.values = Tensor(Shape{t_len, n, 1});
    w.mask = Tensor(Shape{t_len, n});
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j) {
            const auto& cell = vals.rows[size_t(i)][size_t(j)];
            w.values.at(i, j, Index(0)) = cell.value_or(0.0);
            w.mask.at(i, j) = cell.has_value() ? 1.0 : 0.0;
        }

    if (!mask_csv.empty()) {
        CsvTable mk = read_csv(mask_csv);
        if (mk.n_rows() != t_len || mk.n_cols() != n)
            throw std::invalid_argument(mask_csv + ": mask shape differs from values");
        for (Index i = 0; i < t_len; ++i)
            for (Index j = 0; j < n; ++j) {
                const auto& cell = mk.rows[size_t(i)][size_t(j)];
                const double v = cell.value_or(-1.0);
                if (v != 0.0 && v != 1.0)
                    throw std::invalid_argument(mask_csv + ": mask cells must be 0 or 1");
                w.mask.at(i, j) = v;
            }
    }

    auto meta = nlohmann::json::parse(read_text_file(meta_json));
    if (!meta.contains("interval_minutes") || !meta.contains("start_timestamp"))
        throw std::invalid_argument(meta_json + ": wants interval_minutes and start_timestamp");
    w.interval_minutes = meta["interval_minutes"].get<int>();
    if (w.interval_minutes < 1) throw std::invalid_argument("interval_minutes must be positive");
    const int64_t start = parse_iso8601(meta["start_timestamp"].get<std::string>());
    w.timestamps.resize(size_t(t_len));
    for (Index i = 0; i < t_len; ++i) w.timestamps[size_t(i)] = start + i * w.interval_minutes * 60;
    return w;
}

void save_dataset(const std::string& dir, const TrafficWindow& w) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_csv(dir + "/values.csv", w.node_names, w.values_tn(), &w.mask);
    write_csv(dir + "/mask.csv", w.node_names, w.mask, nullptr);
    nlohmann::json meta;
    meta["interval_minutes"] = w.interval_minutes;
    meta["start_timestamp"] = format_iso8601(w.timestamps.empty() ? 0 : w.timestamps[0]);
    write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
}

StaticGraph build_knn_graph(const Tensor& dist, Index e_per_node) {
    if (dist.rank() != 2 || dist.dim(0) != dist.dim(1)) shape_error("distance matrix must be square");
    const Index n = dist.dim(0);
    if (e_per_node < 1 || e_per_node >= n)
        throw std::invalid_argument("e_per_node must satisfy 1 <= E < N");
    if ((dist.array() < 0.0).any()) throw std::invalid_argument("negative distances");

    StaticGraph g;
    g.n_nodes = n;
    g.e_per_node = e_per_node;
    g.neighbors.resize(size_t(n * e_per_node));
    std::vector<Index> order(size_t(n), Index(0));
    for (Index i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), Index(0));
        std::sort(order.begin(), order.end(), [&](Index a, Index b) {
            if (dist.at(i, a) != dist.at(i, b)) return dist.at(i, a) < dist.at(i, b);
            return a < b;
        });
        Index k = 0;
        for (Index cand : order) {
            if (cand == i) continue;
            g.neighbors[size_t(i * e_per_node + k)] = cand;
            if (++k == e_per_node) break;
        }
    }
    return g;
}

void apply_outage(TrafficWindow& w, Index node, Index start, Index len) {
    const Index lo = std::max(Index(0), start);
    const Index hi = std::min(w.t_len(), start + len);
    for (Index t = lo; t < hi; ++t) w.mask.at(t, node) = 0.0;
}

namespace {

// eval_mask = cells observed before and hidden now; hidden cells get value 0.
MaskedWindow finish_injection(const TrafficWindow& before, TrafficWindow after) {
    MaskedWindow out;
    out.eval_mask = Tensor(before.mask.shape());
    for (Index i = 0; i < before.mask.size(); ++i) {
        const bool was = before.mask[i] != 0.0, now = after.mask[i] != 0.0;
        out.eval_mask[i] = (was && !now) ? 1.0 : 0.0;
        if (!now) after.values[i] = 0.0;
    }
    out.window = std::move(after);
    return out;
}

}  // namespace

MaskedWindow apply_point_missing(const TrafficWindow& w, double rate, uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("point rate must be in [0,1]");
    TrafficWindow after = w;
    Rng rng(Rng::derive(seed, "point-missing"));
    for (Index t = 0; t < w.t_len(); ++t)
        for (Index n = 0; n < w.n_nodes(); ++n)
            if (after.mask.at(t, n) != 0.0 && rng.bernoulli(rate)) after.mask.at(t, n) = 0.0;
    return finish_injection(w, std::move(after));
}

MaskedWindow apply_block_missing(const TrafficWindow& w, const MissingSpec& spec, uint64_t seed) {
    spec.validate();
    TrafficWindow after = w;
    Rng rng(Rng::derive(seed, "block-missing"));
    // Outage starts are drawn per (node, timestep); overlaps union.
    for (Index n = 0; n < w.n_nodes(); ++n)
        for (Index t = 0; t < w.t_len(); ++t)
            if (rng.bernoulli(spec.failure_prob))
                apply_outage(after, n, t, rng.uniform_int(spec.min_len, spec.max_len));
    for (Index n = 0; n < w.n_nodes(); ++n)
        for (Index t = 0; t < w.t_len(); ++t)
            if (after.mask.at(t, n) != 0.0 && rng.bernoulli(spec.point_rate))
                after.mask.at(t, n) = 0.0;
    return finish_injection(w, std::move(after));
}

MaskedWindow apply_missing(const TrafficWindow& w, const MissingSpec& spec) {
    spec.validate();
    return spec.kind == MissingSpec::Kind::point ? apply_point_missing(w, spec.rate, spec.seed)
                                                 : apply_block_missing(w, spec, spec.seed);
}

std::pair<TrafficWindow, NormStats> normalize(const TrafficWindow& w) {
    const Index t_len = w.t_len(), n = w.n_nodes();
    NormStats stats;
    stats.mean.assign(size_t(n), 0.0);
    stats.stddev.assign(size_t(n), 1.0);
    for (Index j = 0; j < n; ++j) {
        double sum = 0.0, count = 0.0;
        for (Index i = 0; i < t_len; ++i)
            if (w.mask.at(i, j) != 0.0) {
                sum += w.values.at(i, j, Index(0));
                count += 1.0;
            }
        if (count == 0.0) continue;  // unobserved node keeps mean 0, std 1
        const double mu = sum / count;
        double var = 0.0;
        for (Index i = 0; i < t_len; ++i)
            if (w.mask.at(i, j) != 0.0) {
                const double d = w.values.at(i, j, Index(0)) - mu;
                var += d * d;
            }
        stats.mean[size_t(j)] = mu;
        stats.stddev[size_t(j)] = std::max(std::sqrt(var / count), 1e-6);
    }
    TrafficWindow out = w;
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j)
            out.values.at(i, j, Index(0)) =
                w.mask.at(i, j) != 0.0
                    ? (w.values.at(i, j, Index(0)) - stats.mean[size_t(j)]) / stats.stddev[size_t(j)]
                    : 0.0;
    return {std::move(out), std::move(stats)};
}

Tensor denormalize(const Tensor& values, const NormStats& stats) {
    if (values.rank() != 2 && !(values.rank() == 3 && values.dim(2) == 1))
        shape_error("denormalize wants T x N or T x N x 1");
    const Index t_len = values.dim(0), n = values.dim(1);
    if (size_t(n) != stats.mean.size()) shape_error("denormalize node count");
    Tensor out(values.shape());
    for (Index i = 0; i < t_len; ++i)
        for (Index j = 0; j < n; ++j)
            out[i * n + j] = values[i * n + j] * stats.stddev[size_t(j)] + stats.mean[size_t(j)];
    return out;
}

SynthDataset generate_synthetic(Index n_nodes, Index n_steps, uint64_t seed,
                                const SynthParams& params) {
    if (n_nodes < 4) throw std::invalid_argument("generate_synthetic wants n_nodes >= 4");
    if (n_steps < 1) throw std::invalid_argument("generate_synthetic wants n_steps >= 1");
    Rng rng(Rng::derive(seed, "synthetic"));

    // Sensor layout in the unit square.
    std::vector<double> px(size_t(n_nodes), 0.0), py(size_t(n_nodes), 0.0);
    for (Index i = 0; i < n_nodes; ++i) {
        px[size_t(i)] = rng.uniform01();
        py[size_t(i)] = rng.uniform01();
    }
    // Per-node diurnal traits; phase follows position so nearby sensors peak
    // together, plus a little jitter.
    std::vector<double> offset(size_t(n_nodes), 0.0), amp(size_t(n_nodes), 0.0), phase(size_t(n_nodes), 0.0);
    for (Index i = 0; i < n_nodes; ++i) {
        offset[size_t(i)] = 50.0 + 20.0 * (rng.uniform01() - 0.5);
        amp[size_t(i)] = 15.0 + 10.0 * rng.uniform01();
        phase[size_t(i)] = 2.0 * (px[size_t(i)] + py[size_t(i)]) + 0.3 * rng.normal();
    }

    SynthDataset out;
    out.dist = Tensor(Shape{n_nodes, n_nodes});
    for (Index i = 0; i < n_nodes; ++i)
        for (Index j = 0; j < n_nodes; ++j)
            out.dist.at(i, j) = std::hypot(px[size_t(i)] - px[size_t(j)], py[size_t(i)] - py[size_t(j)]);
    out.graph = build_knn_graph(out.dist, std::min(params.e_per_node, n_nodes - 1));

    // Shared component: per-node AR(1) noise diffused twice over the graph so
    // neighboring sensors co-vary.
    Tensor shared(Shape{n_steps, n_nodes});
    const double rho = 0.95, innov = std::sqrt(1.0 - rho * rho);
    for (Index j = 0; j < n_nodes; ++j) {
        double r = rng.normal();
        for (Index t = 0; t < n_steps; ++t) {
            shared.at(t, j) = r;
            r = rho * r + innov * rng.normal();
        }
    }
    const Index e = out.graph.e_per_node;
    for (int round = 0; round < 2; ++round) {
        Tensor next(shared.shape());
        for (Index t = 0; t < n_steps; ++t)
            for (Index j = 0; j < n_nodes; ++j) {
                double acc = shared.at(t, j);
                for (Index k = 0; k < e; ++k) acc += shared.at(t, out.graph.neighbor(j, k));
                next.at(t, j) = acc / double(e + 1);
            }
        shared = std::move(next);
    }

    TrafficWindow w;
    w.values = Tensor(Shape{n_steps, n_nodes, 1});
    w.mask = Tensor::full({n_steps, n_nodes}, 1.0);
    w.interval_minutes = params.interval_minutes;
    w.timestamps.resize(size_t(n_steps));
    w.node_names.resize(size_t(n_nodes));
    for (Index j = 0; j < n_nodes; ++j) w.node_names[size_t(j)] = std::to_string(j);
    for (Index t = 0; t < n_steps; ++t)
        w.timestamps[size_t(t)] = params.start_timestamp + t * params.interval_minutes * 60;

    constexpr double kTwoPi = 6.283185307179586;
    for (Index t = 0; t < n_steps; ++t)
        for (Index j = 0; j < n_nodes; ++j) {
            const double diurnal =
                offset[size_t(j)] + amp[size_t(j)] * std::sin(kTwoPi * double(t) / 288.0 + phase[size_t(j)]);
            double v = diurnal + params.diffusion_weight * shared.at(t, j);
            if (params.noise > 0.0) v += params.noise * rng.normal();
            w.values.at(t, j, Index(0)) = v;
        }
    out.window = std::move(w);
    return out;
}

}  // namespace stam
