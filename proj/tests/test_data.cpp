#include "stam/data.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "stam/dataio.hpp"
#include "test_util.hpp"

using namespace stam;

namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("stam_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

double pearson(const Tensor& tn, Index a, Index b) {
    const Index t_len = tn.dim(0);
    double ma = 0.0, mb = 0.0;
    for (Index t = 0; t < t_len; ++t) {
        ma += tn.at(t, a);
        mb += tn.at(t, b);
    }
    ma /= double(t_len);
    mb /= double(t_len);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (Index t = 0; t < t_len; ++t) {
        const double da = tn.at(t, a) - ma, db = tn.at(t, b) - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("csv load: empty cell becomes mask zero") {
    const std::string dir = temp_dir("load2x2");
    write_text_file(dir + "/values.csv", "a,b\n1,2\n3,\n");
    write_text_file(dir + "/meta.json",
                    "{\"interval_minutes\": 5, \"start_timestamp\": \"2024-01-01T00:00:00\"}");
    TrafficWindow w = load_dataset(dir + "/values.csv", "", dir + "/meta.json");
    CHECK(w.t_len() == 2);
    CHECK(w.n_nodes() == 2);
    CHECK(w.mask.at(0, 0) == 1.0);
    CHECK(w.mask.at(0, 1) == 1.0);
    CHECK(w.mask.at(1, 0) == 1.0);
    CHECK(w.mask.at(1, 1) == 0.0);
    CHECK(w.values.at(1, 0, Index(0)) == 3.0);
    CHECK(w.timestamps[1] - w.timestamps[0] == 300);
}

TEST_CASE("csv load rejects ragged rows and junk cells") {
    const std::string dir = temp_dir("loadbad");
    write_text_file(dir + "/meta.json",
                    "{\"interval_minutes\": 5, \"start_timestamp\": \"2024-01-01T00:00:00\"}");
    write_text_file(dir + "/ragged.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_AS(load_dataset(dir + "/ragged.csv", "", dir + "/meta.json"),
                    std::invalid_argument);
    write_text_file(dir + "/junk.csv", "a,b\n1,2\n3,zap\n");
    CHECK_THROWS_AS(load_dataset(dir + "/junk.csv", "", dir + "/meta.json"), std::invalid_argument);
    write_text_file(dir + "/values.csv", "a,b\n1,2\n3,4\n");
    write_text_file(dir + "/mask.csv", "a,b\n1,1\n");
    CHECK_THROWS_AS(load_dataset(dir + "/values.csv", dir + "/mask.csv", dir + "/meta.json"),
                    std::invalid_argument);
}

TEST_CASE("benchmark-sized export loads with the right shape") {
    const Index t_len = 17856, n = 170;
    const std::string dir = temp_dir("pems_shape");
    std::string csv;
    csv.reserve(size_t(t_len) * n * 2);
    for (Index j = 0; j < n; ++j) csv += (j ? ",s" : "s") + std::to_string(j);
    csv += '\n';
    for (Index i = 0; i < t_len; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (j) csv += ',';
            csv += std::to_string((i + j) % 97);
        }
        csv += '\n';
    }
    write_text_file(dir + "/values.csv", csv);
    write_text_file(dir + "/meta.json",
                    "{\"interval_minutes\": 5, \"start_timestamp\": \"2016-07-01T00:00:00\"}");
    TrafficWindow w = load_dataset(dir + "/values.csv", "", dir + "/meta.json");
    CHECK(w.t_len() == t_len);
    CHECK(w.n_nodes() == n);
    CHECK(w.interval_minutes == 5);
}

TEST_CASE("dataset save/load round-trip is exact") {
    SynthDataset d = generate_synthetic(6, 40, 99);
    MaskedWindow m = apply_point_missing(d.window, 0.3, 5);
    const std::string dir = temp_dir("roundtrip");
    save_dataset(dir, m.window);
    TrafficWindow back = load_dataset(dir + "/values.csv", dir + "/mask.csv", dir + "/meta.json");
    CHECK(back.t_len() == m.window.t_len());
    CHECK(stamtest::max_abs_diff(back.mask, m.window.mask) == 0.0);
    for (Index i = 0; i < back.values.size(); ++i)
        if (back.mask[i / 1] != 0.0) CHECK(back.values[i] == m.window.values[i]);
    CHECK(back.timestamps == m.window.timestamps);
    CHECK(back.node_names == m.window.node_names);
}

TEST_CASE("knn graph on a line") {
    Tensor dist = Tensor::from({3, 3}, {0, 1, 3, 1, 0, 2, 3, 2, 0});
    StaticGraph g = build_knn_graph(dist, 1);
    CHECK(g.neighbor(0, 0) == 1);
    CHECK(g.neighbor(1, 0) == 0);
    CHECK(g.neighbor(2, 0) == 1);
}

TEST_CASE("knn graph tie-break picks the lower index") {
    Tensor dist = Tensor::from({3, 3}, {0, 1, 1, 1, 0, 1, 1, 1, 0});
    StaticGraph g = build_knn_graph(dist, 1);
    CHECK(g.neighbor(0, 0) == 1);
    CHECK(g.neighbor(1, 0) == 0);
    CHECK(g.neighbor(2, 0) == 0);
}

TEST_CASE("knn graph matches a brute-force sort oracle") {
    Rng rng(123);
    const Index n = 20, e = 4;
    Tensor dist(Shape{n, n});
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            const double d = rng.uniform(0.1, 10.0);
            dist.at(i, j) = d;
            dist.at(j, i) = d;
        }
    StaticGraph g = build_knn_graph(dist, e);
    for (Index i = 0; i < n; ++i) {
        std::vector<Index> order(size_t(n), Index(0));
        std::iota(order.begin(), order.end(), Index(0));
        std::stable_sort(order.begin(), order.end(),
                         [&](Index a, Index b) { return dist.at(i, a) < dist.at(i, b); });
        std::vector<Index> expect;
        for (Index cand : order)
            if (cand != i && Index(expect.size()) < e) expect.push_back(cand);
        for (Index k = 0; k < e; ++k) CHECK(g.neighbor(i, k) == expect[size_t(k)]);
        for (Index k = 0; k < e; ++k) CHECK(g.neighbor(i, k) != i);
    }
}

TEST_CASE("knn graph input validation") {
    Tensor dist = Tensor::from({2, 2}, {0, 1, 1, 0});
    CHECK_THROWS_AS(build_knn_graph(dist, 2), std::invalid_argument);
    Tensor neg = Tensor::from({2, 2}, {0, -1, -1, 0});
    CHECK_THROWS_AS(build_knn_graph(neg, 1), std::invalid_argument);
}

TEST_CASE("point missing rate 0 and 1") {
    SynthDataset d = generate_synthetic(5, 30, 7);
    MaskedWindow zero = apply_point_missing(d.window, 0.0, 1);
    CHECK(zero.eval_mask.array().sum() == 0.0);
    CHECK(stamtest::max_abs_diff(zero.window.mask, d.window.mask) == 0.0);

    MaskedWindow one = apply_point_missing(d.window, 1.0, 1);
    CHECK(one.window.mask.array().sum() == 0.0);
    CHECK(stamtest::max_abs_diff(one.eval_mask, d.window.mask) == 0.0);
}

TEST_CASE("point missing count is binomial-plausible") {
    SynthDataset d = generate_synthetic(10, 1000, 11);  // 10000 observed cells
    MaskedWindow m = apply_point_missing(d.window, 0.25, 42);
    const double hidden = m.eval_mask.array().sum();
    const double mean = 10000 * 0.25, sigma = std::sqrt(10000 * 0.25 * 0.75);
    CHECK(hidden > mean - 3 * sigma);
    CHECK(hidden < mean + 3 * sigma);
}

TEST_CASE("point missing only targets observed cells") {
    SynthDataset d = generate_synthetic(6, 60, 3);
    MaskedWindow first = apply_point_missing(d.window, 0.5, 1);
    MaskedWindow second = apply_point_missing(first.window, 0.5, 2);
    // Nothing hidden in round one may reappear in round two's eval mask.
    CHECK((second.eval_mask.array() * (1.0 - first.window.mask.array())).sum() == 0.0);
}

TEST_CASE("block missing with zero probabilities changes nothing") {
    SynthDataset d = generate_synthetic(5, 50, 17);
    MissingSpec spec;
    spec.kind = MissingSpec::Kind::block;
    spec.failure_prob = 0.0;
    spec.point_rate = 0.0;
    MaskedWindow m = apply_block_missing(d.window, spec, 9);
    CHECK(m.eval_mask.array().sum() == 0.0);
    CHECK(stamtest::max_abs_diff(m.window.mask, d.window.mask) == 0.0);
}

TEST_CASE("forced outage zeroes exactly the requested span") {
    SynthDataset d = generate_synthetic(6, 200, 23);
    TrafficWindow w = d.window;
    apply_outage(w, 3, 100, 12);
    for (Index t = 0; t < w.t_len(); ++t)
        for (Index n = 0; n < w.n_nodes(); ++n) {
            const bool hidden = (n == 3 && t >= 100 && t < 112);
            CHECK(w.mask.at(t, n) == (hidden ? 0.0 : 1.0));
        }
    // Clipping at the end of the window.
    apply_outage(w, 1, 195, 48);
    for (Index t = 195; t < 200; ++t) CHECK(w.mask.at(t, 1) == 0.0);
}

TEST_CASE("block missing calibration lands near the expected totals") {
    // failure 1%, U(12,48), point 5% -> about 30% hidden overall.
    SynthDataset d = generate_synthetic(30, 2000, 31, {.noise = 1.0});
    MissingSpec spec;
    spec.kind = MissingSpec::Kind::block;
    spec.failure_prob = 0.01;
    spec.min_len = 12;
    spec.max_len = 48;
    spec.point_rate = 0.05;
    double total = 0.0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        MaskedWindow m = apply_block_missing(d.window, spec, seed);
        total += m.eval_mask.array().sum() / double(m.eval_mask.size());
    }
    CHECK(std::fabs(total / 5.0 - 0.30) < 0.05);
}

TEST_CASE("normalize: constant node flattens to zero, observed means vanish") {
    SynthDataset d = generate_synthetic(6, 64, 41);
    TrafficWindow w = d.window;
    for (Index t = 0; t < w.t_len(); ++t) w.values.at(t, 2, Index(0)) = 13.0;  // constant node
    MaskedWindow m = apply_point_missing(w, 0.3, 8);
    auto [norm, stats] = normalize(m.window);
    for (Index t = 0; t < w.t_len(); ++t)
        if (m.window.mask.at(t, 2) != 0.0) CHECK(norm.values.at(t, 2, Index(0)) == 0.0);
    for (Index j = 0; j < w.n_nodes(); ++j) {
        double sum = 0.0, count = 0.0;
        for (Index t = 0; t < w.t_len(); ++t)
            if (norm.mask.at(t, j) != 0.0) {
                sum += norm.values.at(t, j, Index(0));
                count += 1.0;
            }
        if (count > 0.0) CHECK(std::fabs(sum / count) < 1e-9);
    }
    // Hidden cells are zero-filled.
    for (Index i = 0; i < norm.mask.size(); ++i)
        if (norm.mask[i] == 0.0) CHECK(norm.values[i] == 0.0);
}

TEST_CASE("denormalize inverts normalize on observed cells") {
    SynthDataset d = generate_synthetic(8, 120, 43);
    MaskedWindow m = apply_point_missing(d.window, 0.4, 19);
    auto [norm, stats] = normalize(m.window);
    Tensor back = denormalize(norm.values, stats);
    for (Index i = 0; i < norm.mask.size(); ++i)
        if (norm.mask[i] != 0.0)
            CHECK(back[i] == doctest::Approx(m.window.values[i]).epsilon(1e-12));
}

TEST_CASE("synthetic: zero noise and diffusion give a pure diurnal") {
    SynthDataset d = generate_synthetic(5, 2048, 77, {.noise = 0.0, .diffusion_weight = 0.0});
    Tensor tn = d.window.values_tn();
    for (Index j = 0; j < 5; ++j) {
        // Autocorrelation at one period.
        const Index lag = 288, t_len = 2048;
        double m1 = 0.0, m2 = 0.0;
        for (Index t = 0; t + lag < t_len; ++t) {
            m1 += tn.at(t, j);
            m2 += tn.at(t + lag, j);
        }
        const double cnt = double(t_len - lag);
        m1 /= cnt;
        m2 /= cnt;
        double cov = 0.0, v1 = 0.0, v2 = 0.0;
        for (Index t = 0; t + lag < t_len; ++t) {
            cov += (tn.at(t, j) - m1) * (tn.at(t + lag, j) - m2);
            v1 += (tn.at(t, j) - m1) * (tn.at(t, j) - m1);
            v2 += (tn.at(t + lag, j) - m2) * (tn.at(t + lag, j) - m2);
        }
        CHECK(cov / std::sqrt(v1 * v2) > 0.99);
    }
}

TEST_CASE("synthetic: neighbors correlate more than the farthest pair") {
    double neighbor_acc = 0.0, far_acc = 0.0;
    int pairs = 0;
    for (uint64_t seed : {1u, 2u, 3u}) {
        SynthDataset d = generate_synthetic(16, 1024, seed);
        Tensor tn = d.window.values_tn();
        Index fa = 0, fb = 0;
        for (Index i = 0; i < 16; ++i)
            for (Index j = 0; j < 16; ++j)
                if (d.dist.at(i, j) > d.dist.at(fa, fb)) {
                    fa = i;
                    fb = j;
                }
        far_acc += pearson(tn, fa, fb);
        for (Index i = 0; i < 16; ++i) {
            neighbor_acc += pearson(tn, i, d.graph.neighbor(i, 0));
            ++pairs;
        }
    }
    CHECK(neighbor_acc / pairs > far_acc / 3.0);
}

TEST_CASE("synthetic is deterministic under a fixed seed") {
    SynthDataset a = generate_synthetic(7, 128, 1234);
    SynthDataset b = generate_synthetic(7, 128, 1234);
    CHECK(stamtest::max_abs_diff(a.window.values, b.window.values) == 0.0);
    CHECK(a.graph.neighbors == b.graph.neighbors);
    CHECK(stamtest::max_abs_diff(a.dist, b.dist) == 0.0);
    SynthDataset c = generate_synthetic(7, 128, 1235);
    CHECK(stamtest::max_abs_diff(a.window.values, c.window.values) > 0.0);
}

TEST_CASE("synthetic rejects tiny networks") {
    CHECK_THROWS_AS(generate_synthetic(3, 100, 1), std::invalid_argument);
}

TEST_CASE("eval mask never overlaps pre-existing missing") {
    SynthDataset d = generate_synthetic(8, 300, 55);
    MaskedWindow first = apply_point_missing(d.window, 0.3, 1);
    MissingSpec spec;
    spec.kind = MissingSpec::Kind::block;
    spec.failure_prob = 0.01;
    MaskedWindow second = apply_block_missing(first.window, spec, 2);
    CHECK((second.eval_mask.array() * (1.0 - first.window.mask.array())).sum() == 0.0);
}

TEST_CASE("calendar helpers") {
    CHECK(parse_iso8601("1970-01-01T00:00:00") == 0);
    CHECK(parse_iso8601("2024-01-01T00:00:00") == 1704067200);
    CHECK(format_iso8601(1704067200) == "2024-01-01T00:00:00");
    CHECK(weekday_mon1(1704067200) == 1);  // 2024-01-01 was a Monday
    CHECK(weekday_mon1(0) == 4);           // 1970-01-01 was a Thursday
    CHECK(seconds_of_day(1704067200 + 3661) == 3661);
    CHECK_THROWS_AS(parse_iso8601("not-a-date"), std::invalid_argument);
}
