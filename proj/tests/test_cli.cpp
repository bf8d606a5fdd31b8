#include "stam/commands.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "stam/config_json.hpp"
#include "stam/dataio.hpp"
#include "test_util.hpp"

using namespace stam;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"stam"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(int(argv.size()), argv.data());
}

std::string sandbox(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("stam_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp_dir(const std::string& dir) {
    std::string all;
    std::vector<std::string> names;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) names.push_back(e.path().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) all += n + "\0" + read_text_file(n);
    return all;
}

// Small-but-real training configuration for integration tests.
std::string write_test_config(const std::string& dir, int epochs) {
    const std::string path = dir + "/config.json";
    write_text_file(path, R"({
  "model": {"layers": 1, "heads": 2, "d_in": 8, "d_pe": 2, "readout_hidden": 16,
            "ffn_mult": 2, "window": 12},
  "train": {"epochs": )" + std::to_string(epochs) +
                        R"(, "batch": 2, "whiten": {"kind": "point", "rate": 0.25}}
})");
    return path;
}

}  // namespace

TEST_CASE("synth writes the declared files with the right shape") {
    const std::string dir = sandbox("synth");
    CHECK(run({"synth", "--nodes", "30", "--steps", "2048", "--seed", "9",
               "--out-dir", dir + "/data"}) == 0);
    TrafficWindow w = load_dataset(dir + "/data/values.csv", "", dir + "/data/meta.json");
    CHECK(w.t_len() == 2048);
    CHECK(w.n_nodes() == 30);
    CHECK(w.observed_count() == 2048 * 30);
    Tensor dist = read_matrix_csv(dir + "/data/dist.csv");
    CHECK(dist.shape() == Shape{30, 30});
}

TEST_CASE("synth is byte-identical under one seed and rejects tiny networks") {
    const std::string dir = sandbox("synth_det");
    CHECK(run({"synth", "--nodes", "8", "--steps", "64", "--seed", "4", "--out-dir", dir + "/a"}) == 0);
    CHECK(run({"synth", "--nodes", "8", "--steps", "64", "--seed", "4", "--out-dir", dir + "/b"}) == 0);
    CHECK(read_text_file(dir + "/a/values.csv") == read_text_file(dir + "/b/values.csv"));
    CHECK(read_text_file(dir + "/a/dist.csv") == read_text_file(dir + "/b/dist.csv"));
    CHECK(run({"synth", "--nodes", "3", "--steps", "64", "--out-dir", dir + "/c"}) == 1);
}

TEST_CASE("mask: point density, input immutability, validation") {
    const std::string dir = sandbox("mask");
    REQUIRE(run({"synth", "--nodes", "10", "--steps", "1000", "--seed", "2",
                 "--out-dir", dir + "/data"}) == 0);
    const std::string before = slurp_dir(dir + "/data");
    CHECK(run({"mask", "--pattern", "point", "--rate", "0.25", "--seed", "5",
               "--in-dir", dir + "/data", "--out-dir", dir + "/masked"}) == 0);
    CHECK(slurp_dir(dir + "/data") == before);  // inputs untouched

    CsvTable em = read_csv(dir + "/masked/eval_mask.csv");
    double hidden = 0.0;
    for (const auto& row : em.rows)
        for (const auto& c : row) hidden += c.value_or(0.0);
    const double density = hidden / double(10 * 1000);
    CHECK(density > 0.20);
    CHECK(density < 0.30);

    CHECK(run({"mask", "--pattern", "point", "--rate", "1.1", "--in-dir", dir + "/data",
               "--out-dir", dir + "/bad"}) == 1);
    CHECK(run({"mask", "--pattern", "wedge", "--in-dir", dir + "/data", "--out-dir", dir + "/bad"}) ==
          1);
}

TEST_CASE("train/impute/eval/export-graph round trip") {
    const std::string dir = sandbox("pipeline");
    REQUIRE(run({"synth", "--nodes", "12", "--steps", "256", "--seed", "11",
                 "--out-dir", dir + "/truth"}) == 0);
    REQUIRE(run({"mask", "--pattern", "point", "--rate", "0.25", "--seed", "3",
                 "--in-dir", dir + "/truth", "--out-dir", dir + "/masked"}) == 0);
    const std::string cfg = write_test_config(dir, 2);

    CHECK(run({"train", "--config", cfg, "--data-dir", dir + "/masked",
               "--out", dir + "/ckpt"}) == 0);
    CHECK(fs::exists(dir + "/ckpt/manifest.json"));
    CHECK(fs::exists(dir + "/ckpt/loss_history.csv"));
    Model reloaded = load_checkpoint(dir + "/ckpt");  // loadable
    CHECK(reloaded.config.n_nodes == 12);

    CHECK(run({"impute", "--checkpoint", dir + "/ckpt", "--data-dir", dir + "/masked",
               "--out", dir + "/imputed.csv"}) == 0);
    // Observed cells come back byte-equal after formatting.
    CsvTable masked_vals = read_csv(dir + "/masked/values.csv");
    CsvTable imputed = read_csv(dir + "/imputed.csv");
    REQUIRE(imputed.n_rows() == masked_vals.n_rows());
    int compared = 0;
    for (Index i = 0; i < masked_vals.n_rows(); ++i)
        for (Index j = 0; j < masked_vals.n_cols(); ++j)
            if (masked_vals.rows[size_t(i)][size_t(j)]) {
                CHECK(*imputed.rows[size_t(i)][size_t(j)] ==
                      *masked_vals.rows[size_t(i)][size_t(j)]);
                ++compared;
            } else {
                CHECK(imputed.rows[size_t(i)][size_t(j)].has_value());
            }
    CHECK(compared > 0);

    CHECK(run({"eval", "--checkpoint", dir + "/ckpt", "--data-dir", dir + "/masked",
               "--truth", dir + "/truth/values.csv", "--out", dir + "/metrics.json"}) == 0);
    auto metrics = nlohmann::json::parse(read_text_file(dir + "/metrics.json"));
    CHECK(metrics["mae"].get<double>() > 0.0);
    CHECK(metrics["cells"].get<int64_t>() > 0);
    CHECK(metrics["config_hash"].get<std::string>().size() == 16);

    CHECK(run({"export-graph", "--checkpoint", dir + "/ckpt", "--data-dir", dir + "/masked",
               "--mode", "mean", "--out-dir", dir + "/graphs"}) == 0);
    Tensor adj = read_matrix_csv(dir + "/graphs/adj_mean.csv");
    CHECK(adj.shape() == Shape{12, 12});
    for (Index i = 0; i < 12; ++i) {
        double s = 0.0;
        for (Index j = 0; j < 12; ++j) {
            CHECK(adj.at(i, j) >= 0.0);
            s += adj.at(i, j);
        }
        CHECK(std::fabs(s - 1.0) < 1e-6);
    }

    // Repeating the same commands is bit-reproducible.
    CHECK(run({"eval", "--checkpoint", dir + "/ckpt", "--data-dir", dir + "/masked",
               "--truth", dir + "/truth/values.csv", "--out", dir + "/metrics2.json"}) == 0);
    CHECK(read_text_file(dir + "/metrics.json") == read_text_file(dir + "/metrics2.json"));
}

TEST_CASE("eval baseline matches the library computation exactly") {
    const std::string dir = sandbox("baseline");
    REQUIRE(run({"synth", "--nodes", "8", "--steps", "200", "--seed", "21",
                 "--out-dir", dir + "/truth"}) == 0);
    REQUIRE(run({"mask", "--pattern", "block", "--failure-prob", "0.01", "--seed", "4",
                 "--in-dir", dir + "/truth", "--out-dir", dir + "/masked"}) == 0);
    REQUIRE(run({"eval", "--baseline", "mean", "--data-dir", dir + "/masked",
                 "--truth", dir + "/truth/values.csv", "--out", dir + "/m.json"}) == 0);

    TrafficWindow masked = load_dataset(dir + "/masked/values.csv", dir + "/masked/mask.csv",
                                        dir + "/masked/meta.json");
    SynthDataset d = generate_synthetic(8, 200, 21);
    CsvTable em = read_csv(dir + "/masked/eval_mask.csv");
    Tensor eval_mask(Shape{200, 8});
    for (Index i = 0; i < 200; ++i)
        for (Index j = 0; j < 8; ++j) eval_mask.at(i, j) = em.rows[size_t(i)][size_t(j)].value_or(0.0);
    Metrics expect = compute_metrics(mean_impute(masked), d.window.values_tn(), eval_mask);

    auto metrics = nlohmann::json::parse(read_text_file(dir + "/m.json"));
    CHECK(metrics["mae"].get<double>() == doctest::Approx(expect.mae).epsilon(1e-12));
    CHECK(metrics["rmse"].get<double>() == doctest::Approx(expect.rmse).epsilon(1e-12));
    CHECK(metrics["cells"].get<int64_t>() == expect.cells);

    CHECK(run({"eval", "--baseline", "median", "--data-dir", dir + "/masked",
               "--truth", dir + "/truth/values.csv", "--out", dir + "/x.json"}) == 1);
    CHECK(run({"eval", "--data-dir", dir + "/masked", "--truth", dir + "/truth/values.csv",
               "--out", dir + "/x.json"}) == 1);
}

TEST_CASE("dump-features emits the frequency split") {
    const std::string dir = sandbox("features");
    REQUIRE(run({"synth", "--nodes", "6", "--steps", "128", "--seed", "2",
                 "--out-dir", dir + "/data"}) == 0);
    CHECK(run({"dump-features", "--data-dir", dir + "/data", "--out-dir", dir + "/feat"}) == 0);
    Tensor low = Tensor(Shape{128, 6}), high = Tensor(Shape{128, 6});
    CsvTable lo = read_csv(dir + "/feat/x_low.csv"), hi = read_csv(dir + "/feat/x_high.csv");
    TrafficWindow data = load_dataset(dir + "/data/values.csv", "", dir + "/data/meta.json");
    auto [norm, stats] = normalize(data);
    for (Index i = 0; i < 128; ++i)
        for (Index j = 0; j < 6; ++j) {
            const double sum = *lo.rows[size_t(i)][size_t(j)] + *hi.rows[size_t(i)][size_t(j)];
            CHECK(sum == doctest::Approx(norm.values.at(i, j, Index(0))).epsilon(1e-9));
        }
}

TEST_CASE("gradcheck subcommand passes on tiny dims") {
    CHECK(run({"gradcheck", "--dims", "n=5,t=4,l=1,h=2,d=8,pe=2,e=2"}) == 0);
    CHECK(run({"gradcheck", "--dims", "n=5;t=4"}) == 1);
}

TEST_CASE("config machinery: defaults, strictness, env seed override") {
    RunConfig def = load_run_config("");
    CHECK(def.model.layers == 2);
    CHECK(def.model.d_in == 64);
    CHECK(def.train.epochs == 30);
    CHECK(def.train.whiten.rate == 0.25);

    CHECK_THROWS_AS(parse_run_config(R"({"modell": {}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"layers": 2, "zap": 1}})"),
                    std::invalid_argument);

    RunConfig a = parse_run_config(R"({"seeds": {"init": 7, "train": 8, "eval_sample": 9}})");
    CHECK(a.model.init_seed == 7);
    CHECK(a.train.train_seed == 8);

    setenv("STAM_SEED", "1234", 1);
    RunConfig b = load_run_config("");
    RunConfig c = load_run_config("");
    unsetenv("STAM_SEED");
    CHECK(b.model.init_seed == c.model.init_seed);
    CHECK(b.model.init_seed != def.model.init_seed);
    CHECK(config_hash(b) != config_hash(def));
    CHECK(config_hash(b) == config_hash(c));

    setenv("STAM_SEED", "12x4", 1);
    CHECK_THROWS_AS(load_run_config(""), std::invalid_argument);
    unsetenv("STAM_SEED");
}

TEST_CASE("unknown subcommands and missing files are user errors") {
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({"impute", "--checkpoint", "/nonexistent", "--data-dir", "/nonexistent",
               "--out", "/tmp/x.csv"}) == 1);
}
