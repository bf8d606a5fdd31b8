// Command implementations behind the CLI; each throws std::invalid_argument
// for user errors and other exceptions for internal failures.
#pragma once

#include "stam/config.hpp"

#include <string>

namespace stam {

void cmd_synth(Index nodes, Index steps, uint64_t seed, const std::string& out_dir);

struct MaskOpts {
    std::string pattern = "point";  // point | block
    double rate = 0.25;
    double failure_prob = 0.01;
    Index min_len = 12;
    Index max_len = 48;
    double point_rate = 0.05;
    uint64_t seed = 0;
};
void cmd_mask(const MaskOpts& opts, const std::string& in_dir, const std::string& out_dir);

void cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir);
void cmd_impute(const std::string& checkpoint, const std::string& data_dir,
                const std::string& out_csv);
void cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& baseline,
              const std::string& data_dir, const std::string& truth_csv,
              const std::string& out_json);
void cmd_export_graph(const std::string& checkpoint, const std::string& data_dir,
                      const std::string& mode, const std::string& out_dir);
// dims: "n=8,t=6,l=1,h=2,d=8,pe=4,e=3" (any subset; the rest keep defaults).
// Returns the max relative error.
double cmd_gradcheck(const std::string& dims);
void cmd_dump_features(const RunConfig& cfg, const std::string& data_dir,
                       const std::string& out_dir);

// Full argv entry point. Exit codes: 0 success, 1 user error, 2 internal.
int run_cli(int argc, const char* const* argv);

}  // namespace stam
