// Masked-reconstruction training, sliding-window evaluation, gradient-check
// harness, and the mean / K-NN sanity baselines.
#pragma once

#include "stam/model.hpp"
#include "stam/optim.hpp"

namespace stam {

struct TrainConfig {
    int epochs = 30;
    int batch = 4;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int patience = 10;           // early-stop patience, in validation rounds
    double val_fraction = 0.2;   // tail of the series held out for validation
    MissingSpec whiten;          // applied to observed cells each step
    uint64_t train_seed = 2;

    void validate() const;
};

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
    int64_t cells = 0;
};

// Mean |pred - target| over mask==1 cells. Units follow the inputs; metrics
// use original units, the training loss uses normalized ones. Throws on an
// empty mask.
double masked_mae(const Tensor& pred, const Tensor& target, const Tensor& mask);
Var masked_mae_loss(Tape& t, Var pred_tn, const Tensor& target_tn, const Tensor& mask_tn);

Metrics compute_metrics(const Tensor& imputed_tn, const Tensor& truth_tn, const Tensor& eval_mask);

struct TrainResult {
    std::vector<double> loss_history;  // one entry per optimizer step
    int epochs_run = 0;
    double best_val_mae = 0.0;
};

// `series` is the masked dataset in original units; eval-hidden cells must
// already be missing from its mask. Deterministic under fixed seeds.
TrainResult train(Model& model, const TrafficWindow& series, const StaticGraph& graph,
                  const TrainConfig& cfg);

// Runs the model over non-overlapping windows covering the series (the tail
// re-anchors to the last full window) and merges with the observed cells.
// Returns T x N in original units.
Tensor impute_series(Model& model, const TrafficWindow& series, const StaticGraph& graph);

Metrics evaluate(Model& model, const TrafficWindow& series, const StaticGraph& graph,
                 const Tensor& truth_tn, const Tensor& eval_mask);

// ---- baselines ----
Tensor mean_impute(const TrafficWindow& series);
Tensor knn_impute(const TrafficWindow& series, const StaticGraph& graph);

// ---- gradient-check harness ----
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
};

struct FaultInjection {
    int param_id = 0;
    Index entry = 0;  // analytic gradient entry corrupted before comparing
};

// Central finite differences (step h) against one backward pass over every
// parameter in the store. Relative error uses a small absolute floor.
GradCheckReport grad_check(ParamStore& store, const std::function<Var(Tape&)>& loss,
                           double h = 1e-5, const FaultInjection* fault = nullptr);

struct GradCheckDims {
    Index n_nodes = 8;
    Index window = 6;
    Index layers = 1;
    int heads = 2;
    Index d_in = 8;
    Index d_pe = 4;
    Index e_per_node = 3;
};

// Builds a tiny model on synthetic data, freezes the sampling indices, and
// checks d(masked_mae)/d(theta) for every parameter.
GradCheckReport grad_check_model(const GradCheckDims& dims, uint64_t seed, double h = 1e-5,
                                 bool inject_fault = false);

}  // namespace stam
