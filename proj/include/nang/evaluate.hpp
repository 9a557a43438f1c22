#pragma once

#include <map>
#include <string>
#include <vector>

#include "nang/graph.hpp"
#include "nang/model.hpp"
#include "nang/tensor.hpp"

namespace nang {

// Shuffled k-fold cross-validation protocol, repeated with fresh shuffles;
// every (repeat, fold) pair owns rng streams derived from the base seed.
struct ClassifierProtocol {
    int folds = 5;
    int repeats = 10;
    int hidden_dim = 64;
    int epochs = 200;
    double learning_rate = 0.01;
    double dropout = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricReport {
    std::string method;
    std::string dataset;
    std::string setting; // "X", "A", "A+X" or "profiling"
    std::string metric;  // "accuracy", "recall", "ndcg"
    int k = 0;           // 0 when not applicable
    double mean = 0.0;
    double stddev = 0.0;
    int evaluations = 0; // aggregated evaluation count behind mean/std
    std::uint64_t seed = 0;
};

// Attribute-only classification: two-layer MLP on the generated rows of the
// unobserved-test nodes, 80/20 folds repeated per the protocol.
MetricReport classify_x(const DatasetBundle& bundle, const Tensor& generated,
                        const ClassifierProtocol& protocol);

// Fused classification: two-layer GCN over the normalized adjacency with true
// attribute rows at observed nodes and generated rows at test nodes;
// supervision and evaluation both restricted to test-node folds.
MetricReport classify_fused(const DatasetBundle& bundle, const Tensor& generated,
                            const ClassifierProtocol& protocol);

// Structure-only criterion line: identity-feature GCN classifier, same folds.
MetricReport classify_structure_only(const DatasetBundle& bundle,
                                     const ClassifierProtocol& protocol);

// Mean Recall@k / NDCG@k over test nodes for each k (defaults to 10/20/50
// filtered to the attribute dimension). Categorical datasets only.
std::vector<MetricReport> profile(const DatasetBundle& bundle, const Tensor& generated,
                                  std::vector<int> ks = {});

// --- experiment matrix ----------------------------------------------------------

enum class Method {
    nang,
    nang_cross,
    nang_self,
    neighaggre,
    vae,
    gcn,
    random_scores, // uniform random scores, the no-signal control
    true_attrs     // ground-truth rows, the upper-bound line
};

enum class Setting { attrs_only, structure_only, fused, profiling };

std::string method_name(Method m);
Method parse_method(const std::string& name);
std::string setting_name(Setting s);
Setting parse_setting(const std::string& name);

struct ExperimentOptions {
    TrainConfig train;
    std::map<std::string, TrainConfig> method_overrides; // keyed by method name
    ClassifierProtocol protocol;
    std::vector<int> profile_ks; // empty -> defaults
    std::string out_dir;         // empty -> nothing written
};

struct ExperimentResult {
    std::vector<MetricReport> reports;
    std::map<std::string, TrainHistory> histories;
    std::map<std::string, Tensor> predictions; // rows aligned with split.test
};

// Trains every requested method, generates attributes at the test nodes, runs
// the requested evaluations and (optionally) writes reports.csv/.json plus
// one curves CSV per learned method into out_dir.
ExperimentResult run_experiment(const DatasetBundle& bundle, const std::vector<Method>& methods,
                                const std::vector<Setting>& settings,
                                const ExperimentOptions& options);

// Re-splits a bundle for the reduced-supervision sweep: observed-train ratio
// becomes `train_ratio`, validation stays at 10%, the rest is test.
DatasetBundle with_observed_ratio(const DatasetBundle& bundle, double train_ratio,
                                  std::uint64_t seed);

// --- report and curve files -----------------------------------------------------

void write_reports_csv(const std::vector<MetricReport>& reports, const std::string& path);
void write_reports_json(const std::vector<MetricReport>& reports, const std::string& path);
// Columns: epoch,joint_loss,gan_loss,disc_loss,val_metric,mmd
void write_curves_csv(const TrainHistory& history, const std::string& path);

} // namespace nang
