#pragma once

#include <span>
#include <utility>

#include "nang/graph.hpp"
#include "nang/model.hpp"
#include "nang/tensor.hpp"

namespace nang {

// Training-free baseline: mean of attribute rows over one-hop neighbors that
// are attribute-observed; all-zeros row when a node has no such neighbor.
Tensor neigh_aggre(const Graph& graph, const AttributeMatrix& attrs,
                   std::span<const char> observed_mask, std::span<const int> target_ids);

// VAE over observed attribute rows; generation aggregates posterior means of
// attributed neighbors in latent space and decodes the pooled code.
class VaeBaselineModel {
public:
    VaeBaselineModel(std::size_t attr_dim, AttrKind attr_kind, const TrainConfig& config,
                     Rng& rng);

    // Returns (mu, logvar); logvar is clamped to [-10, 10].
    std::pair<Tensor, Tensor> encode(const Tensor& x, const Forward& fw = {}) const;
    Tensor decode(const Tensor& z) const; // logits
    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    std::size_t attr_dim() const { return attr_dim_; }
    AttrKind attr_kind() const { return attr_kind_; }
    LossKind loss_kind() const { return loss_kind_; }
    const TrainConfig& config() const { return config_; }

private:
    std::size_t attr_dim_;
    AttrKind attr_kind_;
    LossKind loss_kind_;
    TrainConfig config_;
    Tensor enc_w1_, enc_b1_;
    Tensor mu_w_, mu_b_;
    Tensor logvar_w_, logvar_b_;
    Tensor dec_w1_, dec_b1_, dec_w2_, dec_b2_;
};

std::pair<VaeBaselineModel, TrainHistory> train_vae(const DatasetBundle& bundle,
                                                    const TrainConfig& config);

// Pooled-posterior generation at the given nodes (zero code when a node has
// no attributed neighbor).
Tensor vae_generate(const VaeBaselineModel& model, const DatasetBundle& bundle,
                    std::span<const int> target_ids);

// Predictions at the bundle's unobserved-test nodes.
Tensor vae_baseline(const DatasetBundle& bundle, const TrainConfig& config);

// Structure-only regressor: featureless two-layer GCN encoder plus a
// two-layer MLP decoder trained to reproduce observed attribute rows.
class GcnBaselineModel {
public:
    GcnBaselineModel(std::size_t node_count, std::size_t attr_dim, AttrKind attr_kind,
                     const TrainConfig& config, Rng& rng);

    Tensor encode(const SparseMatrix& a_norm, const Forward& fw = {}) const;
    Tensor decode(const Tensor& z) const; // logits
    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    std::size_t node_count() const { return node_count_; }
    std::size_t attr_dim() const { return attr_dim_; }
    AttrKind attr_kind() const { return attr_kind_; }
    LossKind loss_kind() const { return loss_kind_; }
    const TrainConfig& config() const { return config_; }

private:
    std::size_t node_count_;
    std::size_t attr_dim_;
    AttrKind attr_kind_;
    LossKind loss_kind_;
    TrainConfig config_;
    Tensor enc_w1_, enc_w2_;
    Tensor dec_w1_, dec_b1_, dec_w2_, dec_b2_;
};

// Trains with reconstruction loss on observed-train rows and returns the
// snapshot with the best observed-validation metric.
std::pair<GcnBaselineModel, TrainHistory> train_gcn_baseline(const DatasetBundle& bundle,
                                                             const TrainConfig& config);

Tensor gcn_generate(const GcnBaselineModel& model, const SparseMatrix& a_norm,
                    std::span<const int> target_ids);

Tensor gcn_baseline(const DatasetBundle& bundle, const TrainConfig& config);

// Checkpointing in the shared container format.
void save_vae_model(const VaeBaselineModel& model, const std::string& path);
VaeBaselineModel load_vae_model(const std::string& path);
void save_gcn_model(const GcnBaselineModel& model, const std::string& path);
GcnBaselineModel load_gcn_model(const std::string& path);

} // namespace nang
