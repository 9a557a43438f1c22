#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nang/graph.hpp"
#include "nang/tensor.hpp"

namespace nang {

enum class LossKind { weighted_bce, mse };
enum class Ablation { full, cross_only, self_only };

struct TrainConfig {
    double lambda_c = 10.0;       // cross-reconstruction emphasis, >= 1
    double learning_rate = 0.005;
    double dropout = 0.5;
    int max_iterations = 1000;
    int generator_steps = 2;      // generator updates per round
    int discriminator_steps = 1;  // discriminator updates per round
    int latent_dim = 64;
    int hidden_dim = 128;
    std::uint64_t seed = 1;
    // Defaults to weighted BCE for categorical attributes, MSE for real-valued.
    std::optional<LossKind> loss_kind;
    Ablation ablation = Ablation::full;
    // Literal minimax generator term instead of the non-saturating -log D(fake).
    bool saturating_gan = false;
    // Latent rows used for the per-epoch MMD monitor (keeps large graphs cheap).
    int mmd_sample_cap = 512;

    void validate() const;
    LossKind resolve_loss_kind(AttrKind kind) const;
};

struct EpochRecord {
    int epoch = 0;
    double joint_loss = 0.0; // reconstruction part of the generator objective
    double gan_loss = 0.0;   // generator adversarial term
    double disc_loss = 0.0;
    double val_metric = 0.0; // Recall@10 (categorical) / negative MSE (real)
    double mmd = 0.0;        // latents vs prior samples
};
using TrainHistory = std::vector<EpochRecord>;

// Forward-pass mode; dropout only fires when training with a non-null rng.
struct Forward {
    bool training = false;
    double dropout = 0.0;
    Rng* rng = nullptr;
};

// Dual auto-encoder with a shared latent space: an attribute stream (MLP
// encoder/decoder), a structure stream (featureless two-layer GCN encoder,
// inner-product decoder) and a shared MLP discriminator that pushes both
// latent populations toward the Gaussian prior.
class NangModel {
public:
    NangModel(std::size_t node_count, std::size_t attr_dim, AttrKind attr_kind,
              const TrainConfig& config, Rng& rng);

    // relu + dropout after layer 1, linear layer 2; rows x latent_dim.
    Tensor encode_attributes(const Tensor& x, const Forward& fw = {}) const;
    // Featureless GCN: relu(A_hat W1) with dropout, then A_hat H W2.
    Tensor encode_structure(const SparseMatrix& a_norm, const Forward& fw = {}) const;
    // relu hidden, linear logits; consumers apply sigmoid for categorical data.
    Tensor decode_attributes(const Tensor& z) const;
    // Inner-product logits H H^T of the projected latents.
    Tensor structure_logits(const Tensor& z) const;
    // sigmoid(H H^T): symmetric edge probabilities in (0,1).
    Tensor decode_structure(const Tensor& z) const;
    Tensor discriminate_logits(const Tensor& z) const;
    // relu hidden, sigmoid output in (0,1).
    Tensor discriminate(const Tensor& z) const;

    std::vector<Tensor> generator_parameters() const; // encoders + decoders
    std::vector<Tensor> discriminator_parameters() const;
    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    std::size_t node_count() const { return node_count_; }
    std::size_t attr_dim() const { return attr_dim_; }
    int latent_dim() const { return config_.latent_dim; }
    AttrKind attr_kind() const { return attr_kind_; }
    LossKind loss_kind() const { return loss_kind_; }
    const TrainConfig& config() const { return config_; }

    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

private:
    std::size_t node_count_;
    std::size_t attr_dim_;
    AttrKind attr_kind_;
    LossKind loss_kind_;
    TrainConfig config_;

    Tensor attr_enc_w1_, attr_enc_b1_, attr_enc_w2_, attr_enc_b2_;
    Tensor struct_enc_w1_, struct_enc_w2_; // first layer doubles as node embeddings
    Tensor attr_dec_w1_, attr_dec_b1_, attr_dec_w2_, attr_dec_b2_;
    Tensor struct_dec_w1_, struct_dec_b1_, struct_dec_w2_, struct_dec_b2_;
    Tensor disc_w1_, disc_b1_, disc_w2_, disc_b2_;
};

// Precomputed training operands: normalized adjacency, dense reconstruction
// targets, the off-diagonal masks and class-imbalance weights.
struct NangTrainContext {
    SparseMatrix a_norm;
    std::vector<int> train_ids;
    std::vector<int> validation_ids;
    Tensor x_train;                     // observed-train attribute rows
    Tensor x_validation;
    Tensor adj_full;                    // N x N dense {0,1} target
    std::vector<double> adj_full_mask;  // excludes the diagonal
    Tensor adj_train;                   // induced train x train target
    std::vector<double> adj_train_mask;
    double attr_pos_weight = 1.0;
    double struct_full_pos_weight = 1.0;
    double struct_train_pos_weight = 1.0;
    LossKind loss_kind = LossKind::weighted_bce;
};

NangTrainContext make_train_context(const DatasetBundle& bundle, const TrainConfig& config);

// Latent code populations entering the losses; all rows share latent_dim.
struct Latents {
    Tensor attr_observed;      // attribute encoder at observed-train nodes
    Tensor structure_all;      // structure encoder, every node
    Tensor structure_observed; // rows of structure_all at observed-train nodes
};

Latents compute_latents(const NangModel& model, const NangTrainContext& ctx, const Forward& fw);

struct GeneratorLosses {
    Tensor self_recon;   // attr->attr plus structure->structure
    Tensor cross_recon;  // structure->attr plus attr->structure (unscaled)
    Tensor adversarial;  // generator-side adversarial term
    Tensor total;        // self + lambda_c * cross + adversarial, per ablation
};

GeneratorLosses generator_losses(const NangModel& model, const NangTrainContext& ctx,
                                 const Latents& latents, const TrainConfig& config);

// Both adversarial terms of the shared discriminator: real prior draws score
// toward 1, encoded (detached) latents toward 0. The two real terms use
// independent prior draws.
Tensor discriminator_loss(const NangModel& model, const Tensor& prior_for_attr,
                          const Tensor& prior_for_struct, const Tensor& fake_attr,
                          const Tensor& fake_struct);

// Alternating full-batch adversarial training; returns the parameter snapshot
// with the best validation metric together with the per-round history.
std::pair<NangModel, TrainHistory> train_nang(const DatasetBundle& bundle,
                                              const TrainConfig& config);

// Structure -> latent -> attribute path at the given nodes, dropout disabled;
// sigmoid probabilities for categorical data, raw outputs for real-valued.
Tensor generate_attributes(const NangModel& model, const SparseMatrix& a_norm,
                           std::span<const int> node_ids);

// --- checkpoint container -----------------------------------------------------

// Versioned text container shared by every learned model: a meta map plus
// named matrices, round-tripping doubles exactly.
struct Checkpoint {
    std::string model;                       // "nang", "vae" or "gcn"
    std::map<std::string, std::string> meta; // dims, config echo
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void save_model(const NangModel& model, const std::string& path);
NangModel load_model(const std::string& path);

} // namespace nang
