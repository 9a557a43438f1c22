#include "nang/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "nang/errors.hpp"
#include "nang/metrics.hpp"

namespace nang {

namespace {

const char* to_string(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::cross_only: return "cross_only";
        case Ablation::self_only: return "self_only";
    }
    return "full";
}

const char* to_string(LossKind k) {
    return k == LossKind::weighted_bce ? "weighted_bce" : "mse";
}

Ablation parse_ablation(const std::string& s) {
    if (s == "full") return Ablation::full;
    if (s == "cross_only") return Ablation::cross_only;
    if (s == "self_only") return Ablation::self_only;
    throw DataError("unknown ablation '" + s + "'");
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "weighted_bce") return LossKind::weighted_bce;
    if (s == "mse") return LossKind::mse;
    throw DataError("unknown loss kind '" + s + "'");
}

Tensor maybe_dropout(const Tensor& x, const Forward& fw) {
    if (!fw.training || fw.dropout == 0.0) return x;
    if (fw.rng == nullptr)
        throw InvalidArgument("forward: training-mode dropout needs an rng");
    return dropout(x, fw.dropout, true, *fw.rng);
}

// Off-diagonal zero/one imbalance of a dense binary matrix; 1.0 when the
// matrix has no off-diagonal ones (degenerate edgeless targets stay trainable).
double structure_pos_weight(const Tensor& adj, std::span<const double> mask) {
    std::size_t ones = 0, zeros = 0;
    for (std::size_t i = 0; i < adj.size(); ++i) {
        if (mask[i] == 0.0) continue;
        (adj.values()[i] != 0.0 ? ones : zeros)++;
    }
    if (ones == 0) return 1.0;
    return static_cast<double>(zeros) / static_cast<double>(ones);
}

std::vector<double> off_diagonal_mask(std::size_t n) {
    std::vector<double> mask(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 0.0;
    return mask;
}

Tensor attr_recon_loss(const Tensor& logits, const Tensor& target, LossKind kind,
                       double pos_weight) {
    if (kind == LossKind::weighted_bce) return weighted_bce_with_logits(logits, target, pos_weight);
    return mse_loss(logits, target);
}

// Structure targets are always binary, so the reconstruction is weighted BCE
// over the off-diagonal entries regardless of the attribute loss kind.
Tensor struct_recon_loss(const NangModel& model, const Tensor& z, const Tensor& target,
                         std::span<const double> mask, double pos_weight) {
    if (target.rows() < 2) return Tensor::scalar(0.0); // no off-diagonal entries
    Tensor logits = model.structure_logits(z);
    return weighted_bce_with_logits_masked(logits, target, mask, pos_weight);
}

} // namespace

// --- TrainConfig ---------------------------------------------------------------

void TrainConfig::validate() const {
    if (lambda_c < 1.0) throw InvalidArgument("TrainConfig: lambda_c must be >= 1");
    if (learning_rate <= 0.0) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
    if (dropout < 0.0 || dropout >= 1.0)
        throw InvalidArgument("TrainConfig: dropout must lie in [0, 1)");
    if (max_iterations < 0) throw InvalidArgument("TrainConfig: max_iterations must be >= 0");
    if (generator_steps < 1 || discriminator_steps < 1)
        throw InvalidArgument("TrainConfig: generator/discriminator steps must be >= 1");
    if (latent_dim < 1 || hidden_dim < 1)
        throw InvalidArgument("TrainConfig: latent_dim and hidden_dim must be >= 1");
    if (mmd_sample_cap < 2) throw InvalidArgument("TrainConfig: mmd_sample_cap must be >= 2");
}

LossKind TrainConfig::resolve_loss_kind(AttrKind kind) const {
    if (loss_kind) {
        if (*loss_kind == LossKind::weighted_bce && kind != AttrKind::categorical)
            throw InvalidArgument("weighted BCE needs categorical attributes");
        return *loss_kind;
    }
    return kind == AttrKind::categorical ? LossKind::weighted_bce : LossKind::mse;
}

// --- NangModel ---------------------------------------------------------------

NangModel::NangModel(std::size_t node_count, std::size_t attr_dim, AttrKind attr_kind,
                     const TrainConfig& config, Rng& rng)
    : node_count_(node_count),
      attr_dim_(attr_dim),
      attr_kind_(attr_kind),
      loss_kind_(config.resolve_loss_kind(attr_kind)),
      config_(config) {
    config_.validate();
    if (node_count_ < 1 || attr_dim_ < 1)
        throw InvalidArgument("NangModel: need at least one node and one attribute dimension");
    const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
    const std::size_t d = static_cast<std::size_t>(config_.latent_dim);

    attr_enc_w1_ = glorot_init(attr_dim_, h, rng);
    attr_enc_b1_ = Tensor::zeros(1, h, true);
    attr_enc_w2_ = glorot_init(h, d, rng);
    attr_enc_b2_ = Tensor::zeros(1, d, true);

    struct_enc_w1_ = glorot_init(node_count_, h, rng);
    struct_enc_w2_ = glorot_init(h, d, rng);

    attr_dec_w1_ = glorot_init(d, h, rng);
    attr_dec_b1_ = Tensor::zeros(1, h, true);
    attr_dec_w2_ = glorot_init(h, attr_dim_, rng);
    attr_dec_b2_ = Tensor::zeros(1, attr_dim_, true);

    struct_dec_w1_ = glorot_init(d, h, rng);
    struct_dec_b1_ = Tensor::zeros(1, h, true);
    struct_dec_w2_ = glorot_init(h, d, rng);
    struct_dec_b2_ = Tensor::zeros(1, d, true);

    disc_w1_ = glorot_init(d, h, rng);
    disc_b1_ = Tensor::zeros(1, h, true);
    disc_w2_ = glorot_init(h, 1, rng);
    disc_b2_ = Tensor::zeros(1, 1, true);
}

Tensor NangModel::encode_attributes(const Tensor& x, const Forward& fw) const {
    if (x.cols() != attr_dim_)
        throw ShapeError("encode_attributes: input has " + std::to_string(x.cols()) +
                         " dims, expected " + std::to_string(attr_dim_));
    Tensor hidden = maybe_dropout(relu(add(matmul(x, attr_enc_w1_), attr_enc_b1_)), fw);
    return add(matmul(hidden, attr_enc_w2_), attr_enc_b2_);
}

Tensor NangModel::encode_structure(const SparseMatrix& a_norm, const Forward& fw) const {
    if (a_norm.rows() != node_count_ || a_norm.cols() != node_count_)
        throw ShapeError("encode_structure: adjacency is " + std::to_string(a_norm.rows()) + "x" +
                         std::to_string(a_norm.cols()) + ", expected " +
                         std::to_string(node_count_) + " nodes");
    Tensor hidden = maybe_dropout(relu(spmm(a_norm, struct_enc_w1_)), fw);
    return matmul(spmm(a_norm, hidden), struct_enc_w2_);
}

Tensor NangModel::decode_attributes(const Tensor& z) const {
    if (z.cols() != static_cast<std::size_t>(config_.latent_dim))
        throw ShapeError("decode_attributes: latent dim mismatch");
    Tensor hidden = relu(add(matmul(z, attr_dec_w1_), attr_dec_b1_));
    return add(matmul(hidden, attr_dec_w2_), attr_dec_b2_);
}

Tensor NangModel::structure_logits(const Tensor& z) const {
    if (z.cols() != static_cast<std::size_t>(config_.latent_dim))
        throw ShapeError("structure_logits: latent dim mismatch");
    Tensor hidden = relu(add(matmul(z, struct_dec_w1_), struct_dec_b1_));
    Tensor projected = add(matmul(hidden, struct_dec_w2_), struct_dec_b2_);
    return matmul_nt(projected, projected);
}

Tensor NangModel::decode_structure(const Tensor& z) const { return sigmoid(structure_logits(z)); }

Tensor NangModel::discriminate_logits(const Tensor& z) const {
    if (z.cols() != static_cast<std::size_t>(config_.latent_dim))
        throw ShapeError("discriminate: latent dim mismatch");
    Tensor hidden = relu(add(matmul(z, disc_w1_), disc_b1_));
    return add(matmul(hidden, disc_w2_), disc_b2_);
}

Tensor NangModel::discriminate(const Tensor& z) const { return sigmoid(discriminate_logits(z)); }

std::vector<Tensor> NangModel::generator_parameters() const {
    return {attr_enc_w1_, attr_enc_b1_, attr_enc_w2_, attr_enc_b2_,
            struct_enc_w1_, struct_enc_w2_,
            attr_dec_w1_, attr_dec_b1_, attr_dec_w2_, attr_dec_b2_,
            struct_dec_w1_, struct_dec_b1_, struct_dec_w2_, struct_dec_b2_};
}

std::vector<Tensor> NangModel::discriminator_parameters() const {
    return {disc_w1_, disc_b1_, disc_w2_, disc_b2_};
}

std::vector<Tensor> NangModel::parameters() const {
    auto params = generator_parameters();
    auto disc = discriminator_parameters();
    params.insert(params.end(), disc.begin(), disc.end());
    return params;
}

std::vector<std::pair<std::string, Tensor>> NangModel::named_parameters() const {
    return {{"attr_enc_w1", attr_enc_w1_}, {"attr_enc_b1", attr_enc_b1_},
            {"attr_enc_w2", attr_enc_w2_}, {"attr_enc_b2", attr_enc_b2_},
            {"struct_enc_w1", struct_enc_w1_}, {"struct_enc_w2", struct_enc_w2_},
            {"attr_dec_w1", attr_dec_w1_}, {"attr_dec_b1", attr_dec_b1_},
            {"attr_dec_w2", attr_dec_w2_}, {"attr_dec_b2", attr_dec_b2_},
            {"struct_dec_w1", struct_dec_w1_}, {"struct_dec_b1", struct_dec_b1_},
            {"struct_dec_w2", struct_dec_w2_}, {"struct_dec_b2", struct_dec_b2_},
            {"disc_w1", disc_w1_}, {"disc_b1", disc_b1_},
            {"disc_w2", disc_w2_}, {"disc_b2", disc_b2_}};
}

std::vector<std::vector<double>> NangModel::snapshot() const {
    std::vector<std::vector<double>> values;
    for (const auto& p : parameters()) values.emplace_back(p.values().begin(), p.values().end());
    return values;
}

void NangModel::restore(const std::vector<std::vector<double>>& values) {
    auto params = parameters();
    if (values.size() != params.size())
        throw InvalidArgument("restore: snapshot has wrong parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (values[i].size() != params[i].size())
            throw InvalidArgument("restore: snapshot tensor size mismatch");
        params[i].mutable_values() = values[i];
    }
}

// --- training context ----------------------------------------------------------

NangTrainContext make_train_context(const DatasetBundle& bundle, const TrainConfig& config) {
    bundle.validate();
    NangTrainContext ctx{normalize_adjacency(bundle.graph),
                         bundle.split.train,
                         bundle.split.validation,
                         bundle.attributes.rows_tensor(bundle.split.train),
                         bundle.attributes.rows_tensor(bundle.split.validation),
                         bundle.graph.adjacency().to_dense(),
                         off_diagonal_mask(bundle.graph.node_count()),
                         bundle.graph.adjacency().submatrix(bundle.split.train).to_dense(),
                         off_diagonal_mask(bundle.split.train.size()),
                         1.0,
                         1.0,
                         1.0,
                         config.resolve_loss_kind(bundle.attributes.kind())};
    if (ctx.train_ids.empty()) throw InvalidArgument("training requires observed-train nodes");
    if (ctx.loss_kind == LossKind::weighted_bce)
        ctx.attr_pos_weight = compute_pos_weight(bundle.attributes, ctx.train_ids);
    ctx.struct_full_pos_weight = structure_pos_weight(ctx.adj_full, ctx.adj_full_mask);
    ctx.struct_train_pos_weight = structure_pos_weight(ctx.adj_train, ctx.adj_train_mask);
    return ctx;
}

Latents compute_latents(const NangModel& model, const NangTrainContext& ctx, const Forward& fw) {
    Latents latents;
    latents.attr_observed = model.encode_attributes(ctx.x_train, fw);
    latents.structure_all = model.encode_structure(ctx.a_norm, fw);
    latents.structure_observed = row_gather(latents.structure_all, ctx.train_ids);
    return latents;
}

GeneratorLosses generator_losses(const NangModel& model, const NangTrainContext& ctx,
                                 const Latents& latents, const TrainConfig& config) {
    GeneratorLosses out;

    // Self stream: attribute -> attribute and structure -> structure.
    Tensor self_attr = attr_recon_loss(model.decode_attributes(latents.attr_observed), ctx.x_train,
                                       ctx.loss_kind, ctx.attr_pos_weight);
    Tensor self_struct = struct_recon_loss(model, latents.structure_all, ctx.adj_full,
                                           ctx.adj_full_mask, ctx.struct_full_pos_weight);
    out.self_recon = add(self_attr, self_struct);

    // Cross stream: structure -> attribute and attribute -> structure, the
    // latter against the induced observed-train submatrix.
    Tensor cross_attr = attr_recon_loss(model.decode_attributes(latents.structure_observed),
                                        ctx.x_train, ctx.loss_kind, ctx.attr_pos_weight);
    Tensor cross_struct = struct_recon_loss(model, latents.attr_observed, ctx.adj_train,
                                            ctx.adj_train_mask, ctx.struct_train_pos_weight);
    out.cross_recon = add(cross_attr, cross_struct);

    Tensor attr_logits = model.discriminate_logits(latents.attr_observed);
    Tensor struct_logits = model.discriminate_logits(latents.structure_observed);
    Tensor ones_attr = Tensor::full(attr_logits.rows(), 1, 1.0);
    Tensor ones_struct = Tensor::full(struct_logits.rows(), 1, 1.0);
    if (config.saturating_gan) {
        // Literal minimax: minimize E[log(1 - D(fake))].
        Tensor zeros_attr = Tensor::zeros(attr_logits.rows(), 1);
        Tensor zeros_struct = Tensor::zeros(struct_logits.rows(), 1);
        out.adversarial = scale(add(weighted_bce_with_logits(attr_logits, zeros_attr, 1.0),
                                    weighted_bce_with_logits(struct_logits, zeros_struct, 1.0)),
                                -1.0);
    } else {
        // Non-saturating form: -E[log D(fake)] for both encoders.
        out.adversarial = add(weighted_bce_with_logits(attr_logits, ones_attr, 1.0),
                              weighted_bce_with_logits(struct_logits, ones_struct, 1.0));
    }

    switch (config.ablation) {
        case Ablation::full:
            out.total = add(add(out.self_recon, scale(out.cross_recon, config.lambda_c)),
                            out.adversarial);
            break;
        case Ablation::cross_only:
            out.total = add(scale(out.cross_recon, config.lambda_c), out.adversarial);
            break;
        case Ablation::self_only:
            out.total = add(out.self_recon, out.adversarial);
            break;
    }
    return out;
}

Tensor discriminator_loss(const NangModel& model, const Tensor& prior_for_attr,
                          const Tensor& prior_for_struct, const Tensor& fake_attr,
                          const Tensor& fake_struct) {
    // Fakes are cut from the tape here so the term can only move the
    // discriminator, never the encoders.
    Tensor fa = fake_attr.requires_grad() ? fake_attr.detach() : fake_attr;
    Tensor fs = fake_struct.requires_grad() ? fake_struct.detach() : fake_struct;

    auto real_term = [&](const Tensor& prior) {
        Tensor logits = model.discriminate_logits(prior);
        return weighted_bce_with_logits(logits, Tensor::full(logits.rows(), 1, 1.0), 1.0);
    };
    auto fake_term = [&](const Tensor& fake) {
        Tensor logits = model.discriminate_logits(fake);
        return weighted_bce_with_logits(logits, Tensor::zeros(logits.rows(), 1), 1.0);
    };
    return add(add(real_term(prior_for_attr), fake_term(fa)),
               add(real_term(prior_for_struct), fake_term(fs)));
}

// --- training loop -----------------------------------------------------------------

namespace {

double validation_metric(const NangModel& model, const NangTrainContext& ctx,
                         const Latents& eval_latents) {
    if (ctx.validation_ids.empty()) return 0.0;
    Tensor z_val = row_gather(eval_latents.structure_all, ctx.validation_ids);
    Tensor pred = model.decode_attributes(z_val);
    if (model.attr_kind() == AttrKind::categorical) {
        const int k = std::min<int>(10, static_cast<int>(pred.cols()));
        return mean_recall_at_k(pred, ctx.x_validation, k);
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double diff = pred.values()[i] - ctx.x_validation.values()[i];
        sq += diff * diff;
    }
    return -sq / static_cast<double>(pred.size());
}

double monitor_mmd(const Latents& eval_latents, const NangTrainContext& ctx,
                   const TrainConfig& config, Rng& rng) {
    const std::size_t d = eval_latents.attr_observed.cols();
    const std::size_t n_tr = ctx.train_ids.size();
    Tensor struct_tr = row_gather(eval_latents.structure_all, ctx.train_ids);

    std::vector<double> pooled;
    pooled.reserve(2 * n_tr * d);
    pooled.insert(pooled.end(), eval_latents.attr_observed.values().begin(),
                  eval_latents.attr_observed.values().end());
    pooled.insert(pooled.end(), struct_tr.values().begin(), struct_tr.values().end());

    std::size_t total = 2 * n_tr;
    std::size_t take = std::min<std::size_t>(total, static_cast<std::size_t>(config.mmd_sample_cap));
    std::vector<double> sampled(take * d);
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t src = i * total / take; // evenly strided, deterministic
        std::copy_n(pooled.data() + src * d, d, sampled.data() + i * d);
    }
    Tensor latent_sample = Tensor::from_values(take, d, std::move(sampled));
    Tensor prior = sample_gaussian(take, d, rng);
    return mmd_rbf(latent_sample, prior);
}

} // namespace

std::pair<NangModel, TrainHistory> train_nang(const DatasetBundle& bundle,
                                              const TrainConfig& config) {
    config.validate();
    NangTrainContext ctx = make_train_context(bundle, config);

    Rng root(config.seed);
    Rng init_rng = root.derive(1);
    Rng dropout_rng = root.derive(2);
    Rng prior_rng = root.derive(3);
    Rng monitor_rng = root.derive(4);

    NangModel model(bundle.graph.node_count(), bundle.attributes.dim(), bundle.attributes.kind(),
                    config, init_rng);
    Adam gen_opt(model.generator_parameters(), config.learning_rate);
    Adam disc_opt(model.discriminator_parameters(), config.learning_rate);

    const bool select_on_validation = !ctx.validation_ids.empty();
    auto best_values = model.snapshot();
    double best_metric = -std::numeric_limits<double>::infinity();
    TrainHistory history;
    history.reserve(static_cast<std::size_t>(config.max_iterations));

    const std::size_t latent = static_cast<std::size_t>(config.latent_dim);
    Forward train_fw{true, config.dropout, &dropout_rng};

    for (int round = 0; round < config.max_iterations; ++round) {
        EpochRecord record;
        record.epoch = round;
        try {
            for (int g = 0; g < config.generator_steps; ++g) {
                Latents latents = compute_latents(model, ctx, train_fw);
                GeneratorLosses losses = generator_losses(model, ctx, latents, config);
                if (!std::isfinite(losses.total.item()))
                    throw TrainingDiverged("generator loss is non-finite");
                record.joint_loss = losses.total.item() - losses.adversarial.item();
                record.gan_loss = losses.adversarial.item();
                gen_opt.zero_grad();
                disc_opt.zero_grad();
                losses.total.backward();
                gen_opt.step();
            }
            for (int d = 0; d < config.discriminator_steps; ++d) {
                Latents latents = compute_latents(model, ctx, train_fw);
                Tensor prior_a = sample_gaussian(ctx.train_ids.size(), latent, prior_rng);
                Tensor prior_s = sample_gaussian(ctx.train_ids.size(), latent, prior_rng);
                Tensor loss = discriminator_loss(model, prior_a, prior_s,
                                                 latents.attr_observed.detach(),
                                                 latents.structure_observed.detach());
                if (!std::isfinite(loss.item()))
                    throw TrainingDiverged("discriminator loss is non-finite");
                record.disc_loss = loss.item();
                gen_opt.zero_grad();
                disc_opt.zero_grad();
                loss.backward();
                disc_opt.step();
            }
        } catch (const TrainingDiverged& e) {
            throw TrainingDiverged(std::string(e.what()) + " (round " + std::to_string(round) +
                                   ")");
        }

        Latents eval_latents = compute_latents(model, ctx, Forward{});
        record.val_metric = validation_metric(model, ctx, eval_latents);
        record.mmd = monitor_mmd(eval_latents, ctx, config, monitor_rng);
        history.push_back(record);

        if (select_on_validation && record.val_metric > best_metric) {
            best_metric = record.val_metric;
            best_values = model.snapshot();
        }
    }

    // Without a validation set the final parameters stand.
    if (select_on_validation || config.max_iterations == 0) model.restore(best_values);
    return {std::move(model), std::move(history)};
}

Tensor generate_attributes(const NangModel& model, const SparseMatrix& a_norm,
                           std::span<const int> node_ids) {
    Tensor z_all = model.encode_structure(a_norm, Forward{});
    Tensor z = row_gather(z_all, node_ids);
    Tensor logits = model.decode_attributes(z);
    if (model.attr_kind() == AttrKind::categorical) return sigmoid(logits).detach();
    return logits.detach();
}

// --- checkpoint container ---------------------------------------------------------

namespace {

std::string format_exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint to " + path);
    out << "nang-checkpoint 1\n";
    out << "model " << ckpt.model << "\n";
    for (const auto& [key, value] : ckpt.meta) out << "meta " << key << " " << value << "\n";
    for (const auto& [name, tensor] : ckpt.tensors) {
        out << "tensor " << name << " " << tensor.rows() << " " << tensor.cols() << "\n";
        for (std::size_t i = 0; i < tensor.rows(); ++i) {
            for (std::size_t j = 0; j < tensor.cols(); ++j) {
                if (j) out << " ";
                out << format_exact(tensor(i, j));
            }
            out << "\n";
        }
    }
    out << "end\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(in, line) || line != "nang-checkpoint 1")
        throw DataError(path + ": not a version-1 checkpoint");

    Checkpoint ckpt;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "end") return ckpt;
        if (tag == "model") {
            ss >> ckpt.model;
        } else if (tag == "meta") {
            std::string key, value;
            ss >> key >> value;
            if (key.empty() || value.empty()) throw DataError(path + ": malformed meta line");
            ckpt.meta[key] = value;
        } else if (tag == "tensor") {
            std::string name;
            std::size_t rows = 0, cols = 0;
            ss >> name >> rows >> cols;
            if (name.empty() || rows == 0 || cols == 0)
                throw DataError(path + ": malformed tensor header");
            std::vector<double> values;
            values.reserve(rows * cols);
            for (std::size_t i = 0; i < rows; ++i) {
                if (!std::getline(in, line)) throw DataError(path + ": truncated tensor " + name);
                std::istringstream row(line);
                double v;
                while (row >> v) values.push_back(v);
            }
            if (values.size() != rows * cols)
                throw DataError(path + ": tensor " + name + " has " +
                                std::to_string(values.size()) + " values, expected " +
                                std::to_string(rows * cols));
            ckpt.tensors.emplace_back(name, Tensor::from_values(rows, cols, std::move(values)));
        } else {
            throw DataError(path + ": unknown record '" + tag + "'");
        }
    }
    throw DataError(path + ": missing end marker");
}

void save_model(const NangModel& model, const std::string& path) {
    Checkpoint ckpt;
    ckpt.model = "nang";
    const TrainConfig& cfg = model.config();
    ckpt.meta["nodes"] = std::to_string(model.node_count());
    ckpt.meta["attr_dim"] = std::to_string(model.attr_dim());
    ckpt.meta["attr_kind"] =
        model.attr_kind() == AttrKind::categorical ? "categorical" : "real";
    ckpt.meta["loss_kind"] = to_string(model.loss_kind());
    ckpt.meta["lambda_c"] = format_exact(cfg.lambda_c);
    ckpt.meta["learning_rate"] = format_exact(cfg.learning_rate);
    ckpt.meta["dropout"] = format_exact(cfg.dropout);
    ckpt.meta["max_iterations"] = std::to_string(cfg.max_iterations);
    ckpt.meta["generator_steps"] = std::to_string(cfg.generator_steps);
    ckpt.meta["discriminator_steps"] = std::to_string(cfg.discriminator_steps);
    ckpt.meta["latent_dim"] = std::to_string(cfg.latent_dim);
    ckpt.meta["hidden_dim"] = std::to_string(cfg.hidden_dim);
    ckpt.meta["seed"] = std::to_string(cfg.seed);
    ckpt.meta["ablation"] = to_string(cfg.ablation);
    ckpt.meta["saturating_gan"] = cfg.saturating_gan ? "1" : "0";
    ckpt.meta["mmd_sample_cap"] = std::to_string(cfg.mmd_sample_cap);
    for (const auto& [name, tensor] : model.named_parameters())
        ckpt.tensors.emplace_back(name, tensor);
    save_checkpoint(ckpt, path);
}

NangModel load_model(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.model != "nang") throw DataError(path + ": checkpoint holds a '" + ckpt.model +
                                              "' model, expected 'nang'");
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = ckpt.meta.find(key);
        if (it == ckpt.meta.end()) throw DataError(path + ": checkpoint missing meta key " + key);
        return it->second;
    };

    TrainConfig cfg;
    cfg.lambda_c = std::stod(need("lambda_c"));
    cfg.learning_rate = std::stod(need("learning_rate"));
    cfg.dropout = std::stod(need("dropout"));
    cfg.max_iterations = std::stoi(need("max_iterations"));
    cfg.generator_steps = std::stoi(need("generator_steps"));
    cfg.discriminator_steps = std::stoi(need("discriminator_steps"));
    cfg.latent_dim = std::stoi(need("latent_dim"));
    cfg.hidden_dim = std::stoi(need("hidden_dim"));
    cfg.seed = std::stoull(need("seed"));
    cfg.ablation = parse_ablation(need("ablation"));
    cfg.saturating_gan = need("saturating_gan") == "1";
    cfg.mmd_sample_cap = std::stoi(need("mmd_sample_cap"));
    cfg.loss_kind = parse_loss_kind(need("loss_kind"));

    const std::size_t nodes = std::stoul(need("nodes"));
    const std::size_t attr_dim = std::stoul(need("attr_dim"));
    AttrKind kind = need("attr_kind") == "categorical" ? AttrKind::categorical
                                                       : AttrKind::real_valued;

    Rng rng(cfg.seed);
    NangModel model(nodes, attr_dim, kind, cfg, rng);
    auto named = model.named_parameters();
    for (auto& [name, param] : named) {
        auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(),
                               [&name = name](const auto& t) { return t.first == name; });
        if (it == ckpt.tensors.end())
            throw DataError(path + ": checkpoint missing tensor " + name);
        if (it->second.rows() != param.rows() || it->second.cols() != param.cols())
            throw DataError(path + ": tensor " + name + " has wrong shape");
        param.mutable_values().assign(it->second.values().begin(), it->second.values().end());
    }
    return model;
}

} // namespace nang
