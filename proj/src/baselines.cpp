#include "nang/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nang/errors.hpp"
#include "nang/metrics.hpp"

namespace nang {

namespace {

constexpr double kLogVarClamp = 10.0;

Tensor recon_loss(const Tensor& logits, const Tensor& target, LossKind kind, double pos_weight) {
    if (kind == LossKind::weighted_bce) return weighted_bce_with_logits(logits, target, pos_weight);
    return mse_loss(logits, target);
}

double negative_mse(const Tensor& pred, const Tensor& target) {
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double diff = pred.values()[i] - target.values()[i];
        sq += diff * diff;
    }
    return -sq / static_cast<double>(pred.size());
}

double holdout_metric(const Tensor& pred, const Tensor& truth, AttrKind kind) {
    if (kind == AttrKind::categorical)
        return mean_recall_at_k(pred, truth, std::min<int>(10, static_cast<int>(pred.cols())));
    return negative_mse(pred, truth);
}

Tensor maybe_dropout(const Tensor& x, const Forward& fw) {
    if (!fw.training || fw.dropout == 0.0) return x;
    if (fw.rng == nullptr) throw InvalidArgument("forward: training-mode dropout needs an rng");
    return dropout(x, fw.dropout, true, *fw.rng);
}

} // namespace

// --- NeighAggre ----------------------------------------------------------------

Tensor neigh_aggre(const Graph& graph, const AttributeMatrix& attrs,
                   std::span<const char> observed_mask, std::span<const int> target_ids) {
    if (attrs.nodes() != graph.node_count())
        throw ShapeError("neigh_aggre: attribute rows do not match node count");
    if (observed_mask.size() != graph.node_count())
        throw ShapeError("neigh_aggre: observed mask does not match node count");
    const std::size_t f = attrs.dim();
    std::vector<double> out(target_ids.size() * f, 0.0);
    for (std::size_t t = 0; t < target_ids.size(); ++t) {
        int node = target_ids[t];
        if (node < 0 || static_cast<std::size_t>(node) >= graph.node_count())
            throw InvalidArgument("neigh_aggre: node " + std::to_string(node) + " out of range");
        double* row = out.data() + t * f;
        std::size_t contributors = 0;
        for (int nb : graph.neighbors(node)) {
            if (!observed_mask[nb]) continue; // unattributed neighbors are skipped
            ++contributors;
            auto src = attrs.row(static_cast<std::size_t>(nb));
            for (std::size_t j = 0; j < f; ++j) row[j] += src[j];
        }
        if (contributors > 0)
            for (std::size_t j = 0; j < f; ++j) row[j] /= static_cast<double>(contributors);
    }
    return Tensor::from_values(target_ids.size(), f, std::move(out));
}

// --- VAE baseline ------------------------------------------------------------------

VaeBaselineModel::VaeBaselineModel(std::size_t attr_dim, AttrKind attr_kind,
                                   const TrainConfig& config, Rng& rng)
    : attr_dim_(attr_dim),
      attr_kind_(attr_kind),
      loss_kind_(config.resolve_loss_kind(attr_kind)),
      config_(config) {
    config_.validate();
    const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
    const std::size_t d = static_cast<std::size_t>(config_.latent_dim);
    enc_w1_ = glorot_init(attr_dim_, h, rng);
    enc_b1_ = Tensor::zeros(1, h, true);
    mu_w_ = glorot_init(h, d, rng);
    mu_b_ = Tensor::zeros(1, d, true);
    logvar_w_ = glorot_init(h, d, rng);
    logvar_b_ = Tensor::zeros(1, d, true);
    dec_w1_ = glorot_init(d, h, rng);
    dec_b1_ = Tensor::zeros(1, h, true);
    dec_w2_ = glorot_init(h, attr_dim_, rng);
    dec_b2_ = Tensor::zeros(1, attr_dim_, true);
}

std::pair<Tensor, Tensor> VaeBaselineModel::encode(const Tensor& x, const Forward& fw) const {
    if (x.cols() != attr_dim_) throw ShapeError("vae encode: attribute dim mismatch");
    Tensor hidden = maybe_dropout(relu(add(matmul(x, enc_w1_), enc_b1_)), fw);
    Tensor mu = add(matmul(hidden, mu_w_), mu_b_);
    Tensor logvar = clamp(add(matmul(hidden, logvar_w_), logvar_b_), -kLogVarClamp, kLogVarClamp);
    return {mu, logvar};
}

Tensor VaeBaselineModel::decode(const Tensor& z) const {
    if (z.cols() != static_cast<std::size_t>(config_.latent_dim))
        throw ShapeError("vae decode: latent dim mismatch");
    Tensor hidden = relu(add(matmul(z, dec_w1_), dec_b1_));
    return add(matmul(hidden, dec_w2_), dec_b2_);
}

std::vector<Tensor> VaeBaselineModel::parameters() const {
    return {enc_w1_, enc_b1_, mu_w_, mu_b_, logvar_w_, logvar_b_,
            dec_w1_, dec_b1_, dec_w2_, dec_b2_};
}

std::vector<std::pair<std::string, Tensor>> VaeBaselineModel::named_parameters() const {
    return {{"enc_w1", enc_w1_}, {"enc_b1", enc_b1_}, {"mu_w", mu_w_},
            {"mu_b", mu_b_},     {"logvar_w", logvar_w_}, {"logvar_b", logvar_b_},
            {"dec_w1", dec_w1_}, {"dec_b1", dec_b1_}, {"dec_w2", dec_w2_},
            {"dec_b2", dec_b2_}};
}

std::pair<VaeBaselineModel, TrainHistory> train_vae(const DatasetBundle& bundle,
                                                    const TrainConfig& config) {
    config.validate();
    bundle.validate();
    Rng root(config.seed);
    Rng init_rng = root.derive(1);
    Rng dropout_rng = root.derive(2);
    Rng eps_rng = root.derive(3);

    VaeBaselineModel model(bundle.attributes.dim(), bundle.attributes.kind(), config, init_rng);
    Adam opt(model.parameters(), config.learning_rate);

    Tensor x_train = bundle.attributes.rows_tensor(bundle.split.train);
    double pos_weight = 1.0;
    if (model.loss_kind() == LossKind::weighted_bce)
        pos_weight = compute_pos_weight(bundle.attributes, bundle.split.train);

    const std::size_t d = static_cast<std::size_t>(config.latent_dim);
    Forward train_fw{true, config.dropout, &dropout_rng};
    TrainHistory history;
    history.reserve(static_cast<std::size_t>(config.max_iterations));

    for (int round = 0; round < config.max_iterations; ++round) {
        try {
            auto [mu, logvar] = model.encode(x_train, train_fw);
            Tensor eps = sample_gaussian(x_train.rows(), d, eps_rng);
            Tensor z = add(mu, hadamard(vexp(scale(logvar, 0.5)), eps));
            Tensor loss = add(recon_loss(model.decode(z), x_train, model.loss_kind(), pos_weight),
                              kl_standard_normal(mu, logvar));
            if (!std::isfinite(loss.item())) throw TrainingDiverged("vae loss is non-finite");
            opt.zero_grad();
            loss.backward();
            opt.step();
            history.push_back({round, loss.item(), 0.0, 0.0, 0.0, 0.0});
        } catch (const TrainingDiverged& e) {
            throw TrainingDiverged(std::string(e.what()) + " (round " + std::to_string(round) +
                                   ")");
        }
    }
    return {std::move(model), std::move(history)};
}

Tensor vae_generate(const VaeBaselineModel& model, const DatasetBundle& bundle,
                    std::span<const int> target_ids) {
    const std::size_t d = static_cast<std::size_t>(model.config().latent_dim);
    std::vector<char> observed = bundle.split.observed_mask(bundle.graph.node_count());

    // Posterior means of every observed node, eval mode.
    std::vector<int> observed_ids;
    for (std::size_t i = 0; i < observed.size(); ++i)
        if (observed[i]) observed_ids.push_back(static_cast<int>(i));
    std::vector<int> row_of(bundle.graph.node_count(), -1);
    for (std::size_t r = 0; r < observed_ids.size(); ++r) row_of[observed_ids[r]] = static_cast<int>(r);
    Tensor mu = model.encode(bundle.attributes.rows_tensor(observed_ids)).first;

    std::vector<double> codes(target_ids.size() * d, 0.0);
    for (std::size_t t = 0; t < target_ids.size(); ++t) {
        int node = target_ids[t];
        double* code = codes.data() + t * d;
        std::size_t contributors = 0;
        for (int nb : bundle.graph.neighbors(node)) {
            if (row_of[nb] < 0) continue;
            ++contributors;
            const double* src = mu.values().data() + static_cast<std::size_t>(row_of[nb]) * d;
            for (std::size_t j = 0; j < d; ++j) code[j] += src[j];
        }
        if (contributors > 0)
            for (std::size_t j = 0; j < d; ++j) code[j] /= static_cast<double>(contributors);
    }
    Tensor logits = model.decode(Tensor::from_values(target_ids.size(), d, std::move(codes)));
    if (model.attr_kind() == AttrKind::categorical) return sigmoid(logits).detach();
    return logits.detach();
}

Tensor vae_baseline(const DatasetBundle& bundle, const TrainConfig& config) {
    auto [model, history] = train_vae(bundle, config);
    return vae_generate(model, bundle, bundle.split.test);
}

// --- GCN baseline ---------------------------------------------------------------------

GcnBaselineModel::GcnBaselineModel(std::size_t node_count, std::size_t attr_dim,
                                   AttrKind attr_kind, const TrainConfig& config, Rng& rng)
    : node_count_(node_count),
      attr_dim_(attr_dim),
      attr_kind_(attr_kind),
      loss_kind_(config.resolve_loss_kind(attr_kind)),
      config_(config) {
    config_.validate();
    const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
    const std::size_t d = static_cast<std::size_t>(config_.latent_dim);
    enc_w1_ = glorot_init(node_count_, h, rng);
    enc_w2_ = glorot_init(h, d, rng);
    dec_w1_ = glorot_init(d, h, rng);
    dec_b1_ = Tensor::zeros(1, h, true);
    dec_w2_ = glorot_init(h, attr_dim_, rng);
    dec_b2_ = Tensor::zeros(1, attr_dim_, true);
}

Tensor GcnBaselineModel::encode(const SparseMatrix& a_norm, const Forward& fw) const {
    if (a_norm.rows() != node_count_ || a_norm.cols() != node_count_)
        throw ShapeError("gcn encode: adjacency shape mismatch");
    Tensor hidden = maybe_dropout(relu(spmm(a_norm, enc_w1_)), fw);
    return matmul(spmm(a_norm, hidden), enc_w2_);
}

Tensor GcnBaselineModel::decode(const Tensor& z) const {
    if (z.cols() != static_cast<std::size_t>(config_.latent_dim))
        throw ShapeError("gcn decode: latent dim mismatch");
    Tensor hidden = relu(add(matmul(z, dec_w1_), dec_b1_));
    return add(matmul(hidden, dec_w2_), dec_b2_);
}

std::vector<Tensor> GcnBaselineModel::parameters() const {
    return {enc_w1_, enc_w2_, dec_w1_, dec_b1_, dec_w2_, dec_b2_};
}

std::vector<std::pair<std::string, Tensor>> GcnBaselineModel::named_parameters() const {
    return {{"enc_w1", enc_w1_}, {"enc_w2", enc_w2_}, {"dec_w1", dec_w1_},
            {"dec_b1", dec_b1_}, {"dec_w2", dec_w2_}, {"dec_b2", dec_b2_}};
}

std::pair<GcnBaselineModel, TrainHistory> train_gcn_baseline(const DatasetBundle& bundle,
                                                             const TrainConfig& config) {
    config.validate();
    bundle.validate();
    Rng root(config.seed);
    Rng init_rng = root.derive(1);
    Rng dropout_rng = root.derive(2);

    GcnBaselineModel model(bundle.graph.node_count(), bundle.attributes.dim(),
                           bundle.attributes.kind(), config, init_rng);
    Adam opt(model.parameters(), config.learning_rate);

    SparseMatrix a_norm = normalize_adjacency(bundle.graph);
    Tensor x_train = bundle.attributes.rows_tensor(bundle.split.train);
    Tensor x_validation = bundle.attributes.rows_tensor(bundle.split.validation);
    double pos_weight = 1.0;
    if (model.loss_kind() == LossKind::weighted_bce)
        pos_weight = compute_pos_weight(bundle.attributes, bundle.split.train);

    const bool select_on_validation = !bundle.split.validation.empty();
    std::vector<std::vector<double>> best_values;
    double best_metric = -std::numeric_limits<double>::infinity();
    auto snapshot = [&] {
        std::vector<std::vector<double>> values;
        for (const auto& p : model.parameters())
            values.emplace_back(p.values().begin(), p.values().end());
        return values;
    };
    best_values = snapshot();

    Forward train_fw{true, config.dropout, &dropout_rng};
    TrainHistory history;
    history.reserve(static_cast<std::size_t>(config.max_iterations));

    for (int round = 0; round < config.max_iterations; ++round) {
        try {
            Tensor z = model.encode(a_norm, train_fw);
            Tensor logits = model.decode(row_gather(z, bundle.split.train));
            Tensor loss = recon_loss(logits, x_train, model.loss_kind(), pos_weight);
            if (!std::isfinite(loss.item()))
                throw TrainingDiverged("gcn baseline loss is non-finite");
            opt.zero_grad();
            loss.backward();
            opt.step();

            EpochRecord record{round, loss.item(), 0.0, 0.0, 0.0, 0.0};
            if (select_on_validation) {
                Tensor z_eval = model.encode(a_norm);
                Tensor pred = model.decode(row_gather(z_eval, bundle.split.validation));
                record.val_metric = holdout_metric(pred, x_validation, model.attr_kind());
                if (record.val_metric > best_metric) {
                    best_metric = record.val_metric;
                    best_values = snapshot();
                }
            }
            history.push_back(record);
        } catch (const TrainingDiverged& e) {
            throw TrainingDiverged(std::string(e.what()) + " (round " + std::to_string(round) +
                                   ")");
        }
    }

    if (select_on_validation || config.max_iterations == 0) {
        auto params = model.parameters();
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i].mutable_values() = best_values[i];
    }
    return {std::move(model), std::move(history)};
}

Tensor gcn_generate(const GcnBaselineModel& model, const SparseMatrix& a_norm,
                    std::span<const int> target_ids) {
    Tensor z = model.encode(a_norm);
    Tensor logits = model.decode(row_gather(z, target_ids));
    if (model.attr_kind() == AttrKind::categorical) return sigmoid(logits).detach();
    return logits.detach();
}

Tensor gcn_baseline(const DatasetBundle& bundle, const TrainConfig& config) {
    auto [model, history] = train_gcn_baseline(bundle, config);
    return gcn_generate(model, normalize_adjacency(bundle.graph), bundle.split.test);
}

// --- checkpoints -----------------------------------------------------------------------

namespace {

void fill_common_meta(Checkpoint& ckpt, const TrainConfig& cfg, AttrKind kind, LossKind loss) {
    char buf[32];
    auto exact = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    ckpt.meta["attr_kind"] = kind == AttrKind::categorical ? "categorical" : "real";
    ckpt.meta["loss_kind"] = loss == LossKind::weighted_bce ? "weighted_bce" : "mse";
    ckpt.meta["lambda_c"] = exact(cfg.lambda_c);
    ckpt.meta["learning_rate"] = exact(cfg.learning_rate);
    ckpt.meta["dropout"] = exact(cfg.dropout);
    ckpt.meta["max_iterations"] = std::to_string(cfg.max_iterations);
    ckpt.meta["latent_dim"] = std::to_string(cfg.latent_dim);
    ckpt.meta["hidden_dim"] = std::to_string(cfg.hidden_dim);
    ckpt.meta["seed"] = std::to_string(cfg.seed);
}

TrainConfig config_from_meta(const Checkpoint& ckpt, const std::string& path) {
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
    cfg.latent_dim = std::stoi(need("latent_dim"));
    cfg.hidden_dim = std::stoi(need("hidden_dim"));
    cfg.seed = std::stoull(need("seed"));
    cfg.loss_kind = need("loss_kind") == "weighted_bce" ? LossKind::weighted_bce : LossKind::mse;
    return cfg;
}

AttrKind kind_from_meta(const Checkpoint& ckpt, const std::string& path) {
    auto it = ckpt.meta.find("attr_kind");
    if (it == ckpt.meta.end()) throw DataError(path + ": checkpoint missing attr_kind");
    return it->second == "categorical" ? AttrKind::categorical : AttrKind::real_valued;
}

template <typename Model>
void restore_named(Model& model, const Checkpoint& ckpt, const std::string& path) {
    auto named = model.named_parameters();
    for (auto& [name, param] : named) {
        auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(),
                               [&name = name](const auto& t) { return t.first == name; });
        if (it == ckpt.tensors.end()) throw DataError(path + ": checkpoint missing tensor " + name);
        if (it->second.rows() != param.rows() || it->second.cols() != param.cols())
            throw DataError(path + ": tensor " + name + " has wrong shape");
        param.mutable_values().assign(it->second.values().begin(), it->second.values().end());
    }
}

} // namespace

void save_vae_model(const VaeBaselineModel& model, const std::string& path) {
    Checkpoint ckpt;
    ckpt.model = "vae";
    fill_common_meta(ckpt, model.config(), model.attr_kind(), model.loss_kind());
    ckpt.meta["attr_dim"] = std::to_string(model.attr_dim());
    for (const auto& [name, tensor] : model.named_parameters())
        ckpt.tensors.emplace_back(name, tensor);
    save_checkpoint(ckpt, path);
}

VaeBaselineModel load_vae_model(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.model != "vae")
        throw DataError(path + ": checkpoint holds a '" + ckpt.model + "' model, expected 'vae'");
    TrainConfig cfg = config_from_meta(ckpt, path);
    Rng rng(cfg.seed);
    VaeBaselineModel model(std::stoul(ckpt.meta.at("attr_dim")), kind_from_meta(ckpt, path), cfg,
                           rng);
    restore_named(model, ckpt, path);
    return model;
}

void save_gcn_model(const GcnBaselineModel& model, const std::string& path) {
    Checkpoint ckpt;
    ckpt.model = "gcn";
    fill_common_meta(ckpt, model.config(), model.attr_kind(), model.loss_kind());
    ckpt.meta["attr_dim"] = std::to_string(model.attr_dim());
    ckpt.meta["nodes"] = std::to_string(model.node_count());
    for (const auto& [name, tensor] : model.named_parameters())
        ckpt.tensors.emplace_back(name, tensor);
    save_checkpoint(ckpt, path);
}

GcnBaselineModel load_gcn_model(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.model != "gcn")
        throw DataError(path + ": checkpoint holds a '" + ckpt.model + "' model, expected 'gcn'");
    TrainConfig cfg = config_from_meta(ckpt, path);
    Rng rng(cfg.seed);
    GcnBaselineModel model(std::stoul(ckpt.meta.at("nodes")), std::stoul(ckpt.meta.at("attr_dim")),
                           kind_from_meta(ckpt, path), cfg, rng);
    restore_named(model, ckpt, path);
    return model;
}

} // namespace nang
