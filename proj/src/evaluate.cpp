#include "nang/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "nang/baselines.hpp"
#include "nang/errors.hpp"
#include "nang/metrics.hpp"

namespace nang {

namespace {

void mean_std(const std::vector<double>& values, double& mean, double& stddev) {
    mean = 0.0;
    stddev = 0.0;
    if (values.empty()) return;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values) stddev += (v - mean) * (v - mean);
    stddev = std::sqrt(stddev / static_cast<double>(values.size()));
}

int argmax_row(std::span<const double> row) {
    int best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = static_cast<int>(j);
    return best;
}

// Rows of V_u for one (repeat, fold) pair: fold f serves as the 20% test
// chunk of the shuffled order, the rest trains.
void fold_partition(const std::vector<int>& shuffled, int folds, int fold, std::vector<int>& train,
                    std::vector<int>& test) {
    train.clear();
    test.clear();
    const std::size_t n = shuffled.size();
    const std::size_t begin = fold * n / folds;
    const std::size_t end = (fold + 1) * n / folds;
    for (std::size_t i = 0; i < n; ++i)
        (i >= begin && i < end ? test : train).push_back(shuffled[i]);
}

// Two-layer MLP classifier on fixed feature rows; returns test accuracy.
double mlp_fold_accuracy(const Tensor& features, const std::vector<int>& labels,
                         const std::vector<int>& train_rows, const std::vector<int>& test_rows,
                         int num_classes, const ClassifierProtocol& proto, Rng init_rng,
                         Rng drop_rng) {
    const std::size_t f = features.cols();
    const std::size_t h = static_cast<std::size_t>(proto.hidden_dim);
    Tensor w1 = glorot_init(f, h, init_rng);
    Tensor b1 = Tensor::zeros(1, h, true);
    Tensor w2 = glorot_init(h, static_cast<std::size_t>(num_classes), init_rng);
    Tensor b2 = Tensor::zeros(1, static_cast<std::size_t>(num_classes), true);
    Adam opt({w1, b1, w2, b2}, proto.learning_rate);

    Tensor x_train = row_gather(features, train_rows).detach();
    std::vector<int> y_train;
    y_train.reserve(train_rows.size());
    for (int r : train_rows) y_train.push_back(labels[r]);

    for (int epoch = 0; epoch < proto.epochs; ++epoch) {
        Tensor hidden = relu(add(matmul(x_train, w1), b1));
        hidden = dropout(hidden, proto.dropout, true, drop_rng);
        Tensor logits = add(matmul(hidden, w2), b2);
        Tensor loss = cross_entropy(logits, y_train);
        opt.zero_grad();
        loss.backward();
        opt.step();
    }

    Tensor x_test = row_gather(features, test_rows).detach();
    Tensor logits = add(matmul(relu(add(matmul(x_test, w1), b1)), w2), b2);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
        std::span<const double> row{logits.values().data() + i * logits.cols(), logits.cols()};
        if (argmax_row(row) == labels[test_rows[i]]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_rows.size());
}

// Two-layer GCN classifier over the whole graph; `features` may be empty, in
// which case the first layer runs on identity input (free node embeddings).
// Supervision and evaluation use graph node ids.
double gcn_fold_accuracy(const SparseMatrix& a_norm, const Tensor* features,
                         const std::vector<int>& labels, const std::vector<int>& train_nodes,
                         const std::vector<int>& test_nodes, int num_classes,
                         const ClassifierProtocol& proto, Rng init_rng, Rng drop_rng) {
    const std::size_t n = a_norm.rows();
    const std::size_t h = static_cast<std::size_t>(proto.hidden_dim);
    const std::size_t c = static_cast<std::size_t>(num_classes);

    Tensor w1 = features ? glorot_init(features->cols(), h, init_rng) : glorot_init(n, h, init_rng);
    Tensor w2 = glorot_init(h, c, init_rng);
    Adam opt({w1, w2}, proto.learning_rate);

    // A_hat (X W1) == (A_hat X) W1, so propagate the features once.
    Tensor ax;
    if (features) ax = spmm(a_norm, *features).detach();

    std::vector<int> y_train;
    y_train.reserve(train_nodes.size());
    for (int id : train_nodes) y_train.push_back(labels[id]);

    auto forward = [&](bool training, Rng* rng) {
        Tensor hidden = features ? relu(matmul(ax, w1)) : relu(spmm(a_norm, w1));
        if (training) hidden = dropout(hidden, proto.dropout, true, *rng);
        return spmm(a_norm, matmul(hidden, w2));
    };

    for (int epoch = 0; epoch < proto.epochs; ++epoch) {
        Tensor logits = row_gather(forward(true, &drop_rng), train_nodes);
        Tensor loss = cross_entropy(logits, y_train);
        opt.zero_grad();
        loss.backward();
        opt.step();
    }

    Tensor logits = row_gather(forward(false, nullptr), test_nodes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_nodes.size(); ++i) {
        std::span<const double> row{logits.values().data() + i * logits.cols(), logits.cols()};
        if (argmax_row(row) == labels[test_nodes[i]]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_nodes.size());
}

const std::vector<int>& require_labels(const DatasetBundle& bundle, const char* op) {
    if (!bundle.labels) throw DataError(std::string(op) + ": dataset has no labels");
    return *bundle.labels;
}

// Runs the shuffled-fold protocol over the test nodes; `fold_accuracy` maps
// (train node ids, test node ids, init rng, dropout rng) to an accuracy.
template <typename FoldFn>
MetricReport fold_protocol(const DatasetBundle& bundle, const ClassifierProtocol& proto,
                           const char* setting, FoldFn&& fold_accuracy) {
    proto.validate();
    const std::vector<int>& test_ids = bundle.split.test;
    if (test_ids.size() < static_cast<std::size_t>(proto.folds))
        throw InvalidArgument("fold protocol: fewer test nodes than folds");

    Rng root(proto.seed);
    std::vector<double> accuracies;
    accuracies.reserve(static_cast<std::size_t>(proto.folds) * proto.repeats);
    std::vector<int> order(test_ids.begin(), test_ids.end());
    std::vector<int> train_nodes, test_nodes;
    for (int repeat = 0; repeat < proto.repeats; ++repeat) {
        Rng shuffle_rng = root.derive(1000 + static_cast<std::uint64_t>(repeat));
        std::vector<int> shuffled = order;
        shuffle_rng.shuffle(shuffled);
        for (int fold = 0; fold < proto.folds; ++fold) {
            fold_partition(shuffled, proto.folds, fold, train_nodes, test_nodes);
            const std::uint64_t tag = static_cast<std::uint64_t>(repeat) * 100 + fold * 2;
            accuracies.push_back(
                fold_accuracy(train_nodes, test_nodes, root.derive(tag), root.derive(tag + 1)));
        }
    }

    MetricReport report;
    report.dataset = bundle.name;
    report.setting = setting;
    report.metric = "accuracy";
    mean_std(accuracies, report.mean, report.stddev);
    report.evaluations = static_cast<int>(accuracies.size());
    report.seed = proto.seed;
    return report;
}

} // namespace

void ClassifierProtocol::validate() const {
    if (folds < 2) throw InvalidArgument("ClassifierProtocol: folds must be >= 2");
    if (repeats < 1) throw InvalidArgument("ClassifierProtocol: repeats must be >= 1");
    if (hidden_dim < 1 || epochs < 0) throw InvalidArgument("ClassifierProtocol: bad dims/epochs");
    if (learning_rate <= 0.0) throw InvalidArgument("ClassifierProtocol: learning rate must be > 0");
    if (dropout < 0.0 || dropout >= 1.0)
        throw InvalidArgument("ClassifierProtocol: dropout must lie in [0, 1)");
}

MetricReport classify_x(const DatasetBundle& bundle, const Tensor& generated,
                        const ClassifierProtocol& protocol) {
    const auto& labels = require_labels(bundle, "classify_x");
    const auto& test_ids = bundle.split.test;
    if (generated.rows() != test_ids.size() || generated.cols() != bundle.attributes.dim())
        throw ShapeError("classify_x: generated matrix must be |test| x attr_dim");

    // Rows of `generated` align with split.test, so classify on local indices.
    std::vector<int> local_labels(test_ids.size());
    std::vector<int> id_to_row(bundle.graph.node_count(), -1);
    for (std::size_t i = 0; i < test_ids.size(); ++i) {
        local_labels[i] = labels[test_ids[i]];
        id_to_row[test_ids[i]] = static_cast<int>(i);
    }

    return fold_protocol(
        bundle, protocol, "X",
        [&](const std::vector<int>& train_nodes, const std::vector<int>& test_nodes, Rng init_rng,
            Rng drop_rng) {
            std::vector<int> train_rows, test_rows;
            train_rows.reserve(train_nodes.size());
            test_rows.reserve(test_nodes.size());
            for (int id : train_nodes) train_rows.push_back(id_to_row[id]);
            for (int id : test_nodes) test_rows.push_back(id_to_row[id]);
            return mlp_fold_accuracy(generated, local_labels, train_rows, test_rows,
                                     bundle.num_classes, protocol, init_rng, drop_rng);
        });
}

MetricReport classify_fused(const DatasetBundle& bundle, const Tensor& generated,
                            const ClassifierProtocol& protocol) {
    const auto& labels = require_labels(bundle, "classify_fused");
    const auto& test_ids = bundle.split.test;
    if (generated.rows() != test_ids.size() || generated.cols() != bundle.attributes.dim())
        throw ShapeError("classify_fused: generated matrix must be |test| x attr_dim");

    // True rows at observed nodes, generated rows at test nodes.
    Tensor fused = bundle.attributes.to_tensor();
    auto& values = fused.mutable_values();
    const std::size_t f = bundle.attributes.dim();
    for (std::size_t i = 0; i < test_ids.size(); ++i)
        std::copy_n(generated.values().data() + i * f, f,
                    values.data() + static_cast<std::size_t>(test_ids[i]) * f);

    SparseMatrix a_norm = normalize_adjacency(bundle.graph);
    return fold_protocol(bundle, protocol, "A+X",
                         [&](const std::vector<int>& train_nodes,
                             const std::vector<int>& test_nodes, Rng init_rng, Rng drop_rng) {
                             return gcn_fold_accuracy(a_norm, &fused, labels, train_nodes,
                                                      test_nodes, bundle.num_classes, protocol,
                                                      init_rng, drop_rng);
                         });
}

MetricReport classify_structure_only(const DatasetBundle& bundle,
                                     const ClassifierProtocol& protocol) {
    const auto& labels = require_labels(bundle, "classify_structure_only");
    SparseMatrix a_norm = normalize_adjacency(bundle.graph);
    return fold_protocol(bundle, protocol, "A",
                         [&](const std::vector<int>& train_nodes,
                             const std::vector<int>& test_nodes, Rng init_rng, Rng drop_rng) {
                             return gcn_fold_accuracy(a_norm, nullptr, labels, train_nodes,
                                                      test_nodes, bundle.num_classes, protocol,
                                                      init_rng, drop_rng);
                         });
}

std::vector<MetricReport> profile(const DatasetBundle& bundle, const Tensor& generated,
                                  std::vector<int> ks) {
    if (bundle.attributes.kind() != AttrKind::categorical)
        throw UnsupportedSetting("profile: profiling needs categorical attributes");
    const auto& test_ids = bundle.split.test;
    if (generated.rows() != test_ids.size() || generated.cols() != bundle.attributes.dim())
        throw ShapeError("profile: generated matrix must be |test| x attr_dim");

    const int f = static_cast<int>(bundle.attributes.dim());
    if (ks.empty()) {
        for (int k : {10, 20, 50})
            if (k <= f) ks.push_back(k);
        if (ks.empty()) ks.push_back(f);
    }
    for (int k : ks)
        if (k < 1 || k > f)
            throw InvalidArgument("profile: k = " + std::to_string(k) + " outside [1, " +
                                  std::to_string(f) + "]");

    std::vector<MetricReport> reports;
    for (int k : ks) {
        std::vector<double> recalls, ndcgs;
        for (std::size_t i = 0; i < test_ids.size(); ++i) {
            std::span<const double> scores{generated.values().data() + i * generated.cols(),
                                           generated.cols()};
            auto truth = bundle.attributes.row(static_cast<std::size_t>(test_ids[i]));
            if (auto r = recall_at_k(scores, truth, k)) recalls.push_back(*r);
            if (auto n = ndcg_at_k(scores, truth, k)) ndcgs.push_back(*n);
        }
        for (const char* metric : {"recall", "ndcg"}) {
            MetricReport report;
            report.dataset = bundle.name;
            report.setting = "profiling";
            report.metric = metric;
            report.k = k;
            const auto& values = std::string(metric) == "recall" ? recalls : ndcgs;
            mean_std(values, report.mean, report.stddev);
            report.evaluations = static_cast<int>(values.size());
            reports.push_back(std::move(report));
        }
    }
    return reports;
}

// --- experiment matrix ---------------------------------------------------------------

std::string method_name(Method m) {
    switch (m) {
        case Method::nang: return "nang";
        case Method::nang_cross: return "nang-cross";
        case Method::nang_self: return "nang-self";
        case Method::neighaggre: return "neighaggre";
        case Method::vae: return "vae";
        case Method::gcn: return "gcn";
        case Method::random_scores: return "random";
        case Method::true_attrs: return "true";
    }
    return "nang";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::nang, Method::nang_cross, Method::nang_self, Method::neighaggre,
                     Method::vae, Method::gcn, Method::random_scores, Method::true_attrs})
        if (method_name(m) == name) return m;
    throw ConfigError("unknown method '" + name + "'");
}

std::string setting_name(Setting s) {
    switch (s) {
        case Setting::attrs_only: return "X";
        case Setting::structure_only: return "A";
        case Setting::fused: return "A+X";
        case Setting::profiling: return "profiling";
    }
    return "X";
}

Setting parse_setting(const std::string& name) {
    for (Setting s :
         {Setting::attrs_only, Setting::structure_only, Setting::fused, Setting::profiling})
        if (setting_name(s) == name) return s;
    throw ConfigError("unknown setting '" + name + "'");
}

namespace {

TrainConfig method_config(const ExperimentOptions& options, Method m) {
    auto it = options.method_overrides.find(method_name(m));
    TrainConfig cfg = it != options.method_overrides.end() ? it->second : options.train;
    switch (m) {
        case Method::nang_cross: cfg.ablation = Ablation::cross_only; break;
        case Method::nang_self: cfg.ablation = Ablation::self_only; break;
        default: break;
    }
    return cfg;
}

} // namespace

ExperimentResult run_experiment(const DatasetBundle& bundle, const std::vector<Method>& methods,
                                const std::vector<Setting>& settings,
                                const ExperimentOptions& options) {
    bundle.validate();
    ExperimentResult result;
    const auto& test_ids = bundle.split.test;
    SparseMatrix a_norm = normalize_adjacency(bundle.graph);

    const bool want_profiling =
        std::find(settings.begin(), settings.end(), Setting::profiling) != settings.end();
    if (want_profiling && bundle.attributes.kind() != AttrKind::categorical)
        throw UnsupportedSetting("run_experiment: profiling needs a categorical dataset");

    for (Method m : methods) {
        const std::string name = method_name(m);
        TrainConfig cfg = method_config(options, m);
        Tensor predictions;
        switch (m) {
            case Method::nang:
            case Method::nang_cross:
            case Method::nang_self: {
                auto [model, history] = train_nang(bundle, cfg);
                predictions = generate_attributes(model, a_norm, test_ids);
                result.histories[name] = std::move(history);
                break;
            }
            case Method::neighaggre: {
                predictions = neigh_aggre(bundle.graph, bundle.attributes,
                                          bundle.split.observed_mask(bundle.graph.node_count()),
                                          test_ids);
                break;
            }
            case Method::vae: {
                auto [model, history] = train_vae(bundle, cfg);
                predictions = vae_generate(model, bundle, test_ids);
                result.histories[name] = std::move(history);
                break;
            }
            case Method::gcn: {
                auto [model, history] = train_gcn_baseline(bundle, cfg);
                predictions = gcn_generate(model, a_norm, test_ids);
                result.histories[name] = std::move(history);
                break;
            }
            case Method::random_scores: {
                Rng rng = Rng(cfg.seed).derive(777);
                std::vector<double> values(test_ids.size() * bundle.attributes.dim());
                for (auto& v : values) v = rng.uniform();
                predictions = Tensor::from_values(test_ids.size(), bundle.attributes.dim(),
                                                  std::move(values));
                break;
            }
            case Method::true_attrs: {
                predictions = bundle.attributes.rows_tensor(test_ids);
                break;
            }
        }

        for (Setting s : settings) {
            switch (s) {
                case Setting::attrs_only: {
                    MetricReport report = classify_x(bundle, predictions, options.protocol);
                    report.method = name;
                    result.reports.push_back(std::move(report));
                    break;
                }
                case Setting::fused: {
                    MetricReport report = classify_fused(bundle, predictions, options.protocol);
                    report.method = name;
                    result.reports.push_back(std::move(report));
                    break;
                }
                case Setting::profiling: {
                    for (MetricReport report : profile(bundle, predictions, options.profile_ks)) {
                        report.method = name;
                        report.seed = cfg.seed;
                        result.reports.push_back(std::move(report));
                    }
                    break;
                }
                case Setting::structure_only:
                    break; // method-independent, handled once below
            }
        }
        result.predictions[name] = std::move(predictions);
    }

    if (std::find(settings.begin(), settings.end(), Setting::structure_only) != settings.end()) {
        MetricReport report = classify_structure_only(bundle, options.protocol);
        report.method = "structure";
        result.reports.push_back(std::move(report));
    }

    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        write_reports_csv(result.reports, options.out_dir + "/reports.csv");
        write_reports_json(result.reports, options.out_dir + "/reports.json");
        for (const auto& [name, history] : result.histories)
            write_curves_csv(history, options.out_dir + "/curves-" + name + ".csv");
    }
    return result;
}

DatasetBundle with_observed_ratio(const DatasetBundle& bundle, double train_ratio,
                                  std::uint64_t seed) {
    if (train_ratio <= 0.0 || train_ratio >= 0.9)
        throw InvalidArgument("with_observed_ratio: train ratio must lie in (0, 0.9)");
    DatasetBundle out = bundle;
    Rng rng(seed);
    out.split = split_nodes(bundle.graph.node_count(),
                            SplitRatios{train_ratio, 0.10, 0.90 - train_ratio}, rng);
    out.validate();
    return out;
}

// --- report files -------------------------------------------------------------------------

namespace {

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

void write_reports_csv(const std::vector<MetricReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "method,dataset,setting,metric,k,mean,std,evaluations,seed\n";
    for (const auto& r : reports)
        out << r.method << "," << r.dataset << "," << r.setting << "," << r.metric << "," << r.k
            << "," << format_metric(r.mean) << "," << format_metric(r.stddev) << ","
            << r.evaluations << "," << r.seed << "\n";
}

void write_reports_json(const std::vector<MetricReport>& reports, const std::string& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : reports) {
        doc.push_back({{"method", r.method},
                       {"dataset", r.dataset},
                       {"setting", r.setting},
                       {"metric", r.metric},
                       {"k", r.k},
                       {"mean", r.mean},
                       {"std", r.stddev},
                       {"evaluations", r.evaluations},
                       {"seed", r.seed}});
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << doc.dump(2) << "\n";
}

void write_curves_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "epoch,joint_loss,gan_loss,disc_loss,val_metric,mmd\n";
    for (const auto& r : history)
        out << r.epoch << "," << format_metric(r.joint_loss) << "," << format_metric(r.gan_loss)
            << "," << format_metric(r.disc_loss) << "," << format_metric(r.val_metric) << ","
            << format_metric(r.mmd) << "\n";
}

} // namespace nang
