#pragma once
// Command-line front end. Exit codes: 0 ok, 1 usage, 2 data/file error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ikrl/ikrl.hpp"

namespace ikrl::cli {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string train, valid, test, entities, relations;
    std::string features, config, checkpoint, out;
    std::string valid_neg, test_neg;
    std::string mode = "ibr";
    double alpha = 0.5;
    std::optional<std::string> agg, norm, model;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch_size, dim;
    std::optional<double> margin, lr_start, lr_end;
    std::size_t threads = 0;
    std::string slots = "both";
    std::string entity, a, b;
    SynthConfig synth;
};

inline Dataset load_dataset(const Options& o) {
    Dataset ds;
    if (!o.entities.empty()) load_names(o.entities, ds.vocab.entities);
    if (!o.relations.empty()) load_names(o.relations, ds.vocab.relations);
    if (o.train.empty()) throw UsageError("--train is required");
    ds.train = load_triples(o.train, ds.vocab);
    if (!o.valid.empty()) ds.valid = load_triples(o.valid, ds.vocab);
    if (!o.test.empty()) ds.test = load_triples(o.test, ds.vocab);
    ds.rebuild_all_true();
    return ds;
}

// Config file first, then explicit flags on top.
inline TrainConfig resolve_config(const Options& o) {
    TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_config(o.config);
    try {
        if (o.agg) cfg.aggregation = parse_aggregation(*o.agg);
        if (o.norm) cfg.norm = parse_norm(*o.norm);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (o.model) {
        if (*o.model == "ikrl") cfg.model = EnergyModel::Ikrl;
        else if (*o.model == "transe") cfg.model = EnergyModel::TransE;
        else throw UsageError("--model must be ikrl or transe");
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.batch_size) cfg.batch_size = *o.batch_size;
    if (o.dim) cfg.dim = *o.dim;
    if (o.margin) cfg.margin = *o.margin;
    if (o.lr_start) cfg.lr_start = *o.lr_start;
    if (o.lr_end) cfg.lr_end = *o.lr_end;
    cfg.threads = o.threads;
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

inline ScoringMode resolve_mode(const Options& o) {
    if (o.mode == "sbr") return ScoringMode::sbr();
    if (o.mode == "ibr") return ScoringMode::ibr();
    if (o.mode == "union") {
        if (!(o.alpha >= 0.0 && o.alpha <= 1.0)) throw UsageError("--alpha must be in [0,1]");
        return ScoringMode::union_of(o.alpha);
    }
    throw UsageError("--mode must be sbr, ibr or union");
}

inline FeatureStore load_store(const Options& o, bool required) {
    if (o.features.empty()) {
        if (required) throw UsageError("--features is required");
        return {};
    }
    return read_features(o.features);
}

inline ModelParams load_model(const Options& o, const Dataset& ds) {
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
    ModelParams p = load_checkpoint(o.checkpoint);
    if (p.num_entities() != ds.num_entities() || p.num_relations() != ds.num_relations())
        throw FormatError(o.checkpoint + ": checkpoint has " + std::to_string(p.num_entities()) + " entities and " +
                          std::to_string(p.num_relations()) + " relations, data has " +
                          std::to_string(ds.num_entities()) + " and " + std::to_string(ds.num_relations()));
    if (!p.finite()) throw NumericError(o.checkpoint + ": checkpoint contains non-finite values");
    return p;
}

inline void check_image_dim(const FeatureStore& store, const ModelParams& p) {
    if (store.image_dim() != p.image_dim())
        throw FormatError("feature dimension " + std::to_string(store.image_dim()) +
                          " does not match checkpoint projection width " + std::to_string(p.image_dim()));
}

inline int cmd_synth(const Options& o, std::ostream& out) {
    if (o.out.empty()) throw UsageError("--out is required");
    SynthConfig sc = o.synth;
    if (o.seed) sc.seed = *o.seed;
    const SynthData data = generate(sc);
    write_synthetic(o.out, data, sc.seed);
    out << "wrote " << data.dataset.train.size() << " train, " << data.dataset.valid.size() << " valid, "
        << data.dataset.test.size() << " test triples to " << o.out << '\n';
    return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out) {
    if (o.out.empty()) throw UsageError("--out is required");
    const Dataset ds = load_dataset(o);
    TrainConfig cfg = resolve_config(o);
    const bool ikrl = cfg.model == EnergyModel::Ikrl;
    const FeatureStore store = load_store(o, ikrl);
    if (ikrl) cfg.image_dim = store.image_dim();
    auto [params, report] = train(ds, store, cfg, &out);
    save_checkpoint(o.out, params);
    out << "checkpoint=" << o.out << '\n';
    return kOk;
}

inline int cmd_eval_link(const Options& o, std::ostream& out) {
    const Dataset ds = load_dataset(o);
    if (ds.test.empty()) throw UsageError("--test is required and must be non-empty");
    const TrainConfig cfg = resolve_config(o);
    const ScoringMode mode = resolve_mode(o);
    const ModelParams p = load_model(o, ds);
    const FeatureStore store = load_store(o, mode.needs_images());
    if (mode.needs_images()) check_image_dim(store, p);
    PredictSlots slots = PredictSlots::Both;
    if (o.slots == "head") slots = PredictSlots::Head;
    else if (o.slots == "tail") slots = PredictSlots::Tail;
    else if (o.slots != "both") throw UsageError("--slots must be head, tail or both");
    const auto rep = predict_entities(ds, p, store, mode, cfg.aggregation, cfg.norm, slots, cfg.threads);
    write_table(out, rep);
    write_metric_lines(out, rep);
    return kOk;
}

inline int cmd_eval_classify(const Options& o, std::ostream& out) {
    const Dataset ds = load_dataset(o);
    const TrainConfig cfg = resolve_config(o);
    const ScoringMode mode = resolve_mode(o);
    const ModelParams p = load_model(o, ds);
    const FeatureStore store = load_store(o, mode.needs_images());
    if (mode.needs_images()) check_image_dim(store, p);

    // Negatives come from files when given (names must already be in the vocabulary).
    Vocabulary vocab = ds.vocab;
    auto negatives = [&](const std::string& path, const std::vector<Triple>& pos, Rng& rng) {
        if (path.empty()) return classification_negatives(pos, ds.num_entities(), ds.all_true, rng);
        auto neg = load_triples(path, vocab);
        if (vocab.entities.size() != ds.num_entities() || vocab.relations.size() != ds.num_relations())
            throw FormatError(path + ": negatives mention names outside the vocabulary");
        return neg;
    };
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const auto vneg = negatives(o.valid_neg, ds.valid, rng);
    const auto tneg = negatives(o.test_neg, ds.test, rng);

    const Scorer score(p, store, mode, cfg.aggregation, cfg.norm);
    const auto rep = classify_triples(ds.valid, vneg, ds.test, tneg, score, ds.num_relations());
    out << std::setprecision(10);
    for (std::size_t r = 0; r < rep.thresholds.size(); ++r)
        out << "threshold." << ds.vocab.relations.name_of(r) << '=' << rep.thresholds[r]
            << (rep.from_validation[r] ? "" : "  # global fallback") << '\n';
    out << "metric.classify." << mode.name() << ".valid_accuracy=" << rep.valid_accuracy << '\n';
    out << "metric.classify." << mode.name() << ".accuracy=" << rep.test_accuracy << '\n';
    return kOk;
}

inline std::size_t entity_index(const Dataset& ds, const std::string& name) {
    if (!ds.vocab.entities.contains(name)) throw UsageError("unknown entity '" + name + "'");
    return ds.vocab.entities.lookup(name);
}

inline int cmd_probe(const Options& o, std::ostream& out) {
    const Dataset ds = load_dataset(o);
    const TrainConfig cfg = resolve_config(o);
    const ModelParams p = load_model(o, ds);
    const FeatureStore store = load_store(o, true);
    check_image_dim(store, p);
    const auto ranked = regularity_probe(entity_index(ds, o.a), entity_index(ds, o.b), p, store, cfg.aggregation, cfg.norm);
    out << std::setprecision(10);
    for (std::size_t i = 0; i < ranked.size(); ++i)
        out << "rank=" << i + 1 << " relation=" << ds.vocab.relations.name_of(ranked[i].relation)
            << " distance=" << ranked[i].distance << '\n';
    return kOk;
}

inline int cmd_inspect(const Options& o, std::ostream& out) {
    const Dataset ds = load_dataset(o);
    const TrainConfig cfg = resolve_config(o);
    const ModelParams p = load_model(o, ds);
    const FeatureStore store = load_store(o, true);
    check_image_dim(store, p);
    out << std::setprecision(10);
    for (const auto& e : inspect_attention(entity_index(ds, o.entity), p, store))
        out << "image=" << e.image << " weight=" << e.weight << '\n';
    return kOk;
}

// Tab-separated "name v1 v2 ..." rows.
inline int cmd_export(const Options& o, std::ostream& out) {
    if (o.out.empty()) throw UsageError("--out is required");
    const Dataset ds = load_dataset(o);
    const TrainConfig cfg = resolve_config(o);
    const ModelParams p = load_model(o, ds);
    namespace fs = std::filesystem;
    fs::create_directories(o.out);
    auto table = [&](const std::string& file, const NameIndex& names, const Matrix& m) {
        std::ostringstream s;
        s << std::setprecision(9);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            s << names.name_of(i);
            for (double x : m.row(i)) s << '\t' << x;
            s << '\n';
        }
        write_file_atomic((fs::path(o.out) / file).string(), s.str());
        out << "wrote " << (fs::path(o.out) / file).string() << '\n';
    };
    table("entity_sbr.tsv", ds.vocab.entities, p.entities);
    table("relations.tsv", ds.vocab.relations, p.relations);
    if (!o.features.empty()) {
        const FeatureStore store = load_store(o, true);
        check_image_dim(store, p);
        table("entity_ibr.tsv", ds.vocab.entities, all_entity_ibr(p, store, cfg.aggregation));
    }
    return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Image-embodied knowledge graph embeddings"};
    app.require_subcommand(1);
    Options o;

    auto data_flags = [&](CLI::App* c) {
        c->add_option("--train", o.train, "training triples (head<TAB>relation<TAB>tail)");
        c->add_option("--valid", o.valid, "validation triples");
        c->add_option("--test", o.test, "test triples");
        c->add_option("--entities", o.entities, "entity names, one per line, fixing index order");
        c->add_option("--relations", o.relations, "relation names, one per line");
        c->add_option("--features", o.features, "IKRLFEAT feature file");
        c->add_option("--config", o.config, "training config (key = value)");
        c->add_option("--agg", o.agg, "att|avg|max");
        c->add_option("--norm", o.norm, "l1|l2");
        c->add_option("--seed", o.seed, "random seed");
        c->add_option("--threads", o.threads, "worker threads, 0 = all logical cores");
    };
    auto model_flags = [&](CLI::App* c) {
        data_flags(c);
        c->add_option("--checkpoint", o.checkpoint, "IKRLMODL checkpoint");
        c->add_option("--mode", o.mode, "sbr|ibr|union");
        c->add_option("--alpha", o.alpha, "union weight on the structure-based score");
    };

    auto* synth = app.add_subcommand("synth", "generate a planted synthetic dataset");
    synth->add_option("--out", o.out, "output directory")->required();
    synth->add_option("--seed", o.seed);
    synth->add_option("--n-entities", o.synth.n_entities);
    synth->add_option("--n-relations", o.synth.n_relations);
    synth->add_option("--dim", o.synth.dim);
    synth->add_option("--image-dim", o.synth.image_dim);
    synth->add_option("--triples-per-relation", o.synth.triples_per_relation);
    synth->add_option("--images", o.synth.images_per_entity);
    synth->add_option("--noise-images", o.synth.noise_images_per_entity);
    synth->add_option("--sigma", o.synth.feature_noise_sigma);

    auto* train_cmd = app.add_subcommand("train", "train IKRL (or TransE with --model transe)");
    data_flags(train_cmd);
    train_cmd->add_option("--out", o.out, "checkpoint path")->required();
    train_cmd->add_option("--model", o.model, "ikrl|transe");
    train_cmd->add_option("--epochs", o.epochs);
    train_cmd->add_option("--batch-size", o.batch_size);
    train_cmd->add_option("--dim", o.dim);
    train_cmd->add_option("--margin", o.margin);
    train_cmd->add_option("--lr-start", o.lr_start);
    train_cmd->add_option("--lr-end", o.lr_end);

    auto* link = app.add_subcommand("eval-link", "entity prediction: mean rank and hits@10");
    model_flags(link);
    link->add_option("--slots", o.slots, "head|tail|both");

    auto* classify = app.add_subcommand("eval-classify", "triple classification with per-relation thresholds");
    model_flags(classify);
    classify->add_option("--valid-neg", o.valid_neg, "validation negatives (generated from --seed if absent)");
    classify->add_option("--test-neg", o.test_neg, "test negatives (generated from --seed if absent)");

    auto* probe = app.add_subcommand("probe", "rank relations by distance to e_I(a) - e_I(b)");
    model_flags(probe);
    probe->add_option("--a", o.a)->required();
    probe->add_option("--b", o.b)->required();

    auto* inspect = app.add_subcommand("inspect-attention", "attention weights of an entity's images");
    model_flags(inspect);
    inspect->add_option("--entity", o.entity)->required();

    auto* exporter = app.add_subcommand("export", "write embeddings as TSV");
    model_flags(exporter);
    exporter->add_option("--out", o.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return cmd_synth(o, out);
        if (*train_cmd) return cmd_train(o, out);
        if (*link) return cmd_eval_link(o, out);
        if (*classify) return cmd_eval_classify(o, out);
        if (*probe) return cmd_probe(o, out);
        if (*inspect) return cmd_inspect(o, out);
        if (*exporter) return cmd_export(o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

}  // namespace ikrl::cli
