// Batch pipeline driver: generate benchmarks, train, evaluate, run the
// linear baseline, and inspect single series. Exit codes: 0 success, 1
// runtime or numeric failure, 2 usage error.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ingra/checkpoint.hpp"
#include "ingra/config_file.hpp"
#include "ingra/data.hpp"
#include "ingra/error.hpp"
#include "ingra/metrics.hpp"
#include "ingra/model.hpp"
#include "ingra/pipeline.hpp"
#include "ingra/run_io.hpp"
#include "ingra/training.hpp"
#include "ingra/version.hpp"

namespace fs = std::filesystem;
using namespace ingra;

namespace {

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::map<std::string, std::string> config_map(const ModelConfig& cfg) {
    return {
        {"num_variables", std::to_string(cfg.num_variables)},
        {"target_index", std::to_string(cfg.target_index)},
        {"window_length", std::to_string(cfg.window_length)},
        {"hidden_size", std::to_string(cfg.hidden_size)},
        {"num_prototypes", std::to_string(cfg.num_prototypes)},
        {"alpha", fmt(cfg.alpha)},
        {"tau", fmt(cfg.tau)},
        {"lambda1", fmt(cfg.lambda1)},
        {"lambda2", fmt(cfg.lambda2)},
        {"gamma", fmt(cfg.gamma)},
        {"batch_size", std::to_string(cfg.batch_size)},
        {"learning_rate", fmt(cfg.learning_rate)},
        {"pretrain_epochs", std::to_string(cfg.pretrain_epochs)},
        {"train_epochs", std::to_string(cfg.train_epochs)},
        {"seed", std::to_string(cfg.seed)},
    };
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<const MtsSample*> split_samples(const Benchmark& bench, const std::string& split) {
    const auto& indices = split == "train" ? bench.train_indices : bench.unseen_indices;
    std::vector<const MtsSample*> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(&bench.samples[i]);
    return out;
}

std::vector<std::string> requested_splits(const std::string& split, const Benchmark& bench) {
    if (split == "train" || split == "unseen") {
        if (split_samples(bench, split).empty())
            throw ConfigError("dataset has no individuals in the " + split + " split");
        return {split};
    }
    if (split != "both") throw ConfigError("unknown split '" + split + "' (train|unseen|both)");
    std::vector<std::string> out;
    if (!bench.train_indices.empty()) out.push_back("train");
    if (!bench.unseen_indices.empty()) out.push_back("unseen");
    if (out.empty()) throw ConfigError("dataset has no individuals");
    return out;
}

std::string checkpoint_path(const std::string& model_arg) {
    fs::path p(model_arg);
    if (fs::is_directory(p)) return (p / "model.ckpt").string();
    return model_arg;
}

// generate ------------------------------------------------------------

struct GenerateArgs {
    BenchmarkSpec spec;
    std::string out;
    bool force = false;
};

int run_generate(const GenerateArgs& args) {
    auto start = std::chrono::steady_clock::now();
    prepare_out_dir(args.out, args.force);
    Benchmark bench = make_benchmark(args.spec);
    save_dataset(bench, args.out);

    RunManifest manifest;
    manifest.command = "generate";
    manifest.config = {
        {"structures", std::to_string(args.spec.structures)},
        {"per_structure", std::to_string(args.spec.per_structure)},
        {"exo_vars", std::to_string(args.spec.exo_vars)},
        {"length", std::to_string(args.spec.length)},
        {"lag", std::to_string(args.spec.lag)},
        {"narma_order", std::to_string(args.spec.narma_order)},
        {"noise_std", fmt(args.spec.noise_std)},
    };
    manifest.seed = args.spec.seed;
    manifest.out_dir = args.out;
    manifest.tool_version = kToolVersion;
    manifest.wall_seconds = elapsed_seconds(start);
    write_run_manifest(manifest);

    std::printf("generated %zu individuals (train %zu / unseen %zu) under %s\n",
                bench.samples.size(), bench.train_indices.size(), bench.unseen_indices.size(),
                args.out.c_str());
    return 0;
}

// train ---------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config_path;
    bool force = false;
    ModelConfig flags; // values only meaningful where *_set below
    bool alpha_set = false, protos_set = false, epochs_set = false, pretrain_set = false;
    bool seed_set = false, window_set = false, hidden_set = false, batch_set = false;
    bool lr_set = false, tau_set = false, l1_set = false, l2_set = false, gamma_set = false;
};

int run_train(const TrainArgs& args) {
    auto start = std::chrono::steady_clock::now();
    Benchmark bench = load_dataset(args.data);
    std::vector<const MtsSample*> train = split_samples(bench, "train");
    if (train.empty()) throw ConfigError("dataset has no training individuals");

    Index s_count = train.front()->num_variables();
    Index target = train.front()->target_index;
    for (const MtsSample* s : train)
        if (s->num_variables() != s_count || s->target_index != target)
            throw ConfigError("training individuals disagree on variable count or target");

    ModelConfig cfg;
    if (!args.config_path.empty()) {
        auto entries = parse_config_file(args.config_path);
        apply_model_config(entries, cfg);
        if (entries.count("num_variables") && cfg.num_variables != s_count)
            throw ConfigError("config file num_variables=" + std::to_string(cfg.num_variables) +
                              " but dataset has " + std::to_string(s_count) + " variables");
    }
    cfg.num_variables = s_count;
    cfg.target_index = target;
    if (args.alpha_set) cfg.alpha = args.flags.alpha;
    if (args.protos_set) cfg.num_prototypes = args.flags.num_prototypes;
    if (args.epochs_set) cfg.train_epochs = args.flags.train_epochs;
    if (args.pretrain_set) cfg.pretrain_epochs = args.flags.pretrain_epochs;
    if (args.seed_set) cfg.seed = args.flags.seed;
    if (args.window_set) cfg.window_length = args.flags.window_length;
    if (args.hidden_set) cfg.hidden_size = args.flags.hidden_size;
    if (args.batch_set) cfg.batch_size = args.flags.batch_size;
    if (args.lr_set) cfg.learning_rate = args.flags.learning_rate;
    if (args.tau_set) cfg.tau = args.flags.tau;
    if (args.l1_set) cfg.lambda1 = args.flags.lambda1;
    if (args.l2_set) cfg.lambda2 = args.flags.lambda2;
    if (args.gamma_set) cfg.gamma = args.flags.gamma;
    cfg.validate();

    prepare_out_dir(args.out, args.force);

    IngraModel model(cfg);
    Trainer trainer(model, train);
    trainer.run();
    const TrainReport& report = trainer.report();

    write_training_log(report.epochs, (fs::path(args.out) / "training_log.csv").string());
    save_checkpoint(model, (fs::path(args.out) / "model.ckpt").string());
    if (trainer.has_best()) {
        // second artifact: the main-phase epoch with the lowest total loss
        trainer.restore_best();
        save_checkpoint(model, (fs::path(args.out) / "model_best.ckpt").string());
    }

    RunManifest manifest;
    manifest.command = "train";
    manifest.config = config_map(cfg);
    manifest.seed = cfg.seed;
    manifest.inputs = {args.data};
    if (!args.config_path.empty()) manifest.inputs.push_back(args.config_path);
    manifest.out_dir = args.out;
    manifest.tool_version = kToolVersion;
    manifest.wall_seconds = elapsed_seconds(start);
    write_run_manifest(manifest);

    if (report.aborted) {
        std::fprintf(stderr, "training aborted: %s\n", report.abort_reason.c_str());
        std::fprintf(stderr, "checkpoint holds the best finished epoch instead\n");
        return 1;
    }
    std::printf("trained %zu epochs on %zu individuals; best epoch %ld (total %s); model at %s\n",
                report.epochs.size(), train.size(), static_cast<long>(report.best_epoch),
                fmt(report.best_total).c_str(),
                (fs::path(args.out) / "model.ckpt").string().c_str());
    if (report.invariants.violations != 0) {
        std::fprintf(stderr, "attention invariant violations: %ld\n",
                     static_cast<long>(report.invariants.violations));
        return 1;
    }
    return 0;
}

// eval ----------------------------------------------------------------

struct EvalArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string split = "both";
    std::string score = "mixed";
    bool export_attention = false;
    bool export_prototypes = false;
    bool force = false;
};

int run_eval(const EvalArgs& args) {
    auto start = std::chrono::steady_clock::now();
    IngraModel model = load_checkpoint(checkpoint_path(args.model));
    Benchmark bench = load_dataset(args.data);

    Index s_count = bench.samples.front().num_variables();
    if (model.config().num_variables != s_count)
        throw ConfigError("checkpoint expects " + std::to_string(model.config().num_variables) +
                          " variables but the dataset has " + std::to_string(s_count));
    if (model.config().target_index != bench.samples.front().target_index)
        throw ConfigError("checkpoint and dataset disagree on the target variable");

    ScoreSource source;
    if (args.score == "mixed") source = ScoreSource::mixed;
    else if (args.score == "direct") source = ScoreSource::direct;
    else throw ConfigError("unknown score source '" + args.score + "' (mixed|direct)");

    prepare_out_dir(args.out, args.force);
    int threads = thread_cap();

    for (const std::string& split : requested_splits(args.split, bench)) {
        std::vector<const MtsSample*> samples = split_samples(bench, split);
        std::vector<AttentionRecord> records = collect_attention(model, samples, threads);
        EvalReport report = score_structures(samples, records, model.config().target_index,
                                             source, model.config(), split);
        fs::path base = fs::path(args.out) / ("eval_" + split);
        atomic_write_file(base.string() + ".json", eval_report_to_json(report));
        write_eval_csv(report, base.string() + ".csv");
        std::printf("%s: %s over %zu individuals\n", split.c_str(),
                    aggregate_line(report).c_str(), report.rows.size());
        if (args.export_attention)
            write_attention_csv(samples, records, samples.front()->var_names,
                                (fs::path(args.out) / ("attention_" + split + ".csv")).string());
    }
    if (args.export_prototypes)
        write_prototype_csv(model, bench.samples.front().var_names,
                            (fs::path(args.out) / "prototypes.csv").string());

    RunManifest manifest;
    manifest.command = "eval";
    manifest.config = config_map(model.config());
    manifest.config["split"] = args.split;
    manifest.config["score_source"] = args.score;
    manifest.config["threads"] = std::to_string(threads);
    manifest.seed = model.config().seed;
    manifest.inputs = {args.model, args.data};
    manifest.out_dir = args.out;
    manifest.tool_version = kToolVersion;
    manifest.wall_seconds = elapsed_seconds(start);
    write_run_manifest(manifest);
    return 0;
}

// baseline ------------------------------------------------------------

struct BaselineArgs {
    std::string data;
    std::string out;
    Index maxlag = 5;
    double significance = 0.05;
    std::string split = "both";
    bool force = false;
};

int run_baseline(const BaselineArgs& args) {
    auto start = std::chrono::steady_clock::now();
    Benchmark bench = load_dataset(args.data);
    prepare_out_dir(args.out, args.force);
    int threads = thread_cap();

    for (const std::string& split : requested_splits(args.split, bench)) {
        std::vector<const MtsSample*> samples = split_samples(bench, split);
        EvalReport report = baseline_report(samples, args.maxlag, args.significance, split,
                                            threads);
        fs::path base = fs::path(args.out) / ("baseline_" + split);
        atomic_write_file(base.string() + ".json", eval_report_to_json(report));
        write_eval_csv(report, base.string() + ".csv");
        std::printf("%s: %s over %zu individuals", split.c_str(), aggregate_line(report).c_str(),
                    report.rows.size());
        if (!report.skipped.empty())
            std::printf(" (%zu skipped)", report.skipped.size());
        std::printf("\n");
    }

    RunManifest manifest;
    manifest.command = "baseline";
    manifest.config = {
        {"maxlag", std::to_string(args.maxlag)},
        {"significance", fmt(args.significance)},
        {"split", args.split},
        {"threads", std::to_string(threads)},
    };
    manifest.inputs = {args.data};
    manifest.out_dir = args.out;
    manifest.tool_version = kToolVersion;
    manifest.wall_seconds = elapsed_seconds(start);
    write_run_manifest(manifest);
    return 0;
}

// infer ---------------------------------------------------------------

struct InferArgs {
    std::string model;
    std::string input;
    std::string target;
    std::string out;
    bool force = false;
};

int run_infer(const InferArgs& args) {
    auto start = std::chrono::steady_clock::now();
    IngraModel model = load_checkpoint(checkpoint_path(args.model));
    MtsSample sample = load_csv(args.input, args.target);
    if (sample.num_variables() != model.config().num_variables)
        throw ConfigError("checkpoint expects " + std::to_string(model.config().num_variables) +
                          " variables but " + args.input + " has " +
                          std::to_string(sample.num_variables()));
    sample.id = fs::path(args.input).stem().string();

    prepare_out_dir(args.out, args.force);
    BatchWork work;
    AttentionRecord rec = model.aggregate_attention(sample, work);

    auto windows = window_series(sample, model.config().window_length);
    std::string preds = "offset,y,yhat\n";
    for (const WindowedExample& ex : windows) {
        auto [yhat, unused] = model.infer(ex, Mode::inference);
        preds += std::to_string(ex.offset) + "," + fmt(ex.target_next()) + "," + fmt(yhat) + "\n";
    }
    atomic_write_file((fs::path(args.out) / "predictions.csv").string(), preds);

    nlohmann::json j;
    j["id"] = sample.id;
    j["variables"] = sample.var_names;
    j["prototype"] = rec.prototype_index;
    j["q"] = std::vector<double>(rec.q.data(), rec.q.data() + rec.q.size());
    j["r"] = std::vector<double>(rec.r.data(), rec.r.data() + rec.r.size());
    j["a"] = std::vector<double>(rec.a.data(), rec.a.data() + rec.a.size());
    atomic_write_file((fs::path(args.out) / "attention.json").string(), j.dump(2) + "\n");

    Index top = 0;
    rec.a.maxCoeff(&top);
    std::printf("%s: strongest attention on %s (a=%s) over %zu windows\n", sample.id.c_str(),
                sample.var_names[static_cast<std::size_t>(top)].c_str(), fmt(rec.a(top)).c_str(),
                windows.size());

    RunManifest manifest;
    manifest.command = "infer";
    manifest.config = config_map(model.config());
    manifest.seed = model.config().seed;
    manifest.inputs = {args.model, args.input};
    manifest.out_dir = args.out;
    manifest.tool_version = kToolVersion;
    manifest.wall_seconds = elapsed_seconds(start);
    write_run_manifest(manifest);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ingra: Granger-causal attention over heterogeneous time series"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    GenerateArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("generate", "synthesize a benchmark dataset");
    cmd_gen->add_option("--structures", gen.spec.structures, "number of causal structures");
    cmd_gen->add_option("--per-structure", gen.spec.per_structure, "individuals per structure");
    cmd_gen->add_option("--vars", gen.spec.exo_vars, "exogenous variables per individual");
    cmd_gen->add_option("--len", gen.spec.length, "series length");
    cmd_gen->add_option("--lag", gen.spec.lag, "causal lag window");
    cmd_gen->add_option("--narma-order", gen.spec.narma_order, "NARMA order");
    cmd_gen->add_option("--noise-std", gen.spec.noise_std, "noise standard deviation");
    cmd_gen->add_option("--seed", gen.spec.seed, "master seed");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();
    cmd_gen->add_flag("--force", gen.force, "overwrite a non-empty output directory");

    TrainArgs tr;
    CLI::App* cmd_tr = app.add_subcommand("train", "train a model on a dataset's train split");
    cmd_tr->add_option("--data", tr.data, "dataset directory")->required();
    cmd_tr->add_option("--out", tr.out, "output directory")->required();
    cmd_tr->add_option("--config", tr.config_path, "key=value config file");
    auto* o_alpha = cmd_tr->add_option("--alpha", tr.flags.alpha, "direct-attention share");
    auto* o_protos = cmd_tr->add_option("--prototypes", tr.flags.num_prototypes, "prototype count");
    auto* o_epochs = cmd_tr->add_option("--epochs", tr.flags.train_epochs, "main-phase epochs");
    auto* o_pre = cmd_tr->add_option("--pretrain-epochs", tr.flags.pretrain_epochs,
                                     "attribution pretraining epochs");
    auto* o_seed = cmd_tr->add_option("--seed", tr.flags.seed, "master seed");
    auto* o_window = cmd_tr->add_option("--window", tr.flags.window_length, "input window length");
    auto* o_hidden = cmd_tr->add_option("--hidden", tr.flags.hidden_size, "encoder hidden size");
    auto* o_batch = cmd_tr->add_option("--batch", tr.flags.batch_size, "SGD batch size");
    auto* o_lr = cmd_tr->add_option("--lr", tr.flags.learning_rate, "learning rate");
    auto* o_tau = cmd_tr->add_option("--tau", tr.flags.tau, "selection temperature");
    auto* o_l1 = cmd_tr->add_option("--lambda1", tr.flags.lambda1, "auxiliary loss weight");
    auto* o_l2 = cmd_tr->add_option("--lambda2", tr.flags.lambda2, "diversity loss weight");
    auto* o_gamma = cmd_tr->add_option("--gamma", tr.flags.gamma, "diversity floor");
    cmd_tr->add_flag("--force", tr.force, "overwrite a non-empty output directory");

    EvalArgs ev;
    CLI::App* cmd_ev = app.add_subcommand("eval", "score a trained model against ground truth");
    cmd_ev->add_option("--model", ev.model, "checkpoint file or training output directory")
        ->required();
    cmd_ev->add_option("--data", ev.data, "dataset directory")->required();
    cmd_ev->add_option("--out", ev.out, "output directory")->required();
    cmd_ev->add_option("--split", ev.split, "train|unseen|both");
    cmd_ev->add_option("--score", ev.score, "ranking vector: mixed|direct");
    cmd_ev->add_flag("--export-attention", ev.export_attention, "write per-individual q/r/a");
    cmd_ev->add_flag("--export-prototypes", ev.export_prototypes, "write the prototype matrix");
    cmd_ev->add_flag("--force", ev.force, "overwrite a non-empty output directory");

    BaselineArgs bl;
    CLI::App* cmd_bl = app.add_subcommand("baseline", "linear Granger F-test baseline");
    cmd_bl->add_option("--data", bl.data, "dataset directory")->required();
    cmd_bl->add_option("--out", bl.out, "output directory")->required();
    cmd_bl->add_option("--maxlag", bl.maxlag, "maximum lag order for AIC selection");
    cmd_bl->add_option("--significance", bl.significance, "F-test significance level");
    cmd_bl->add_option("--split", bl.split, "train|unseen|both");
    cmd_bl->add_flag("--force", bl.force, "overwrite a non-empty output directory");

    InferArgs in;
    CLI::App* cmd_in = app.add_subcommand("infer", "attention and predictions for one CSV");
    cmd_in->add_option("--model", in.model, "checkpoint file or training output directory")
        ->required();
    cmd_in->add_option("--input", in.input, "CSV series")->required();
    cmd_in->add_option("--target", in.target, "target column name (default: 'target')");
    cmd_in->add_option("--out", in.out, "output directory")->required();
    cmd_in->add_flag("--force", in.force, "overwrite a non-empty output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_gen->parsed()) return run_generate(gen);
        if (cmd_tr->parsed()) {
            tr.alpha_set = o_alpha->count() > 0;
            tr.protos_set = o_protos->count() > 0;
            tr.epochs_set = o_epochs->count() > 0;
            tr.pretrain_set = o_pre->count() > 0;
            tr.seed_set = o_seed->count() > 0;
            tr.window_set = o_window->count() > 0;
            tr.hidden_set = o_hidden->count() > 0;
            tr.batch_set = o_batch->count() > 0;
            tr.lr_set = o_lr->count() > 0;
            tr.tau_set = o_tau->count() > 0;
            tr.l1_set = o_l1->count() > 0;
            tr.l2_set = o_l2->count() > 0;
            tr.gamma_set = o_gamma->count() > 0;
            return run_train(tr);
        }
        if (cmd_ev->parsed()) return run_eval(ev);
        if (cmd_bl->parsed()) return run_baseline(bl);
        if (cmd_in->parsed()) return run_infer(in);
        std::fprintf(stderr, "usage error: no subcommand\n");
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
