// Command-line front end: dataset synthesis, sampling inspection, training,
// prediction, evaluation and gradient checking.
//
// Exit codes: 0 success, 1 check failure, 2 usage/validation error,
// 3 runtime abort (non-finite loss; last checkpoint is retained).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ssdgl/gradcheck_suite.hpp"
#include "ssdgl/metrics.hpp"
#include "ssdgl/predict.hpp"
#include "ssdgl/trainer.hpp"

namespace fs = std::filesystem;
using namespace ssdgl;

namespace {

struct SeedOverride {
    bool set = false;
    std::uint64_t value = 0;
};

RunConfig load_config(const std::string& path, const SeedOverride& seed, bool* defaulted = nullptr) {
    RunConfig cfg;
    if (!path.empty()) cfg = RunConfig::parse_file(path);
    if (defaulted) *defaulted = path.empty();
    if (seed.set) cfg.seed = seed.value;
    return cfg;
}

int cmd_synth(std::uint64_t seed, int height, int width, int bands, int classes,
              std::vector<double> fractions, const std::string& out_dir) {
    if (fractions.empty()) fractions.assign(std::size_t(classes), 0.9 / double(classes));
    auto [cube, labels] = synth_cube(seed, height, width, bands, classes, fractions);
    fs::create_directories(out_dir);
    save_cube(cube, out_dir + "/cube.hsic");
    save_labels(labels, out_dir + "/labels.hsig");
    std::cout << "wrote " << out_dir << "/cube.hsic (" << height << "x" << width << "x" << bands
              << ") and labels.hsig (" << labels.labeled_count() << " labeled pixels, " << classes
              << " classes)\n";
    return 0;
}

int cmd_sample(const std::string& labels_path, const std::string& config_path,
               const SeedOverride& seed, const std::string& out_dir) {
    const RunConfig cfg = load_config(config_path, seed);
    const LabelRaster labels = load_labels(labels_path);
    const SampleSplit sp = cfg.train_count > 0
                               ? split_count(labels, cfg.train_count, cfg.split_seed())
                               : split_ratio(labels, cfg.lambda, cfg.min_train, cfg.split_seed());
    const int alpha = cfg.use_hbwl ? cfg.alpha_strata : 1;
    const HierarchicalSchedule sched = build_schedule(sp, alpha, cfg.beta, cfg.schedule_seed());
    ClassWeights cw;
    if (cfg.use_hbwl) {
        std::vector<long long> counts;
        for (int c : sp.train_counts()) counts.push_back(c);
        cw = class_weights(counts, cfg.delta);
    } else {
        cw = ClassWeights::uniform(sp.num_classes);
    }

    fs::create_directories(out_dir);
    for (int s = 0; s < alpha; ++s) {
        LabelRaster mask;
        mask.height = sched.height;
        mask.width = sched.width;
        mask.labels.assign(sched.masks[std::size_t(s)].begin(), sched.masks[std::size_t(s)].end());
        char name[32];
        std::snprintf(name, sizeof name, "/mask_%03d.hsig", s);
        save_labels(mask, out_dir + name);
    }
    {
        std::ofstream tab(out_dir + "/weights.tsv", std::ios::trunc);
        if (!tab) throw IoError("cannot open '" + out_dir + "/weights.tsv' for writing");
        char buf[96];
        const auto counts = sp.train_counts();
        for (int c = 0; c < sp.num_classes; ++c) {
            std::snprintf(buf, sizeof buf, "%d\t%d\t%.17g\n", c + 1, counts[std::size_t(c)],
                          cw.w[std::size_t(c)]);
            tab << buf;
        }
    }
    std::cout << "wrote " << alpha << " mask rasters and weights.tsv (" << sp.num_classes
              << " classes, " << sp.total_train() << " train / " << sp.test_indices.size()
              << " test pixels)\n";
    return 0;
}

int cmd_train(const std::string& cube_path, const std::string& labels_path,
              const std::string& config_path, const SeedOverride& seed, const std::string& out_dir) {
    bool defaulted = false;
    RunConfig cfg = load_config(config_path, seed, &defaulted);
    const HsiCube raw = load_cube(cube_path);
    const LabelRaster labels = load_labels(labels_path);
    if (labels.height != raw.height || labels.width != raw.width)
        throw ConfigError("train: labels " + std::to_string(labels.height) + "x" +
                          std::to_string(labels.width) + " do not match cube " +
                          std::to_string(raw.height) + "x" + std::to_string(raw.width));

    const PaddedCube padded = pad_for_network(normalize(raw));
    fs::create_directories(out_dir);

    TrainOptions opts;
    opts.checkpoint_dir = out_dir;
    opts.checkpoint_every = cfg.checkpoint_every;
    opts.on_epoch = [&](int epoch, double mean_loss) {
        if (epoch % 10 == 0 || epoch + 1 == cfg.epochs)
            std::cout << "epoch " << epoch << "  loss " << mean_loss << "\n" << std::flush;
    };

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res = train(padded.cube, labels, cfg, opts);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    RunConfig stamped = cfg;
    stamped.bands = raw.bands;
    stamped.num_classes = res.split.num_classes;
    save_params(res.params, stamped.serialize(), out_dir + "/model.ssdm");
    res.log.write(out_dir + "/train.log");
    {
        std::ofstream sum(out_dir + "/summary.txt", std::ios::trunc);
        sum << "config = " << (defaulted ? "defaults" : config_path) << "\n";
        sum << "seed = " << cfg.seed << "\n";
        sum << "epochs_run = " << res.epochs_run << "\n";
        sum << "early_stopped = " << (res.early_stopped ? "true" : "false") << "\n";
        sum << "final_loss = " << (res.log.records.empty() ? 0.0 : res.log.records.back().loss) << "\n";
        sum << "parameters = " << res.params.total_elements() << "\n";
        sum << "wall_seconds = " << wall << "\n";
    }
    std::cout << "wrote " << out_dir << "/model.ssdm, train.log, summary.txt (" << res.epochs_run
              << " epochs, " << wall << " s)\n";
    return 0;
}

int cmd_predict(const std::string& cube_path, const std::string& model_path,
                const std::string& map_path, const std::string& labels_path) {
    const LoadedParams model = load_params(model_path);
    const RunConfig cfg = RunConfig::parse_text(model.config_text);
    const HsiCube raw = load_cube(cube_path);
    NetConfig net = cfg.net_config();
    net.validate();
    const LabelRaster pred = run_prediction(raw, model.store, net);
    if (!labels_path.empty()) save_labels(pred, labels_path);
    if (!map_path.empty()) render_map(pred, Palette::for_classes(net.num_classes), map_path);
    std::cout << "predicted " << pred.height << "x" << pred.width << " map over " << net.num_classes
              << " classes\n";
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path,
                 const std::string& config_path, const SeedOverride& seed, bool eval_all,
                 const std::string& confusion_path) {
    const RunConfig cfg = load_config(config_path, seed);
    const LabelRaster pred = load_labels(pred_path);
    const LabelRaster truth = load_labels(truth_path);
    std::vector<int> eval_set;
    if (eval_all) {
        for (int i = 0; i < truth.height * truth.width; ++i)
            if (truth.labels[std::size_t(i)] != 0) eval_set.push_back(i);
    } else {
        const SampleSplit sp = cfg.train_count > 0
                                   ? split_count(truth, cfg.train_count, cfg.split_seed())
                                   : split_ratio(truth, cfg.lambda, cfg.min_train, cfg.split_seed());
        eval_set = sp.test_indices;
    }
    const ConfusionMatrix cm = confusion(pred, truth, eval_set);
    const MetricsReport rep = report(cm);
    std::cout << rep.to_text();
    if (cm.has_unassigned) std::cout << "warning: prediction left eval pixels unassigned\n";
    if (!confusion_path.empty()) {
        std::ofstream out(confusion_path, std::ios::trunc);
        if (!out) throw IoError("cannot open '" + confusion_path + "' for writing");
        out << cm.to_csv();
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double step, double threshold, int trials) {
    const auto cases = run_gradcheck_suite(seed, step, trials);
    double worst = 0.0;
    for (const auto& c : cases) {
        std::printf("%-28s max_rel_err %.3e  (%d trials)\n", c.name.c_str(), c.max_rel_err, c.trials);
        worst = std::max(worst, c.max_rel_err);
    }
    std::printf("worst case: %.3e (threshold %.1e)\n", worst, threshold);
    if (worst > threshold) {
        std::printf("FAIL\n");
        return 1;
    }
    std::printf("PASS\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"whole-image hyperspectral classification with balanced sampling"};
    app.require_subcommand(1);

    std::string config_path, out_dir, cube_path, labels_path, model_path;
    std::string map_path, pred_path, truth_path, confusion_path;
    SeedOverride seed;
    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&](const std::uint64_t& v) {
                seed.set = true;
                seed.value = v;
            },
            "override the config seed");
    };

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic cube + label raster");
    std::uint64_t synth_seed = 7;
    int height = 64, width = 64, bands = 32, classes = 4;
    std::vector<double> fractions;
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--height", height)->required();
    synth->add_option("--width", width)->required();
    synth->add_option("--bands", bands)->required();
    synth->add_option("--classes", classes)->required();
    synth->add_option("--fractions", fractions, "comma-separated class fractions")->delimiter(',');
    synth->add_option("--out", out_dir, "output directory")->required();

    // sample
    auto* sample = app.add_subcommand("sample", "dump stratified masks and class weights");
    sample->add_option("--labels", labels_path)->required();
    sample->add_option("--config", config_path);
    add_seed(sample);
    sample->add_option("--out", out_dir)->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a cube + labels");
    train_cmd->add_option("--cube", cube_path)->required();
    train_cmd->add_option("--labels", labels_path)->required();
    train_cmd->add_option("--config", config_path);
    add_seed(train_cmd);
    train_cmd->add_option("--out", out_dir)->required();

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "classify a cube with a trained model");
    predict_cmd->add_option("--cube", cube_path)->required();
    predict_cmd->add_option("--model", model_path)->required();
    predict_cmd->add_option("--out-map", map_path, "rendered P6 map");
    predict_cmd->add_option("--out-labels", pred_path, "predicted HSIG raster");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score a prediction against ground truth");
    bool eval_all = false;
    eval_cmd->add_option("--pred", pred_path)->required();
    eval_cmd->add_option("--truth", truth_path)->required();
    eval_cmd->add_option("--config", config_path);
    add_seed(eval_cmd);
    eval_cmd->add_flag("--all", eval_all, "evaluate on every labeled pixel, not just the test split");
    eval_cmd->add_option("--out-confusion", confusion_path, "confusion matrix CSV");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
    std::uint64_t gc_seed = 1234;
    double gc_step = 1e-5, gc_threshold = 1e-4;
    int gc_trials = 20;
    gc->add_option("--seed", gc_seed);
    gc->add_option("--step", gc_step);
    gc->add_option("--threshold", gc_threshold);
    gc->add_option("--trials", gc_trials);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_seed, height, width, bands, classes, fractions, out_dir);
        if (sample->parsed()) return cmd_sample(labels_path, config_path, seed, out_dir);
        if (train_cmd->parsed()) return cmd_train(cube_path, labels_path, config_path, seed, out_dir);
        if (predict_cmd->parsed()) return cmd_predict(cube_path, model_path, map_path, pred_path);
        if (eval_cmd->parsed())
            return cmd_evaluate(pred_path, truth_path, config_path, seed, eval_all, confusion_path);
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_step, gc_threshold, gc_trials);
    } catch (const TrainAbort& e) {
        std::cerr << "abort: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
