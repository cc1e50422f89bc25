// Command-line front end: gen-data, train, eval, sweep, grad-check.
//
// Exit codes: 0 success, 1 invalid flags / config / data, 2 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ossar/ossar.hpp"

namespace fs = std::filesystem;
using namespace ossar;

namespace {

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_dir = ".";
    std::string preset;
    std::string data_path;
    std::string known;
    std::string unknown;
    bool hard = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--seed", o.seed, "Seed for data generation, split, initialization and shuffling");
    cmd->add_option("--config", o.config_path, "Run configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out_dir, "Output directory (created if missing)");
}

void add_run_inputs(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--preset", o.preset, "Named preset applied before the config file (ossar, no-hc, no-coc, arpl, desk, paper)");
    cmd->add_option("--data", o.data_path, "Feature file (.csv or OSSF); synthetic data is generated when omitted");
    cmd->add_option("--known", o.known, "Known class ids, comma separated");
    cmd->add_option("--unknown", o.unknown, "Unknown class ids, comma separated");
    cmd->add_flag("--hard", o.hard, "Generate the hard synthetic variant (near-duplicate classes)");
}

RunConfig resolve_config(const CommonOptions& o) {
    RunConfig cfg;
    if (!o.preset.empty()) apply_preset(cfg.train, o.preset);
    if (!o.config_path.empty()) load_config(cfg, o.config_path);
    cfg.set_seed(o.seed.value_or(cfg.train.seed));
    if (o.hard) cfg.data.hard = true;
    if (!o.known.empty()) cfg.split.known_classes = parse_id_list(o.known);
    if (!o.unknown.empty()) cfg.split.unknown_classes = parse_id_list(o.unknown);
    cfg.train.validate();
    return cfg;
}

LabeledDataset resolve_dataset(const CommonOptions& o, const RunConfig& cfg) {
    return o.data_path.empty() ? gen_synthetic(cfg.data) : load_features(o.data_path);
}

OpenSetSplit resolve_split(const CommonOptions& o, const RunConfig& cfg) {
    return apply_split(resolve_dataset(o, cfg), cfg.split, cfg.test_fraction, cfg.train.seed);
}

fs::path out_dir(const CommonOptions& o) {
    fs::path dir(o.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw DataError("failed writing " + path.string());
}

std::string report_csv(const EvalReport& r) {
    return "metric,value\nclosed_accuracy," + format_double(r.closed_accuracy) + "\nauroc," + format_double(r.auroc) +
           "\noscr," + format_double(r.oscr) + "\n";
}

void print_report(const EvalReport& r) {
    std::printf("closed_accuracy %.4f\nauroc           %.4f\noscr            %.4f\n", r.closed_accuracy, r.auroc,
                r.oscr);
}

int cmd_gen_data(const CommonOptions& o, const std::string& format) {
    const RunConfig cfg = resolve_config(o);
    const LabeledDataset ds = gen_synthetic(cfg.data);
    const fs::path path = out_dir(o) / (format == "csv" ? "data.csv" : "data.ossf");
    save_features(path, ds);
    std::printf("wrote %zu samples x %zu dims to %s\n", ds.size(), ds.dim(), path.string().c_str());
    return 0;
}

int cmd_train(const CommonOptions& o) {
    const RunConfig cfg = resolve_config(o);
    const OpenSetSplit split = resolve_split(o, cfg);
    const TrainResult res = train(split, cfg.train);
    const fs::path dir = out_dir(o);
    save_checkpoint(dir / "model.osrp", res.model);
    std::ostringstream hist;
    write_history_csv(hist, res.history);
    write_text(dir / "history.csv", hist.str());
    if (!res.history.epochs.empty()) {
        const auto& last = res.history.epochs.back();
        std::printf("epoch %zu: total %.6f cls %.6f amc %.6f coc %.6f val_acc %.4f\n", last.epoch, last.total,
                    last.classification, last.amc, last.coc, last.val_accuracy);
    }
    std::printf("wrote %s and %s\n", (dir / "model.osrp").string().c_str(), (dir / "history.csv").string().c_str());
    return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
    const RunConfig cfg = resolve_config(o);
    const OpenSetSplit split = resolve_split(o, cfg);
    const Model model = load_checkpoint(checkpoint);
    if (model.bank.num_classes() != split.num_known()) {
        throw ConfigError("checkpoint has " + std::to_string(model.bank.num_classes()) + " classes, split has " +
                          std::to_string(split.num_known()) + " known classes");
    }
    const EvalReport rep = evaluate(model, split, cfg.train.loss.classification_metric, cfg.train.loss.tau);
    const fs::path dir = out_dir(o);
    write_text(dir / "report.csv", report_csv(rep));
    save_curve_csv(dir / "roc.csv", rep.roc_curve, "tpr");
    save_curve_csv(dir / "oscr.csv", rep.oscr_curve, "ccr");
    print_report(rep);
    return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& grid_spec, std::size_t jobs) {
    const RunConfig cfg = resolve_config(o);
    const OpenSetSplit split = resolve_split(o, cfg);
    const SweepGrid grid = parse_grid(grid_spec);
    const auto rows = sweep(cfg.train, grid, split, jobs);
    std::ostringstream csv;
    write_sweep_csv(csv, grid, rows);
    const fs::path path = out_dir(o) / "sweep.csv";
    write_text(path, csv.str());
    std::fputs(csv.str().c_str(), stdout);
    for (const auto& r : rows) {
        if (!r.ok) std::fprintf(stderr, "cell failed: %s\n", r.error.c_str());
    }
    return 0;
}

int cmd_grad_check(std::size_t instances, std::uint64_t seed) {
    constexpr double kTolerance = 1e-4;
    bool ok = true;
    for (const auto& r : gradcheck::run_suite(instances, seed)) {
        const bool pass = r.max_error < kTolerance;
        ok = ok && pass;
        std::printf("%-28s max_rel_err %.3e over %zu instances  %s\n", r.name.c_str(), r.max_error, r.instances,
                    pass ? "ok" : "FAIL");
    }
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set recognition with hyperspherical reciprocal points"};
    app.require_subcommand(1);

    CommonOptions gen_o, train_o, eval_o, sweep_o, gc_o;
    std::string format = "ossf";
    std::string checkpoint;
    std::string grid_spec = "theta";
    std::size_t jobs = 1;
    std::size_t instances = 20;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labeled dataset");
    add_common(gen, gen_o);
    gen->add_flag("--hard", gen_o.hard, "Place two classes 14 degrees from a third");
    gen->add_option("--format", format, "ossf or csv")->check(CLI::IsMember({"ossf", "csv"}));

    auto* tr = app.add_subcommand("train", "Train a model; writes model.osrp and history.csv");
    add_common(tr, train_o);
    add_run_inputs(tr, train_o);

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; writes report.csv, roc.csv, oscr.csv");
    add_common(ev, eval_o);
    add_run_inputs(ev, eval_o);
    ev->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required()->check(CLI::ExistingFile);

    auto* sw = app.add_subcommand("sweep", "Train and evaluate every grid cell; writes sweep.csv");
    add_common(sw, sweep_o);
    add_run_inputs(sw, sweep_o);
    sw->add_option("--grid", grid_spec, "theta | weights | amc-metric | key=v1,v2;key2=...");
    sw->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every gradient");
    add_common(gc, gc_o);
    gc->add_option("--instances", instances, "Random instances per family")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) return cmd_gen_data(gen_o, format);
        if (*tr) return cmd_train(train_o);
        if (*ev) return cmd_eval(eval_o, checkpoint);
        if (*sw) return cmd_sweep(sweep_o, grid_spec, jobs);
        if (*gc) return cmd_grad_check(instances, gc_o.seed.value_or(1000));
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
