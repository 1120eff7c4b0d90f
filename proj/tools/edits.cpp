#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "edits/edits.hpp"

namespace {

using namespace edits;
using namespace edits::pipeline;

struct Overrides {
    std::string config_path;
    std::string stage;
    std::string output;
    bool force = false;
    bool mock = false;
    bool verbose = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> ipc;
    std::optional<double> temperature;
    std::optional<std::size_t> capacity;
    std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--output", o.output, "override output_dir");
    cmd->add_flag("--mock", o.mock, "use the deterministic offline services");
    cmd->add_option("--seed", o.seed, "override seed");
    cmd->add_option("--ipc", o.ipc, "override ipc")->check(CLI::PositiveNumber);
    cmd->add_option("--temperature", o.temperature, "override softmax temperature")->check(CLI::PositiveNumber);
    cmd->add_option("--capacity", o.capacity, "override awareness capacity")->check(CLI::PositiveNumber);
    cmd->add_option("--workers", o.workers, "worker threads per stage")->check(CLI::PositiveNumber);
    cmd->add_flag("-v,--verbose", o.verbose, "log stage progress to stderr");
}

PipelineConfig effective_config(const Overrides& o) {
    PipelineConfig c = load_config(o.config_path);
    if (!o.output.empty()) c.output_dir = o.output;
    if (!o.stage.empty()) c.stop_after = o.stage;
    if (o.force) c.force = true;
    if (o.mock) c.mock = true;
    if (o.seed) c.seed = *o.seed;
    if (o.ipc) c.ipc = *o.ipc;
    if (o.temperature) c.temperature = *o.temperature;
    if (o.capacity) c.awareness_capacity = *o.capacity;
    if (o.workers) c.workers = *o.workers;
    c.validate();
    return c;
}

Pipeline::Logger logger(bool verbose) {
    if (!verbose) return {};
    return [](const std::string& msg) { std::cerr << "[edits] " << msg << "\n"; };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dataset distillation with text-semantic prototypes"};
    app.require_subcommand(1);

    Overrides run_opts;
    auto* run_cmd = app.add_subcommand("run", "run or resume the pipeline");
    add_common(run_cmd, run_opts);
    run_cmd->add_option("--stage", run_opts.stage, "stop after this stage")
        ->check(CLI::IsMember(stage_names()));
    run_cmd->add_flag("--force", run_opts.force, "re-execute completed stages");

    Overrides ablate_opts;
    std::string axes = "gsq,lsa,dpg";
    auto* ablate_cmd = app.add_subcommand("ablate", "compare module on/off variants");
    add_common(ablate_cmd, ablate_opts);
    ablate_cmd->add_option("--axis", axes, "comma-separated subset of gsq,lsa,dpg");

    std::string run_dir;
    auto* metrics_cmd = app.add_subcommand("metrics", "prototype metrics of a finished run");
    metrics_cmd->add_option("run-dir", run_dir, "run output directory")->required()->check(CLI::ExistingDirectory);

    std::string toy_out;
    std::size_t toy_classes = 3, toy_per_class = 60;
    std::uint64_t toy_seed = 0;
    auto* toy_cmd = app.add_subcommand("toy-corpus", "write a random toy corpus and a mock config");
    toy_cmd->add_option("--out", toy_out, "corpus directory")->required();
    toy_cmd->add_option("--classes", toy_classes, "number of classes")->check(CLI::Range(1, 10));
    toy_cmd->add_option("--per-class", toy_per_class, "images per class")->check(CLI::PositiveNumber);
    toy_cmd->add_option("--seed", toy_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*run_cmd) {
            PipelineConfig cfg;
            try {
                cfg = effective_config(run_opts);
            } catch (const Error& e) {
                std::cerr << "edits: " << e.what() << "\n";
                return 1;
            }
            const json report = run(cfg, {}, logger(run_opts.verbose));
            if (!report.is_null()) std::cout << report.at("metrics").dump(2) << "\n";
            return 0;
        }
        if (*ablate_cmd) {
            PipelineConfig cfg;
            std::vector<std::string> axis_list;
            try {
                cfg = effective_config(ablate_opts);
                axis_list = parse_axes(axes);
            } catch (const Error& e) {
                std::cerr << "edits: " << e.what() << "\n";
                return 1;
            }
            std::cout << ablate(cfg, axis_list, {}, logger(ablate_opts.verbose)).dump(2) << "\n";
            return 0;
        }
        if (*metrics_cmd) {
            std::cout << to_json(run_metrics(run_dir)).dump(2) << "\n";
            return 0;
        }
        if (*toy_cmd) {
            const CorpusConfig corpus = make_toy_corpus(toy_out, toy_classes, toy_per_class, toy_seed);
            PipelineConfig cfg;
            cfg.corpus = corpus;
            cfg.output_dir = fs::path(toy_out) / "run";
            cfg.ipc = 4;
            cfg.mock = true;
            json j = to_json(cfg);
            j["corpus"]["manifest"] = "manifest.jsonl";
            j["corpus"]["root"] = ".";
            j["output_dir"] = "run";
            j["cache_dir"] = "";
            write_file_atomic(fs::path(toy_out) / "config.json", j.dump(2) + "\n");
            std::cout << (fs::path(toy_out) / "config.json").string() << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "edits: " << e.what() << "\n";
        return e.code() == ErrorCode::config || e.code() == ErrorCode::invalid_argument ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "edits: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
