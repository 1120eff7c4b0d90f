#pragma once

// Module ablation: rerun the pipeline with subsets of {gsq, lsa, dpg} turned
// off and compare prototype metrics side by side.
//   gsq off -> cluster raw visual embeddings
//   lsa off -> singleton awareness set (member nearest the center)
//   dpg off -> bare class label prompt from pure noise

#include <set>
#include <sstream>

#include "edits/pipeline/run.hpp"

namespace edits::pipeline {

inline std::vector<std::string> parse_axes(const std::string& list) {
    static const std::set<std::string> known = {"gsq", "lsa", "dpg"};
    std::vector<std::string> axes;
    std::stringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        if (!known.count(item)) throw Error(ErrorCode::invalid_argument, "unknown ablation axis '" + item + "'");
        if (std::find(axes.begin(), axes.end(), item) == axes.end()) axes.push_back(item);
    }
    if (axes.empty()) throw Error(ErrorCode::invalid_argument, "ablation needs at least one axis");
    return axes;
}

inline std::string variant_name(const ModuleToggles& t) {
    std::string name;
    for (const auto& [flag, label] : {std::pair{t.gsq, "gsq"}, std::pair{t.lsa, "lsa"}, std::pair{t.dpg, "dpg"}}) {
        if (!flag) continue;
        if (!name.empty()) name += "+";
        name += label;
    }
    return name.empty() ? "none" : name;
}

/// Every on/off combination of `axes`; modules not listed stay on. Variants
/// run under <output_dir>/ablate/<name> and share one response cache.
inline json ablate(const PipelineConfig& base, const std::vector<std::string>& axes,
                   const ServiceOverrides& overrides = {}, Pipeline::Logger log = {}) {
    PipelineConfig shared = base;
    shared.cache_dir = effective_cache_dir(base);
    shared.stop_after.clear();
    const Services services = make_services(shared, overrides);

    json variants = json::array();
    const std::size_t combos = std::size_t{1} << axes.size();
    for (std::size_t mask = combos; mask-- > 0;) {
        PipelineConfig cfg = shared;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const bool on = (mask >> a) & 1U;
            if (axes[a] == "gsq") cfg.modules.gsq = on;
            if (axes[a] == "lsa") cfg.modules.lsa = on;
            if (axes[a] == "dpg") cfg.modules.dpg = on;
        }
        const std::string name = variant_name(cfg.modules);
        cfg.output_dir = base.output_dir / "ablate" / name;
        if (log) log("ablation variant " + name);
        const json report = Pipeline(cfg, services, log).run();
        variants.push_back({{"variant", name},
                            {"modules", {{"gsq", cfg.modules.gsq}, {"lsa", cfg.modules.lsa}, {"dpg", cfg.modules.dpg}}},
                            {"run_dir", cfg.output_dir.string()},
                            {"metrics", report.at("metrics")},
                            {"prototypes", report.at("prototypes")}});
    }
    json out = {{"axes", axes}, {"variants", variants}};
    write_file_atomic(base.output_dir / "ablation.json", out.dump(2) + "\n");
    return out;
}

}  // namespace edits::pipeline
