#ifndef HIERSR_CLI_HPP
#define HIERSR_CLI_HPP

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hiersr/hier_sr.hpp"
#include "hiersr/io.hpp"
#include "hiersr/metrics.hpp"
#include "hiersr/model_backend.hpp"
#include "hiersr/resample.hpp"
#include "hiersr/sr_octree.hpp"

namespace hiersr::cli {

inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

/// Parses "64,64,64" or "64x64x64".
inline Dims parse_dims(const std::string& text) {
    Dims dims;
    std::string cur;
    auto flush = [&] {
        if (cur.empty() || cur.find_first_not_of("0123456789") != std::string::npos)
            throw CLI::ValidationError("--dims", "expected axis sizes like 64,64,64");
        dims.push_back(std::stoull(cur));
        cur.clear();
    };
    for (char c : text) {
        if (c == ',' || c == 'x') flush();
        else cur += c;
    }
    flush();
    if ((dims.size() != 2 && dims.size() != 3) || std::find(dims.begin(), dims.end(), 0u) != dims.end())
        throw CLI::ValidationError("--dims", "need 2 or 3 positive axis sizes");
    return dims;
}

/// Backend selection: nearest | linear | model:<spec>[,<spec>...]
struct BackendChoice {
    enum class Kind { nearest, linear, model } kind = Kind::linear;
    std::vector<ModelEndpoint> endpoints;
};

inline BackendChoice parse_backend(const std::string& text) {
    BackendChoice b;
    if (text == "nearest") {
        b.kind = BackendChoice::Kind::nearest;
        return b;
    }
    if (text == "linear") return b;
    if (!text.starts_with("model:")) throw CLI::ValidationError("--backend", "expected nearest, linear or model:<spec>");
    b.kind = BackendChoice::Kind::model;
    std::stringstream ss(text.substr(6));
    std::string item;
    for (int pos = 0; std::getline(ss, item, ','); ++pos) {
        if (item.find("@level=") == std::string::npos) item += "@level=" + std::to_string(pos);
        try {
            b.endpoints.push_back(parse_endpoint(item));
        } catch (const Error& e) {
            throw CLI::ValidationError("--backend", e.what());
        }
    }
    if (b.endpoints.empty()) throw CLI::ValidationError("--backend", "model: needs at least one endpoint");
    return b;
}

/// Opens model connections as needed; unmapped levels fall back to linear.
inline UpscalerHierarchy make_hierarchy(const BackendChoice& b) {
    switch (b.kind) {
    case BackendChoice::Kind::nearest: return UpscalerHierarchy::nearest();
    case BackendChoice::Kind::linear: return UpscalerHierarchy::linear();
    case BackendChoice::Kind::model: break;
    }
    UpscalerHierarchy h = UpscalerHierarchy::linear();
    for (const auto& ep : b.endpoints)
        h.set(ep.level, model_upscaler(std::make_shared<ModelHandle>(ModelHandle::open(ep))));
    return h;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot create " + path);
    out << text;
}

inline std::string info_text(const SROctree& t) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "dims=" << to_string(t.full_dims) << "\n";
    os << "reduction_factor=" << reduction_factor(t) << "\n";
    os << "maxdsl=" << t.max_level() << "\n";
    os << "mindsl=" << t.min_level() << "\n";
    os << "nodes=" << t.node_count() << "\n";
    os << "leaves=" << t.leaf_count() << "\n";
    os << "stored_voxels=" << t.stored_voxels() << "\n";
    for (const auto& [level, s] : t.level_histogram())
        os << "level." << level << "=leaves:" << s.leaves << " covered:" << s.covered_voxels
           << " stored:" << s.stored_voxels << "\n";
    return os.str();
}

/// Runs the command line. Exit codes: 0 success, 1 runtime failure (one
/// diagnostic line on `err`), 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Hierarchical super-resolution for SR-octree volumes", "hiersr"};
    app.require_subcommand(1);

    std::string input, output, tree_path, lr_path, backend_text = "linear", a_path, b_path, report_path;
    std::string kind_text, dims_text, downscaler_text = "mean";
    std::uint64_t seed = 0;
    double data_range = 1.0;
    BuildConfig cfg;

    auto* gen = app.add_subcommand("gen", "Write a synthetic test volume");
    gen->add_option("--kind", kind_text, "constant|checker|gaussian_blobs|band_limited_noise")->required();
    gen->add_option("--dims", dims_text, "axis sizes, e.g. 64,64,64")->required();
    gen->add_option("--seed", seed);
    gen->add_option("--output", output)->required();

    auto* build = app.add_subcommand("build", "Build an SR-octree from a volume");
    build->add_option("--input", input)->required();
    build->add_option("--epsilon", cfg.epsilon)->required()->check(CLI::NonNegativeNumber);
    build->add_option("--min-chunk", cfg.min_chunk)->check(CLI::Range(2u, 1u << 30));
    build->add_option("--min-level", cfg.min_level)->check(CLI::Range(0u, 30u));
    build->add_option("--max-level", cfg.max_level)->required()->check(CLI::Range(0u, 30u));
    build->add_option("--downscaler", downscaler_text)->check(CLI::IsMember({"mean", "subsample"}));
    build->add_option("--output", output)->required();

    auto* down = app.add_subcommand("downscale", "Hierarchical downscale of a tree to its coarsest uniform grid");
    down->add_option("--tree", tree_path)->required();
    down->add_option("--output", output)->required();

    auto* up = app.add_subcommand("upscale", "Hierarchical super-resolution of a tree");
    auto* upb = app.add_subcommand("upscale-blockwise", "Blockwise baseline upscaling of a tree");
    for (auto* sub : {up, upb}) {
        sub->add_option("--tree", tree_path)->required();
        sub->add_option("--lr", lr_path, "uniform low-resolution input (default: hierarchical downscale)");
        sub->add_option("--backend", backend_text, "nearest | linear | model:<spec>[,<spec>...]");
        sub->add_option("--output", output)->required();
    }

    auto* met = app.add_subcommand("metrics", "Compare a reconstruction against ground truth");
    met->add_option("--a", a_path, "ground truth")->required();
    met->add_option("--b", b_path, "reconstruction")->required();
    met->add_option("--tree", tree_path, "tree for the seam score");
    met->add_option("--data-range", data_range)->check(CLI::PositiveNumber);
    met->add_option("--out", report_path, "report path; .json selects structured output")->required();

    auto* info = app.add_subcommand("info", "Summarize a tree");
    info->add_option("--tree", tree_path)->required();

    auto* lmap = app.add_subcommand("levelmap", "Write the per-voxel downscaling level of a tree");
    lmap->add_option("--tree", tree_path)->required();
    lmap->add_option("--output", output)->required();

    Dims dims;
    SyntheticKind kind{};
    BackendChoice backend;
    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            dims = parse_dims(dims_text);
            try {
                kind = parse_synthetic_kind(kind_text);
            } catch (const Error& e) {
                throw CLI::ValidationError("--kind", e.what());
            }
        }
        if (build->parsed()) {
            cfg.downscaler = parse_downscaler(downscaler_text);
            if (cfg.min_level > cfg.max_level)
                throw CLI::ValidationError("--min-level", "must not exceed --max-level");
        }
        if (up->parsed() || upb->parsed()) backend = parse_backend(backend_text);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::Error& e) {
        err << "hiersr: usage error: " << e.what() << " (see --help)\n";
        return kUsageError;
    }

    try {
        if (gen->parsed()) {
            write_volume(output, gen_synthetic(kind, dims, seed));
        } else if (build->parsed()) {
            const SROctree t = build_sr_octree(read_volume(input), cfg);
            write_tree(output, t);
            out << "reduction_factor=" << std::fixed << std::setprecision(4) << reduction_factor(t)
                << " leaves=" << t.leaf_count() << " maxdsl=" << t.max_level() << " mindsl=" << t.min_level()
                << "\n";
        } else if (down->parsed()) {
            write_volume(output, hierarchical_downscale(read_tree(tree_path)));
        } else if (up->parsed()) {
            const SROctree t = read_tree(tree_path);
            const Volume lr = lr_path.empty() ? hierarchical_downscale(t) : read_volume(lr_path);
            write_volume(output, hierarchical_upscale(lr, t, make_hierarchy(backend)));
        } else if (upb->parsed()) {
            if (!lr_path.empty()) err << "hiersr: note: --lr is not used by the blockwise baseline\n";
            write_volume(output, blockwise_upscale(read_tree(tree_path), make_hierarchy(backend)));
        } else if (met->parsed()) {
            const Volume a = read_volume(a_path);
            const Volume b = read_volume(b_path);
            std::optional<SROctree> t;
            if (!tree_path.empty()) t = read_tree(tree_path);
            const MetricReport r = evaluate(a, b, data_range, t ? &*t : nullptr);
            const bool json = fs::path(report_path).extension() == ".json";
            write_text(report_path, json ? to_json(r) : to_kv(r));
            out << to_kv(r);
        } else if (info->parsed()) {
            out << info_text(read_tree(tree_path));
        } else if (lmap->parsed()) {
            write_volume(output, level_map(read_tree(tree_path)));
        }
    } catch (const std::exception& e) {
        err << "hiersr: error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kOk;
}

}  // namespace hiersr::cli

#endif
