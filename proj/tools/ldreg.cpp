#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "ldreg/affine.hpp"
#include "ldreg/flow.hpp"
#include "ldreg/io.hpp"
#include "ldreg/lddmm.hpp"
#include "ldreg/matching.hpp"
#include "ldreg/multires.hpp"
#include "ldreg/phantom.hpp"
#include "ldreg/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ldreg;

namespace {

constexpr const char* kVersion = "0.1.0";

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    json j;
    f >> j;
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << j.dump(2) << "\n";
}

struct RegisterJob {
    std::string template_path, target_path, out_dir, config_path;
    std::string matcher = "";  // overrides config when set
    double mask_threshold = 0.5;
    bool have_mask_threshold = false;
};

RegistrationConfig config_from_json(const json& j) {
    RegistrationConfig cfg;
    cfg.sigma = j.value("sigma", cfg.sigma);
    cfg.kernel.alpha = j.value("alpha", cfg.kernel.alpha);
    cfg.kernel.gamma = j.value("gamma", cfg.kernel.gamma);
    cfg.time_steps = j.value("time_steps", cfg.time_steps);
    cfg.epsilon0 = j.value("epsilon0", cfg.epsilon0);
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.convergence_tol = j.value("convergence_tol", cfg.convergence_tol);
    cfg.matcher.bins = j.value("bins", cfg.matcher.bins);
    return cfg;
}

void write_normalized_csv(const std::string& path, const std::vector<IterationRecord>& trace) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << "iteration,normalized_M,level\n";
    f.precision(17);
    for (const IterationRecord& r : trace)
        if (r.accepted) f << r.iteration << "," << r.normalized_matching << "," << r.level << "\n";
}

int cmd_register(const RegisterJob& job) {
    fs::create_directories(job.out_dir);
    std::string stage = "setup";
    std::vector<std::string> artifacts;
    auto out = [&](const std::string& name) {
        artifacts.push_back(name);
        return (fs::path(job.out_dir) / name).string();
    };

    try {
        json cfg_json = job.config_path.empty() ? json::object() : read_json_file(job.config_path);
        RegistrationConfig cfg = config_from_json(cfg_json);

        std::string matcher = job.matcher.empty() ? cfg_json.value("matcher", "mi") : job.matcher;
        double mask_threshold = job.have_mask_threshold
                                    ? job.mask_threshold
                                    : cfg_json.value("mask_threshold", 0.5);
        if (matcher == "mi") {
            cfg.matcher.kind = MatcherKind::kMi;
        } else if (matcher == "ssd" || matcher == "mask") {
            cfg.matcher.kind = MatcherKind::kSsd;
        } else {
            throw std::runtime_error("unknown matcher '" + matcher + "' (ssd|mi|mask)");
        }

        stage = "load inputs";
        ImageVolume I0 = read_volume(job.template_path);
        ImageVolume J1 = read_volume(job.target_path);
        if (matcher == "mask") {
            I0 = binarize(I0, mask_threshold);
            J1 = binarize(J1, mask_threshold);
        }

        json affine_json = cfg_json.value("affine", json::object());
        bool do_affine = affine_json.value("enabled", true);
        AffineTransform A = AffineTransform::identity(J1.grid.ndim);
        if (do_affine) {
            stage = "affine alignment";
            AffineConfig acfg;
            acfg.bins = affine_json.value("bins", cfg.matcher.bins);
            acfg.max_iterations = affine_json.value("max_iterations", acfg.max_iterations);
            A = affine_register(I0, J1, acfg);
        }
        stage = "resample to target grid";
        ImageVolume I0_aligned = apply_affine(I0, A, J1.grid);

        stage = "deformable registration";
        Schedule schedule;
        if (cfg_json.contains("schedule"))
            schedule = read_schedule_json(cfg_json.at("schedule").dump(), J1.grid);
        else
            schedule.levels.push_back({{}, cfg.kernel.alpha, cfg.max_iterations});
        MultiresResult mr = run_schedule(I0_aligned, J1, schedule, cfg);

        stage = "write artifacts";
        write_volume(out("deformed_template"), mr.result.deformed_template);
        write_map(out("map_forward"), mr.result.forward_map);   // image pullback phi_{1,0}
        write_map(out("map_inverse"), mr.result.inverse_map);   // point map phi_{0,1}
        write_affine(out("affine.json"), A);
        write_energy_trace_csv(out("energy_trace.csv"), mr.trace);
        write_normalized_csv(out("normalized_matching.csv"), mr.trace);

        json manifest;
        manifest["version"] = kVersion;
        manifest["config"] = cfg_json;
        manifest["matcher"] = matcher;
        manifest["template"] = job.template_path;
        manifest["target"] = job.target_path;
        manifest["level_seconds"] = mr.level_seconds;
        manifest["stop_reason"] = mr.result.stop_reason;
        // raw companions of the volume/field artifacts
        std::vector<std::string> files;
        for (const std::string& a : artifacts) {
            if (a.find('.') == std::string::npos) {
                files.push_back(a + ".json");
                files.push_back(a + ".raw");
            } else {
                files.push_back(a);
            }
        }
        files.push_back("manifest.json");
        manifest["artifacts"] = files;
        write_json_file((fs::path(job.out_dir) / "manifest.json").string(), manifest);
        return 0;
    } catch (const std::exception& e) {
        std::ofstream marker(fs::path(job.out_dir) / ".partial");
        marker << "failed stage: " << stage << "\n" << e.what() << "\n";
        std::cerr << "register failed during '" << stage << "': " << e.what() << "\n";
        return 1;
    }
}

int cmd_transform(const std::string& input, const std::string& map_path,
                  const std::string& affine_path, const std::string& out_path, bool nearest,
                  bool landmarks) {
    try {
        if (landmarks) {
            LandmarkSet lm = read_landmarks(input);
            if (map_path.empty())
                throw std::runtime_error("landmark transform requires --map (a point map)");
            DeformationMap m = read_map(map_path);
            TransformedLandmarks t = transform_landmarks(lm, m);
            for (const std::string& label : t.out_of_extent)
                std::cerr << "warning: landmark '" << label << "' outside map extent, dropped\n";
            write_landmarks(out_path, t.points);
            return 0;
        }
        ImageVolume img = read_volume(input);
        ImageVolume result;
        if (!map_path.empty()) {
            DeformationMap m = read_map(map_path);
            result = nearest ? deform_image_nearest(img, m) : deform_image(img, m);
        } else if (!affine_path.empty()) {
            AffineTransform A = read_affine(affine_path);
            result = nearest ? apply_affine_nearest(img, A, img.grid)
                             : apply_affine(img, A, img.grid);
        } else {
            throw std::runtime_error("need --map or --affine");
        }
        write_volume(out_path, result);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "transform failed: " << e.what() << "\n";
        return 1;
    }
}

int cmd_evaluate(const std::string& run_dir, const std::string& template_lm_path,
                 const std::string& target_lm_path, const std::string& report_path,
                 const std::string& checkerboard_path, int checkerboard_tile,
                 const std::string& grid_image_path, int grid_stride) {
    try {
        fs::path run(run_dir);
        if (!fs::exists(run / "manifest.json"))
            throw std::runtime_error("missing artifacts: no manifest.json in " + run_dir);
        json manifest = read_json_file((run / "manifest.json").string());
        ImageVolume deformed = read_volume((run / "deformed_template").string());
        DeformationMap fwd = read_map((run / "map_forward").string());
        DeformationMap inv = read_map((run / "map_inverse").string());

        json report;
        report["schema"] = "ldreg-evaluation-1";

        ImageVolume detJ = jacobian_determinant(fwd);
        report["jacobian"] = {{"min", detJ.min_value()}, {"max", detJ.max_value()}};

        // Final accepted energies from the trace.
        {
            std::ifstream f(run / "energy_trace.csv");
            if (!f) throw std::runtime_error("missing artifacts: energy_trace.csv");
            std::string line, last_accepted;
            std::getline(f, line);  // header
            while (std::getline(f, line)) {
                auto pos = line.rfind(",1,");
                if (pos != std::string::npos) last_accepted = line;
            }
            if (!last_accepted.empty()) {
                std::vector<double> cols;
                std::stringstream ss(last_accepted);
                std::string tok;
                while (std::getline(ss, tok, ',')) cols.push_back(std::stod(tok));
                report["final"] = {{"E", cols[1]},
                                  {"R", cols[2]},
                                  {"M", cols[3]},
                                  {"normalized_M", cols[4]}};
            }
        }

        if (!template_lm_path.empty() && !target_lm_path.empty()) {
            LandmarkSet tl = read_landmarks(template_lm_path);
            LandmarkSet gt = read_landmarks(target_lm_path);
            TransformedLandmarks moved = transform_landmarks(tl, inv);
            for (const std::string& label : moved.out_of_extent)
                std::cerr << "warning: landmark '" << label << "' outside map extent, dropped\n";
            LandmarkSet gt_kept;
            gt_kept.ndim = gt.ndim;
            for (const Landmark& p : gt.points) {
                bool dropped = false;
                for (const std::string& label : moved.out_of_extent)
                    if (label == p.label) dropped = true;
                if (!dropped) gt_kept.points.push_back(p);
            }
            LandmarkError err = landmark_error(moved.points, gt_kept);
            json per;
            for (const auto& [label, d] : err.per_label) per[label] = d;
            report["landmark_error"] = {{"mean", err.mean}, {"per_label", per}};
        }

        if (!checkerboard_path.empty()) {
            ImageVolume target = read_volume(manifest.at("target").get<std::string>());
            ImageVolume board = checkerboard(deformed, resample(target, deformed.grid),
                                             checkerboard_tile);
            write_volume(checkerboard_path, board);
            if (board.grid.ndim == 2) write_pgm(checkerboard_path + ".pgm", board);
        }
        if (!grid_image_path.empty()) {
            ImageVolume gridimg = deformation_grid_image(fwd, grid_stride);
            write_volume(grid_image_path, gridimg);
            if (gridimg.grid.ndim == 2) write_pgm(grid_image_path + ".pgm", gridimg);
        }

        write_json_file(report_path, report);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "evaluate failed: " << e.what() << "\n";
        return 1;
    }
}

int cmd_phantom(const std::string& kind, const PhantomParams& params, const std::string& out_dir) {
    try {
        Phantom ph = make_phantom(kind, params);
        fs::create_directories(out_dir);
        fs::path out(out_dir);
        write_volume((out / "template").string(), ph.template_img);
        write_volume((out / "target").string(), ph.target_img);
        write_landmarks((out / "template_landmarks.csv").string(), ph.template_landmarks);
        write_landmarks((out / "target_landmarks.csv").string(), ph.target_landmarks);
        if (ph.true_map) write_map((out / "true_map").string(), *ph.true_map);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "phantom failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ldreg: diffeomorphic image registration (MI / SSD matching)"};
    app.set_version_flag("--version", kVersion);

    int threads = 1;
    unsigned seed = 0;
    app.add_option("--threads", threads, "cap on inner parallelism (1 = bit-reproducible)");
    app.add_option("--seed", seed, "random seed for phantom noise");

    // register
    RegisterJob job;
    auto* reg = app.add_subcommand("register", "affine + deformable registration");
    reg->add_option("--template", job.template_path, "template volume (path base)")->required();
    reg->add_option("--target", job.target_path, "target volume (path base)")->required();
    reg->add_option("--config", job.config_path, "JSON configuration");
    reg->add_option("--out", job.out_dir, "output directory")->required();
    reg->add_option("--matcher", job.matcher, "ssd|mi|mask (overrides config)");
    auto* mt = reg->add_option("--mask-threshold", job.mask_threshold, "mask binarization threshold");

    // transform
    std::string t_input, t_map, t_affine, t_out;
    bool t_nearest = false, t_landmarks = false;
    auto* tr = app.add_subcommand("transform", "apply a computed transform");
    tr->add_option("--input", t_input, "volume path base, or landmark CSV with --landmarks")
        ->required();
    tr->add_option("--map", t_map, "deformation map path base");
    tr->add_option("--affine", t_affine, "affine JSON");
    tr->add_option("--out", t_out, "output path base (or CSV path)")->required();
    tr->add_flag("--nearest", t_nearest, "nearest-neighbor sampling (label images)");
    tr->add_flag("--landmarks", t_landmarks, "input is a landmark CSV");

    // evaluate
    std::string e_run, e_tlm, e_glm, e_report = "report.json", e_board, e_grid;
    int e_tile = 8, e_stride = 4;
    auto* ev = app.add_subcommand("evaluate", "evaluate a register run");
    ev->add_option("--run", e_run, "register output directory")->required();
    ev->add_option("--landmarks", e_tlm, "template landmark CSV");
    ev->add_option("--target-landmarks", e_glm, "ground-truth target landmark CSV");
    ev->add_option("--report", e_report, "report JSON output path");
    ev->add_option("--checkerboard", e_board, "checkerboard output path base");
    ev->add_option("--tile", e_tile, "checkerboard tile size (voxels)");
    ev->add_option("--grid-image", e_grid, "deformation grid image output path base");
    ev->add_option("--stride", e_stride, "grid line stride (voxels)");

    // phantom
    std::string p_kind, p_out;
    PhantomParams params;
    auto* phc = app.add_subcommand("phantom", "generate a synthetic test pair");
    phc->add_option("--kind", p_kind, "blob|cshape|translate|swirl|invert-contrast")->required();
    phc->add_option("--size", params.size, "voxels per axis");
    phc->add_option("--ndim", params.ndim, "2 or 3");
    phc->add_option("--offset", params.offset, "translation offset (voxels)");
    phc->add_option("--angle", params.angle_deg, "swirl angle (degrees)");
    phc->add_flag("--invert", params.invert_contrast, "invert target contrast");
    phc->add_option("--noise", params.noise, "additive Gaussian noise std");
    phc->add_option("--out", p_out, "output directory")->required();

    app.require_subcommand(1);
    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    omp_set_num_threads(std::max(1, threads));
#else
    (void)threads;
#endif

    if (reg->parsed()) {
        job.have_mask_threshold = mt->count() > 0;
        return cmd_register(job);
    }
    if (tr->parsed())
        return cmd_transform(t_input, t_map, t_affine, t_out, t_nearest, t_landmarks);
    if (ev->parsed())
        return cmd_evaluate(e_run, e_tlm, e_glm, e_report, e_board, e_tile, e_grid, e_stride);
    if (phc->parsed()) {
        params.seed = seed;
        return cmd_phantom(p_kind, params, p_out);
    }
    return 2;
}
