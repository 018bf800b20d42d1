#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "calsig/errors.hpp"
#include "calsig/pipeline.hpp"

using calsig::PipelineConfig;

namespace {

int category_exit_code(calsig::ErrorCategory category) {
    switch (category) {
        case calsig::ErrorCategory::config: return 2;
        case calsig::ErrorCategory::data: return 3;
        case calsig::ErrorCategory::convergence: return 4;
    }
    return 3;
}

struct CommonFlags {
    std::string config_path;
    CLI::App* cmd = nullptr;

    std::string output_dir, movie_dir, roi_path, labels_path, input_dir;
    double saturation_level = 255.0, blur_sigma = 2.0, wsvd_tol = 1e-8;
    std::size_t min_area = 20, wsvd_max_iters = 500, n_permutations = 100000;
    std::string threshold = "otsu", perm_mode = "auto", pixel_profile = "plateau",
                signal_profile = "burst_train";
    bool no_variance_weights = false, two_sided = false;
    std::vector<double> peak_window{0.0, 4.0}, post_peak_window{40.0, 80.0};
    std::vector<std::size_t> k_values{1, 2, 3, 4, 5};
    std::size_t cv_runs = 1000, jobs = 1;
    double train_fraction = 0.8, frame_interval = 10.0;
    std::uint64_t seed = 1;
    std::size_t sim_pixels = 131, sim_frames = 512;
    double clip_level = 0.5, noise_scale = 0.3;
    int frame_width = 64, frame_height = 64;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    f.cmd = cmd;
    cmd->add_option("--config", f.config_path, "JSON config file; flags override its values");
    cmd->add_option("-o,--output", f.output_dir, "output directory");
    cmd->add_option("--seed", f.seed, "run seed feeding every named random sub-stream");
    cmd->add_option("--jobs", f.jobs, "parallel per-cell workers");
}

// Applies only the flags the user actually passed on top of the config file.
PipelineConfig build_config(const CommonFlags& f) {
    PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = calsig::load_config_json(f.config_path, cfg);
    auto set = [&](const std::string& name) { return f.cmd->count(name) > 0; };

    if (set("--output")) cfg.output_dir = f.output_dir;
    if (set("--seed")) cfg.seed = f.seed;
    if (set("--jobs")) cfg.jobs = f.jobs;
    if (f.cmd->get_option_no_throw("--movie") && set("--movie")) cfg.movie_dir = f.movie_dir;
    if (f.cmd->get_option_no_throw("--roi") && set("--roi")) cfg.roi_path = f.roi_path;
    if (f.cmd->get_option_no_throw("--labels") && set("--labels")) cfg.labels_path = f.labels_path;
    if (f.cmd->get_option_no_throw("--input") && set("--input")) cfg.input_dir = f.input_dir;
    if (f.cmd->get_option_no_throw("--saturation-level") && set("--saturation-level"))
        cfg.saturation_level = f.saturation_level;
    if (f.cmd->get_option_no_throw("--sigma") && set("--sigma")) cfg.blur_sigma = f.blur_sigma;
    if (f.cmd->get_option_no_throw("--min-area") && set("--min-area")) cfg.min_area = f.min_area;
    if (f.cmd->get_option_no_throw("--threshold") && set("--threshold"))
        cfg.threshold = f.threshold;
    if (f.cmd->get_option_no_throw("--tol") && set("--tol")) cfg.wsvd_tol = f.wsvd_tol;
    if (f.cmd->get_option_no_throw("--max-iters") && set("--max-iters"))
        cfg.wsvd_max_iters = f.wsvd_max_iters;
    if (f.cmd->get_option_no_throw("--no-variance-weights") && set("--no-variance-weights"))
        cfg.use_variance_weights = false;
    if (f.cmd->get_option_no_throw("--peak-window") && set("--peak-window")) {
        cfg.windows.peak_start_min = f.peak_window.at(0);
        cfg.windows.peak_end_min = f.peak_window.at(1);
    }
    if (f.cmd->get_option_no_throw("--post-peak-window") && set("--post-peak-window")) {
        cfg.windows.post_peak_start_min = f.post_peak_window.at(0);
        cfg.windows.post_peak_end_min = f.post_peak_window.at(1);
    }
    if (f.cmd->get_option_no_throw("--n-perm") && set("--n-perm"))
        cfg.n_permutations = f.n_permutations;
    if (f.cmd->get_option_no_throw("--perm-mode") && set("--perm-mode")) {
        if (f.perm_mode == "auto") cfg.perm_mode = calsig::PermModeChoice::auto_pick;
        else if (f.perm_mode == "exact") cfg.perm_mode = calsig::PermModeChoice::exact;
        else if (f.perm_mode == "monte_carlo") cfg.perm_mode = calsig::PermModeChoice::monte_carlo;
        else throw calsig::ParseError("perm-mode must be auto, exact or monte_carlo");
    }
    if (f.cmd->get_option_no_throw("--two-sided") && set("--two-sided"))
        cfg.two_sided = f.two_sided;
    if (f.cmd->get_option_no_throw("--k-values") && set("--k-values")) cfg.k_values = f.k_values;
    if (f.cmd->get_option_no_throw("--cv-runs") && set("--cv-runs")) cfg.cv_runs = f.cv_runs;
    if (f.cmd->get_option_no_throw("--train-fraction") && set("--train-fraction"))
        cfg.train_fraction = f.train_fraction;
    if (f.cmd->get_option_no_throw("--frame-interval") && set("--frame-interval")) {
        cfg.frame_interval_s = f.frame_interval;
        cfg.sim.frame_interval_s = f.frame_interval;
    }
    if (f.cmd->get_option_no_throw("--pixels") && set("--pixels")) cfg.sim.n_pixels = f.sim_pixels;
    if (f.cmd->get_option_no_throw("--frames") && set("--frames")) cfg.sim.n_frames = f.sim_frames;
    if (f.cmd->get_option_no_throw("--clip-level") && set("--clip-level"))
        cfg.sim.clip_level = f.clip_level;
    if (f.cmd->get_option_no_throw("--noise-scale") && set("--noise-scale"))
        cfg.sim.noise_scale = f.noise_scale;
    if (f.cmd->get_option_no_throw("--pixel-profile") && set("--pixel-profile")) {
        if (f.pixel_profile == "plateau") cfg.sim.pixel_profile = calsig::PixelProfile::plateau;
        else if (f.pixel_profile == "raised_sine")
            cfg.sim.pixel_profile = calsig::PixelProfile::raised_sine;
        else throw calsig::ParseError("pixel-profile must be plateau or raised_sine");
    }
    if (f.cmd->get_option_no_throw("--signal-profile") && set("--signal-profile")) {
        if (f.signal_profile == "burst_train")
            cfg.sim.signal_profile = calsig::SignalProfile::burst_train;
        else if (f.signal_profile == "decaying_sine")
            cfg.sim.signal_profile = calsig::SignalProfile::decaying_sine;
        else throw calsig::ParseError("signal-profile must be burst_train or decaying_sine");
    }
    if (f.cmd->get_option_no_throw("--frame-size") && set("--frame-size")) {
        cfg.layout.frame_width = f.frame_width;
        cfg.layout.frame_height = f.frame_width;
        cfg.layout.cx = f.frame_width / 2;
        cfg.layout.cy = f.frame_width / 2;
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"calsig: segment, extract, clarify and compare calcium-imaging signals"};
    app.require_subcommand(1);

    CommonFlags sim_f, seg_f, cla_f, cmp_f;

    CLI::App* sim = app.add_subcommand(
        "simulate", "generate a synthetic dataset, movie and recovery report");
    add_common(sim, sim_f);
    sim->add_option("--pixels", sim_f.sim_pixels, "simulated pixel count");
    sim->add_option("--frames", sim_f.sim_frames, "simulated frame count");
    sim->add_option("--clip-level", sim_f.clip_level, "saturation clip level");
    sim->add_option("--noise-scale", sim_f.noise_scale, "noise sigma0 (sd = sigma0*u_i*v_j)");
    sim->add_option("--pixel-profile", sim_f.pixel_profile, "plateau | raised_sine");
    sim->add_option("--signal-profile", sim_f.signal_profile, "burst_train | decaying_sine");
    sim->add_option("--frame-size", sim_f.frame_width, "rendered movie frame width and height");
    sim->add_option("--frame-interval", sim_f.frame_interval, "seconds per frame");
    sim->add_option("--tol", sim_f.wsvd_tol, "wsvd convergence tolerance");
    sim->add_option("--max-iters", sim_f.wsvd_max_iters, "wsvd iteration budget");

    CLI::App* seg = app.add_subcommand("segment", "segment cells from a movie and extract matrices");
    add_common(seg, seg_f);
    seg->add_option("--movie", seg_f.movie_dir, "movie directory (PGM frames + manifest.json)");
    seg->add_option("--roi", seg_f.roi_path, "rough ROI csv: cell_id,x0,y0,x1,y1");
    seg->add_option("--sigma", seg_f.blur_sigma, "gaussian blur sigma (pixels)");
    seg->add_option("--min-area", seg_f.min_area, "minimum mask area (pixels)");
    seg->add_option("--threshold", seg_f.threshold, "'otsu' or fixed cutoff in [0,1)");
    seg->add_option("--saturation-level", seg_f.saturation_level, "grayscale saturation level");

    CLI::App* cla = app.add_subcommand("clarify", "weighted rank-1 fits of extracted matrices");
    add_common(cla, cla_f);
    cla->add_option("--input", cla_f.input_dir, "segment output directory");
    cla->add_option("--saturation-level", cla_f.saturation_level, "grayscale saturation level");
    cla->add_option("--tol", cla_f.wsvd_tol, "convergence tolerance");
    cla->add_option("--max-iters", cla_f.wsvd_max_iters, "iteration budget");
    cla->add_flag("--no-variance-weights", cla_f.no_variance_weights,
                  "indicator-only weights (missing-data least squares)");

    CLI::App* cmp = app.add_subcommand("compare", "embed, cross-validate and test group contrasts");
    add_common(cmp, cmp_f);
    cmp->add_option("--input", cmp_f.input_dir, "clarify output directory");
    cmp->add_option("--labels", cmp_f.labels_path, "labels csv: cell_id,group,hormone");
    cmp->add_option("--peak-window", cmp_f.peak_window, "peak window minutes: start end")
        ->expected(2);
    cmp->add_option("--post-peak-window", cmp_f.post_peak_window,
                    "post-peak window minutes: start end")
        ->expected(2);
    cmp->add_option("--n-perm", cmp_f.n_permutations, "Monte-Carlo permutation count");
    cmp->add_option("--perm-mode", cmp_f.perm_mode, "auto | exact | monte_carlo");
    cmp->add_flag("--two-sided", cmp_f.two_sided, "two-sided permutation test");
    cmp->add_option("--k-values", cmp_f.k_values, "k-NN neighbour counts");
    cmp->add_option("--cv-runs", cmp_f.cv_runs, "cross-validation runs");
    cmp->add_option("--train-fraction", cmp_f.train_fraction, "training fraction per class");
    cmp->add_option("--frame-interval", cmp_f.frame_interval,
                    "seconds per frame (fallback when no upstream report exists)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed()) calsig::cmd_simulate(build_config(sim_f));
        if (seg->parsed()) calsig::cmd_segment(build_config(seg_f));
        if (cla->parsed()) calsig::cmd_clarify(build_config(cla_f));
        if (cmp->parsed()) calsig::cmd_compare(build_config(cmp_f));
    } catch (const calsig::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return category_exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
