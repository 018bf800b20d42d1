#include "calsig/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "calsig/errors.hpp"
#include "calsig/image.hpp"
#include "calsig/rng.hpp"
#include "calsig/segmentation.hpp"
#include "calsig/svd.hpp"
#include "calsig/svg.hpp"
#include "calsig/wsvd.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace calsig {

std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Collects every emitted file with its digest; all writes go through a
// temporary file plus rename so readers never see partial output.
class OutputWriter {
public:
    explicit OutputWriter(fs::path root) : root_(std::move(root)) {
        fs::create_directories(root_);
    }

    void write(const std::string& relpath, const std::string& content) {
        fs::path target = root_ / relpath;
        fs::create_directories(target.parent_path());
        fs::path tmp = target;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw ParseError("cannot open for writing: " + tmp.string());
            out << content;
            if (!out) throw ParseError("write failed: " + tmp.string());
        }
        fs::rename(tmp, target);
        record(relpath, fnv1a64_hex(content));
    }

    // For files written by other helpers (movie frames): digest from disk.
    void record_existing(const std::string& relpath) {
        record(relpath, fnv1a64_hex(read_file(root_ / relpath)));
    }

    void record(const std::string& relpath, const std::string& digest) {
        std::lock_guard<std::mutex> lock(mutex_);
        files_.emplace_back(relpath, digest);
    }

    const fs::path& root() const { return root_; }

    void write_manifest(const std::string& command, const ordered_json& config_snapshot) {
        std::sort(files_.begin(), files_.end());
        ordered_json manifest;
        manifest["command"] = command;
        manifest["version"] = kVersion;
        std::time_t now = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        manifest["created_utc"] = stamp;
        manifest["config"] = config_snapshot;
        manifest["files"] = ordered_json::array();
        for (const auto& [path, digest] : files_)
            manifest["files"].push_back({{"path", path}, {"fnv1a64", digest}});
        fs::path target = root_ / "run_manifest.json";
        std::ofstream out(target, std::ios::binary);
        if (!out) throw ParseError("cannot write manifest: " + target.string());
        out << manifest.dump(2) << '\n';
    }

private:
    fs::path root_;
    std::mutex mutex_;
    std::vector<std::pair<std::string, std::string>> files_;
};

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

std::string vector_csv(const std::vector<double>& v) {
    Matrix m(v.size(), 1);
    m.data = v;
    std::ostringstream ss;
    write_matrix_csv(m, ss);
    return ss.str();
}

std::string matrix_csv(const Matrix& m) {
    std::ostringstream ss;
    write_matrix_csv(m, ss);
    return ss.str();
}

ordered_json config_snapshot(const PipelineConfig& c) {
    ordered_json j;
    j["movie_dir"] = c.movie_dir;
    j["roi_path"] = c.roi_path;
    j["labels_path"] = c.labels_path;
    j["input_dir"] = c.input_dir;
    j["output_dir"] = c.output_dir;
    j["saturation_level"] = c.saturation_level;
    j["blur_sigma"] = c.blur_sigma;
    j["min_area"] = c.min_area;
    j["threshold"] = c.threshold;
    j["wsvd_tol"] = c.wsvd_tol;
    j["wsvd_max_iters"] = c.wsvd_max_iters;
    j["use_variance_weights"] = c.use_variance_weights;
    j["peak_window_minutes"] = {c.windows.peak_start_min, c.windows.peak_end_min};
    j["post_peak_window_minutes"] = {c.windows.post_peak_start_min, c.windows.post_peak_end_min};
    j["n_permutations"] = c.n_permutations;
    j["perm_mode"] = c.perm_mode == PermModeChoice::auto_pick
                         ? "auto"
                         : (c.perm_mode == PermModeChoice::exact ? "exact" : "monte_carlo");
    j["two_sided"] = c.two_sided;
    j["k_values"] = c.k_values;
    j["cv_runs"] = c.cv_runs;
    j["train_fraction"] = c.train_fraction;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["frame_interval_seconds"] = c.frame_interval_s;
    j["sim"] = {{"n_pixels", c.sim.n_pixels},
                {"n_frames", c.sim.n_frames},
                {"pixel_profile", c.sim.pixel_profile == PixelProfile::plateau ? "plateau" : "raised_sine"},
                {"signal_profile",
                 c.sim.signal_profile == SignalProfile::burst_train ? "burst_train" : "decaying_sine"},
                {"clip_level", c.sim.clip_level},
                {"noise_scale", c.sim.noise_scale},
                {"seed", c.sim.seed},
                {"frame_interval_seconds", c.sim.frame_interval_s}};
    j["layout"] = {{"frame_width", c.layout.frame_width},
                   {"frame_height", c.layout.frame_height},
                   {"cx", c.layout.cx},
                   {"cy", c.layout.cy},
                   {"radius", c.layout.radius}};
    return j;
}

SegmentationParams segmentation_params(const PipelineConfig& c) {
    SegmentationParams p;
    p.blur_sigma = c.blur_sigma;
    p.min_area = c.min_area;
    if (c.threshold == "otsu") {
        p.threshold_mode = ThresholdMode::otsu;
    } else {
        p.threshold_mode = ThresholdMode::fixed;
        try {
            p.fixed_threshold = std::stod(c.threshold);
        } catch (const std::exception&) {
            throw ParseError("threshold must be 'otsu' or a number in [0,1), got '" +
                             c.threshold + "'");
        }
        if (p.fixed_threshold < 0.0 || p.fixed_threshold >= 1.0)
            throw ParseError("fixed threshold must lie in [0,1)");
    }
    return p;
}

WsvdOptions wsvd_options(const PipelineConfig& c) {
    WsvdOptions o;
    o.use_variance_weights = c.use_variance_weights;
    o.max_iters = c.wsvd_max_iters;
    o.tol = c.wsvd_tol;
    return o;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(',', pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
    for (auto& tok : out) {
        while (!tok.empty() && (tok.back() == '\r' || tok.back() == ' ')) tok.pop_back();
        while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    }
    return out;
}

} // namespace

PipelineConfig load_config_json(const std::string& path, PipelineConfig base) {
    nlohmann::json j;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("cannot open config: " + path);
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ParseError(path + ": " + e.what());
        }
    }
    PipelineConfig c = std::move(base);
    try {
        for (auto& [key, value] : j.items()) {
            if (key == "movie_dir") c.movie_dir = value.get<std::string>();
            else if (key == "roi_path") c.roi_path = value.get<std::string>();
            else if (key == "labels_path") c.labels_path = value.get<std::string>();
            else if (key == "input_dir") c.input_dir = value.get<std::string>();
            else if (key == "output_dir") c.output_dir = value.get<std::string>();
            else if (key == "saturation_level") c.saturation_level = value.get<double>();
            else if (key == "blur_sigma") c.blur_sigma = value.get<double>();
            else if (key == "min_area") c.min_area = value.get<std::size_t>();
            else if (key == "threshold") c.threshold = value.get<std::string>();
            else if (key == "wsvd_tol") c.wsvd_tol = value.get<double>();
            else if (key == "wsvd_max_iters") c.wsvd_max_iters = value.get<std::size_t>();
            else if (key == "use_variance_weights") c.use_variance_weights = value.get<bool>();
            else if (key == "peak_window_minutes") {
                c.windows.peak_start_min = value.at(0).get<double>();
                c.windows.peak_end_min = value.at(1).get<double>();
            } else if (key == "post_peak_window_minutes") {
                c.windows.post_peak_start_min = value.at(0).get<double>();
                c.windows.post_peak_end_min = value.at(1).get<double>();
            } else if (key == "n_permutations") c.n_permutations = value.get<std::size_t>();
            else if (key == "perm_mode") {
                std::string m = value.get<std::string>();
                if (m == "auto") c.perm_mode = PermModeChoice::auto_pick;
                else if (m == "exact") c.perm_mode = PermModeChoice::exact;
                else if (m == "monte_carlo") c.perm_mode = PermModeChoice::monte_carlo;
                else throw ParseError("perm_mode must be auto, exact or monte_carlo");
            } else if (key == "two_sided") c.two_sided = value.get<bool>();
            else if (key == "k_values") c.k_values = value.get<std::vector<std::size_t>>();
            else if (key == "cv_runs") c.cv_runs = value.get<std::size_t>();
            else if (key == "train_fraction") c.train_fraction = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "jobs") c.jobs = value.get<std::size_t>();
            else if (key == "frame_interval_seconds") c.frame_interval_s = value.get<double>();
            else if (key == "sim") {
                for (auto& [sk, sv] : value.items()) {
                    if (sk == "n_pixels") c.sim.n_pixels = sv.get<std::size_t>();
                    else if (sk == "n_frames") c.sim.n_frames = sv.get<std::size_t>();
                    else if (sk == "pixel_profile") {
                        std::string p = sv.get<std::string>();
                        if (p == "plateau") c.sim.pixel_profile = PixelProfile::plateau;
                        else if (p == "raised_sine") c.sim.pixel_profile = PixelProfile::raised_sine;
                        else throw ParseError("pixel_profile must be plateau or raised_sine");
                    } else if (sk == "signal_profile") {
                        std::string p = sv.get<std::string>();
                        if (p == "burst_train") c.sim.signal_profile = SignalProfile::burst_train;
                        else if (p == "decaying_sine")
                            c.sim.signal_profile = SignalProfile::decaying_sine;
                        else throw ParseError("signal_profile must be burst_train or decaying_sine");
                    } else if (sk == "clip_level") c.sim.clip_level = sv.get<double>();
                    else if (sk == "noise_scale") c.sim.noise_scale = sv.get<double>();
                    else if (sk == "seed") c.sim.seed = sv.get<std::uint64_t>();
                    else if (sk == "frame_interval_seconds")
                        c.sim.frame_interval_s = sv.get<double>();
                    else throw ParseError(path + ": unknown sim key '" + sk + "'");
                }
            } else if (key == "layout") {
                for (auto& [lk, lv] : value.items()) {
                    if (lk == "frame_width") c.layout.frame_width = lv.get<int>();
                    else if (lk == "frame_height") c.layout.frame_height = lv.get<int>();
                    else if (lk == "cx") c.layout.cx = lv.get<int>();
                    else if (lk == "cy") c.layout.cy = lv.get<int>();
                    else if (lk == "radius") c.layout.radius = lv.get<double>();
                    else throw ParseError(path + ": unknown layout key '" + lk + "'");
                }
            } else {
                throw ParseError(path + ": unknown config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return c;
}

std::vector<RoughRoi> parse_roi_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open roi file: " + path);
    std::vector<RoughRoi> rois;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto tokens = split_csv_line(line);
        if (line_no == 1 && !tokens.empty() && tokens[0] == "cell_id") continue;  // header
        if (tokens.size() != 5)
            throw ParseError(path + ": line " + std::to_string(line_no) +
                             ": expected cell_id,x0,y0,x1,y1");
        RoughRoi roi;
        try {
            roi.cell_id = std::stoll(tokens[0]);
            roi.x0 = std::stoi(tokens[1]);
            roi.y0 = std::stoi(tokens[2]);
            roi.x1 = std::stoi(tokens[3]);
            roi.y1 = std::stoi(tokens[4]);
        } catch (const std::exception&) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": bad integer field");
        }
        rois.push_back(roi);
    }
    if (rois.empty()) throw ParseError(path + ": no ROI rows");
    return rois;
}

std::vector<CellLabel> parse_labels_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open labels file: " + path);
    std::vector<CellLabel> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto tokens = split_csv_line(line);
        if (line_no == 1 && !tokens.empty() && tokens[0] == "cell_id") continue;  // header
        if (tokens.size() != 3)
            throw ParseError(path + ": line " + std::to_string(line_no) +
                             ": expected cell_id,group,hormone");
        CellLabel label{};
        try {
            label.cell_id = std::stoll(tokens[0]);
        } catch (const std::exception&) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": bad cell id");
        }
        try {
            label.group = group_label_from_string(tokens[1]);
            label.hormone = hormone_level_from_string(tokens[2]);
        } catch (const ParseError& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        labels.push_back(label);
    }
    if (labels.empty()) throw ParseError(path + ": no label rows");
    return labels;
}

// ---------------------------------------------------------------------------
// simulate

void cmd_simulate(const PipelineConfig& config) {
    if (config.output_dir.empty()) throw ParseError("simulate: output_dir is required");
    OutputWriter out(config.output_dir);

    SimConfig sim = config.sim;
    sim.seed = config.seed;
    SimDataset ds = generate(sim);

    out.write("truth.csv", matrix_csv(ds.truth));
    out.write("noisy.csv", matrix_csv(ds.noisy));
    out.write("saturated.csv", matrix_csv(ds.saturated));
    {
        Matrix mask(ds.mask.rows, ds.mask.cols);
        for (std::size_t i = 0; i < mask.data.size(); ++i)
            mask.data[i] = static_cast<double>(ds.mask.indicator[i]);
        out.write("mask.csv", matrix_csv(mask));
    }
    out.write("true_eigenpixel.csv", vector_csv(ds.true_u));
    out.write("true_eigensignal.csv", vector_csv(ds.true_v));

    DiskLayout layout = config.layout;
    {
        bool fits = layout.radius >= 0.0;
        if (fits) {
            auto pixels = disk_pixels(layout);
            fits = pixels.size() >= sim.n_pixels;
            for (std::size_t i = 0; fits && i < sim.n_pixels; ++i)
                fits = pixels[i].first >= 0 && pixels[i].second >= 0 &&
                       pixels[i].first < layout.frame_width &&
                       pixels[i].second < layout.frame_height;
        }
        if (!fits) {
            layout.radius = fit_disk_radius(sim.n_pixels);
            layout.cx = layout.frame_width / 2;
            layout.cy = layout.frame_height / 2;
        }
    }
    ImageStack movie = render_movie(ds, layout);
    save_movie(movie, (out.root() / "movie").string());
    out.record_existing("movie/manifest.json");
    {
        char name[48];
        for (std::size_t f = 0; f < movie.frame_count(); ++f) {
            std::snprintf(name, sizeof(name), "movie/frame_%04zu.pgm", f);
            out.record_existing(name);
        }
    }

    // Recovery study: plain SVD on the saturated matrix vs the weighted and
    // unweighted WSVD, each scored against the known truth.
    PixelTimeMatrix ptm;
    ptm.cell_id = 0;
    ptm.values = ds.saturated;
    ptm.saturation_level = sim.clip_level;

    SvdTriplet sat = svd(ds.saturated, 1);
    std::vector<double> sat_u(ds.saturated.rows), sat_v(ds.saturated.cols);
    for (std::size_t i = 0; i < sat_u.size(); ++i) sat_u[i] = sat.left_vectors.at(i, 0);
    for (std::size_t j = 0; j < sat_v.size(); ++j) sat_v[j] = sat.right_vectors.at(j, 0);

    WsvdOptions wopt = wsvd_options(config);
    wopt.use_variance_weights = true;
    WsvdResult weighted = wsvd_fit(ptm, ds.mask, wopt);
    wopt.use_variance_weights = false;
    WsvdResult unweighted = wsvd_fit(ptm, ds.mask, wopt);

    auto section = [&](const std::vector<double>& sat_vec, const std::vector<double>& w_vec,
                       const std::vector<double>& nw_vec, const std::vector<double>& truth) {
        double e_sat = recovery_error(sat_vec, truth).error_sum;
        double e_w = recovery_error(w_vec, truth).error_sum;
        double e_nw = recovery_error(nw_vec, truth).error_sum;
        ordered_json j;
        j["error_sum_saturated"] = e_sat;
        j["error_sum_wsvd"] = e_w;
        j["error_sum_wsvd_no_weight"] = e_nw;
        j["exact_recovery"] = e_w < 1e-8;
        j["ratio_wsvd"] = e_w < 1e-12 ? ordered_json() : ordered_json(e_sat / e_w);
        j["ratio_no_weight"] = e_nw < 1e-12 ? ordered_json() : ordered_json(e_sat / e_nw);
        return j;
    };
    ordered_json recovery;
    recovery["eigenpixel"] = section(sat_u, weighted.eigenpixel, unweighted.eigenpixel, ds.true_u);
    recovery["eigensignal"] =
        section(sat_v, weighted.eigensignal, unweighted.eigensignal, ds.true_v);
    recovery["wsvd_iterations"] = weighted.iterations;
    recovery["wsvd_no_weight_iterations"] = unweighted.iterations;
    recovery["wsvd_flag_count"] = weighted.flag_report.size();
    out.write("recovery_report.json", recovery.dump(2) + "\n");

    ordered_json report;
    report["clip_fraction"] = ds.clip_fraction;
    report["noise_scale"] = sim.noise_scale;
    report["clip_level"] = sim.clip_level;
    report["seed"] = sim.seed;
    report["n_pixels"] = sim.n_pixels;
    report["n_frames"] = sim.n_frames;
    out.write("sim_report.json", report.dump(2) + "\n");

    out.write_manifest("simulate", config_snapshot(config));
}

// ---------------------------------------------------------------------------
// segment

void cmd_segment(const PipelineConfig& config) {
    if (config.movie_dir.empty()) throw ParseError("segment: movie_dir is required");
    if (config.roi_path.empty()) throw ParseError("segment: roi_path is required");
    if (config.output_dir.empty()) throw ParseError("segment: output_dir is required");

    ImageStack stack = load_movie(config.movie_dir);
    std::vector<RoughRoi> rois = parse_roi_csv(config.roi_path);
    SegmentationParams params = segmentation_params(config);
    OutputWriter out(config.output_dir);

    struct CellOutcome {
        bool ok = false;
        std::string error;
        std::size_t n_pixels = 0;
        std::size_t n_candidates = 0;
    };
    std::vector<CellOutcome> outcomes(rois.size());

    parallel_for(rois.size(), config.jobs, [&](std::size_t i) {
        const RoughRoi& roi = rois[i];
        auto& outcome = outcomes[i];
        try {
            PixelTimeMatrix rough = rough_matrix(stack, roi);
            RealImage eigen = eigenpixel_image(rough);
            std::vector<CellMask> masks = segment(eigen, params);
            outcome.n_candidates = masks.size();

            // The rectangle may catch chunks of neighbouring cells; keep the
            // component with the highest total EigenPixel intensity.
            std::size_t best = 0;
            double best_mass = -1.0;
            for (std::size_t k = 0; k < masks.size(); ++k) {
                double mass = 0.0;
                for (auto [x, y] : masks[k].pixels)
                    mass += eigen.at(x - eigen.origin_x, y - eigen.origin_y);
                if (mass > best_mass) {
                    best_mass = mass;
                    best = k;
                }
            }
            CellMask mask = masks[best];
            mask.cell_id = roi.cell_id;
            PixelTimeMatrix cell = final_matrix(stack, mask);
            cell.saturation_level = config.saturation_level;

            std::string dir = "cells/" + std::to_string(roi.cell_id) + "/";
            std::ostringstream mask_csv;
            mask_csv << "cell_id,x,y\n";
            for (auto [x, y] : mask.pixels)
                mask_csv << roi.cell_id << ',' << x << ',' << y << '\n';
            out.write(dir + "mask.csv", mask_csv.str());
            out.write(dir + "matrix.csv", matrix_csv(cell.values));
            outcome.n_pixels = mask.pixels.size();
            outcome.ok = true;
        } catch (const Error& e) {
            outcome.error = e.what();
        }
    });

    ordered_json report;
    report["width"] = stack.width;
    report["height"] = stack.height;
    report["frame_count"] = stack.frame_count();
    report["frame_interval_seconds"] = stack.frame_interval_s;
    report["peak_frame"] = find_peak_frame(stack);
    report["cells"] = ordered_json::array();
    std::size_t succeeded = 0;
    for (std::size_t i = 0; i < rois.size(); ++i) {
        ordered_json cell;
        cell["cell_id"] = rois[i].cell_id;
        cell["status"] = outcomes[i].ok ? "ok" : "failed";
        if (outcomes[i].ok) {
            cell["n_pixels"] = outcomes[i].n_pixels;
            cell["n_candidates"] = outcomes[i].n_candidates;
            ++succeeded;
        } else {
            cell["error"] = outcomes[i].error;
        }
        report["cells"].push_back(cell);
    }
    out.write("segment_report.json", report.dump(2) + "\n");
    out.write_manifest("segment", config_snapshot(config));

    if (succeeded == 0)
        throw NoCellFoundError("segment: no cell could be segmented from any ROI");
}

// ---------------------------------------------------------------------------
// clarify

namespace {

std::vector<std::int64_t> list_cell_ids(const fs::path& cells_dir) {
    std::vector<std::int64_t> ids;
    if (!fs::is_directory(cells_dir)) return ids;
    for (const auto& entry : fs::directory_iterator(cells_dir)) {
        if (!entry.is_directory()) continue;
        try {
            ids.push_back(std::stoll(entry.path().filename().string()));
        } catch (const std::exception&) {
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace

void cmd_clarify(const PipelineConfig& config) {
    if (config.input_dir.empty()) throw ParseError("clarify: input_dir is required");
    if (config.output_dir.empty()) throw ParseError("clarify: output_dir is required");

    fs::path cells_dir = fs::path(config.input_dir) / "cells";
    std::vector<std::int64_t> ids = list_cell_ids(cells_dir);
    if (ids.empty())
        throw InvalidInputError("clarify: no cell matrices under " + cells_dir.string());

    double frame_interval = config.frame_interval_s;
    {
        fs::path seg_report = fs::path(config.input_dir) / "segment_report.json";
        if (fs::exists(seg_report)) {
            nlohmann::json j = nlohmann::json::parse(read_file(seg_report));
            frame_interval = j.value("frame_interval_seconds", frame_interval);
        }
    }

    OutputWriter out(config.output_dir);
    WsvdOptions wopt = wsvd_options(config);

    struct CellOutcome {
        bool ok = false;
        bool convergence_failure = false;
        std::string error;
        std::size_t iterations = 0;
        std::size_t dropped = 0;
        std::size_t flags = 0;
        double first_fraction = 0.0;
    };
    std::vector<CellOutcome> outcomes(ids.size());

    parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
        auto& outcome = outcomes[i];
        try {
            PixelTimeMatrix ptm;
            ptm.cell_id = ids[i];
            ptm.values =
                load_matrix_csv((cells_dir / std::to_string(ids[i]) / "matrix.csv").string());
            ptm.saturation_level = config.saturation_level;

            SvdTriplet full = svd(ptm.values, std::min(ptm.values.rows, ptm.values.cols));
            outcome.first_fraction = variance_explained(full)[0];

            WsvdResult res = clarify_cell(ptm, wopt);
            std::string dir = "cells/" + std::to_string(ids[i]) + "/";
            out.write(dir + "eigenpixel.csv", vector_csv(res.eigenpixel));
            out.write(dir + "eigensignal.csv", vector_csv(res.eigensignal));
            out.write(dir + "imputed.csv", matrix_csv(res.imputed));

            ordered_json report;
            report["cell_id"] = ids[i];
            report["scale"] = res.scale;
            report["iterations"] = res.iterations;
            report["dropped_pixels"] = res.dropped_pixels;
            report["flag_report"] = ordered_json::array();
            for (auto [r, c] : res.flag_report)
                report["flag_report"].push_back({{"row", r}, {"col", c}});
            report["final_objective"] = res.final_objective;
            report["use_variance_weights"] = wopt.use_variance_weights;
            out.write(dir + "wsvd_report.json", report.dump(2) + "\n");

            outcome.iterations = res.iterations;
            outcome.dropped = res.dropped_pixels.size();
            outcome.flags = res.flag_report.size();
            outcome.ok = true;
        } catch (const ConvergenceError& e) {
            outcome.error = e.what();
            outcome.convergence_failure = true;
        } catch (const Error& e) {
            outcome.error = e.what();
        }
    });

    std::ostringstream var_csv;
    var_csv << "cell_id,first_component_fraction\n";
    ordered_json report;
    report["frame_interval_seconds"] = frame_interval;
    report["cells"] = ordered_json::array();
    std::size_t succeeded = 0, convergence_failures = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& outcome = outcomes[i];
        ordered_json cell;
        cell["cell_id"] = ids[i];
        cell["status"] = outcome.ok ? "ok" : "failed";
        if (outcome.ok) {
            var_csv << ids[i] << ',' << format_value(outcome.first_fraction) << '\n';
            cell["iterations"] = outcome.iterations;
            cell["dropped_pixels"] = outcome.dropped;
            cell["flagged_imputations"] = outcome.flags;
            cell["first_component_fraction"] = outcome.first_fraction;
            ++succeeded;
        } else {
            cell["error"] = outcome.error;
            convergence_failures += outcome.convergence_failure;
        }
        report["cells"].push_back(cell);
    }
    out.write("variance_explained.csv", var_csv.str());
    out.write("clarify_report.json", report.dump(2) + "\n");
    out.write_manifest("clarify", config_snapshot(config));

    if (succeeded == 0) {
        if (convergence_failures == ids.size() - succeeded && convergence_failures > 0)
            throw ConvergenceError("clarify: every cell failed to converge", 0.0);
        throw EmptyCellError("clarify: no cell could be clarified");
    }
}

// ---------------------------------------------------------------------------
// compare

namespace {

struct RegionOutputs {
    bool embedded = false;
    bool stats_done = false;
    std::string skip_reason;
};

void compare_one_level(OutputWriter& out, const PipelineConfig& config, HormoneLevel level,
                       std::vector<CellSignal> cells, ordered_json& level_report) {
    const std::string level_dir = to_string(level) + "/";

    for (WindowRegion region : {WindowRegion::peak, WindowRegion::post_peak}) {
        const std::string dir = level_dir + to_string(region) + "/";
        ordered_json region_report;

        // EigenCell embedding + k-NN cross-validation on the windowed signals.
        std::vector<CellSignal> windowed;
        try {
            for (const auto& c : cells) windowed.push_back(extract_window(c, region, config.windows));
        } catch (const Error& e) {
            region_report["skipped"] = e.what();
            level_report[to_string(region)] = region_report;
            continue;
        }
        EigenCellEmbedding embedding = eigencell_embed(windowed);

        std::ostringstream ec_csv;
        ec_csv << "cell_id,coord1,coord2,label\n";
        for (std::size_t i = 0; i < embedding.cell_ids.size(); ++i)
            ec_csv << embedding.cell_ids[i] << ',' << format_value(embedding.coords[i][0]) << ','
                   << format_value(embedding.coords[i][1]) << ',' << to_string(embedding.labels[i])
                   << '\n';
        out.write(dir + "eigencells.csv", ec_csv.str());

        ScatterSeries control{"control", "steelblue", false, {}};
        ScatterSeries treated{"treated", "crimson", true, {}};
        for (std::size_t i = 0; i < embedding.coords.size(); ++i)
            (embedding.labels[i] == GroupLabel::control ? control : treated)
                .points.emplace_back(embedding.coords[i][0], embedding.coords[i][1]);
        write_scatter_svg((out.root() / dir / "eigencells.svg").string(),
                          "EigenCells (" + to_string(level) + ", " + to_string(region) + ")",
                          "component 1", "component 2", {control, treated});
        out.record_existing(dir + "eigencells.svg");

        KnnCvOptions cv;
        cv.k_values = config.k_values;
        cv.runs = config.cv_runs;
        cv.train_fraction = config.train_fraction;
        cv.seed = config.seed ^ Rng::fnv1a64("cv." + to_string(level) + "." + to_string(region));
        KnnCvResult cv_result = knn_cv(embedding, cv);
        ordered_json cvj;
        cvj["k_values"] = cv.k_values;
        cvj["runs"] = cv.runs;
        cvj["train_fraction"] = cv.train_fraction;
        cvj["per_k_error"] = ordered_json::object();
        for (auto [k, err] : cv_result.per_k_error) cvj["per_k_error"][std::to_string(k)] = err;
        cvj["mean_error"] = cv_result.mean_error;
        cvj["variance_fractions"] = embedding.variance_fractions;
        out.write(dir + "cv_report.json", cvj.dump(2) + "\n");
        region_report["cv_mean_error"] = cv_result.mean_error;

        // Normalization + landmark registration, then height/area stats over
        // this region's window and the permutation tests.
        std::vector<CellSignal> registered;
        std::vector<std::int64_t> no_rise;
        std::size_t shortest = SIZE_MAX;
        for (const auto& c : cells) {
            try {
                RegisteredSignal r = normalize_and_register(c);
                shortest = std::min(shortest, r.signal.eigensignal.size());
                registered.push_back(std::move(r.signal));
            } catch (const Error&) {
                no_rise.push_back(c.cell_id);
            }
        }
        region_report["no_rise_cells"] = no_rise;
        std::vector<double> heights[2], areas[2];
        std::ostringstream peaks_csv;
        peaks_csv << "cell_id,height,area\n";
        bool stats_ok = false;
        if (registered.size() >= 2) {
            for (auto& r : registered) r.eigensignal.resize(shortest);
            try {
                for (const auto& r : registered) {
                    PeakStats ps = peak_stats(r, region, config.windows);
                    peaks_csv << r.cell_id << ',' << format_value(ps.height) << ','
                              << format_value(ps.area) << '\n';
                    int g = r.group == GroupLabel::treated ? 1 : 0;
                    heights[g].push_back(ps.height);
                    areas[g].push_back(ps.area);
                }
                stats_ok = true;
            } catch (const Error& e) {
                region_report["stats_skipped"] = e.what();
            }
        } else {
            region_report["stats_skipped"] = "fewer than 2 registered signals";
        }

        if (stats_ok && (heights[0].empty() || heights[1].empty())) {
            stats_ok = false;
            region_report["stats_skipped"] = "a group has no registered signals";
        }
        if (stats_ok) {
            out.write(dir + "peaks.csv", peaks_csv.str());
            write_box_svg((out.root() / dir / "peaks_height_box.svg").string(),
                          "Peak height (" + to_string(level) + ", " + to_string(region) + ")",
                          "fold change",
                          {{"control", heights[0]}, {"treated", heights[1]}});
            out.record_existing(dir + "peaks_height_box.svg");
            write_box_svg((out.root() / dir / "peaks_area_box.svg").string(),
                          "Peak area (" + to_string(level) + ", " + to_string(region) + ")",
                          "fold change x minutes",
                          {{"control", areas[0]}, {"treated", areas[1]}});
            out.record_existing(dir + "peaks_area_box.svg");

            auto run_test = [&](const std::vector<double>& c, const std::vector<double>& t,
                                std::string_view stream) {
                PermMode mode;
                switch (config.perm_mode) {
                    case PermModeChoice::exact: mode = PermMode::exact; break;
                    case PermModeChoice::monte_carlo: mode = PermMode::monte_carlo; break;
                    default: {
                        double combos = 1.0;
                        std::size_t n = c.size() + t.size(), k = c.size();
                        k = std::min(k, n - k);
                        for (std::size_t i = 1; i <= k && combos <= 2e6; ++i)
                            combos = combos * static_cast<double>(n - k + i) / static_cast<double>(i);
                        mode = combos <= 1e6 ? PermMode::exact : PermMode::monte_carlo;
                    }
                }
                std::uint64_t seed = config.seed ^ Rng::fnv1a64(std::string(stream));
                return permutation_test(c, t, config.n_permutations, seed, mode,
                                        config.two_sided);
            };
            PermTestResult height_test =
                run_test(heights[0], heights[1],
                         "perm.height." + to_string(level) + "." + to_string(region));
            PermTestResult area_test = run_test(
                areas[0], areas[1], "perm.area." + to_string(level) + "." + to_string(region));
            auto test_json = [](const PermTestResult& r) {
                ordered_json j;
                j["statistic"] = r.statistic;
                j["p_value"] = r.p_value;
                j["mode"] = r.exact ? "exact" : "monte_carlo";
                j["n_permutations"] = r.n_permutations;
                return j;
            };
            ordered_json pj;
            pj["peak_height"] = test_json(height_test);
            pj["peak_area"] = test_json(area_test);
            pj["two_sided"] = config.two_sided;
            out.write(dir + "permtest.json", pj.dump(2) + "\n");
            region_report["permtest_p_height"] = height_test.p_value;
            region_report["permtest_p_area"] = area_test.p_value;
        }
        level_report[to_string(region)] = region_report;
    }
}

} // namespace

void cmd_compare(const PipelineConfig& config) {
    if (config.input_dir.empty()) throw ParseError("compare: input_dir is required");
    if (config.labels_path.empty()) throw ParseError("compare: labels_path is required");
    if (config.output_dir.empty()) throw ParseError("compare: output_dir is required");

    std::vector<CellLabel> labels = parse_labels_csv(config.labels_path);
    fs::path cells_dir = fs::path(config.input_dir) / "cells";

    double frame_interval = config.frame_interval_s;
    {
        fs::path clarify_report = fs::path(config.input_dir) / "clarify_report.json";
        if (fs::exists(clarify_report)) {
            nlohmann::json j = nlohmann::json::parse(read_file(clarify_report));
            frame_interval = j.value("frame_interval_seconds", frame_interval);
        }
    }

    std::vector<CellSignal> cells;
    std::vector<std::int64_t> missing;
    for (const auto& label : labels) {
        fs::path sig_path = cells_dir / std::to_string(label.cell_id) / "eigensignal.csv";
        if (!fs::exists(sig_path)) {
            missing.push_back(label.cell_id);
            continue;
        }
        Matrix sig = load_matrix_csv(sig_path.string());
        CellSignal cell;
        cell.cell_id = label.cell_id;
        cell.group = label.group;
        cell.hormone = label.hormone;
        cell.eigensignal = sig.data;
        cell.frame_interval_s = frame_interval;
        fs::path report_path = cells_dir / std::to_string(label.cell_id) / "wsvd_report.json";
        if (fs::exists(report_path)) {
            nlohmann::json j = nlohmann::json::parse(read_file(report_path));
            cell.scale = j.value("scale", 1.0);
        }
        cells.push_back(std::move(cell));
    }
    std::sort(cells.begin(), cells.end(),
              [](const CellSignal& a, const CellSignal& b) { return a.cell_id < b.cell_id; });

    OutputWriter out(config.output_dir);
    ordered_json report;
    report["frame_interval_seconds"] = frame_interval;
    report["missing_cells"] = missing;
    report["levels"] = ordered_json::object();

    std::size_t processed = 0;
    for (HormoneLevel level : {HormoneLevel::basal, HormoneLevel::low, HormoneLevel::high}) {
        std::vector<CellSignal> level_cells;
        std::size_t per_group[2] = {0, 0};
        for (const auto& c : cells)
            if (c.hormone == level) {
                ++per_group[c.group == GroupLabel::treated ? 1 : 0];
                level_cells.push_back(c);
            }
        if (level_cells.empty()) continue;
        ordered_json level_report;
        level_report["n_control"] = per_group[0];
        level_report["n_treated"] = per_group[1];
        if (per_group[0] < 2 || per_group[1] < 2) {
            level_report["skipped"] = "need at least 2 cells per group";
            report["levels"][to_string(level)] = level_report;
            continue;
        }
        compare_one_level(out, config, level, std::move(level_cells), level_report);
        report["levels"][to_string(level)] = level_report;
        ++processed;
    }
    out.write("compare_report.json", report.dump(2) + "\n");
    out.write_manifest("compare", config_snapshot(config));

    if (processed == 0)
        throw InvalidInputError(
            "compare: no hormone level had at least 2 cells in each group");
}

} // namespace calsig
