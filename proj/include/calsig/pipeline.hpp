#ifndef CALSIG_PIPELINE_HPP
#define CALSIG_PIPELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "calsig/compare.hpp"
#include "calsig/simulation.hpp"

namespace calsig {

inline constexpr const char* kVersion = "0.1.0";

enum class PermModeChoice { auto_pick, exact, monte_carlo };

struct PipelineConfig {
    // stage inputs/outputs
    std::string movie_dir;
    std::string roi_path;
    std::string labels_path;
    std::string input_dir;  // previous stage's output directory
    std::string output_dir;

    double saturation_level = 255.0;

    // segmentation
    double blur_sigma = 2.0;
    std::size_t min_area = 20;
    std::string threshold = "otsu";  // "otsu" or a fixed cutoff in (0,1)

    // wsvd
    double wsvd_tol = 1e-8;
    std::size_t wsvd_max_iters = 500;
    bool use_variance_weights = true;

    // comparison windows (minutes)
    WindowSpec windows;

    // statistics
    std::size_t n_permutations = 100000;
    PermModeChoice perm_mode = PermModeChoice::auto_pick;
    bool two_sided = false;
    std::vector<std::size_t> k_values{1, 2, 3, 4, 5};
    std::size_t cv_runs = 1000;
    double train_fraction = 0.8;

    std::uint64_t seed = 1;
    std::size_t jobs = 1;

    // simulate
    SimConfig sim;
    DiskLayout layout;
    double frame_interval_s = 10.0;  // fallback when no upstream report exists
};

/// Reads a JSON config file; unknown keys are rejected so typos surface.
PipelineConfig load_config_json(const std::string& path, PipelineConfig base = {});

/// ROI CSV: cell_id,x0,y0,x1,y1 per line; a header line is allowed.
std::vector<RoughRoi> parse_roi_csv(const std::string& path);

struct CellLabel {
    std::int64_t cell_id;
    GroupLabel group;
    HormoneLevel hormone;
};

/// Labels CSV: cell_id,group,hormone per line; a header line is allowed.
std::vector<CellLabel> parse_labels_csv(const std::string& path);

std::string fnv1a64_hex(const std::string& bytes);

// Each command writes its artifacts plus a run_manifest.json listing every
// emitted file with a content digest. Per-cell failures are recorded and
// skipped; the command throws only when nothing succeeds.
void cmd_simulate(const PipelineConfig& config);
void cmd_segment(const PipelineConfig& config);
void cmd_clarify(const PipelineConfig& config);
void cmd_compare(const PipelineConfig& config);

} // namespace calsig

#endif
