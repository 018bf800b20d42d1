#ifndef CALSIG_COMPARE_HPP
#define CALSIG_COMPARE_HPP

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "calsig/matrix.hpp"

namespace calsig {

enum class GroupLabel { control, treated };
enum class HormoneLevel { basal, low, high };
enum class WindowRegion { peak, post_peak };

std::string to_string(GroupLabel label);
std::string to_string(HormoneLevel level);
std::string to_string(WindowRegion region);
GroupLabel group_label_from_string(const std::string& s);
HormoneLevel hormone_level_from_string(const std::string& s);

/// One cell's clarified EigenSignal plus its experiment labels.
struct CellSignal {
    std::int64_t cell_id = 0;
    GroupLabel group = GroupLabel::control;
    HormoneLevel hormone = HormoneLevel::basal;
    std::vector<double> eigensignal;
    double scale = 1.0;
    double frame_interval_s = 10.0;
};

/// Window boundaries in minutes; frame indices derive from the signal's
/// frame interval.
struct WindowSpec {
    double peak_start_min = 0.0;
    double peak_end_min = 4.0;
    double post_peak_start_min = 40.0;
    double post_peak_end_min = 80.0;
};

/// Restriction of a signal to the frames whose time lies in the half-open
/// window [start, end).
CellSignal extract_window(const CellSignal& signal, WindowRegion region,
                          const WindowSpec& spec = {});

struct EigenCellEmbedding {
    std::vector<std::int64_t> cell_ids;
    std::vector<GroupLabel> labels;
    std::vector<std::array<double, 2>> coords;  // s_j-scaled left-vector scores
    std::array<double, 2> variance_fractions{0.0, 0.0};
};

/// Fourth SVD: stacks the EigenSignals as rows and keeps the first two
/// component scores per cell.
EigenCellEmbedding eigencell_embed(const std::vector<CellSignal>& signals);

struct KnnCvOptions {
    std::vector<std::size_t> k_values{1, 2, 3, 4, 5};
    std::size_t runs = 1000;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct KnnCvResult {
    double mean_error = 0.0;
    std::map<std::size_t, double> per_k_error;
};

/// Repeated stratified-split cross-validation of a k-NN classifier on the
/// embedding, errors averaged over the k values and runs.
KnnCvResult knn_cv(const EigenCellEmbedding& embedding, const KnnCvOptions& options = {});

struct RegisteredSignal {
    CellSignal signal;      // fold-change units, starts at the landmark
    std::size_t landmark = 0;
    double baseline = 0.0;  // mean of the first 3 raw values
};

/// Divides by the mean of the first 3 values, finds the rise landmark
/// (first value above baseline mean + 3 sd of the first 5 normalized
/// frames) and truncates everything before it. Throws NoRiseError when the
/// signal never rises.
RegisteredSignal normalize_and_register(const CellSignal& signal);

struct PeakStats {
    double height = 0.0;  // max fold-change above baseline
    double area = 0.0;    // fold-change * minutes above baseline
};

/// Height and trapezoidal area of (value - 1) clamped at 0 over the given
/// window of a registered signal.
PeakStats peak_stats(const CellSignal& registered, WindowRegion region,
                     const WindowSpec& spec = {});

enum class PermMode { exact, monte_carlo };

struct PermTestResult {
    double statistic = 0.0;  // mean(control) - mean(treated)
    double p_value = 1.0;
    std::size_t n_permutations = 0;
    bool exact = false;
};

/// One-sided (P[perm >= observed]) by default; exact mode enumerates every
/// label assignment, Monte-Carlo uses the add-one estimator (b+1)/(n+1).
PermTestResult permutation_test(const std::vector<double>& values_control,
                                const std::vector<double>& values_treated,
                                std::size_t n_permutations, std::uint64_t seed, PermMode mode,
                                bool two_sided = false);

} // namespace calsig

#endif
