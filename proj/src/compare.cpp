#include "calsig/compare.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "calsig/errors.hpp"
#include "calsig/rng.hpp"
#include "calsig/svd.hpp"

namespace calsig {

std::string to_string(GroupLabel label) {
    return label == GroupLabel::control ? "control" : "treated";
}

std::string to_string(HormoneLevel level) {
    switch (level) {
        case HormoneLevel::basal: return "basal";
        case HormoneLevel::low: return "low";
        case HormoneLevel::high: return "high";
    }
    return "basal";
}

std::string to_string(WindowRegion region) {
    return region == WindowRegion::peak ? "peak" : "post_peak";
}

GroupLabel group_label_from_string(const std::string& s) {
    if (s == "control") return GroupLabel::control;
    if (s == "treated") return GroupLabel::treated;
    throw ParseError("unknown group label '" + s + "' (expected control or treated)");
}

HormoneLevel hormone_level_from_string(const std::string& s) {
    if (s == "basal") return HormoneLevel::basal;
    if (s == "low") return HormoneLevel::low;
    if (s == "high") return HormoneLevel::high;
    throw ParseError("unknown hormone level '" + s + "' (expected basal, low or high)");
}

namespace {

// Smallest frame index whose time is >= the boundary, robust to the
// boundary landing exactly on a frame time.
std::size_t frame_at(double minutes, double interval_s) {
    double exact = minutes * 60.0 / interval_s;
    return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

} // namespace

CellSignal extract_window(const CellSignal& signal, WindowRegion region, const WindowSpec& spec) {
    if (signal.frame_interval_s <= 0.0)
        throw InvalidInputError("extract_window: frame interval must be positive");
    double start_min = region == WindowRegion::peak ? spec.peak_start_min : spec.post_peak_start_min;
    double end_min = region == WindowRegion::peak ? spec.peak_end_min : spec.post_peak_end_min;
    std::size_t first = frame_at(start_min, signal.frame_interval_s);
    std::size_t last = frame_at(end_min, signal.frame_interval_s);  // exclusive
    if (last <= first)
        throw InvalidInputError("extract_window: window holds no frames at this interval");
    if (last > signal.eigensignal.size())
        throw InvalidInputError("extract_window: signal does not span the " + to_string(region) +
                                " window (needs " + std::to_string(last) + " frames, has " +
                                std::to_string(signal.eigensignal.size()) + ")");
    CellSignal out = signal;
    out.eigensignal.assign(signal.eigensignal.begin() + static_cast<std::ptrdiff_t>(first),
                           signal.eigensignal.begin() + static_cast<std::ptrdiff_t>(last));
    return out;
}

EigenCellEmbedding eigencell_embed(const std::vector<CellSignal>& signals) {
    if (signals.size() < 2)
        throw InvalidInputError("eigencell_embed: need at least 2 cells");
    const std::size_t frames = signals[0].eigensignal.size();
    if (frames < 2) throw InvalidInputError("eigencell_embed: signals too short");
    for (const auto& s : signals)
        if (s.eigensignal.size() != frames)
            throw InvalidInputError("eigencell_embed: signal lengths differ");

    Matrix stacked(signals.size(), frames);
    for (std::size_t c = 0; c < signals.size(); ++c)
        for (std::size_t j = 0; j < frames; ++j) stacked.at(c, j) = signals[c].eigensignal[j];

    const std::size_t full = std::min(stacked.rows, stacked.cols);
    SvdTriplet triplet = svd(stacked, full);
    auto fractions = variance_explained(triplet);

    EigenCellEmbedding out;
    out.variance_fractions = {fractions[0], full > 1 ? fractions[1] : 0.0};
    for (std::size_t c = 0; c < signals.size(); ++c) {
        out.cell_ids.push_back(signals[c].cell_id);
        out.labels.push_back(signals[c].group);
        double x = triplet.singular_values[0] * triplet.left_vectors.at(c, 0);
        double y = full > 1 ? triplet.singular_values[1] * triplet.left_vectors.at(c, 1) : 0.0;
        out.coords.push_back({x, y});
    }
    return out;
}

KnnCvResult knn_cv(const EigenCellEmbedding& embedding, const KnnCvOptions& options) {
    const std::size_t n = embedding.coords.size();
    if (n != embedding.labels.size())
        throw InvalidInputError("knn_cv: embedding labels and coordinates differ in length");
    if (options.k_values.empty()) throw InvalidInputError("knn_cv: no k values given");
    if (options.train_fraction <= 0.0 || options.train_fraction >= 1.0)
        throw InvalidInputError("knn_cv: train fraction must lie in (0, 1)");

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < n; ++i)
        by_class[embedding.labels[i] == GroupLabel::treated ? 1 : 0].push_back(i);
    const std::size_t k_max = *std::max_element(options.k_values.begin(), options.k_values.end());
    for (const auto& cls : by_class)
        if (cls.size() < k_max)
            throw InvalidInputError("knn_cv: each class needs at least max(k) = " +
                                    std::to_string(k_max) + " members");

    std::size_t train_count[2], test_count[2];
    for (int c = 0; c < 2; ++c) {
        std::size_t sz = by_class[c].size();
        std::size_t tr = static_cast<std::size_t>(options.train_fraction * static_cast<double>(sz));
        if (tr >= sz) tr = sz - 1;  // at least one test point per class
        if (tr < 1)
            throw InvalidInputError("knn_cv: class too small for the train fraction");
        train_count[c] = tr;
        test_count[c] = sz - tr;
    }

    std::vector<double> per_k_errors(options.k_values.size(), 0.0);
    std::vector<std::size_t> order[2] = {by_class[0], by_class[1]};
    std::vector<std::size_t> train, test;
    std::vector<std::pair<double, std::size_t>> neighbors;

    for (std::size_t run = 0; run < options.runs; ++run) {
        Rng rng = Rng::stream(options.seed, "cv.run." + std::to_string(run));
        train.clear();
        test.clear();
        for (int c = 0; c < 2; ++c) {
            order[c] = by_class[c];
            rng.shuffle(order[c]);
            train.insert(train.end(), order[c].begin(),
                         order[c].begin() + static_cast<std::ptrdiff_t>(train_count[c]));
            test.insert(test.end(), order[c].begin() + static_cast<std::ptrdiff_t>(train_count[c]),
                        order[c].end());
        }

        for (std::size_t t : test) {
            neighbors.clear();
            for (std::size_t tr : train) {
                double dx = embedding.coords[t][0] - embedding.coords[tr][0];
                double dy = embedding.coords[t][1] - embedding.coords[tr][1];
                neighbors.emplace_back(dx * dx + dy * dy, tr);
            }
            // Distance ties resolved toward the lower cell index.
            std::sort(neighbors.begin(), neighbors.end());
            for (std::size_t ki = 0; ki < options.k_values.size(); ++ki) {
                std::size_t k = options.k_values[ki];
                std::size_t votes_treated = 0;
                for (std::size_t j = 0; j < k; ++j)
                    votes_treated += embedding.labels[neighbors[j].second] == GroupLabel::treated;
                GroupLabel vote;
                if (2 * votes_treated > k)
                    vote = GroupLabel::treated;
                else if (2 * votes_treated < k)
                    vote = GroupLabel::control;
                else
                    vote = embedding.labels[neighbors[0].second];  // tie: nearest neighbor
                if (vote != embedding.labels[t]) per_k_errors[ki] += 1.0;
            }
        }
    }

    const double denom =
        static_cast<double>(options.runs) * static_cast<double>(test_count[0] + test_count[1]);
    KnnCvResult out;
    for (std::size_t ki = 0; ki < options.k_values.size(); ++ki) {
        double err = per_k_errors[ki] / denom;
        out.per_k_error[options.k_values[ki]] = err;
        out.mean_error += err;
    }
    out.mean_error /= static_cast<double>(options.k_values.size());
    return out;
}

RegisteredSignal normalize_and_register(const CellSignal& signal) {
    const auto& x = signal.eigensignal;
    if (x.size() < 10)
        throw InvalidInputError("normalize_and_register: need at least 10 frames");
    double baseline = (x[0] + x[1] + x[2]) / 3.0;
    if (!(baseline > 0.0))
        throw InvalidInputError("normalize_and_register: baseline (first 3 values) must be positive");

    std::vector<double> normalized(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) normalized[i] = x[i] / baseline;

    // Rise threshold from the five pre-stimulus scans of the normalized
    // series: mean + 3 sample standard deviations.
    double mean5 = 0.0;
    for (std::size_t i = 0; i < 5; ++i) mean5 += normalized[i];
    mean5 /= 5.0;
    double var5 = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        double d = normalized[i] - mean5;
        var5 += d * d;
    }
    double threshold = mean5 + 3.0 * std::sqrt(var5 / 4.0);

    std::size_t landmark = normalized.size();
    for (std::size_t i = 0; i < normalized.size(); ++i)
        if (normalized[i] > threshold) {
            landmark = i;
            break;
        }
    if (landmark == normalized.size())
        throw NoRiseError("normalize_and_register: signal never rises above baseline + 3 sd");

    RegisteredSignal out;
    out.landmark = landmark;
    out.baseline = baseline;
    out.signal = signal;
    out.signal.eigensignal.assign(normalized.begin() + static_cast<std::ptrdiff_t>(landmark),
                                  normalized.end());
    return out;
}

PeakStats peak_stats(const CellSignal& registered, WindowRegion region, const WindowSpec& spec) {
    CellSignal windowed = extract_window(registered, region, spec);
    const auto& v = windowed.eigensignal;
    PeakStats out;
    out.height = *std::max_element(v.begin(), v.end()) - 1.0;
    const double dt_min = registered.frame_interval_s / 60.0;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        double a = std::max(v[i] - 1.0, 0.0);
        double b = std::max(v[i + 1] - 1.0, 0.0);
        out.area += 0.5 * (a + b) * dt_min;
    }
    return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// n choose k without overflow for the sizes the exact mode allows.
double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

} // namespace

PermTestResult permutation_test(const std::vector<double>& values_control,
                                const std::vector<double>& values_treated,
                                std::size_t n_permutations, std::uint64_t seed, PermMode mode,
                                bool two_sided) {
    if (values_control.empty() || values_treated.empty())
        throw InvalidInputError("permutation_test: both groups must be nonempty");

    const std::size_t nc = values_control.size(), nt = values_treated.size();
    const std::size_t n = nc + nt;
    std::vector<double> pooled = values_control;
    pooled.insert(pooled.end(), values_treated.begin(), values_treated.end());
    const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
    const double observed = mean_of(values_control) - mean_of(values_treated);

    auto stat_from_control_sum = [&](double cs) {
        return cs / static_cast<double>(nc) - (total - cs) / static_cast<double>(nt);
    };
    // Mathematical ties land a few ulps apart because permuted sums add the
    // same values in different orders; counting ">= observed" therefore
    // needs a tolerance far above rounding noise and far below any real
    // difference.
    double max_abs = 0.0;
    for (double v : pooled) max_abs = std::max(max_abs, std::abs(v));
    const double tie_eps = 1e-9 * (max_abs + std::abs(observed) + 1e-300);
    auto counts_as_extreme = [&](double stat) {
        return two_sided ? std::abs(stat) >= std::abs(observed) - tie_eps
                         : stat >= observed - tie_eps;
    };

    PermTestResult out;
    out.statistic = observed;

    if (mode == PermMode::exact) {
        double combos = binomial(n, nc);
        if (combos > 1e6)
            throw InvalidInputError(
                "permutation_test: too many label assignments for exact mode; use monte_carlo");
        // Lexicographic enumeration of which pooled indices form the
        // control group.
        std::vector<std::size_t> pick(nc);
        std::iota(pick.begin(), pick.end(), 0);
        std::size_t hits = 0, count = 0;
        while (true) {
            double cs = 0.0;
            for (std::size_t idx : pick) cs += pooled[idx];
            hits += counts_as_extreme(stat_from_control_sum(cs));
            ++count;
            // advance combination
            std::size_t i = nc;
            while (i > 0 && pick[i - 1] == n - nc + i - 1) --i;
            if (i == 0) break;
            ++pick[i - 1];
            for (std::size_t j = i; j < nc; ++j) pick[j] = pick[j - 1] + 1;
        }
        out.exact = true;
        out.n_permutations = count;
        out.p_value = static_cast<double>(hits) / static_cast<double>(count);
    } else {
        if (n_permutations < 1)
            throw InvalidInputError("permutation_test: monte_carlo needs at least 1 permutation");
        Rng rng = Rng::stream(seed, "perm");
        std::vector<std::size_t> order(n);
        std::size_t hits = 0;
        for (std::size_t b = 0; b < n_permutations; ++b) {
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);
            double cs = 0.0;
            for (std::size_t i = 0; i < nc; ++i) cs += pooled[order[i]];
            hits += counts_as_extreme(stat_from_control_sum(cs));
        }
        out.exact = false;
        out.n_permutations = n_permutations;
        out.p_value =
            static_cast<double>(hits + 1) / static_cast<double>(n_permutations + 1);
    }
    return out;
}

} // namespace calsig
