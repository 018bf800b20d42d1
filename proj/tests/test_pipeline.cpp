#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "calsig/errors.hpp"
#include "calsig/image.hpp"
#include "calsig/matrix.hpp"
#include "calsig/pipeline.hpp"
#include "calsig/svd.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("calsig_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name, const std::string& content) const {
        fs::path p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("roi csv parses with and without a header") {
    TempDir tmp;
    auto path = tmp.file("rois.csv", "cell_id,x0,y0,x1,y1\n1,0,0,9,9\n2,5,5,20,15\n");
    auto rois = calsig::parse_roi_csv(path);
    REQUIRE(rois.size() == 2);
    CHECK(rois[0].cell_id == 1);
    CHECK(rois[1].x1 == 20);

    auto bare = tmp.file("bare.csv", "3,1,2,8,9\n");
    CHECK(calsig::parse_roi_csv(bare).size() == 1);
}

TEST_CASE("roi parse errors name the offending line") {
    TempDir tmp;
    auto path = tmp.file("bad.csv", "1,0,0,9,9\n2,5,five,20,15\n");
    try {
        calsig::parse_roi_csv(path);
        FAIL("expected ParseError");
    } catch (const calsig::ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    auto short_line = tmp.file("short.csv", "1,0,0,9\n");
    CHECK_THROWS_AS(calsig::parse_roi_csv(short_line), calsig::ParseError);
}

TEST_CASE("labels csv parses groups and hormone levels") {
    TempDir tmp;
    auto path = tmp.file("labels.csv",
                         "cell_id,group,hormone\n1,control,low\n2,treated,low\n3,control,high\n");
    auto labels = calsig::parse_labels_csv(path);
    REQUIRE(labels.size() == 3);
    CHECK(labels[1].group == calsig::GroupLabel::treated);
    CHECK(labels[2].hormone == calsig::HormoneLevel::high);

    auto bad = tmp.file("bad.csv", "1,control,low\n2,mystery,low\n");
    try {
        calsig::parse_labels_csv(bad);
        FAIL("expected ParseError");
    } catch (const calsig::ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("pgm files round trip") {
    TempDir tmp;
    std::vector<std::uint8_t> pixels(12 * 7);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = static_cast<std::uint8_t>((i * 31) % 256);
    auto path = (tmp.path / "img.pgm").string();
    calsig::write_pgm(path, 12, 7, pixels);
    int w = 0, h = 0;
    auto back = calsig::read_pgm(path, w, h);
    CHECK(w == 12);
    CHECK(h == 7);
    CHECK(back == pixels);

    auto bogus = tmp.file("bogus.pgm", "P2\n2 2\n255\n0 0 0 0\n");
    CHECK_THROWS_AS(calsig::read_pgm(bogus, w, h), calsig::ParseError);
}

TEST_CASE("movies round trip through a frame directory") {
    TempDir tmp;
    calsig::ImageStack stack;
    stack.width = 6;
    stack.height = 5;
    stack.frame_interval_s = 2.5;
    for (int f = 0; f < 3; ++f) {
        std::vector<std::uint8_t> frame(30);
        for (std::size_t i = 0; i < frame.size(); ++i)
            frame[i] = static_cast<std::uint8_t>(f * 40 + i);
        stack.frames.push_back(frame);
    }
    auto dir = (tmp.path / "movie").string();
    calsig::save_movie(stack, dir);
    calsig::ImageStack back = calsig::load_movie(dir);
    CHECK(back.width == 6);
    CHECK(back.height == 5);
    CHECK(back.frame_interval_s == 2.5);
    REQUIRE(back.frame_count() == 3);
    for (int f = 0; f < 3; ++f) CHECK(back.frames[f] == stack.frames[f]);

    CHECK_THROWS_AS(calsig::load_movie((tmp.path / "nope").string()), calsig::ParseError);
}

TEST_CASE("matrices round trip through files") {
    TempDir tmp;
    calsig::Matrix m(3, 2);
    m.data = {1.5, -2.25, 3.125, 1e-9, 123456.789, 0.1};
    auto path = (tmp.path / "m.csv").string();
    calsig::save_matrix_csv(m, path);
    calsig::Matrix back = calsig::load_matrix_csv(path);
    REQUIRE(back.rows == 3);
    REQUIRE(back.cols == 2);
    for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(back.data[i] == m.data[i]);
}

TEST_CASE("config json loads and rejects unknown keys") {
    TempDir tmp;
    auto path = tmp.file("config.json", R"({
      "output_dir": "/tmp/out",
      "blur_sigma": 1.5,
      "k_values": [1, 3],
      "sim": {"n_pixels": 64, "noise_scale": 0.2},
      "peak_window_minutes": [0.0, 2.0]
    })");
    calsig::PipelineConfig cfg = calsig::load_config_json(path);
    CHECK(cfg.output_dir == "/tmp/out");
    CHECK(cfg.blur_sigma == 1.5);
    REQUIRE(cfg.k_values.size() == 2);
    CHECK(cfg.k_values[1] == 3);
    CHECK(cfg.sim.n_pixels == 64);
    CHECK(cfg.sim.noise_scale == 0.2);
    CHECK(cfg.windows.peak_end_min == 2.0);
    CHECK(cfg.min_area == 20);  // untouched default

    auto bad = tmp.file("bad.json", R"({"blur_sgima": 1.0})");
    CHECK_THROWS_AS(calsig::load_config_json(bad), calsig::ParseError);
}

TEST_CASE("digests are content addressed") {
    CHECK(calsig::fnv1a64_hex("abc") == calsig::fnv1a64_hex("abc"));
    CHECK(calsig::fnv1a64_hex("abc") != calsig::fnv1a64_hex("abd"));
    CHECK(calsig::fnv1a64_hex("").size() == 16);
}

TEST_CASE("simulate command emits the documented artifacts deterministically") {
    TempDir tmp;
    calsig::PipelineConfig cfg;
    cfg.sim.n_pixels = 40;
    cfg.sim.n_frames = 64;
    cfg.seed = 9;
    cfg.layout.frame_width = 24;
    cfg.layout.frame_height = 24;
    cfg.output_dir = (tmp.path / "a").string();
    calsig::cmd_simulate(cfg);
    for (const char* name :
         {"truth.csv", "noisy.csv", "saturated.csv", "mask.csv", "true_eigenpixel.csv",
          "true_eigensignal.csv", "recovery_report.json", "sim_report.json",
          "movie/manifest.json", "movie/frame_0000.pgm", "run_manifest.json"})
        CHECK(fs::exists(tmp.path / "a" / name));

    cfg.output_dir = (tmp.path / "b").string();
    calsig::cmd_simulate(cfg);
    for (const char* name : {"truth.csv", "noisy.csv", "saturated.csv", "mask.csv",
                             "recovery_report.json", "sim_report.json", "movie/frame_0031.pgm"})
        CHECK(slurp(tmp.path / "a" / name) == slurp(tmp.path / "b" / name));
}

TEST_CASE("segment-clarify-compare chain runs on a synthetic cohort") {
    TempDir tmp;

    // Build a fake clarify output: 10 cells, treated rise delayed.
    fs::path clar = tmp.path / "clar";
    fs::create_directories(clar);
    {
        std::ofstream rep(clar / "clarify_report.json");
        rep << R"({"frame_interval_seconds": 10.0})";
    }
    for (int id = 0; id < 10; ++id) {
        bool treated = id >= 5;
        std::size_t onset = treated ? 12 : 5;
        calsig::Matrix sig(64, 1);
        for (std::size_t j = 0; j < 64; ++j) {
            double v = 1.0;
            if (j >= onset)
                v = 1.0 + 3.0 * std::exp(-static_cast<double>(j - onset) / 6.0);
            sig.at(j, 0) = v * (1.0 + 0.001 * static_cast<double>(id));
        }
        fs::create_directories(clar / "cells" / std::to_string(id));
        calsig::save_matrix_csv(sig, (clar / "cells" / std::to_string(id) / "eigensignal.csv").string());
    }
    std::ostringstream labels;
    labels << "cell_id,group,hormone\n";
    for (int id = 0; id < 10; ++id)
        labels << id << ',' << (id >= 5 ? "treated" : "control") << ",low\n";

    calsig::PipelineConfig cfg;
    cfg.input_dir = clar.string();
    cfg.labels_path = tmp.file("labels.csv", labels.str());
    cfg.output_dir = (tmp.path / "cmp").string();
    cfg.cv_runs = 50;
    cfg.n_permutations = 2000;
    calsig::cmd_compare(cfg);

    CHECK(fs::exists(tmp.path / "cmp" / "low" / "peak" / "eigencells.csv"));
    CHECK(fs::exists(tmp.path / "cmp" / "low" / "peak" / "cv_report.json"));
    CHECK(fs::exists(tmp.path / "cmp" / "low" / "peak" / "peaks.csv"));
    CHECK(fs::exists(tmp.path / "cmp" / "low" / "peak" / "permtest.json"));
    CHECK(fs::exists(tmp.path / "cmp" / "low" / "peak" / "eigencells.svg"));
    CHECK(fs::exists(tmp.path / "cmp" / "compare_report.json"));
    // post-peak window does not fit in 64 frames -> recorded as skipped
    std::string report = slurp(tmp.path / "cmp" / "compare_report.json");
    CHECK(report.find("post_peak") != std::string::npos);
}

TEST_CASE("compare refuses undersized groups") {
    TempDir tmp;
    fs::path clar = tmp.path / "clar";
    for (int id = 0; id < 2; ++id) {
        calsig::Matrix sig(32, 1, 1.0);
        fs::create_directories(clar / "cells" / std::to_string(id));
        calsig::save_matrix_csv(sig, (clar / "cells" / std::to_string(id) / "eigensignal.csv").string());
    }
    calsig::PipelineConfig cfg;
    cfg.input_dir = clar.string();
    cfg.labels_path = tmp.file("labels.csv", "0,control,low\n1,treated,low\n");
    cfg.output_dir = (tmp.path / "cmp").string();
    CHECK_THROWS_AS(calsig::cmd_compare(cfg), calsig::InvalidInputError);
}

TEST_CASE("two-cell phantom yields two disjoint matrices through the commands") {
    TempDir tmp;

    // movie with two bright time-varying disks
    calsig::ImageStack stack;
    stack.width = 40;
    stack.height = 28;
    stack.frame_interval_s = 10.0;
    auto disk = [](int x, int y, int cx, int cy) {
        double dx = x - cx, dy = y - cy;
        return dx * dx + dy * dy <= 25.0;
    };
    for (int f = 0; f < 32; ++f) {
        std::vector<std::uint8_t> frame(40 * 28, 0);
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 40; ++x) {
                double g = 1.0 + std::sin(0.4 * f);
                double v = 0.0;
                if (disk(x, y, 10, 12)) v = 80.0 * g;
                if (disk(x, y, 30, 12)) v = 60.0 * g;
                frame[y * 40 + x] = static_cast<std::uint8_t>(std::lround(v));
            }
        stack.frames.push_back(std::move(frame));
    }
    calsig::save_movie(stack, (tmp.path / "movie").string());

    calsig::PipelineConfig cfg;
    cfg.movie_dir = (tmp.path / "movie").string();
    cfg.roi_path = tmp.file("rois.csv", "cell_id,x0,y0,x1,y1\n1,2,4,18,20\n2,22,4,38,20\n");
    cfg.output_dir = (tmp.path / "seg").string();
    cfg.blur_sigma = 1.0;
    calsig::cmd_segment(cfg);

    auto mask1 = slurp(tmp.path / "seg" / "cells" / "1" / "mask.csv");
    auto mask2 = slurp(tmp.path / "seg" / "cells" / "2" / "mask.csv");
    std::set<std::string> coords1, coords2;
    auto collect = [](const std::string& csv, std::set<std::string>& out) {
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line))
            out.insert(line.substr(line.find(',') + 1));  // "x,y"
    };
    collect(mask1, coords1);
    collect(mask2, coords2);
    CHECK(!coords1.empty());
    CHECK(!coords2.empty());
    for (const auto& c : coords1) CHECK(coords2.count(c) == 0);

    // clarify the segmented cells plus an injected fully saturated cell
    {
        calsig::Matrix sat(4, 32, 255.0);
        fs::create_directories(tmp.path / "seg" / "cells" / "99");
        calsig::save_matrix_csv(sat, (tmp.path / "seg" / "cells" / "99" / "matrix.csv").string());
    }
    calsig::PipelineConfig ccfg;
    ccfg.input_dir = (tmp.path / "seg").string();
    ccfg.output_dir = (tmp.path / "cla").string();
    calsig::cmd_clarify(ccfg);

    CHECK(fs::exists(tmp.path / "cla" / "cells" / "1" / "eigenpixel.csv"));
    CHECK(fs::exists(tmp.path / "cla" / "cells" / "1" / "eigensignal.csv"));
    CHECK(fs::exists(tmp.path / "cla" / "cells" / "1" / "imputed.csv"));
    CHECK(fs::exists(tmp.path / "cla" / "cells" / "1" / "wsvd_report.json"));
    CHECK(fs::exists(tmp.path / "cla" / "cells" / "2" / "eigensignal.csv"));
    CHECK(!fs::exists(tmp.path / "cla" / "cells" / "99" / "eigensignal.csv"));
    CHECK(fs::exists(tmp.path / "cla" / "variance_explained.csv"));
    std::string report = slurp(tmp.path / "cla" / "clarify_report.json");
    CHECK(report.find("\"cell_id\": 99") != std::string::npos);
    CHECK(report.find("failed") != std::string::npos);

    // unsaturated cell: clarified eigensignal matches the plain SVD's
    calsig::Matrix extracted = calsig::load_matrix_csv(
        (tmp.path / "seg" / "cells" / "1" / "matrix.csv").string());
    calsig::Matrix clarified =
        calsig::load_matrix_csv((tmp.path / "cla" / "cells" / "1" / "eigensignal.csv").string());
    calsig::SvdTriplet t = calsig::svd(extracted, 1);
    double dot = 0.0;
    for (std::size_t j = 0; j < 32; ++j) dot += clarified.at(j, 0) * t.right_vectors.at(j, 0);
    double sign = dot < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < 32; ++j)
        CHECK(sign * clarified.at(j, 0) ==
              doctest::Approx(t.right_vectors.at(j, 0)).epsilon(1e-6));
}

TEST_CASE("compare separates delayed onsets in the peak and not in the tail") {
    TempDir tmp;
    fs::path clar = tmp.path / "clar";
    {
        fs::create_directories(clar);
        std::ofstream rep(clar / "clarify_report.json");
        rep << R"({"frame_interval_seconds": 10.0})";
    }
    std::ostringstream labels;
    labels << "cell_id,group,hormone\n";
    for (int id = 0; id < 10; ++id) {
        bool treated = id >= 5;
        std::size_t onset = treated ? 12 : 5;
        calsig::Matrix sig(512, 1);
        for (std::size_t j = 0; j < 512; ++j) {
            double v = 1.0;
            if (j >= onset && j < 240)
                v = 1.0 + 3.0 * std::exp(-static_cast<double>(j - onset) / 6.0);
            if (j >= 240)  // group-independent wiggles: the regions coincide
                v = 1.0 + 0.05 * std::sin(0.37 * static_cast<double>(j) + 2.1 * id);
            sig.at(j, 0) = v * (1.0 + 0.001 * id);
        }
        fs::create_directories(clar / "cells" / std::to_string(id));
        calsig::save_matrix_csv(sig,
                                (clar / "cells" / std::to_string(id) / "eigensignal.csv").string());
        labels << id << ',' << (treated ? "treated" : "control") << ",high\n";
    }

    calsig::PipelineConfig cfg;
    cfg.input_dir = clar.string();
    cfg.labels_path = tmp.file("labels.csv", labels.str());
    cfg.output_dir = (tmp.path / "cmp").string();
    cfg.cv_runs = 200;
    calsig::cmd_compare(cfg);

    nlohmann::json peak_cv =
        nlohmann::json::parse(slurp(tmp.path / "cmp" / "high" / "peak" / "cv_report.json"));
    CHECK(peak_cv["mean_error"].get<double>() == 0.0);
    nlohmann::json post_cv =
        nlohmann::json::parse(slurp(tmp.path / "cmp" / "high" / "post_peak" / "cv_report.json"));
    CHECK(post_cv["mean_error"].get<double>() >= 0.30);
    CHECK(fs::exists(tmp.path / "cmp" / "high" / "post_peak" / "eigencells.csv"));
}

TEST_CASE("identical groups give a permutation p above one half") {
    TempDir tmp;
    fs::path clar = tmp.path / "clar";
    {
        fs::create_directories(clar);
        std::ofstream rep(clar / "clarify_report.json");
        rep << R"({"frame_interval_seconds": 10.0})";
    }
    std::ostringstream labels;
    labels << "cell_id,group,hormone\n";
    for (int id = 0; id < 10; ++id) {
        int twin = id % 5;  // treated cell i is a copy of control cell i
        calsig::Matrix sig(64, 1);
        for (std::size_t j = 0; j < 64; ++j) {
            double v = 1.0;
            if (j >= 5) v = 1.0 + (2.0 + 0.3 * twin) * std::exp(-static_cast<double>(j - 5) / 6.0);
            sig.at(j, 0) = v;
        }
        fs::create_directories(clar / "cells" / std::to_string(id));
        calsig::save_matrix_csv(sig,
                                (clar / "cells" / std::to_string(id) / "eigensignal.csv").string());
        labels << id << ',' << (id >= 5 ? "treated" : "control") << ",basal\n";
    }
    calsig::PipelineConfig cfg;
    cfg.input_dir = clar.string();
    cfg.labels_path = tmp.file("labels.csv", labels.str());
    cfg.output_dir = (tmp.path / "cmp").string();
    cfg.cv_runs = 50;
    calsig::cmd_compare(cfg);

    nlohmann::json perm =
        nlohmann::json::parse(slurp(tmp.path / "cmp" / "basal" / "peak" / "permtest.json"));
    CHECK(perm["peak_height"]["p_value"].get<double>() > 0.5);
    CHECK(perm["peak_area"]["p_value"].get<double>() > 0.5);
    CHECK(perm["peak_height"]["mode"] == "exact");
}

TEST_CASE("noise-free unclipped simulation reports exact recovery") {
    TempDir tmp;
    calsig::PipelineConfig cfg;
    cfg.sim.n_pixels = 30;
    cfg.sim.n_frames = 48;
    cfg.sim.noise_scale = 0.0;
    cfg.sim.clip_level = 100.0;  // above every product: nothing clips
    cfg.seed = 2;
    cfg.layout.frame_width = 20;
    cfg.layout.frame_height = 20;
    cfg.output_dir = (tmp.path / "sim").string();
    calsig::cmd_simulate(cfg);
    nlohmann::json rep = nlohmann::json::parse(slurp(tmp.path / "sim" / "recovery_report.json"));
    CHECK(rep["eigenpixel"]["exact_recovery"].get<bool>());
    CHECK(rep["eigensignal"]["exact_recovery"].get<bool>());
    CHECK(rep["eigenpixel"]["error_sum_wsvd"].get<double>() < 1e-8);
    CHECK(rep["eigensignal"]["error_sum_wsvd"].get<double>() < 1e-8);
    nlohmann::json sim = nlohmann::json::parse(slurp(tmp.path / "sim" / "sim_report.json"));
    CHECK(sim["clip_fraction"].get<double>() == 0.0);
}
