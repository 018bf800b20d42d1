#include "calsig/image.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "calsig/errors.hpp"

namespace fs = std::filesystem;

namespace calsig {

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels) {
    if (width < 1 || height < 1 ||
        pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw InvalidInputError("write_pgm: pixel buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw ParseError("write failed: " + path);
}

namespace {

// Reads the next PGM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

} // namespace

std::vector<std::uint8_t> read_pgm(const std::string& path, int& width, int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open: " + path);
    if (next_token(in) != "P5") throw ParseError(path + ": not a binary PGM (P5) file");
    try {
        width = std::stoi(next_token(in));
        height = std::stoi(next_token(in));
        int maxval = std::stoi(next_token(in));
        if (maxval != 255) throw ParseError(path + ": expected maxval 255");
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        throw ParseError(path + ": malformed PGM header");
    }
    if (width < 1 || height < 1) throw ParseError(path + ": bad PGM dimensions");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) *
                                     static_cast<std::size_t>(height));
    in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(pixels.size()))
        throw ParseError(path + ": truncated PGM payload");
    return pixels;
}

void save_movie(const ImageStack& stack, const std::string& dir) {
    if (stack.frame_count() < 1)
        throw InvalidInputError("save_movie: stack has no frames");
    fs::create_directories(dir);
    char name[32];
    for (std::size_t f = 0; f < stack.frame_count(); ++f) {
        std::snprintf(name, sizeof(name), "frame_%04zu.pgm", f);
        write_pgm((fs::path(dir) / name).string(), stack.width, stack.height, stack.frames[f]);
    }
    nlohmann::ordered_json manifest;
    manifest["width"] = stack.width;
    manifest["height"] = stack.height;
    manifest["frame_count"] = stack.frame_count();
    manifest["frame_interval_seconds"] = stack.frame_interval_s;
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw ParseError("cannot write movie manifest in " + dir);
    out << manifest.dump(2) << '\n';
}

ImageStack load_movie(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!in) throw ParseError("missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw ParseError(dir + "/manifest.json: " + e.what());
    }
    ImageStack stack;
    try {
        stack.width = manifest.at("width").get<int>();
        stack.height = manifest.at("height").get<int>();
        stack.frame_interval_s = manifest.at("frame_interval_seconds").get<double>();
        std::size_t count = manifest.at("frame_count").get<std::size_t>();
        if (stack.width < 1 || stack.height < 1 || count < 1)
            throw ParseError(dir + "/manifest.json: bad dimensions");
        stack.frames.reserve(count);
        char name[32];
        for (std::size_t f = 0; f < count; ++f) {
            std::snprintf(name, sizeof(name), "frame_%04zu.pgm", f);
            int w = 0, h = 0;
            auto pixels = read_pgm((fs::path(dir) / name).string(), w, h);
            if (w != stack.width || h != stack.height)
                throw ParseError(std::string(name) + ": frame size differs from manifest");
            stack.frames.push_back(std::move(pixels));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(dir + "/manifest.json: " + e.what());
    }
    return stack;
}

} // namespace calsig
