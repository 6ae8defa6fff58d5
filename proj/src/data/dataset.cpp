#include "fre/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fre/data/png_io.hpp"
#include "fre/errors.hpp"
#include "fre/random.hpp"

namespace fre::data {

namespace fs = std::filesystem;

const std::vector<Sample>& DatasetSplit::get(std::string_view split) const {
    if (split == "train") return train;
    if (split == "val") return val;
    if (split == "test") return test;
    throw ConfigError("unknown split '" + std::string(split) + "' (expected train, val or test)");
}

DatasetSplit split_in_order(std::vector<Sample> samples, int n_train, int n_val, int n_test) {
    if (n_train < 0 || n_val < 0 || n_test < 0) throw ConfigError("split sizes must be non-negative");
    const auto need = static_cast<std::size_t>(n_train + n_val + n_test);
    if (samples.size() < need) {
        throw ConfigError("split needs " + std::to_string(need) + " samples, have " + std::to_string(samples.size()));
    }
    DatasetSplit out;
    auto it = std::make_move_iterator(samples.begin());
    out.train.assign(it, it + n_train);
    out.val.assign(it + n_train, it + n_train + n_val);
    out.test.assign(it + n_train + n_val, it + n_train + n_val + n_test);
    return out;
}

std::vector<Sample> crop_tiles(const Sample& sample, int tile) {
    if (tile < 1) throw ShapeError("crop_tiles", "tile must be >= 1");
    for (auto [name, extent] : {std::pair{"height", sample.height}, std::pair{"width", sample.width}}) {
        if (extent % tile != 0) {
            throw ShapeError("crop_tiles", std::string(name) + " " + std::to_string(extent) +
                                               " is not divisible by tile " + std::to_string(tile));
        }
    }
    std::vector<Sample> tiles;
    const int rows = sample.height / tile, cols = sample.width / tile;
    const std::size_t plane = static_cast<std::size_t>(sample.height) * sample.width;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            Sample t;
            t.stem = sample.stem + "_r" + std::to_string(r) + "_c" + std::to_string(c);
            t.channels = sample.channels;
            t.height = tile;
            t.width = tile;
            t.image.resize(static_cast<std::size_t>(sample.channels) * tile * tile);
            t.label.resize(static_cast<std::size_t>(tile) * tile);
            for (int y = 0; y < tile; ++y) {
                const std::size_t src_row = static_cast<std::size_t>(r * tile + y) * sample.width + c * tile;
                for (int ch = 0; ch < sample.channels; ++ch) {
                    std::copy_n(sample.image.begin() + static_cast<std::ptrdiff_t>(ch * plane + src_row), tile,
                                t.image.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(ch) * tile + y) * tile));
                }
                std::copy_n(sample.label.begin() + static_cast<std::ptrdiff_t>(src_row), tile,
                            t.label.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y) * tile));
            }
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

namespace {

Sample load_pair(const fs::path& image_path, const fs::path& label_path, const std::string& stem, int classes,
                 std::optional<int> expected_channels) {
    if (!fs::exists(label_path)) throw DataError(label_path.string(), "missing label map for '" + stem + "'");
    const PngImage img = read_png(image_path);
    const PngImage lab = read_png(label_path);
    if (img.paletted) throw DataError(image_path.string(), "paletted intensity images are not supported");
    if (expected_channels && img.channels != *expected_channels) {
        throw DataError(image_path.string(), "expected " + std::to_string(*expected_channels) + " channel(s), found " +
                                                 std::to_string(img.channels));
    }
    if (lab.channels != 1) throw DataError(label_path.string(), "label map must be single-channel");
    if (img.width != lab.width || img.height != lab.height) {
        throw DataError(label_path.string(), "size " + std::to_string(lab.width) + "x" + std::to_string(lab.height) +
                                                 " does not match image " + std::to_string(img.width) + "x" +
                                                 std::to_string(img.height));
    }
    Sample s;
    s.stem = stem;
    s.channels = img.channels;
    s.height = img.height;
    s.width = img.width;
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    s.image.resize(plane * img.channels);
    const float scale = 1.0f / static_cast<float>(img.max_value());
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < img.channels; ++c) {
            s.image[c * plane + p] = static_cast<float>(img.pixels[p * img.channels + c]) * scale;
        }
    }
    s.label.resize(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        const int v = lab.pixels[p];
        if (v >= classes) {
            throw DataError(label_path.string(), "label value " + std::to_string(v) + " at pixel (" +
                                                     std::to_string(p % img.width) + ", " +
                                                     std::to_string(p / img.width) + ") is not below class count " +
                                                     std::to_string(classes));
        }
        s.label[p] = v;
    }
    return s;
}

std::string hash_split(const std::string& stem) {
    const auto bucket = hash_name(stem) % 50;
    if (bucket < 35) return "train";
    if (bucket < 40) return "val";
    return "test";
}

}  // namespace

DatasetSplit load_dataset(const fs::path& dir, int classes, std::optional<int> expected_channels) {
    const fs::path images = dir / "images";
    const fs::path labels = dir / "labels";
    if (!fs::is_directory(images)) throw DataError(dir.string(), "empty dataset: no images/ directory");

    std::set<std::string> stems;
    for (const auto& entry : fs::directory_iterator(images)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") stems.insert(entry.path().stem().string());
    }
    if (stems.empty()) throw DataError(dir.string(), "empty dataset: images/ holds no .png files");

    std::vector<std::pair<std::string, std::string>> assignment;  // (split, stem), manifest order
    const fs::path manifest = dir / "split.manifest";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        std::string line;
        int line_no = 0;
        std::set<std::string> seen;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string split, stem, extra;
            if (!(ls >> split)) continue;
            if (!(ls >> stem) || (ls >> extra) || (split != "train" && split != "val" && split != "test")) {
                throw DataError(manifest.string(), "line " + std::to_string(line_no) + ": expected '<train|val|test> <stem>'");
            }
            if (!stems.count(stem)) throw DataError(manifest.string(), "stem '" + stem + "' has no image");
            if (!seen.insert(stem).second) {
                throw DataError(manifest.string(), "stem '" + stem + "' listed more than once");
            }
            assignment.emplace_back(split, stem);
        }
    } else {
        for (const auto& stem : stems) assignment.emplace_back(hash_split(stem), stem);
    }

    DatasetSplit out;
    for (const auto& [split, stem] : assignment) {
        Sample s = load_pair(images / (stem + ".png"), labels / (stem + ".png"), stem, classes, expected_channels);
        if (split == "train") out.train.push_back(std::move(s));
        else if (split == "val") out.val.push_back(std::move(s));
        else out.test.push_back(std::move(s));
    }
    return out;
}

void write_dataset(const fs::path& dir, const DatasetSplit& split) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    std::ofstream manifest(dir / "split.manifest", std::ios::trunc);
    manifest << "# split stem\n";
    for (const char* name : {"train", "val", "test"}) {
        for (const auto& s : split.get(name)) {
            PngImage img{s.width, s.height, s.channels, 16, false, {}};
            const std::size_t plane = static_cast<std::size_t>(s.width) * s.height;
            img.pixels.resize(plane * s.channels);
            for (std::size_t p = 0; p < plane; ++p) {
                for (int c = 0; c < s.channels; ++c) {
                    const float v = std::clamp(s.image[c * plane + p], 0.0f, 1.0f);
                    img.pixels[p * s.channels + c] = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
                }
            }
            write_png(dir / "images" / (s.stem + ".png"), img);
            PngImage lab{s.width, s.height, 1, 8, false, {}};
            lab.pixels.assign(s.label.begin(), s.label.end());
            write_png(dir / "labels" / (s.stem + ".png"), lab);
            manifest << name << ' ' << s.stem << '\n';
        }
    }
}

}  // namespace fre::data
