#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fre::data {

// One image with its per-pixel class map. `image` is channel-major
// (C, H, W) in [0, 1]; `label` is (H, W).
struct Sample {
    std::string stem;
    int channels = 1;
    int height = 0;
    int width = 0;
    std::vector<float> image;
    std::vector<int> label;
};

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;

    const std::vector<Sample>& get(std::string_view split) const;
};

// Takes the first n_train samples for training, the next n_val for
// validation and the next n_test for test.
DatasetSplit split_in_order(std::vector<Sample> samples, int n_train, int n_val, int n_test);

// Non-overlapping tiles in raster order; stems gain a "_r<row>_c<col>" suffix.
std::vector<Sample> crop_tiles(const Sample& sample, int tile);

// Directory layout:
//   images/<stem>.png   8- or 16-bit grayscale or RGB
//   labels/<stem>.png   8-bit grayscale or paletted, pixel value == class id
//   split.manifest      optional; lines "<train|val|test> <stem>", '#' comments
// Without a manifest a stem goes to train/val/test when
// fnv1a(stem) % 50 falls in [0,35) / [35,40) / [40,50).
DatasetSplit load_dataset(const std::filesystem::path& dir, int classes,
                          std::optional<int> expected_channels = std::nullopt);

// Writes a dataset in the layout above, including split.manifest.
void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split);

}  // namespace fre::data
