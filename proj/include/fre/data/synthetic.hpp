#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fre/data/dataset.hpp"

namespace fre::data {

// Class ids: three_class = {0 background, 1 membrane, 2 nucleus};
// four_class = {0 background, 1 membrane, 2 mitochondria, 3 synapse}.
enum class ClassScheme { ThreeClass, FourClass };

int class_count(ClassScheme scheme);
std::vector<std::string> class_names(ClassScheme scheme);
std::string to_string(ClassScheme scheme);
ClassScheme parse_class_scheme(const std::string& name);

// Fluorescence-like cell images: blobs with a bright membrane ring and
// interior organelles, blurred and corrupted by Gaussian noise. Labels are
// exact; noise and blur only touch intensities.
struct SyntheticSpec {
    int image_size = 64;
    ClassScheme scheme = ClassScheme::ThreeClass;
    int min_cells = 3;
    int max_cells = 6;
    double min_radius = 8.0;  // pixels
    double max_radius = 13.0;
    double membrane_width = 2.0;
    double noise = 0.08;  // std-dev of additive Gaussian noise
    int blur_radius = 1;  // box blur radius, applied twice
    std::uint64_t seed = 0;

    // Throws ConfigError if parameters are inconsistent or the image size is
    // not a multiple of 2^depth.
    void validate(int depth = 0) const;
};

// Deterministic in (spec, index).
Sample generate_one(const SyntheticSpec& spec, int index);
std::vector<Sample> generate(const SyntheticSpec& spec, int n);

}  // namespace fre::data
