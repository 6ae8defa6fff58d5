#include "fre/data/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "fre/errors.hpp"
#include "fre/random.hpp"

namespace fre::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

namespace three {
constexpr int kBackground = 0, kMembrane = 1, kNucleus = 2;
}
namespace four {
constexpr int kBackground = 0, kMembrane = 1, kMitochondria = 2, kSynapse = 3;
}

// Base intensities before blur and noise.
constexpr float kBackgroundLevel = 0.10f;
constexpr float kCytoplasmLevel = 0.28f;
constexpr float kMembraneLevel = 0.90f;
constexpr float kNucleusLevel = 0.58f;
constexpr float kMitochondriaLevel = 0.62f;
constexpr float kSynapseLevel = 0.45f;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// A blob in polar form: boundary radius varies smoothly with angle, giving
// mildly non-convex, cell-like outlines.
struct Blob {
    double cx, cy, radius, aspect, angle;
    double wobble_amp[2], wobble_phase[2];

    // Returns (rho, boundary) in the blob's normalized frame for pixel centre (x, y).
    std::pair<double, double> polar(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double u = (ca * dx + sa * dy) / aspect;
        const double v = (-sa * dx + ca * dy) * aspect;
        const double rho = std::sqrt(u * u + v * v);
        const double phi = std::atan2(v, u);
        const double boundary = radius * (1.0 + wobble_amp[0] * std::sin(3.0 * phi + wobble_phase[0]) +
                                          wobble_amp[1] * std::sin(5.0 * phi + wobble_phase[1]));
        return {rho, boundary};
    }
};

Blob random_blob(Rng& rng, double cx, double cy, double radius) {
    Blob b{cx, cy, radius, uniform(rng, 0.8, 1.25), uniform(rng, 0.0, kPi), {}, {}};
    b.wobble_amp[0] = uniform(rng, 0.0, 0.10);
    b.wobble_amp[1] = uniform(rng, 0.0, 0.05);
    b.wobble_phase[0] = uniform(rng, 0.0, 2.0 * kPi);
    b.wobble_phase[1] = uniform(rng, 0.0, 2.0 * kPi);
    return b;
}

void box_blur(std::vector<float>& img, int size, int radius) {
    if (radius <= 0) return;
    std::vector<float> tmp(img.size());
    auto pass = [&](const std::vector<float>& src, std::vector<float>& dst, bool horizontal) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                float acc = 0.0f;
                int n = 0;
                for (int k = -radius; k <= radius; ++k) {
                    const int xx = horizontal ? x + k : x;
                    const int yy = horizontal ? y : y + k;
                    if (xx < 0 || yy < 0 || xx >= size || yy >= size) continue;
                    acc += src[static_cast<std::size_t>(yy) * size + xx];
                    ++n;
                }
                dst[static_cast<std::size_t>(y) * size + x] = acc / static_cast<float>(n);
            }
        }
    };
    for (int rep = 0; rep < 2; ++rep) {
        pass(img, tmp, true);
        pass(tmp, img, false);
    }
}

}  // namespace

int class_count(ClassScheme scheme) { return scheme == ClassScheme::ThreeClass ? 3 : 4; }

std::vector<std::string> class_names(ClassScheme scheme) {
    if (scheme == ClassScheme::ThreeClass) return {"background", "membrane", "nucleus"};
    return {"background", "membrane", "mitochondria", "synapse"};
}

std::string to_string(ClassScheme scheme) {
    return scheme == ClassScheme::ThreeClass ? "three_class" : "four_class";
}

ClassScheme parse_class_scheme(const std::string& name) {
    if (name == "three_class") return ClassScheme::ThreeClass;
    if (name == "four_class") return ClassScheme::FourClass;
    throw ConfigError("unknown class scheme '" + name + "' (expected three_class or four_class)");
}

void SyntheticSpec::validate(int depth) const {
    if (image_size < 8) throw ConfigError("synthetic: image_size must be >= 8");
    if (depth > 0 && image_size % (1 << depth) != 0) {
        throw ConfigError("synthetic: image_size " + std::to_string(image_size) + " must be a multiple of " +
                          std::to_string(1 << depth));
    }
    if (min_cells < 1 || max_cells < min_cells) throw ConfigError("synthetic: need 1 <= min_cells <= max_cells");
    if (membrane_width <= 0.0) throw ConfigError("synthetic: membrane_width must be positive");
    // Nucleus radius is 0.45 of the cell radius; it must clear the membrane.
    if (min_radius * 0.55 * 0.85 <= membrane_width || max_radius < min_radius) {
        throw ConfigError("synthetic: radii too small for the membrane width");
    }
    if (noise < 0.0 || blur_radius < 0) throw ConfigError("synthetic: noise and blur_radius must be non-negative");
}

Sample generate_one(const SyntheticSpec& spec, int index) {
    spec.validate();
    const int size = spec.image_size;
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index)}));

    Sample s;
    s.stem = "synth_" + std::to_string(index);
    s.channels = 1;
    s.height = size;
    s.width = size;
    s.label.assign(plane, 0);
    s.image.assign(plane, kBackgroundLevel);

    const bool four_class = spec.scheme == ClassScheme::FourClass;
    const int cells = spec.min_cells + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(spec.max_cells - spec.min_cells + 1)));
    for (int cell = 0; cell < cells; ++cell) {
        const double radius = uniform(rng, spec.min_radius, spec.max_radius);
        const Blob body = random_blob(rng, uniform(rng, 0.0, size), uniform(rng, 0.0, size), radius);
        const float brightness = static_cast<float>(uniform(rng, 0.85, 1.15));

        // Organelles live in the body's normalized frame, well inside the membrane.
        std::vector<Blob> organelles;
        std::vector<double> synapses;  // angles in the body frame
        if (four_class) {
            const int mito = 1 + static_cast<int>(uniform_below(rng, 3));
            for (int m = 0; m < mito; ++m) {
                const double a = uniform(rng, 0.0, 2.0 * kPi);
                const double d = uniform(rng, 0.0, 0.35) * radius;
                organelles.push_back(random_blob(rng, d * std::cos(a), d * std::sin(a), uniform(rng, 0.16, 0.24) * radius));
            }
            const int syn = 1 + static_cast<int>(uniform_below(rng, 2));
            for (int k = 0; k < syn; ++k) synapses.push_back(uniform(rng, 0.0, 2.0 * kPi));
        } else {
            organelles.push_back(random_blob(rng, 0.0, 0.0, 0.45 * radius));
        }

        const int x0 = std::max(0, static_cast<int>(body.cx - 1.5 * radius) - 1);
        const int x1 = std::min(size - 1, static_cast<int>(body.cx + 1.5 * radius) + 1);
        const int y0 = std::max(0, static_cast<int>(body.cy - 1.5 * radius) - 1);
        const int y1 = std::min(size - 1, static_cast<int>(body.cy + 1.5 * radius) + 1);
        const double ca = std::cos(body.angle), sa = std::sin(body.angle);
        auto inside = [&](int x, int y) {
            const auto [rho, boundary] = body.polar(x + 0.5, y + 0.5);
            return rho <= boundary;
        };
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const auto [rho, boundary] = body.polar(px, py);
                if (rho > boundary) continue;
                const std::size_t idx = static_cast<std::size_t>(y) * size + x;
                // a body pixel next to the outside is always membrane, so the ring has no gaps
                bool edge = false;
                for (int dy = -1; dy <= 1 && !edge; ++dy)
                    for (int dx = -1; dx <= 1 && !edge; ++dx) edge = !inside(x + dx, y + dy);
                if (edge || rho > boundary - spec.membrane_width) {
                    s.label[idx] = four_class ? four::kMembrane : three::kMembrane;
                    s.image[idx] = kMembraneLevel * brightness;
                    continue;
                }
                int label = four_class ? four::kBackground : three::kBackground;
                float level = kCytoplasmLevel * brightness;
                // Body frame coordinates for organelle tests.
                const double dx = px - body.cx, dy = py - body.cy;
                const double u = (ca * dx + sa * dy) / body.aspect;
                const double v = (-sa * dx + ca * dy) * body.aspect;
                for (const auto& org : organelles) {
                    const auto [r2, b2] = org.polar(u, v);
                    if (r2 <= b2) {
                        label = four_class ? four::kMitochondria : three::kNucleus;
                        level = (four_class ? kMitochondriaLevel : kNucleusLevel) * brightness;
                    }
                }
                if (four_class) {
                    for (const double angle : synapses) {
                        const double inner = boundary - spec.membrane_width;
                        const double sx = (inner - 1.6) * std::cos(angle), sy = (inner - 1.6) * std::sin(angle);
                        if ((u - sx) * (u - sx) + (v - sy) * (v - sy) <= 2.6 && rho <= inner - 0.3) {
                            label = four::kSynapse;
                            level = kSynapseLevel * brightness;
                        }
                    }
                }
                s.label[idx] = label;
                s.image[idx] = level;
            }
        }
    }

    box_blur(s.image, size, spec.blur_radius);
    for (auto& v : s.image) {
        const double noisy = v + spec.noise * standard_normal(rng);
        v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
    return s;
}

std::vector<Sample> generate(const SyntheticSpec& spec, int n) {
    if (n < 1) throw ConfigError("synthetic: n must be >= 1");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(generate_one(spec, i));
    return out;
}

}  // namespace fre::data
