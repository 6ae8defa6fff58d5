#pragma once

#include <string>

#include "fre/errors.hpp"

namespace fre::train {

// Blend weight for the auxiliary bottleneck loss:
// loss = (1 - lambda) * main + lambda * aux.
struct SupervisionConfig {
    double lambda = 0.0;

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0)) {
            throw ConfigError("supervision: lambda must lie in [0, 1], got " + std::to_string(lambda));
        }
    }
};

}  // namespace fre::train
