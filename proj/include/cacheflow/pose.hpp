#pragma once

// Motion sequence: T frames of J joints in 3-D, stored flat in
// frame-major order (frame, joint, axis).

#include <cstddef>
#include <string>
#include <vector>

#include "cacheflow/error.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

struct PoseSequence {
    std::size_t frames = 0;
    std::size_t joints = 0;
    double fps = 25.0;
    std::vector<double> xyz;  // frames*joints*3 values

    PoseSequence() = default;
    PoseSequence(std::size_t t, std::size_t j, double fps_ = 25.0)
        : frames(t), joints(j), fps(fps_), xyz(t * j * 3, 0.0) {}

    std::size_t flat_size() const { return frames * joints * 3; }

    double& at(std::size_t f, std::size_t j, std::size_t a) {
        return xyz[(f * joints + j) * 3 + a];
    }
    double at(std::size_t f, std::size_t j, std::size_t a) const {
        return xyz[(f * joints + j) * 3 + a];
    }
};

inline void check_same_shape(const PoseSequence& a, const PoseSequence& b, const char* what) {
    if (a.frames != b.frames || a.joints != b.joints)
        throw DimensionError(std::string(what) + ": " + std::to_string(a.frames) + "x" +
                             std::to_string(a.joints) + " vs " + std::to_string(b.frames) + "x" +
                             std::to_string(b.joints));
}

// Past motion as a T x (J*3) condition feature matrix, one frame per row.
inline Matrix pose_features(const PoseSequence& p) {
    return Matrix(p.frames, p.joints * 3, p.xyz);
}

}  // namespace cacheflow
