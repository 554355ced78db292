#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "adaptkit/errors.hpp"

namespace adaptkit {

// One labeled sample. Pixels are [frames][row][col][channel] row-major
// 64-bit floats in [0, 1].
struct Sample {
    std::vector<double> pixels;
    int label = 0;
};

struct Dataset {
    std::string name;
    std::size_t image_size = 0;
    std::size_t channels = 0;
    std::size_t frames = 1;
    std::size_t num_classes = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    std::size_t pixels_per_sample() const {
        return frames * image_size * image_size * channels;
    }
};

}  // namespace adaptkit
