#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "adaptkit/data.hpp"
#include "adaptkit/errors.hpp"
#include "adaptkit/rng.hpp"

namespace adaptkit {

// Synthetic task family. Every sample is a striped pattern with two latent
// factors:
//   a in [0, num_classes): stripe orientation, angle = pi * a / num_classes
//   b in {0, 1}:           spatial frequency (low / high)
// plus a uniformly random phase and seeded pixel noise. The label rule
// depends on the shift descriptor:
//   none / hue-rotation / texture-swap : label = a  (b is a nuisance factor)
//   label-regroup                      : label = (a + b) mod num_classes
// The regrouped rule (XOR for two classes) keys the label to the *joint*
// value of both factors. A backbone pretrained on the plain rule learns to
// read orientation and to ignore frequency, so a frozen-feature linear
// probe has little signal for the regrouped task while nonlinear tuning
// can recover the frequency factor. That is the desk-scale headroom the
// transfer experiments measure.
//
// hue-rotation cycles the channel phase offsets; texture-swap replaces the
// sine stripes with a square-wave texture. Both keep the label rule.
enum class ShiftKind { none, hue_rotation, texture_swap, label_regroup };

inline std::string to_string(ShiftKind s) {
    switch (s) {
        case ShiftKind::none: return "none";
        case ShiftKind::hue_rotation: return "hue-rotation";
        case ShiftKind::texture_swap: return "texture-swap";
        case ShiftKind::label_regroup: return "label-regroup";
    }
    return "?";
}

inline ShiftKind shift_from_string(std::string_view s) {
    if (s == "none") return ShiftKind::none;
    if (s == "hue-rotation") return ShiftKind::hue_rotation;
    if (s == "texture-swap") return ShiftKind::texture_swap;
    if (s == "label-regroup") return ShiftKind::label_regroup;
    throw ConfigError("unknown shift '" + std::string(s) +
                      "' (expected none|hue-rotation|texture-swap|label-regroup)");
}

struct TaskSpec {
    std::string name = "task";
    std::size_t image_size = 16;
    std::size_t channels = 3;
    std::size_t num_classes = 2;
    std::size_t train_count = 256;
    std::size_t eval_count = 128;
    std::uint64_t seed = 1;
    ShiftKind shift = ShiftKind::none;
    std::size_t frames = 1;
    double noise = 0.05;

    void validate() const {
        if (image_size == 0 || channels == 0) throw ConfigError("task: empty geometry");
        if (num_classes < 2) throw ConfigError("task: num_classes must be >= 2");
        if (train_count < num_classes || eval_count < num_classes)
            throw ConfigError("task: sample counts must be >= num_classes");
        if (noise < 0.0) throw ConfigError("task: noise must be >= 0");
        if (frames == 0) throw ConfigError("task: frames must be >= 1");
    }
};

struct TaskPair {
    Dataset train;
    Dataset eval;
};

namespace detail {

// Per-sample latent draws besides the two class factors. The jitters blur
// the linear cluster structure of the factor grid in feature space while
// leaving both factors cleanly decodable from local patch statistics.
struct SampleLatents {
    double phase = 0.0;
    double angle_jitter = 0.0;  // radians
    double freq_scale = 1.0;
    double amplitude = 0.35;
};

inline SampleLatents draw_latents(Rng& rng) {
    SampleLatents l;
    l.phase = 2.0 * std::numbers::pi * rng.next_uniform();
    l.angle_jitter = 0.12 * (2.0 * rng.next_uniform() - 1.0);
    l.freq_scale = 1.0 + 0.25 * (2.0 * rng.next_uniform() - 1.0);
    l.amplitude = 0.275 + 0.075 * (2.0 * rng.next_uniform() - 1.0);
    return l;
}

inline void render_sample(std::vector<double>& pixels, const TaskSpec& spec, std::size_t a,
                          std::size_t b, const SampleLatents& latents, Rng& noise_rng) {
    const std::size_t s = spec.image_size;
    const std::size_t ch = spec.channels;
    const double angle = std::numbers::pi * static_cast<double>(a) /
                             static_cast<double>(spec.num_classes) +
                         latents.angle_jitter;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double freq = (b == 0 ? 1.0 : 3.0) * latents.freq_scale;
    const bool square = spec.shift == ShiftKind::texture_swap;
    pixels.resize(spec.frames * s * s * ch);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        // Frames drift in phase, so they are correlated but not identical.
        const double fphase = latents.phase + 0.35 * static_cast<double>(f);
        double* frame = pixels.data() + f * s * s * ch;
        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(s);
                const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(s);
                const double t = u * ca + v * sa;
                for (std::size_t c = 0; c < ch; ++c) {
                    std::size_t channel = c;
                    if (spec.shift == ShiftKind::hue_rotation) channel = (c + 1) % ch;
                    const double coff = 2.0 * std::numbers::pi * static_cast<double>(channel) /
                                        (2.0 * static_cast<double>(ch));
                    double wave = std::sin(2.0 * std::numbers::pi * freq * t + fphase + coff);
                    if (square) wave = wave >= 0.0 ? 1.0 : -1.0;
                    double value = 0.5 + latents.amplitude * wave;
                    if (spec.noise > 0.0) value += spec.noise * noise_rng.next_gaussian();
                    frame[(y * s + x) * ch + c] = std::clamp(value, 0.0, 1.0);
                }
            }
        }
    }
}

inline Dataset make_split(const TaskSpec& spec, std::size_t count, Rng& rng,
                          const std::string& split_name) {
    Dataset ds;
    ds.name = spec.name + "/" + split_name;
    ds.image_size = spec.image_size;
    ds.channels = spec.channels;
    ds.frames = spec.frames;
    ds.num_classes = spec.num_classes;
    ds.samples.resize(count);
    const std::size_t k = spec.num_classes;
    for (std::size_t i = 0; i < count; ++i) {
        // The factor stream does not depend on the shift, so label-regroup
        // keeps the image sequence and only re-partitions the labels.
        // Round-robin orientation keeps every prefix balanced within one
        // sample under either rule; the frequency factor alternates per
        // orientation cycle so it stays a uniform nuisance.
        const std::size_t a = i % k;
        const std::size_t b = (i / k) % 2;
        const std::size_t label = spec.shift == ShiftKind::label_regroup ? (a + b) % k : a;
        const SampleLatents latents = draw_latents(rng);
        Sample& sample = ds.samples[i];
        sample.label = static_cast<int>(label);
        render_sample(sample.pixels, spec, a, b, latents, rng);
    }
    return ds;
}

}  // namespace detail

// Deterministic generation: identical specs give identical byte streams.
// Train and eval draw from one seeded stream in order, so the splits are
// disjoint by construction.
inline TaskPair generate(const TaskSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Rng stream = rng.derive("synth/" + std::string(spec.name));
    TaskPair pair;
    pair.train = detail::make_split(spec, spec.train_count, stream, "train");
    pair.eval = detail::make_split(spec, spec.eval_count, stream, "eval");
    return pair;
}

// The same task rendered as `num_frames` correlated frames per sample.
inline TaskPair frames_variant(const TaskSpec& spec, std::size_t num_frames) {
    if (num_frames == 0) throw ConfigError("frames_variant: num_frames must be >= 1");
    TaskSpec shifted = spec;
    shifted.frames = num_frames;
    return generate(shifted);
}

// Flat binary export for inspection; same container conventions as
// checkpoints (little-endian, magic + header + payload):
//   "AKDS" | u32 version | u64 count | u64 image_size | u64 channels |
//   u64 frames | u64 num_classes | per sample: u32 label, f64 pixels[...]
inline void export_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    auto put = [&os](const void* p, std::size_t n) {
        os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    };
    os.write("AKDS", 4);
    const std::uint32_t version = 1;
    put(&version, 4);
    const std::uint64_t header[5] = {ds.samples.size(), ds.image_size, ds.channels, ds.frames,
                                     ds.num_classes};
    put(header, sizeof(header));
    for (const Sample& s : ds.samples) {
        const std::uint32_t label = static_cast<std::uint32_t>(s.label);
        put(&label, 4);
        put(s.pixels.data(), s.pixels.size() * sizeof(double));
    }
    if (!os.good()) throw IoError("write failed for " + path);
}

}  // namespace adaptkit
