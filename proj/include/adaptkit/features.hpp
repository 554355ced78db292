#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "adaptkit/data.hpp"
#include "adaptkit/errors.hpp"
#include "adaptkit/vit.hpp"

namespace adaptkit {

// Row-wise export of eval-mode CLS features (post head-norm, pre head) with
// labels; downstream projection tools consume this directly. Layout:
//   "AKFX" | u32 version | u64 rows | u64 dim |
//   per row: u32 label, f64 feature[dim]   (little-endian)
inline void export_cls_features(VitModel& model, const Dataset& data, const std::string& path,
                                std::size_t batch = 64) {
    if (data.empty()) throw ContractError("export_cls_features: empty dataset");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    auto put = [&os](const void* p, std::size_t n) {
        os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    };
    os.write("AKFX", 4);
    const std::uint32_t version = 1;
    put(&version, 4);
    const std::uint64_t rows = data.size();
    const std::uint64_t dim = model.config().embed_dim;
    put(&rows, 8);
    put(&dim, 8);
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const std::size_t count = std::min(batch, data.size() - start);
        std::vector<const std::vector<double>*> chunk;
        chunk.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            chunk.push_back(&data.samples[start + i].pixels);
        Tensor features = model.export_features(chunk);
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t label =
                static_cast<std::uint32_t>(data.samples[start + i].label);
            put(&label, 4);
            put(features.data() + i * dim, dim * sizeof(double));
        }
    }
    if (!os.good()) throw IoError("write failed for " + path);
}

}  // namespace adaptkit
