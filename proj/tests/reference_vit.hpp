#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "adaptkit/vit.hpp"

// Independent flat-loop re-implementation of the encoder forward pass.
// No Tensor machinery: plain row vectors and nested loops, reading weights
// out of a model by name. Used as the oracle for block_forward and the
// prompt path. Loop orders mirror the production code so results should
// agree to the last bit; tests assert <= 1e-12.

namespace refvit {

using Mat = std::vector<std::vector<double>>;

inline Mat from_tensor(const adaptkit::Tensor& t) {
    const std::size_t rows = t.shape().size() == 2 ? t.shape()[0] : 1;
    const std::size_t cols = t.shape().size() == 2 ? t.shape()[1] : t.shape()[0];
    Mat m(rows, std::vector<double>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m[i][j] = t.data()[i * cols + j];
    return m;
}

inline std::vector<double> vec_from_tensor(const adaptkit::Tensor& t) {
    return t.values();
}

inline Mat matmul_bias(const Mat& x, const Mat& w, const std::vector<double>& b) {
    const std::size_t m = x.size(), k = w.size(), n = w[0].size();
    Mat out(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) out[i][j] += x[i][p] * w[p][j];
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i][j] += b[j];
    return out;
}

inline Mat layernorm(const Mat& x, const std::vector<double>& gamma,
                     const std::vector<double>& beta, double eps = 1e-6) {
    const std::size_t d = x[0].size();
    Mat out(x.size(), std::vector<double>(d));
    for (std::size_t r = 0; r < x.size(); ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x[r][j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x[r][j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j)
            out[r][j] = (x[r][j] - mean) * inv_std * gamma[j] + beta[j];
    }
    return out;
}

inline void softmax_rows_inplace(Mat& m) {
    for (auto& row : m) {
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double denom = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            denom += v;
        }
        const double inv = 1.0 / denom;
        for (double& v : row) v *= inv;
    }
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

struct BlockWeights {
    Mat qw, kw, vw, ow, fc1w, fc2w;
    std::vector<double> qb, kb, vb, ob, fc1b, fc2b;
    std::vector<double> ln1w, ln1b, ln2w, ln2b;
    Mat ad_down_w, ad_up_w;
    std::vector<double> ad_down_b, ad_up_b;
    bool has_adapter = false;
};

inline BlockWeights load_block(adaptkit::VitModel& model, std::size_t layer) {
    const std::string b = "blocks." + std::to_string(layer) + ".";
    auto mat = [&](const std::string& n) { return from_tensor(*model.find_param(b + n)); };
    auto vec = [&](const std::string& n) { return vec_from_tensor(*model.find_param(b + n)); };
    BlockWeights w;
    w.ln1w = vec("norm1.weight");
    w.ln1b = vec("norm1.bias");
    w.qw = mat("attn.q.weight");
    w.qb = vec("attn.q.bias");
    w.kw = mat("attn.k.weight");
    w.kb = vec("attn.k.bias");
    w.vw = mat("attn.v.weight");
    w.vb = vec("attn.v.bias");
    w.ow = mat("attn.proj.weight");
    w.ob = vec("attn.proj.bias");
    w.ln2w = vec("norm2.weight");
    w.ln2b = vec("norm2.bias");
    w.fc1w = mat("mlp.fc1.weight");
    w.fc1b = vec("mlp.fc1.bias");
    w.fc2w = mat("mlp.fc2.weight");
    w.fc2b = vec("mlp.fc2.bias");
    if (model.find_param(b + "adapter.down.weight") != nullptr) {
        w.has_adapter = true;
        w.ad_down_w = mat("adapter.down.weight");
        w.ad_down_b = vec("adapter.down.bias");
        w.ad_up_w = mat("adapter.up.weight");
        w.ad_up_b = vec("adapter.up.bias");
    }
    return w;
}

inline Mat mhsa(const Mat& x, const BlockWeights& w, std::size_t num_heads) {
    const std::size_t t = x.size();
    const std::size_t d = x[0].size();
    const std::size_t dh = d / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat q = matmul_bias(x, w.qw, w.qb);
    Mat k = matmul_bias(x, w.kw, w.kb);
    Mat v = matmul_bias(x, w.vw, w.vb);
    Mat merged(t, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < num_heads; ++h) {
        Mat scores(t, std::vector<double>(t, 0.0));
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t p = 0; p < dh; ++p)
                for (std::size_t j = 0; j < t; ++j)
                    scores[i][j] += q[i][h * dh + p] * k[j][h * dh + p];
        for (auto& row : scores)
            for (double& s : row) s *= scale;
        softmax_rows_inplace(scores);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t p = 0; p < t; ++p)
                for (std::size_t j = 0; j < dh; ++j)
                    merged[i][h * dh + j] += scores[i][p] * v[p][h * dh + j];
    }
    return matmul_bias(merged, w.ow, w.ob);
}

struct AdapterSettings {
    double scale = 0.1;
    bool parallel = true;
};

inline Mat block_forward(const Mat& x, const BlockWeights& w, std::size_t num_heads,
                         const AdapterSettings& ad = {}) {
    const std::size_t t = x.size();
    const std::size_t d = x[0].size();
    Mat attn = mhsa(layernorm(x, w.ln1w, w.ln1b), w, num_heads);
    Mat x_prime(t, std::vector<double>(d));
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) x_prime[i][j] = x[i][j] + attn[i][j];
    Mat x_norm = layernorm(x_prime, w.ln2w, w.ln2b);
    Mat hidden = matmul_bias(x_norm, w.fc1w, w.fc1b);
    for (auto& row : hidden)
        for (double& v : row) v = gelu(v);
    Mat mlp_out = matmul_bias(hidden, w.fc2w, w.fc2b);
    Mat out(t, std::vector<double>(d));
    if (!w.has_adapter) {
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) out[i][j] = mlp_out[i][j] + x_prime[i][j];
        return out;
    }
    const Mat& branch_in = ad.parallel ? x_norm : mlp_out;
    Mat mid = matmul_bias(branch_in, w.ad_down_w, w.ad_down_b);
    for (auto& row : mid)
        for (double& v : row) v = v > 0.0 ? v : 0.0;
    Mat branch = matmul_bias(mid, w.ad_up_w, w.ad_up_b);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out[i][j] = mlp_out[i][j] + ad.scale * branch[i][j] + x_prime[i][j];
    return out;
}

}  // namespace refvit
