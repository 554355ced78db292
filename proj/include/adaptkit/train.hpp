#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "adaptkit/data.hpp"
#include "adaptkit/errors.hpp"
#include "adaptkit/ops.hpp"
#include "adaptkit/rng.hpp"
#include "adaptkit/tensor.hpp"
#include "adaptkit/vit.hpp"

namespace adaptkit {

// Training recipe: SGD with classic momentum, zero weight decay, linear
// learning-rate scaling (base_lr * batch_size / 256), linear warmup into a
// cosine decay.
struct TrainConfig {
    double base_lr = 0.1;
    std::size_t batch_size = 32;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t warmup_epochs = 0;
    std::size_t total_epochs = 1;
    std::uint64_t seed = 0;
    TuningMode mode = TuningMode::full;
    std::size_t eval_every = 1;

    double effective_lr() const {
        return base_lr * static_cast<double>(batch_size) / 256.0;
    }

    void validate() const {
        if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
        if (eval_every == 0) throw ConfigError("train: eval_every must be >= 1");
        if (total_epochs > 0 && warmup_epochs >= total_epochs)
            throw ConfigError("train: warmup_epochs must be < total_epochs");
        if (base_lr < 0.0) throw ConfigError("train: base_lr must be >= 0");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ConfigError("train: momentum must be in [0, 1)");
    }
};

// Schedule value for an epoch: linear ramp 0 -> effective_lr over the
// warmup epochs, then effective_lr * 0.5 * (1 + cos(pi * t)) with
// t = (epoch - warmup) / (total - warmup). Nondecreasing through warmup,
// nonincreasing after.
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch >= cfg.total_epochs) {
        throw ContractError("lr_at: epoch " + std::to_string(epoch) + " out of range [0, " +
                            std::to_string(cfg.total_epochs) + ")");
    }
    const double eff = cfg.effective_lr();
    if (epoch < cfg.warmup_epochs) {
        return eff * static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
    }
    const double t = static_cast<double>(epoch - cfg.warmup_epochs) /
                     static_cast<double>(cfg.total_epochs - cfg.warmup_epochs);
    return eff * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

struct EpochRow {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double eval_top1 = 0.0;
    std::size_t tunable_params = 0;
    std::uint64_t wall_ms = 0;
};

struct RunReport {
    std::vector<EpochRow> rows;

    static constexpr const char* csv_header = "epoch,lr,train_loss,eval_top1,tunable_params,wall_ms";

    void to_csv(std::ostream& os) const {
        os << csv_header << '\n';
        char buf[128];
        for (const EpochRow& r : rows) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%zu,%llu\n", r.epoch, r.lr,
                          r.train_loss, r.eval_top1, r.tunable_params,
                          static_cast<unsigned long long>(r.wall_ms));
            os << buf;
        }
    }

    void write_csv(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open " + path + " for writing");
        to_csv(os);
        if (!os.good()) throw IoError("write failed for " + path);
    }

    // Metric equality; wall-clock time is the one nondeterministic column
    // and is excluded.
    bool metrics_equal(const RunReport& other) const {
        if (rows.size() != other.rows.size()) return false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const EpochRow& a = rows[i];
            const EpochRow& b = other.rows[i];
            if (a.epoch != b.epoch || a.lr != b.lr || a.train_loss != b.train_loss ||
                a.eval_top1 != b.eval_top1 || a.tunable_params != b.tunable_params)
                return false;
        }
        return true;
    }

    double final_top1() const {
        if (rows.empty()) throw ContractError("report: no rows");
        return rows.back().eval_top1;
    }
};

// Classic (non-Nesterov) momentum SGD over the model's trainable set:
//   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v.
// Velocity buffers exist only for trainable parameters; frozen tensors are
// never touched.
class SgdOptimizer {
   public:
    SgdOptimizer(VitModel& model, double momentum, double weight_decay = 0.0)
        : model_(model), momentum_(momentum), weight_decay_(weight_decay) {
        for (const auto& [name, tensor] : model.parameters()) {
            if (tensor.requires_grad())
                velocity_.emplace(name, std::vector<double>(tensor.size(), 0.0));
        }
    }

    std::size_t tracked_parameters() const { return velocity_.size(); }
    bool tracks(const std::string& name) const { return velocity_.count(name) > 0; }

    void step(double lr) {
        for (auto& [name, vel] : velocity_) {
            Tensor* p = model_.find_param(name);
            const bool has_grad = p->has_grad();
            for (std::size_t i = 0; i < vel.size(); ++i) {
                const double g =
                    (has_grad ? p->grad()[i] : 0.0) + weight_decay_ * p->data()[i];
                vel[i] = momentum_ * vel[i] + g;
                p->data()[i] -= lr * vel[i];
            }
        }
    }

   private:
    VitModel& model_;
    double momentum_;
    double weight_decay_;
    std::unordered_map<std::string, std::vector<double>> velocity_;
};

// Top-1 accuracy in eval mode (dropout off, head norm on running stats).
// Argmax ties resolve to the lowest class index.
inline double evaluate(VitModel& model, const Dataset& data, std::size_t eval_batch = 64) {
    if (data.empty()) throw ContractError("evaluate: empty dataset");
    std::size_t correct = 0;
    const std::size_t classes = model.config().num_classes;
    for (std::size_t start = 0; start < data.size(); start += eval_batch) {
        const std::size_t count = std::min(eval_batch, data.size() - start);
        std::vector<const std::vector<double>*> batch;
        batch.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            batch.push_back(&data.samples[start + i].pixels);
        Tensor logits = model.forward_batch(batch, false, nullptr);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t pred = ops::argmax_row(logits.data() + i * classes, classes);
            if (static_cast<int>(pred) == data.samples[start + i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Full training loop. Shuffling, dropout and everything else downstream of
// cfg.seed is deterministic; two runs with the same seed produce identical
// metrics. Aborts with NumericalError naming the epoch and batch if the
// loss turns non-finite.
inline RunReport train(VitModel& model, const Dataset& train_data, const Dataset& eval_data,
                       const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.mode != model.tuning().mode) {
        throw ConfigError("train: config mode '" + to_string(cfg.mode) +
                          "' does not match model mode '" + to_string(model.tuning().mode) +
                          "'");
    }
    if (!train_data.empty() &&
        train_data.pixels_per_sample() != model.config().pixels_per_sample()) {
        throw ConfigError("train: dataset geometry does not match model config");
    }
    RunReport report;
    if (cfg.total_epochs == 0) return report;

    Rng base(cfg.seed);
    Rng shuffle_rng = base.derive("train/shuffle");
    Rng dropout_rng = base.derive("train/dropout");
    SgdOptimizer opt(model, cfg.momentum, cfg.weight_decay);
    const std::size_t tunable = model.trainable_parameter_count();

    std::vector<std::size_t> order(train_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto run_start = std::chrono::steady_clock::now();
    double last_top1 = 0.0;
    bool evaluated = false;
    for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0, batch_index = 0; start < order.size();
             start += cfg.batch_size, ++batch_index) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            std::vector<const std::vector<double>*> batch;
            std::vector<int> labels;
            batch.reserve(count);
            labels.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                const Sample& s = train_data.samples[order[start + i]];
                batch.push_back(&s.pixels);
                labels.push_back(s.label);
            }
            model.zero_grads();
            Graph tape;
            double loss_value;
            {
                GraphScope scope(tape);
                Tensor logits = model.forward_batch(batch, true, &dropout_rng);
                Tensor loss = ops::cross_entropy(logits, labels);
                loss_value = loss.value();
                if (!std::isfinite(loss_value)) {
                    throw NumericalError("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_index));
                }
                tape.backward(loss);
            }
            opt.step(lr);
            loss_sum += loss_value * static_cast<double>(count);
            loss_count += count;
        }
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.total_epochs) {
            last_top1 = evaluate(model, eval_data);
            evaluated = true;
        }
        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
        row.eval_top1 = evaluated ? last_top1 : 0.0;
        row.tunable_params = tunable;
        row.wall_ms = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - run_start)
                .count());
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace adaptkit
