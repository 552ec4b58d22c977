#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfcn/data.hpp"
#include "vfcn/network_spec.hpp"
#include "vfcn/rng.hpp"
#include "vfcn/weights.hpp"

namespace vfcn {

struct TrainConfig {
    std::optional<double> base_lr;  ///< unset: 0.01, or 0.001 when fine-tuning
    double power = 0.5;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int epochs = 10;
    std::optional<long> max_iter;  ///< overrides epochs * samples / batch_size
    int batch_size = 1;
    std::uint64_t seed = 1;
    bool fine_tune = false;
    int num_classes = 2;

    double resolved_base_lr() const { return base_lr.value_or(fine_tune ? 0.001 : 0.01); }
    long resolved_max_iter(std::size_t samples) const;
    /// Throws ContractError on out-of-range hyperparameters.
    void validate() const;
};

/// base_lr * (1 - iter/max_iter)^power; requires 0 <= iter <= max_iter.
double poly_lr(double base_lr, double power, long iter, long max_iter);

template <typename T>
struct OptimizerState {
    std::vector<std::vector<BasicTensor<T>>> velocity;  ///< mirrors the store's blobs
    long iteration = 0;

    static OptimizerState zeros_like(const BasicWeightStore<T>& store);
};

/// g = grad + decay * w (blob 0 only; biases are exempt), v = momentum * v - lr * g, w += v.
/// Throws ContractError on a shape mismatch or non-finite gradient.
template <typename T>
void sgd_step(BasicWeightStore<T>& store, const BasicWeightStore<T>& grads, OptimizerState<T>& state, double lr,
              double momentum, double weight_decay);

struct IterationRecord {
    long iter = 0;  ///< 1-based
    double lr = 0;
    double loss = 0;
    int epoch = 0;  ///< 0-based
    double wall_ms = 0;
};

struct EpochRecord {
    int epoch = 0;
    std::optional<double> dev_dice;  ///< empty without a development split
};

struct TrainReport {
    std::vector<IterationRecord> iterations;
    std::vector<EpochRecord> epochs;
    std::vector<std::string> transplanted;  ///< fine-tuning only
    std::vector<std::string> warnings;
    long max_iter = 0;
    bool stopped_early = false;
};

/// CSV header `iter,lr,loss,epoch,wall_ms`.
void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

struct TrainHooks {
    std::span<const Sample> dev;  ///< development split for per-epoch Dice
    /// Sees the initial weights before the first update.
    std::function<void(const WeightStore&)> on_start;
    /// Called after every iteration with the current weights; returning true stops training.
    std::function<bool(const IterationRecord&, const WeightStore&)> observer;
};

/// Loss and parameter gradients of one sample (dropout active, masks from `rng`).
template <typename T>
T loss_and_grads(const NetworkSpec& spec, const BasicWeightStore<T>& store, const Sample& sample, Rng& rng,
                 BasicWeightStore<T>* grads);

struct TrainResult {
    WeightStore weights;
    TrainReport report;
};

/// Batch-1 SGD over `dataset`, reshuffled every epoch from cfg.seed.
/// Aborts with ContractError naming the iteration on a non-finite loss.
TrainResult train(const NetworkSpec& spec, WeightStore init, std::span<const Sample> dataset,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Transplants name/shape-matching layers from the source file over a Xavier
/// initialization, then trains with base_lr 0.001 unless overridden.
TrainResult fine_tune(const NetworkSpec& spec, const std::filesystem::path& source_weights,
                      std::span<const Sample> dataset, TrainConfig cfg, const TrainHooks& hooks = {});

/// Foreground (label > 0) Dice of the prediction against the sample's mask.
double sample_dice(const NetworkSpec& spec, const WeightStore& store, const Sample& sample);

/// Mean sample_dice over the labeled samples; empty when there are none.
std::optional<double> mean_dice(const NetworkSpec& spec, const WeightStore& store, std::span<const Sample> samples);

}  // namespace vfcn
