#include "vfcn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vfcn/metrics.hpp"
#include "vfcn/model.hpp"

namespace vfcn {

long TrainConfig::resolved_max_iter(std::size_t samples) const
{
    if (max_iter)
        return *max_iter;
    return static_cast<long>(epochs) * static_cast<long>(samples) / batch_size;
}

void TrainConfig::validate() const
{
    auto require = [](bool ok, const char* msg) {
        if (!ok)
            throw ContractError(std::string("train config: ") + msg);
    };
    require(resolved_base_lr() > 0, "base_lr must be positive");
    require(momentum >= 0 && momentum < 1, "momentum must lie in [0, 1)");
    require(weight_decay >= 0, "weight_decay must be non-negative");
    require(power > 0, "power must be positive");
    require(epochs >= 1, "epochs must be at least 1");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(!max_iter || *max_iter >= 1, "max_iter must be at least 1");
    require(num_classes >= 2 && num_classes <= 255, "num_classes must lie in 2..255");
}

double poly_lr(double base_lr, double power, long iter, long max_iter)
{
    if (max_iter < 1 || iter < 0 || iter > max_iter)
        throw ContractError("poly_lr: iteration " + std::to_string(iter) + " outside [0, " +
                            std::to_string(max_iter) + "]");
    return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

template <typename T>
OptimizerState<T> OptimizerState<T>::zeros_like(const BasicWeightStore<T>& store)
{
    OptimizerState s;
    for (const auto& e : store.layers) {
        std::vector<BasicTensor<T>> v;
        for (const auto& b : e.blobs)
            v.emplace_back(b.shape(), T(0));
        s.velocity.push_back(std::move(v));
    }
    return s;
}

template <typename T>
void sgd_step(BasicWeightStore<T>& store, const BasicWeightStore<T>& grads, OptimizerState<T>& state, double lr,
              double momentum, double weight_decay)
{
    if (grads.layers.size() != store.layers.size() || state.velocity.size() != store.layers.size())
        throw ContractError("sgd_step: layer count mismatch between weights, gradients and state");
    for (std::size_t l = 0; l < store.layers.size(); ++l) {
        auto& blobs = store.layers[l].blobs;
        const auto& gblobs = grads.layers[l].blobs;
        auto& vblobs = state.velocity[l];
        if (grads.layers[l].name != store.layers[l].name || gblobs.size() != blobs.size() ||
            vblobs.size() != blobs.size())
            throw ContractError("sgd_step: gradient layout differs at layer " + store.layers[l].name);
        for (std::size_t b = 0; b < blobs.size(); ++b) {
            if (gblobs[b].shape() != blobs[b].shape() || vblobs[b].shape() != blobs[b].shape())
                throw ContractError("sgd_step: shape mismatch in " + store.layers[l].name + " blob " +
                                    std::to_string(b));
            gblobs[b].require_finite(("gradient of " + store.layers[l].name).c_str());
        }
    }
    const T m = static_cast<T>(momentum);
    const T rate = static_cast<T>(lr);
    const T decay = static_cast<T>(weight_decay);
    for (std::size_t l = 0; l < store.layers.size(); ++l) {
        auto& blobs = store.layers[l].blobs;
        for (std::size_t b = 0; b < blobs.size(); ++b) {
            T* w = blobs[b].data();
            T* v = state.velocity[l][b].data();
            const T* g = grads.layers[l].blobs[b].data();
            const T d = b == 0 ? decay : T(0);
            for (std::size_t i = 0; i < blobs[b].size(); ++i) {
                const T step = g[i] + d * w[i];
                v[i] = m * v[i] - rate * step;
                w[i] += v[i];
            }
        }
    }
    ++state.iteration;
}

template <typename T>
T loss_and_grads(const NetworkSpec& spec, const BasicWeightStore<T>& store, const Sample& sample, Rng& rng,
                 BasicWeightStore<T>* grads)
{
    if (!sample.has_label)
        throw ContractError("training sample '" + sample.provenance.case_id + "' has no label mask");
    auto g = build_graph(spec, store, sample.image.template cast<T>(), true, rng, grads != nullptr);
    const Shape& out = g.tape.value(g.logits).shape();
    if (out.h != static_cast<std::size_t>(sample.mask.rows) || out.w != static_cast<std::size_t>(sample.mask.cols))
        throw ContractError("network output " + out.str() + " does not match the label mask size");
    const Var loss = g.tape.softmax_xent(g.logits, sample.mask.data);
    const T value = g.tape.value(loss)[0];
    if (!grads)
        return value;
    g.tape.backward(loss);
    grads->layers.clear();
    for (const auto& p : g.params)
        grads->layers.push_back({p.layer, {g.tape.grad(p.weights), g.tape.grad(p.bias)}});
    return value;
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw FormatError("cannot write training report " + path.string());
    out.precision(17);
    out << "iter,lr,loss,epoch,wall_ms\n";
    for (const auto& r : report.iterations)
        out << r.iter << ',' << r.lr << ',' << r.loss << ',' << r.epoch << ',' << r.wall_ms << '\n';
}

double sample_dice(const NetworkSpec& spec, const WeightStore& store, const Sample& sample)
{
    const LabelMask pred = predict_labels(spec, store, sample.image);
    return metrics::dice(metrics::select_label(pred, 1, true), metrics::select_label(sample.mask, 1, true));
}

std::optional<double> mean_dice(const NetworkSpec& spec, const WeightStore& store, std::span<const Sample> samples)
{
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        if (!s.has_label)
            continue;
        sum += sample_dice(spec, store, s);
        ++n;
    }
    if (n == 0)
        return std::nullopt;
    return sum / static_cast<double>(n);
}

namespace {

void add_into(WeightStore& acc, const WeightStore& g)
{
    for (std::size_t l = 0; l < acc.layers.size(); ++l)
        for (std::size_t b = 0; b < acc.layers[l].blobs.size(); ++b) {
            float* a = acc.layers[l].blobs[b].data();
            const float* x = g.layers[l].blobs[b].data();
            for (std::size_t i = 0; i < acc.layers[l].blobs[b].size(); ++i)
                a[i] += x[i];
        }
}

void scale(WeightStore& s, float k)
{
    for (auto& e : s.layers)
        for (auto& b : e.blobs)
            for (float& v : b.values())
                v *= k;
}

}  // namespace

TrainResult train(const NetworkSpec& spec, WeightStore init, std::span<const Sample> dataset,
                  const TrainConfig& cfg, const TrainHooks& hooks)
{
    cfg.validate();
    if (dataset.empty())
        throw ContractError("train: dataset is empty");
    if (spec.num_classes != cfg.num_classes)
        throw ContractError("train: spec has " + std::to_string(spec.num_classes) + " classes, config " +
                            std::to_string(cfg.num_classes));
    for (const auto& s : dataset) {
        if (!s.has_label)
            throw ContractError("train: sample '" + s.provenance.case_id + "' has no label mask");
        for (std::uint8_t v : s.mask.data)
            if (v >= cfg.num_classes)
                throw ContractError("train: sample '" + s.provenance.case_id + "' has label " + std::to_string(v) +
                                    " >= K=" + std::to_string(cfg.num_classes));
    }
    if (cfg.batch_size > 1)
        for (const auto& s : dataset)
            if (s.image.shape() != dataset.front().image.shape())
                throw ContractError("train: batch_size > 1 needs samples of one size");
    check_store_matches(spec, init);

    TrainResult result{std::move(init), {}};
    TrainReport& report = result.report;
    const long max_iter = cfg.resolved_max_iter(dataset.size());
    if (max_iter < 1)
        throw ContractError("train: fewer samples than one batch");
    report.max_iter = max_iter;
    const double base_lr = cfg.resolved_base_lr();
    const std::size_t per_epoch = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;

    Rng order_rng(cfg.seed);
    Rng dropout_rng(cfg.seed ^ 0x5DEECE66DULL);
    std::vector<std::size_t> order(dataset.size());
    std::size_t cursor = order.size();
    auto next_sample = [&]() -> const Sample& {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            order_rng.shuffle(order);
            cursor = 0;
        }
        return dataset[order[cursor++]];
    };

    auto state = OptimizerState<float>::zeros_like(result.weights);
    int last_epoch = 0;
    auto close_epoch = [&](int epoch) {
        EpochRecord rec{epoch, std::nullopt};
        if (!hooks.dev.empty())
            rec.dev_dice = mean_dice(spec, result.weights, hooks.dev);
        report.epochs.push_back(rec);
    };

    if (hooks.on_start)
        hooks.on_start(result.weights);
    using Clock = std::chrono::steady_clock;
    WeightStore grads, sample_grads;
    for (long iter = 0; iter < max_iter; ++iter) {
        const auto start = Clock::now();
        const int epoch = static_cast<int>(static_cast<std::size_t>(iter) / per_epoch);
        if (epoch != last_epoch) {
            close_epoch(last_epoch);
            last_epoch = epoch;
        }
        double loss = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Sample& s = next_sample();
            WeightStore& target = b == 0 ? grads : sample_grads;
            loss += loss_and_grads(spec, result.weights, s, dropout_rng, &target);
            if (b > 0)
                add_into(grads, sample_grads);
        }
        loss /= cfg.batch_size;
        if (cfg.batch_size > 1)
            scale(grads, 1.0f / static_cast<float>(cfg.batch_size));
        if (!std::isfinite(loss))
            throw ContractError("train: non-finite loss at iteration " + std::to_string(iter + 1));
        const double lr = poly_lr(base_lr, cfg.power, iter, max_iter);
        sgd_step(result.weights, grads, state, lr, cfg.momentum, cfg.weight_decay);
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        report.iterations.push_back({iter + 1, lr, loss, epoch, ms});
        if (hooks.observer && hooks.observer(report.iterations.back(), result.weights)) {
            report.stopped_early = iter + 1 < max_iter;
            break;
        }
    }
    close_epoch(last_epoch);
    return result;
}

TrainResult fine_tune(const NetworkSpec& spec, const std::filesystem::path& source_weights,
                      std::span<const Sample> dataset, TrainConfig cfg, const TrainHooks& hooks)
{
    cfg.fine_tune = true;
    const LoadResult loaded = load_weights(source_weights, spec, false);
    WeightStore init = init_xavier(spec, cfg.seed);
    for (const auto& e : loaded.store.layers)
        *init.find(e.name) = e;
    TrainResult r = train(spec, std::move(init), dataset, cfg, hooks);
    r.report.transplanted = loaded.transplanted;
    if (loaded.transplanted.empty())
        r.report.warnings.push_back("no layer of " + source_weights.string() +
                                    " matched the target network; training from random initialization");
    return r;
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void sgd_step(BasicWeightStore<float>&, const BasicWeightStore<float>&, OptimizerState<float>&, double,
                       double, double);
template void sgd_step(BasicWeightStore<double>&, const BasicWeightStore<double>&, OptimizerState<double>&, double,
                       double, double);
template float loss_and_grads(const NetworkSpec&, const BasicWeightStore<float>&, const Sample&, Rng&,
                              BasicWeightStore<float>*);
template double loss_and_grads(const NetworkSpec&, const BasicWeightStore<double>&, const Sample&, Rng&,
                               BasicWeightStore<double>*);

}  // namespace vfcn
