#include "dban/training.hpp"

#include "dban/error.hpp"
#include "dban/image.hpp"
#include "dban/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dban {

template <typename T>
LossResult<T> l2_loss(const BasicTensor<T>& sr, const BasicTensor<T>& hr) {
    if (sr.shape() != hr.shape())
        throw ShapeError("l2_loss: shape mismatch " + sr.shape().str() + " vs " + hr.shape().str());
    const double count = static_cast<double>(sr.size());
    LossResult<T> out{0.0, BasicTensor<T>(sr.shape())};
    double sum = 0.0;
    for (std::size_t i = 0; i < sr.size(); ++i) {
        const double d = static_cast<double>(sr[i]) - static_cast<double>(hr[i]);
        sum += d * d;
        out.grad[i] = static_cast<T>(2.0 * d / count);
    }
    out.loss = sum / count;
    return out;
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t t,
                 double lr, const TrainConfig& cfg) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
        throw ShapeError("adam_update: array sizes disagree");
    if (t < 1)
        throw ArgumentError("adam_update: step counter must be >= 1");
    const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double m_hat = mi / correction1;
        const double v_hat = vi / correction2;
        param[i] = static_cast<T>(param[i] - lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
               const TrainConfig& cfg) {
    std::vector<std::span<const T>> g;
    visit_params(grads, [&](const std::string& name, std::span<const T> v, const std::vector<int>&) {
        if (!std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); }))
            throw TrainingError("non-finite gradient in " + name);
        g.push_back(v);
    });
    std::vector<std::span<T>> m, v;
    visit_params(state.m, [&](const std::string&, std::span<T> s, const std::vector<int>&) { m.push_back(s); });
    visit_params(state.v, [&](const std::string&, std::span<T> s, const std::vector<int>&) { v.push_back(s); });
    if (m.size() != g.size() || v.size() != g.size())
        throw ShapeError("adam_step: optimizer state does not match parameters");

    ++state.t;
    std::size_t i = 0;
    visit_params(params, [&](const std::string&, std::span<T> p, const std::vector<int>&) {
        adam_update<T>(p, g[i], m[i], v[i], state.t, lr, cfg);
        ++i;
    });
}

double PlateauSchedule::observe(double value) {
    if (value > best_) {
        best_ = value;
        stale_ = 0;
        return lr_;
    }
    if (++stale_ >= cfg_.patience) {
        lr_ = std::max(lr_ * cfg_.lr_factor, cfg_.lr_floor);
        stale_ = 0;
    }
    return lr_;
}

double lr_schedule(std::span<const double> history, double current_lr, const TrainConfig& cfg,
                   std::size_t window_start) {
    const std::size_t n = history.size();
    const std::size_t patience = static_cast<std::size_t>(std::max(cfg.patience, 1));
    if (window_start > n || n - window_start < patience)
        return current_lr;
    const std::size_t split = n - patience;
    double best_before = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < split; ++i)
        best_before = std::max(best_before, history[i]);
    for (std::size_t i = split; i < n; ++i)
        if (history[i] > best_before)
            return current_lr;
    return std::max(current_lr * cfg.lr_factor, cfg.lr_floor);
}

TrainData split_validation(std::vector<ImageSample> samples, double fraction) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ArgumentError("validation fraction must be in [0, 1)");
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(samples.size())));
    TrainData data;
    data.validation.assign(std::make_move_iterator(samples.end() - static_cast<std::ptrdiff_t>(n_val)),
                           std::make_move_iterator(samples.end()));
    samples.resize(samples.size() - n_val);
    data.train = std::move(samples);
    return data;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t samples, int batch_size, std::uint64_t seed,
                                                    int epoch) {
    if (batch_size < 1)
        throw ArgumentError("batch size must be positive");
    std::vector<std::size_t> order(samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    const std::size_t bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start + bs <= samples; start += bs)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(start + bs));
    return batches;
}

std::pair<Tensor, Tensor> make_batch(const std::vector<ImageSample>& samples, std::span<const std::size_t> idx) {
    std::vector<const Tensor*> lr, hr;
    for (std::size_t i : idx) {
        if (i >= samples.size())
            throw BoundsError("make_batch: sample index out of range");
        lr.push_back(&samples[i].lr);
        hr.push_back(&samples[i].hr);
    }
    return {stack_batch<float>(std::span<const Tensor* const>(lr)), stack_batch<float>(std::span<const Tensor* const>(hr))};
}

double validation_psnr(const ModelParams<float>& params, const ModelConfig& model_cfg,
                       const std::vector<ImageSample>& samples) {
    double sum = 0.0;
    int finite = 0;
    bool any = false;
    for (const auto& s : samples) {
        const Tensor sr = model_forward(s.lr, params, model_cfg);
        auto scaled = [](const Tensor& t) {
            TensorD y = luma_plane(t.cast<double>());
            for (std::size_t i = 0; i < y.size(); ++i)
                y[i] *= 255.0;
            if (y.h() > 2 * kEvalBorder && y.w() > 2 * kEvalBorder)
                return crop_border(y, kEvalBorder);
            return y;
        };
        const double value = psnr(scaled(sr), scaled(s.hr));
        any = true;
        if (std::isfinite(value)) {
            sum += value;
            ++finite;
        }
    }
    if (!any)
        return std::nan("");
    return finite ? sum / finite : kInfinitePsnr;
}

double train_step(ModelParams<float>& params, AdamState<float>& state, const ModelConfig& model_cfg,
                  const Tensor& lr_batch, const Tensor& hr_batch, double lr, const TrainConfig& cfg) {
    const auto cache = model_forward_cached(lr_batch, params, model_cfg);
    const auto loss = l2_loss(cache.output, hr_batch);
    if (!std::isfinite(loss.loss))
        throw TrainingError("non-finite loss");
    const auto grads = model_backward(cache, params, model_cfg, loss.grad);
    adam_step(params, grads.params, state, lr, cfg);
    return loss.loss;
}

TrainResult train(ModelParams<float> params, const ModelConfig& model_cfg, const TrainData& data,
                  const TrainConfig& cfg, const TrainHooks& hooks, std::optional<AdamState<float>> start,
                  int first_epoch) {
    check_channel_plan(params, model_cfg);
    TrainResult result;
    result.state = start ? std::move(*start) : AdamState<float>::fresh(params);
    result.lr = cfg.lr0;
    if (cfg.max_epochs > 0 && data.train.size() < static_cast<std::size_t>(cfg.batch_size))
        throw TrainingError("training set has " + std::to_string(data.train.size()) +
                            " samples, fewer than one batch of " + std::to_string(cfg.batch_size));
    for (const auto& s : data.train)
        if (s.scale != model_cfg.scale)
            throw ConfigError("sample " + s.source_id + " has scale " + std::to_string(s.scale) +
                              ", model expects " + std::to_string(model_cfg.scale));

    const auto& val_set = data.validation.empty() ? data.train : data.validation;
    PlateauSchedule schedule(cfg, cfg.lr0);
    double best = -std::numeric_limits<double>::infinity();

    for (int e = 0; e < cfg.max_epochs; ++e) {
        const int epoch = first_epoch + e;
        const auto batches = epoch_batches(data.train.size(), cfg.batch_size, cfg.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto [lr_batch, hr_batch] = make_batch(data.train, batches[b]);
            double loss;
            try {
                loss = train_step(params, result.state, model_cfg, lr_batch, hr_batch, schedule.lr(), cfg);
            } catch (const TrainingError& err) {
                throw TrainingError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                                    err.what());
            }
            loss_sum += loss;
            if (hooks.on_step)
                hooks.on_step(result.state.t, loss);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
        rec.val_psnr = validation_psnr(params, model_cfg, val_set);
        rec.lr = schedule.lr();
        schedule.observe(rec.val_psnr);
        result.history.push_back(rec);
        if (rec.val_psnr > best) {
            best = rec.val_psnr;
            if (hooks.on_best)
                hooks.on_best(params, result.state, rec);
        }
        if (hooks.on_epoch)
            hooks.on_epoch(rec);
    }
    result.lr = schedule.lr();
    result.params = std::move(params);
    return result;
}

template LossResult<float> l2_loss<float>(const BasicTensor<float>&, const BasicTensor<float>&);
template LossResult<double> l2_loss<double>(const BasicTensor<double>&, const BasicTensor<double>&);
template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::int64_t, double, const TrainConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::int64_t, double, const TrainConfig&);
template void adam_step<float>(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&, double,
                               const TrainConfig&);
template void adam_step<double>(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&, double,
                                const TrainConfig&);

} // namespace dban
