#pragma once

#include "dban/dataset.hpp"
#include "dban/network.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace dban {

template <typename T>
struct LossResult {
    double loss;
    BasicTensor<T> grad;
};

/// Mean squared error over all n*C*H*W elements and its gradient w.r.t. `sr`.
template <typename T>
LossResult<T> l2_loss(const BasicTensor<T>& sr, const BasicTensor<T>& hr);

struct TrainConfig {
    double lr0 = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 16;
    int patience = 10;
    double lr_factor = 0.5;
    double lr_floor = 1e-7;
    int max_epochs = 100;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
};

template <typename T>
struct AdamState {
    ModelParams<T> m;
    ModelParams<T> v;
    std::int64_t t = 0;

    static AdamState fresh(const ModelParams<T>& params) { return {zeros_like(params), zeros_like(params), 0}; }
};

/// One bias-corrected Adam update of a single array at step `t` (1-based).
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t t, double lr, const TrainConfig& cfg);

/// Increments state.t once and updates every parameter array. Throws
/// TrainingError without touching anything if a gradient is non-finite.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
               const TrainConfig& cfg);

/// Halves the rate after `patience` consecutive epochs with no validation
/// value strictly above the best seen before them; halving restarts the window.
class PlateauSchedule {
public:
    explicit PlateauSchedule(const TrainConfig& cfg, double lr) : cfg_(cfg), lr_(lr) {}

    double observe(double value);
    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    int stale_epochs() const noexcept { return stale_; }

private:
    TrainConfig cfg_;
    double lr_;
    double best_ = -std::numeric_limits<double>::infinity();
    int stale_ = 0;
};

/// Stateless form: `window_start` is the index of the first epoch after the
/// last halving (0 if none).
double lr_schedule(std::span<const double> history, double current_lr, const TrainConfig& cfg,
                   std::size_t window_start = 0);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_psnr = 0.0;
    double lr = 0.0;
};

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    std::function<void(const ModelParams<float>&, const AdamState<float>&, const EpochRecord&)> on_best;
    std::function<void(std::int64_t step, double loss)> on_step;
};

struct TrainResult {
    ModelParams<float> params;
    AdamState<float> state;
    std::vector<EpochRecord> history;
    double lr = 0.0;
};

struct TrainData {
    std::vector<ImageSample> train;
    std::vector<ImageSample> validation;
};

/// Splits off floor(fraction * n) samples from the tail for validation.
TrainData split_validation(std::vector<ImageSample> samples, double fraction);

/// Indices for every full batch of one epoch, in seeded shuffled order.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t samples, int batch_size, std::uint64_t seed,
                                                    int epoch);

/// Stacks the LR and HR tensors of the selected samples.
std::pair<Tensor, Tensor> make_batch(const std::vector<ImageSample>& samples, std::span<const std::size_t> idx);

/// Mean luma PSNR (border-cropped when the image allows) of model output over samples.
double validation_psnr(const ModelParams<float>& params, const ModelConfig& model_cfg,
                       const std::vector<ImageSample>& samples);

/// One forward / loss / backward / Adam step. Returns the pre-update loss.
double train_step(ModelParams<float>& params, AdamState<float>& state, const ModelConfig& model_cfg,
                  const Tensor& lr_batch, const Tensor& hr_batch, double lr, const TrainConfig& cfg);

/// Runs `cfg.max_epochs` epochs. When `data.validation` is empty the
/// training samples double as the validation set. `start` and `first_epoch`
/// continue an earlier run; the rate restarts from `cfg.lr0`.
TrainResult train(ModelParams<float> params, const ModelConfig& model_cfg, const TrainData& data,
                  const TrainConfig& cfg, const TrainHooks& hooks = {},
                  std::optional<AdamState<float>> start = std::nullopt, int first_epoch = 0);

} // namespace dban
