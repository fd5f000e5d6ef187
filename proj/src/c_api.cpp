#include "dban/dban.h"

#include "dban/checkpoint.hpp"
#include "dban/dataset.hpp"
#include "dban/error.hpp"
#include "dban/image.hpp"
#include "dban/metrics.hpp"
#include "dban/network.hpp"
#include "dban/resample.hpp"
#include "dban/training.hpp"

#include <cmath>
#include <exception>
#include <new>
#include <optional>
#include <string>

struct dban_image {
    dban::Tensor t;
};

struct dban_model {
    dban::ModelConfig config;
    dban::ModelParams<float> params;
    std::optional<dban::AdamState<float>> adam;
    double learning_rate = 0.0;
};

struct dban_report {
    dban::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

dban_status fail(dban_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

dban_status status_of(dban::ErrorKind kind) {
    switch (kind) {
    case dban::ErrorKind::Shape: return DBAN_ERR_SHAPE;
    case dban::ErrorKind::Bounds: return DBAN_ERR_BOUNDS;
    case dban::ErrorKind::Config: return DBAN_ERR_CONFIG;
    case dban::ErrorKind::Argument: return DBAN_ERR_ARGUMENT;
    case dban::ErrorKind::Io: return DBAN_ERR_IO;
    case dban::ErrorKind::Version: return DBAN_ERR_VERSION;
    case dban::ErrorKind::Training: return DBAN_ERR_TRAINING;
    }
    return DBAN_ERR_INTERNAL;
}

template <typename Fn>
dban_status guarded(Fn&& fn) {
    try {
        fn();
        return DBAN_OK;
    } catch (const dban::Error& e) {
        return fail(status_of(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(DBAN_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(DBAN_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(DBAN_ERR_INTERNAL, "unknown error");
    }
}

void require(bool ok, const char* what) {
    if (!ok)
        throw dban::ArgumentError(what);
}

dban::ModelConfig from_c(const dban_model_config& c) {
    dban::ModelConfig cfg;
    cfg.scale = c.scale;
    cfg.in_channels = c.in_channels;
    cfg.num_units = c.num_units;
    cfg.layers_per_unit = c.layers_per_unit;
    cfg.growth = c.growth;
    cfg.feat_channels = c.feat_channels;
    cfg.bottleneck_channels = c.bottleneck_channels;
    cfg.attention_ratio = c.attention_ratio;
    return cfg;
}

dban_model_config to_c(const dban::ModelConfig& cfg) {
    return {cfg.scale, cfg.in_channels, cfg.num_units, cfg.layers_per_unit,
            cfg.growth, cfg.feat_channels, cfg.bottleneck_channels, cfg.attention_ratio};
}

dban::Checkpoint to_checkpoint(const dban::ModelConfig& cfg, const dban::ModelParams<float>& params,
                               const std::optional<dban::AdamState<float>>& adam, double lr) {
    dban::Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = params;
    ckpt.adam = adam;
    ckpt.step = adam ? adam->t : 0;
    ckpt.learning_rate = lr;
    return ckpt;
}

dban::Tensor upscale_once(const dban::Tensor& lr, dban_method method, int scale, const dban_model* model) {
    switch (method) {
    case DBAN_METHOD_BILINEAR: return dban::bilinear_resize(lr, static_cast<double>(scale));
    case DBAN_METHOD_BICUBIC: return dban::bicubic_resize(lr, static_cast<double>(scale));
    case DBAN_METHOD_MODEL:
        require(model != nullptr, "model method needs a model");
        if (model->config.scale != scale)
            throw dban::ConfigError("model was built for scale " + std::to_string(model->config.scale) +
                                    ", requested scale " + std::to_string(scale));
        return dban::model_forward(lr, model->params, model->config);
    }
    throw dban::ArgumentError("unknown upscale method");
}

} // namespace

extern "C" {

const char* dban_version(void) {
    return "0.1.0";
}

const char* dban_last_error(void) {
    return g_last_error.c_str();
}

const char* dban_status_name(dban_status status) {
    switch (status) {
    case DBAN_OK: return "ok";
    case DBAN_ERR_ARGUMENT: return "argument error";
    case DBAN_ERR_SHAPE: return "shape error";
    case DBAN_ERR_BOUNDS: return "bounds error";
    case DBAN_ERR_CONFIG: return "config error";
    case DBAN_ERR_IO: return "i/o error";
    case DBAN_ERR_VERSION: return "version error";
    case DBAN_ERR_TRAINING: return "training error";
    case DBAN_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

dban_status dban_image_load(const char* path, int channels, dban_image** out) {
    return guarded([&] {
        require(path && out, "dban_image_load: null argument");
        require(channels == 1 || channels == 3, "dban_image_load: channels must be 1 or 3");
        *out = new dban_image{dban::load_image(path, channels)};
    });
}

dban_status dban_image_save(const dban_image* img, const char* path) {
    return guarded([&] {
        require(img && path, "dban_image_save: null argument");
        dban::save_image(img->t, path);
    });
}

dban_status dban_image_create(int channels, int height, int width, const float* data, dban_image** out) {
    return guarded([&] {
        require(out != nullptr, "dban_image_create: null output");
        require(channels >= 1 && height >= 1 && width >= 1, "dban_image_create: dimensions must be positive");
        dban::Tensor t(dban::Shape{1, channels, height, width});
        if (data)
            std::copy(data, data + t.size(), t.data());
        *out = new dban_image{std::move(t)};
    });
}

void dban_image_free(dban_image* img) {
    delete img;
}

dban_status dban_image_dims(const dban_image* img, int* channels, int* height, int* width) {
    return guarded([&] {
        require(img != nullptr, "dban_image_dims: null image");
        if (channels)
            *channels = img->t.c();
        if (height)
            *height = img->t.h();
        if (width)
            *width = img->t.w();
    });
}

const float* dban_image_data(const dban_image* img) {
    return img ? img->t.data() : nullptr;
}

dban_status dban_image_modcrop(const dban_image* img, int scale, dban_image** out) {
    return guarded([&] {
        require(img && out, "dban_image_modcrop: null argument");
        *out = new dban_image{dban::modcrop(img->t, scale)};
    });
}

dban_status dban_resize(const dban_image* img, int num, int den, dban_method method, dban_image** out) {
    return guarded([&] {
        require(img && out, "dban_resize: null argument");
        require(num > 0 && den > 0, "dban_resize: factor must be positive");
        require(method != DBAN_METHOD_MODEL, "dban_resize: use dban_upscale for the model");
        const double factor = static_cast<double>(num) / den;
        const auto kernel =
            method == DBAN_METHOD_BILINEAR ? dban::ResampleKernel::Bilinear : dban::ResampleKernel::Bicubic;
        *out = new dban_image{dban::resize(img->t, factor, kernel)};
    });
}

dban_status dban_degrade(const dban_image* hr, int scale, dban_image** out) {
    return guarded([&] {
        require(hr && out, "dban_degrade: null argument");
        require(scale >= 2 && scale <= 4, "dban_degrade: scale must be 2, 3 or 4");
        *out = new dban_image{dban::bicubic_resize(dban::modcrop(hr->t, scale), 1.0 / scale)};
    });
}

void dban_model_config_default(dban_model_config* cfg, int toy) {
    if (cfg)
        *cfg = to_c(toy ? dban::ModelConfig::toy() : dban::ModelConfig{});
}

dban_status dban_count_params(const dban_model_config* cfg, int64_t* count) {
    return guarded([&] {
        require(cfg && count, "dban_count_params: null argument");
        *count = dban::count_params(from_c(*cfg));
    });
}

dban_status dban_model_create(const dban_model_config* cfg, uint64_t seed, dban_model** out) {
    return guarded([&] {
        require(cfg && out, "dban_model_create: null argument");
        auto* m = new dban_model;
        m->config = from_c(*cfg);
        try {
            m->params = dban::build_model<float>(m->config, seed);
        } catch (...) {
            delete m;
            throw;
        }
        *out = m;
    });
}

dban_status dban_model_load(const char* path, dban_model** out) {
    return guarded([&] {
        require(path && out, "dban_model_load: null argument");
        dban::Checkpoint ckpt = dban::load_checkpoint(path);
        *out = new dban_model{ckpt.config, std::move(ckpt.params), std::move(ckpt.adam), ckpt.learning_rate};
    });
}

dban_status dban_model_save(const dban_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "dban_model_save: null argument");
        dban::save_checkpoint(path, to_checkpoint(model->config, model->params, model->adam, model->learning_rate));
    });
}

void dban_model_free(dban_model* model) {
    delete model;
}

dban_status dban_model_get_config(const dban_model* model, dban_model_config* cfg) {
    return guarded([&] {
        require(model && cfg, "dban_model_get_config: null argument");
        *cfg = to_c(model->config);
    });
}

int64_t dban_model_param_count(const dban_model* model) {
    return model ? static_cast<int64_t>(dban::param_count(model->params)) : -1;
}

dban_status dban_super_resolve(const dban_model* model, const dban_image* lr, dban_image** out) {
    return guarded([&] {
        require(model && lr && out, "dban_super_resolve: null argument");
        *out = new dban_image{dban::model_forward(lr->t, model->params, model->config)};
    });
}

dban_status dban_upscale(const dban_image* lr, dban_method method, int scale, const dban_model* model,
                         dban_image** out, double* seconds) {
    return guarded([&] {
        require(lr && out, "dban_upscale: null argument");
        require(scale >= 2 && scale <= 4, "dban_upscale: scale must be 2, 3 or 4");
        dban::Tensor result;
        if (seconds)
            *seconds = dban::time_sr([&] { result = upscale_once(lr->t, method, scale, model); });
        else
            result = upscale_once(lr->t, method, scale, model);
        *out = new dban_image{std::move(result)};
    });
}

void dban_train_options_default(dban_train_options* opt) {
    if (!opt)
        return;
    const dban::TrainConfig tc;
    const dban::DatasetSpec ds;
    opt->learning_rate = tc.lr0;
    opt->batch_size = tc.batch_size;
    opt->epochs = tc.max_epochs;
    opt->seed = tc.seed;
    opt->patch_size = ds.patch_size;
    opt->patch_stride = ds.patch_stride;
    opt->augment = ds.augment ? 1 : 0;
    opt->val_fraction = tc.val_fraction;
    opt->patience = tc.patience;
}

dban_status dban_train(dban_model* model, const char* const* hr_paths, size_t path_count,
                       const dban_train_options* opt, const char* best_checkpoint, dban_epoch_fn on_epoch,
                       void* user) {
    return guarded([&] {
        require(model && opt, "dban_train: null argument");
        require(path_count == 0 || hr_paths != nullptr, "dban_train: null path list");
        require(opt->epochs >= 0, "dban_train: epochs must be non-negative");
        require(opt->patch_size > 0 && opt->patch_stride > 0, "dban_train: patch size and stride must be positive");
        require(opt->patch_size % model->config.scale == 0, "dban_train: patch size must be divisible by the scale");

        dban::DatasetSpec spec;
        for (size_t i = 0; i < path_count; ++i) {
            require(hr_paths[i] != nullptr, "dban_train: null path");
            spec.image_paths.emplace_back(hr_paths[i]);
        }
        spec.patch_size = opt->patch_size;
        spec.patch_stride = opt->patch_stride;
        spec.scale = model->config.scale;
        spec.augment = opt->augment != 0;
        spec.seed = opt->seed;
        spec.channels = model->config.in_channels;
        dban::PairSet pairs = dban::make_pairs(spec);
        if (pairs.samples.empty())
            throw dban::ArgumentError("no training patches: every image is smaller than the patch size");

        dban::TrainConfig tc;
        tc.lr0 = opt->learning_rate;
        tc.batch_size = opt->batch_size;
        tc.max_epochs = opt->epochs;
        tc.seed = opt->seed;
        tc.val_fraction = opt->val_fraction;
        tc.patience = opt->patience;
        const dban::TrainData data = dban::split_validation(std::move(pairs.samples), tc.val_fraction);

        dban::TrainHooks hooks;
        if (on_epoch)
            hooks.on_epoch = [&](const dban::EpochRecord& r) { on_epoch(r.epoch, r.train_loss, r.val_psnr, r.lr, user); };
        if (best_checkpoint) {
            const std::string path = best_checkpoint;
            hooks.on_best = [&, path](const dban::ModelParams<float>& p, const dban::AdamState<float>& s,
                                      const dban::EpochRecord& r) {
                dban::save_checkpoint(path, to_checkpoint(model->config, p, s, r.lr));
            };
        }
        dban::TrainResult result = dban::train(model->params, model->config, data, tc, hooks);
        model->params = std::move(result.params);
        model->adam = std::move(result.state);
        model->learning_rate = result.lr;
    });
}

dban_status dban_evaluate_pair(const dban_image* sr, const dban_image* hr, double* psnr_db, double* ssim) {
    return guarded([&] {
        require(sr && hr, "dban_evaluate_pair: null image");
        const dban::PairScore s = dban::evaluate_pair(sr->t, hr->t);
        if (psnr_db)
            *psnr_db = s.psnr_db;
        if (ssim)
            *ssim = s.ssim;
    });
}

dban_report* dban_report_create(void) {
    return new (std::nothrow) dban_report;
}

void dban_report_free(dban_report* report) {
    delete report;
}

dban_status dban_report_add(dban_report* report, const char* id, double psnr_db, double ssim, double seconds) {
    return guarded([&] {
        require(report && id, "dban_report_add: null argument");
        dban::EvalRow row{id, psnr_db, ssim, std::nullopt};
        if (!std::isnan(seconds))
            row.seconds = seconds;
        report->report.add(std::move(row));
    });
}

dban_status dban_report_add_unmatched(dban_report* report, const char* name) {
    return guarded([&] {
        require(report && name, "dban_report_add_unmatched: null argument");
        report->report.add_unmatched(name);
    });
}

dban_status dban_report_means(const dban_report* report, double* psnr_db, double* ssim, double* seconds) {
    return guarded([&] {
        require(report != nullptr, "dban_report_means: null report");
        if (psnr_db)
            *psnr_db = report->report.mean_psnr();
        if (ssim)
            *ssim = report->report.mean_ssim();
        if (seconds)
            *seconds = report->report.mean_seconds().value_or(std::nan(""));
    });
}

dban_status dban_report_write(const dban_report* report, const char* path) {
    return guarded([&] {
        require(report && path, "dban_report_write: null argument");
        report->report.write_csv(std::string(path));
    });
}

} // extern "C"
