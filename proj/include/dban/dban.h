#ifndef DBAN_DBAN_H
#define DBAN_DBAN_H

/* C interface to the dense blended attention super-resolution library.
 *
 * Every function that can fail returns a dban_status. On failure the message
 * for the calling thread is available from dban_last_error() until the next
 * failing call. Handles are opaque and owned by the caller; free them with the
 * matching *_free function (passing NULL is allowed). Images are float planes
 * in channel -> row -> column order with values nominally in [0, 1]. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define DBAN_API __declspec(dllexport)
#elif defined(__GNUC__)
#  define DBAN_API __attribute__((visibility("default")))
#else
#  define DBAN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dban_status {
    DBAN_OK = 0,
    DBAN_ERR_ARGUMENT = 1,
    DBAN_ERR_SHAPE = 2,
    DBAN_ERR_BOUNDS = 3,
    DBAN_ERR_CONFIG = 4,
    DBAN_ERR_IO = 5,
    DBAN_ERR_VERSION = 6,
    DBAN_ERR_TRAINING = 7,
    DBAN_ERR_INTERNAL = 8
} dban_status;

typedef enum dban_method {
    DBAN_METHOD_BILINEAR = 0,
    DBAN_METHOD_BICUBIC = 1,
    DBAN_METHOD_MODEL = 2
} dban_method;

typedef struct dban_image dban_image;
typedef struct dban_model dban_model;
typedef struct dban_report dban_report;

typedef struct dban_model_config {
    int scale;
    int in_channels;
    int num_units;
    int layers_per_unit;
    int growth;
    int feat_channels;
    int bottleneck_channels;
    int attention_ratio;
} dban_model_config;

typedef struct dban_train_options {
    double learning_rate;
    int batch_size;
    int epochs;
    uint64_t seed;
    int patch_size;
    int patch_stride;
    int augment;          /* nonzero: all 8 flip/rotation variants per patch */
    double val_fraction;  /* tail fraction of patches held out for validation */
    int patience;
} dban_train_options;

/* Called after every epoch. */
typedef void (*dban_epoch_fn)(int epoch, double train_loss, double val_psnr, double learning_rate,
                             void* user);

DBAN_API const char* dban_version(void);
DBAN_API const char* dban_last_error(void);
DBAN_API const char* dban_status_name(dban_status status);

/* Images */
DBAN_API dban_status dban_image_load(const char* path, int channels, dban_image** out);
DBAN_API dban_status dban_image_save(const dban_image* img, const char* path);
/* `data` holds channels*height*width floats; NULL gives a zero image. */
DBAN_API dban_status dban_image_create(int channels, int height, int width, const float* data,
                                       dban_image** out);
DBAN_API void dban_image_free(dban_image* img);
DBAN_API dban_status dban_image_dims(const dban_image* img, int* channels, int* height, int* width);
DBAN_API const float* dban_image_data(const dban_image* img);
DBAN_API dban_status dban_image_modcrop(const dban_image* img, int scale, dban_image** out);

/* Resampling by num/den; the output extent is round(num/den * extent). */
DBAN_API dban_status dban_resize(const dban_image* img, int num, int den, dban_method method,
                                 dban_image** out);
/* Bicubic downscale by 1/scale after cropping to a multiple of scale. */
DBAN_API dban_status dban_degrade(const dban_image* hr, int scale, dban_image** out);

/* Models */
DBAN_API void dban_model_config_default(dban_model_config* cfg, int toy);
DBAN_API dban_status dban_count_params(const dban_model_config* cfg, int64_t* count);
DBAN_API dban_status dban_model_create(const dban_model_config* cfg, uint64_t seed, dban_model** out);
DBAN_API dban_status dban_model_load(const char* path, dban_model** out);
DBAN_API dban_status dban_model_save(const dban_model* model, const char* path);
DBAN_API void dban_model_free(dban_model* model);
DBAN_API dban_status dban_model_get_config(const dban_model* model, dban_model_config* cfg);
DBAN_API int64_t dban_model_param_count(const dban_model* model);
/* Unclamped network output at scale x the input size. */
DBAN_API dban_status dban_super_resolve(const dban_model* model, const dban_image* lr, dban_image** out);

/* Upscale lr by `scale` with the given method. `model` is only used for
 * DBAN_METHOD_MODEL. When `seconds` is non-null it receives the median
 * wall-clock time of three runs. */
DBAN_API dban_status dban_upscale(const dban_image* lr, dban_method method, int scale,
                                  const dban_model* model, dban_image** out, double* seconds);

/* Training */
DBAN_API void dban_train_options_default(dban_train_options* opt);
/* Trains `model` in place on patches cut from the HR images. When
 * `best_checkpoint` is non-null the best-validation model and optimizer state
 * are written there whenever validation PSNR improves. */
DBAN_API dban_status dban_train(dban_model* model, const char* const* hr_paths, size_t path_count,
                                const dban_train_options* opt, const char* best_checkpoint,
                                dban_epoch_fn on_epoch, void* user);

/* Metrics: luma plane, 4-pixel border removed. Identical images give +inf PSNR. */
DBAN_API dban_status dban_evaluate_pair(const dban_image* sr, const dban_image* hr, double* psnr_db,
                                        double* ssim);

/* Reports. Pass NAN for `seconds` when no timing applies. */
DBAN_API dban_report* dban_report_create(void);
DBAN_API void dban_report_free(dban_report* report);
DBAN_API dban_status dban_report_add(dban_report* report, const char* id, double psnr_db, double ssim,
                                     double seconds);
DBAN_API dban_status dban_report_add_unmatched(dban_report* report, const char* name);
DBAN_API dban_status dban_report_means(const dban_report* report, double* psnr_db, double* ssim,
                                       double* seconds);
DBAN_API dban_status dban_report_write(const dban_report* report, const char* path);

#ifdef __cplusplus
}
#endif

#endif
