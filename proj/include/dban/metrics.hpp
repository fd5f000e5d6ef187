#pragma once

// Image quality metrics on the 0..255 scale. Evaluation follows the usual SR
// protocol: luma plane only, 4-pixel border removed.

#include "dban/tensor.hpp"

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dban {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();
inline constexpr int kEvalBorder = 4;

/// 10 log10(255^2 / MSE). Identical inputs give +infinity.
double psnr(const TensorD& a, const TensorD& b);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 255.0;
};

/// Mean local SSIM over fully interior window positions of single-plane images.
double ssim(const TensorD& a, const TensorD& b, const SsimOptions& opt = {});

/// Normalized 2-D Gaussian window, row-major window x window.
std::vector<double> gaussian_window(int window, double sigma);

struct PairScore {
    double psnr_db;
    double ssim;
};

/// Y plane, x255, crop kEvalBorder on every side, then psnr and ssim.
PairScore evaluate_pair(const Tensor& sr, const Tensor& hr);

/// Crop `border` pixels from every side.
TensorD crop_border(const TensorD& img, int border);

/// Wall-clock seconds of one call, median of `runs`.
double time_sr(const std::function<void()>& run, int runs = 3);

struct EvalRow {
    std::string id;
    double psnr_db = 0.0;
    double ssim = 0.0;
    std::optional<double> seconds;
};

/// Per-image rows plus arithmetic-mean aggregates. Rows with infinite PSNR are
/// excluded from the PSNR mean and counted separately.
class EvalReport {
public:
    void add(EvalRow row);
    void add_unmatched(std::string name) { unmatched_.push_back(std::move(name)); }

    const std::vector<EvalRow>& rows() const noexcept { return rows_; }
    const std::vector<std::string>& unmatched() const noexcept { return unmatched_; }

    double mean_psnr() const;
    double mean_ssim() const;
    std::optional<double> mean_seconds() const;
    int infinite_psnr_count() const;

    /// id,psnr_db,ssim,seconds header, rows sorted by id, a "mean" row, then
    /// '#' footer lines for excluded and unmatched entries.
    void write_csv(std::ostream& os) const;
    void write_csv(const std::string& path) const;

private:
    std::vector<EvalRow> rows_;
    std::vector<std::string> unmatched_;
};

std::string format_metric(double v);

} // namespace dban
