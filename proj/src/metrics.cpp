#include "dban/metrics.hpp"

#include "dban/error.hpp"
#include "dban/image.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace dban {

namespace {

void require_plane_pair(const TensorD& a, const TensorD& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

// Valid-mode separable filter of a single plane.
std::vector<double> filter_valid(const double* src, int h, int w, const std::vector<double>& k1d) {
    const int k = static_cast<int>(k1d.size());
    const int oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(oh) * w, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int t = 0; t < k; ++t) {
            const double wt = k1d[t];
            const double* row = src + static_cast<std::size_t>(y + t) * w;
            double* dst = tmp.data() + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x)
                dst[x] += wt * row[x];
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y) {
        const double* row = tmp.data() + static_cast<std::size_t>(y) * w;
        double* dst = out.data() + static_cast<std::size_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t)
                acc += k1d[t] * row[x + t];
            dst[x] = acc;
        }
    }
    return out;
}

std::vector<double> gaussian_1d(int window, double sigma) {
    std::vector<double> g(static_cast<std::size_t>(window));
    const double centre = (window - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - centre;
        g[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        total += g[i];
    }
    for (double& v : g)
        v /= total;
    return g;
}

} // namespace

double psnr(const TensorD& a, const TensorD& b) {
    require_plane_pair(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.size());
    if (mse == 0.0)
        return kInfinitePsnr;
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::vector<double> gaussian_window(int window, double sigma) {
    const auto g = gaussian_1d(window, sigma);
    std::vector<double> out(static_cast<std::size_t>(window) * window);
    for (int y = 0; y < window; ++y)
        for (int x = 0; x < window; ++x)
            out[static_cast<std::size_t>(y) * window + x] = g[y] * g[x];
    return out;
}

double ssim(const TensorD& a, const TensorD& b, const SsimOptions& opt) {
    require_plane_pair(a, b, "ssim");
    if (a.n() != 1 || a.c() != 1)
        throw ShapeError("ssim: expected a single plane, got " + a.shape().str());
    if (a.h() < opt.window || a.w() < opt.window)
        throw ShapeError("ssim: image " + a.shape().str() + " is smaller than the " +
                         std::to_string(opt.window) + "x" + std::to_string(opt.window) + " window");
    const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
    const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
    const auto g = gaussian_1d(opt.window, opt.sigma);
    const int h = a.h(), w = a.w();

    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a.data(), h, w, g);
    const auto mu_b = filter_valid(b.data(), h, w, g);
    const auto e_aa = filter_valid(aa.data(), h, w, g);
    const auto e_bb = filter_valid(bb.data(), h, w, g);
    const auto e_ab = filter_valid(ab.data(), h, w, g);

    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double mab = mu_a[i] * mu_b[i];
        const double maa = mu_a[i] * mu_a[i];
        const double mbb = mu_b[i] * mu_b[i];
        const double var_a = e_aa[i] - maa;
        const double var_b = e_bb[i] - mbb;
        const double cov = e_ab[i] - mab;
        // The structure term with C3 = C2/2 folds into the contrast term.
        const double num = (2.0 * mab + c1) * (2.0 * cov + c2);
        const double den = (maa + mbb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

TensorD crop_border(const TensorD& img, int border) {
    const int h = img.h() - 2 * border, w = img.w() - 2 * border;
    if (border < 0 || h < 1 || w < 1)
        throw ShapeError("crop_border: cannot remove " + std::to_string(border) + " pixels from " +
                         img.shape().str());
    TensorD out(Shape{img.n(), img.c(), h, w});
    for (int b = 0; b < img.n(); ++b)
        for (int c = 0; c < img.c(); ++c)
            for (int y = 0; y < h; ++y)
                std::copy_n(&img(b, c, y + border, border), w, &out(b, c, y, 0));
    return out;
}

PairScore evaluate_pair(const Tensor& sr, const Tensor& hr) {
    if (sr.shape() != hr.shape())
        throw ShapeError("evaluate_pair: shape mismatch " + sr.shape().str() + " vs " + hr.shape().str());
    if (sr.n() != 1)
        throw ShapeError("evaluate_pair: expected single images, got " + sr.shape().str());
    if (sr.h() <= 2 * kEvalBorder || sr.w() <= 2 * kEvalBorder)
        throw ShapeError("evaluate_pair: image " + sr.shape().str() + " too small for a " +
                         std::to_string(kEvalBorder) + "-pixel border crop");
    auto prepare = [](const Tensor& img) {
        TensorD y = luma_plane(img.cast<double>());
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] *= 255.0;
        return crop_border(y, kEvalBorder);
    };
    const TensorD a = prepare(sr);
    const TensorD b = prepare(hr);
    return {psnr(a, b), ssim(a, b)};
}

double time_sr(const std::function<void()>& run, int runs) {
    if (runs < 1)
        throw ArgumentError("time_sr: runs must be positive");
    std::vector<double> times;
    for (int i = 0; i < runs; ++i) {
        const auto start = std::chrono::steady_clock::now();
        run();
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(stop - start).count());
    }
    std::nth_element(times.begin(), times.begin() + runs / 2, times.end());
    return times[runs / 2];
}

void EvalReport::add(EvalRow row) {
    rows_.push_back(std::move(row));
}

double EvalReport::mean_psnr() const {
    double sum = 0.0;
    int finite = 0;
    for (const auto& r : rows_)
        if (std::isfinite(r.psnr_db)) {
            sum += r.psnr_db;
            ++finite;
        }
    if (finite == 0)
        return rows_.empty() ? std::nan("") : kInfinitePsnr;
    return sum / finite;
}

double EvalReport::mean_ssim() const {
    if (rows_.empty())
        return std::nan("");
    double sum = 0.0;
    for (const auto& r : rows_)
        sum += r.ssim;
    return sum / static_cast<double>(rows_.size());
}

std::optional<double> EvalReport::mean_seconds() const {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : rows_)
        if (r.seconds) {
            sum += *r.seconds;
            ++count;
        }
    if (count == 0)
        return std::nullopt;
    return sum / count;
}

int EvalReport::infinite_psnr_count() const {
    return static_cast<int>(std::count_if(rows_.begin(), rows_.end(),
                                          [](const EvalRow& r) { return std::isinf(r.psnr_db); }));
}

std::string format_metric(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void EvalReport::write_csv(std::ostream& os) const {
    auto sorted = rows_;
    std::sort(sorted.begin(), sorted.end(), [](const EvalRow& a, const EvalRow& b) { return a.id < b.id; });
    os << "id,psnr_db,ssim,seconds\n";
    for (const auto& r : sorted)
        os << r.id << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << ','
           << (r.seconds ? format_metric(*r.seconds) : "") << '\n';
    const auto secs = mean_seconds();
    os << "mean," << format_metric(mean_psnr()) << ',' << format_metric(mean_ssim()) << ','
       << (secs ? format_metric(*secs) : "") << '\n';
    if (const int inf = infinite_psnr_count(); inf > 0)
        os << "# infinite psnr rows excluded from mean: " << inf << '\n';
    for (const auto& name : unmatched_)
        os << "# unmatched: " << name << '\n';
}

void EvalReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write report '" + path + "'");
    write_csv(out);
    if (!out)
        throw IoError("failed writing report '" + path + "'");
}

} // namespace dban
