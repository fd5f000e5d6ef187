#include "dban/dban.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ApiError : std::runtime_error {
    ApiError(dban_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
    dban_status status;
};

void check(dban_status s, const std::string& context) {
    if (s != DBAN_OK)
        throw ApiError(s, context + ": " + dban_last_error());
}

struct ImageDeleter {
    void operator()(dban_image* p) const { dban_image_free(p); }
};
struct ModelDeleter {
    void operator()(dban_model* p) const { dban_model_free(p); }
};
struct ReportDeleter {
    void operator()(dban_report* p) const { dban_report_free(p); }
};
using ImagePtr = std::unique_ptr<dban_image, ImageDeleter>;
using ModelPtr = std::unique_ptr<dban_model, ModelDeleter>;
using ReportPtr = std::unique_ptr<dban_report, ReportDeleter>;

ImagePtr load(const fs::path& p, int channels) {
    dban_image* img = nullptr;
    check(dban_image_load(p.string().c_str(), channels, &img), "loading " + p.string());
    return ImagePtr(img);
}

void save(const dban_image* img, const fs::path& p) {
    check(dban_image_save(img, p.string().c_str()), "writing " + p.string());
}

ModelPtr load_model(const std::string& path) {
    dban_model* m = nullptr;
    check(dban_model_load(path.c_str(), &m), "loading checkpoint");
    return ModelPtr(m);
}

bool is_png(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

// Sorted PNG files of a directory, or the single file itself.
std::vector<fs::path> list_pngs(const std::string& where) {
    const fs::path p(where);
    if (fs::is_regular_file(p))
        return {p};
    if (!fs::is_directory(p))
        throw UsageError("input '" + where + "' is not a file or directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && is_png(e.path()))
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw UsageError("cannot create directory '" + dir + "': " + ec.message());
}

std::string fmt(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct ModelFlags {
    bool toy = false;
    int units = 0, layers = 0, growth = 0, features = 0, bottleneck = 0, ratio = 0, channels = 0;

    void attach(CLI::App* app) {
        app->add_flag("--toy", toy, "Tiny model preset for tests");
        app->add_option("--units", units, "Basic units");
        app->add_option("--layers", layers, "Convolutions per unit");
        app->add_option("--growth", growth, "Channels added per in-unit convolution");
        app->add_option("--features", features, "Feature extractor channels");
        app->add_option("--bottleneck", bottleneck, "Bottleneck channels");
        app->add_option("--ratio", ratio, "Attention reduction ratio");
        app->add_option("--channels", channels, "Image channels (1 or 3)");
    }

    dban_model_config resolve(int scale) const {
        dban_model_config cfg;
        dban_model_config_default(&cfg, toy ? 1 : 0);
        cfg.scale = scale;
        auto set = [](int& field, int v) {
            if (v > 0)
                field = v;
        };
        set(cfg.num_units, units);
        set(cfg.layers_per_unit, layers);
        set(cfg.growth, growth);
        set(cfg.feat_channels, features);
        set(cfg.bottleneck_channels, bottleneck);
        set(cfg.attention_ratio, ratio);
        set(cfg.in_channels, channels);
        return cfg;
    }
};

std::vector<std::pair<std::string, std::string>> describe(const dban_model_config& c) {
    return {{"scale", std::to_string(c.scale)},
            {"in_channels", std::to_string(c.in_channels)},
            {"num_units", std::to_string(c.num_units)},
            {"layers_per_unit", std::to_string(c.layers_per_unit)},
            {"growth", std::to_string(c.growth)},
            {"feat_channels", std::to_string(c.feat_channels)},
            {"bottleneck_channels", std::to_string(c.bottleneck_channels)},
            {"attention_ratio", std::to_string(c.attention_ratio)}};
}

int cmd_degrade(const std::string& input, const std::string& output, int scale) {
    const auto files = list_pngs(input);
    ensure_dir(output);
    for (const auto& f : files) {
        ImagePtr hr = load(f, 3);
        dban_image* lr = nullptr;
        check(dban_degrade(hr.get(), scale, &lr), "degrading " + f.string());
        ImagePtr hold(lr);
        save(lr, fs::path(output) / f.filename());
    }
    std::cout << "degraded " << files.size() << " image(s) by x" << scale << " into " << output << '\n';
    return kExitOk;
}

struct TrainArgs {
    std::string input, output, log;
    int scale = 2;
    std::uint64_t seed = 0;
    int epochs = 0, batch_size = 0, patch_size = 0, patch_stride = 0, patience = 0;
    double lr = 0.0, val_fraction = -1.0;
    bool no_augment = false;
    ModelFlags model;
};

void on_epoch(int epoch, double loss, double val_psnr, double lr, void* user) {
    auto& log = *static_cast<std::ofstream*>(user);
    std::ostringstream line;
    line << "epoch " << epoch << " loss " << fmt(loss) << " val_psnr " << fmt(val_psnr) << " lr " << fmt(lr);
    log << line.str() << '\n';
    log.flush();
    std::cout << line.str() << '\n';
}

int cmd_train(const TrainArgs& a) {
    const auto files = list_pngs(a.input);
    if (files.empty())
        throw UsageError("no PNG images found in '" + a.input + "'");

    const dban_model_config cfg = a.model.resolve(a.scale);
    dban_train_options opt;
    dban_train_options_default(&opt);
    opt.seed = a.seed;
    if (a.epochs > 0)
        opt.epochs = a.epochs;
    if (a.batch_size > 0)
        opt.batch_size = a.batch_size;
    if (a.patch_size > 0)
        opt.patch_size = a.patch_size;
    opt.patch_stride = a.patch_stride > 0 ? a.patch_stride : opt.patch_size;
    if (a.patience > 0)
        opt.patience = a.patience;
    if (a.lr > 0.0)
        opt.learning_rate = a.lr;
    if (a.val_fraction >= 0.0)
        opt.val_fraction = a.val_fraction;
    opt.augment = a.no_augment ? 0 : 1;

    auto settings = describe(cfg);
    settings.insert(settings.end(), {{"seed", std::to_string(opt.seed)},
                                     {"epochs", std::to_string(opt.epochs)},
                                     {"batch_size", std::to_string(opt.batch_size)},
                                     {"lr", fmt(opt.learning_rate)},
                                     {"patch_size", std::to_string(opt.patch_size)},
                                     {"patch_stride", std::to_string(opt.patch_stride)},
                                     {"augment", std::to_string(opt.augment)},
                                     {"val_fraction", fmt(opt.val_fraction)},
                                     {"patience", std::to_string(opt.patience)},
                                     {"images", std::to_string(files.size())}});

    const std::string log_path = a.log.empty() ? a.output + ".log" : a.log;
    std::ofstream log(log_path, std::ios::trunc);
    if (!log)
        throw UsageError("cannot write log '" + log_path + "'");
    for (const auto& [k, v] : settings) {
        log << "# " << k << " = " << v << '\n';
        std::cout << "# " << k << " = " << v << '\n';
    }

    dban_model* raw = nullptr;
    check(dban_model_create(&cfg, opt.seed, &raw), "building model");
    ModelPtr model(raw);
    std::vector<std::string> paths;
    for (const auto& f : files)
        paths.push_back(f.string());
    std::vector<const char*> cpaths;
    for (const auto& p : paths)
        cpaths.push_back(p.c_str());

    std::error_code ec;
    fs::remove(a.output, ec);
    check(dban_train(model.get(), cpaths.data(), cpaths.size(), &opt, a.output.c_str(), on_epoch, &log), "training");
    if (!fs::exists(a.output))
        check(dban_model_save(model.get(), a.output.c_str()), "saving checkpoint");
    std::cout << "checkpoint " << a.output << "\nlog " << log_path << '\n';
    return kExitOk;
}

int cmd_sr(const std::string& input, const std::string& output, const std::string& checkpoint, int scale) {
    ModelPtr model = load_model(checkpoint);
    dban_model_config cfg;
    check(dban_model_get_config(model.get(), &cfg), "reading checkpoint config");
    if (scale > 0 && scale != cfg.scale)
        throw UsageError("checkpoint is for scale " + std::to_string(cfg.scale) + " but --scale " +
                         std::to_string(scale) + " was given");

    const bool single = fs::is_regular_file(input);
    const auto files = list_pngs(input);
    if (!single)
        ensure_dir(output);
    for (const auto& f : files) {
        ImagePtr lr = load(f, cfg.in_channels);
        dban_image* sr = nullptr;
        check(dban_super_resolve(model.get(), lr.get(), &sr), "super-resolving " + f.string());
        ImagePtr hold(sr);
        const fs::path dest = single ? fs::path(output) : fs::path(output) / f.filename();
        save(sr, dest);
        int c = 0, h = 0, w = 0;
        dban_image_dims(sr, &c, &h, &w);
        std::cout << f.filename().string() << " -> " << dest.string() << " (" << w << "x" << h << ")\n";
    }
    return kExitOk;
}

int cmd_eval(const std::string& sr_dir, const std::string& hr_dir, const std::string& output) {
    const auto sr_files = list_pngs(sr_dir);
    const auto hr_files = list_pngs(hr_dir);
    std::map<std::string, fs::path> hr_by_stem;
    for (const auto& f : hr_files)
        hr_by_stem[f.stem().string()] = f;

    ReportPtr report(dban_report_create());
    if (!report)
        throw ApiError(DBAN_ERR_INTERNAL, "out of memory");
    std::map<std::string, bool> used;
    int unmatched = 0;
    for (const auto& f : sr_files) {
        const std::string stem = f.stem().string();
        const auto it = hr_by_stem.find(stem);
        if (it == hr_by_stem.end()) {
            check(dban_report_add_unmatched(report.get(), f.filename().string().c_str()), "report");
            ++unmatched;
            continue;
        }
        used[stem] = true;
        ImagePtr sr = load(f, 3);
        ImagePtr hr = load(it->second, 3);
        double p = 0.0, s = 0.0;
        check(dban_evaluate_pair(sr.get(), hr.get(), &p, &s), "evaluating " + stem);
        check(dban_report_add(report.get(), stem.c_str(), p, s, std::nan("")), "report");
    }
    for (const auto& [stem, path] : hr_by_stem)
        if (!used.count(stem)) {
            check(dban_report_add_unmatched(report.get(), path.filename().string().c_str()), "report");
            ++unmatched;
        }
    check(dban_report_write(report.get(), output.c_str()), "writing report");
    double mp = 0.0, ms = 0.0;
    dban_report_means(report.get(), &mp, &ms, nullptr);
    std::cout << "mean psnr " << fmt(mp) << " dB, mean ssim " << fmt(ms) << ", report " << output << '\n';
    if (unmatched > 0)
        std::cerr << "warning: " << unmatched << " file(s) without a partner, listed in the report footer\n";
    return kExitOk;
}

int cmd_compare(const std::string& input, int scale, const std::string& checkpoint, const std::string& output,
                const std::string& dump) {
    const auto files = list_pngs(input);
    ModelPtr model;
    if (!checkpoint.empty()) {
        model = load_model(checkpoint);
        dban_model_config cfg;
        check(dban_model_get_config(model.get(), &cfg), "reading checkpoint config");
        if (cfg.scale != scale)
            throw UsageError("checkpoint is for scale " + std::to_string(cfg.scale) + " but --scale " +
                             std::to_string(scale) + " was given");
    }
    if (!dump.empty())
        ensure_dir(dump);

    struct Method {
        const char* name;
        dban_method id;
        ReportPtr report;
    };
    std::vector<Method> methods;
    methods.push_back({"bilinear", DBAN_METHOD_BILINEAR, ReportPtr(dban_report_create())});
    methods.push_back({"bicubic", DBAN_METHOD_BICUBIC, ReportPtr(dban_report_create())});
    if (model)
        methods.push_back({"model", DBAN_METHOD_MODEL, ReportPtr(dban_report_create())});

    for (const auto& f : files) {
        ImagePtr raw = load(f, 3);
        dban_image* cropped = nullptr;
        check(dban_image_modcrop(raw.get(), scale, &cropped), "cropping " + f.string());
        ImagePtr hr(cropped);
        dban_image* degraded = nullptr;
        check(dban_degrade(hr.get(), scale, &degraded), "degrading " + f.string());
        ImagePtr lr(degraded);
        const std::string stem = f.stem().string();
        for (auto& m : methods) {
            dban_image* up = nullptr;
            double seconds = 0.0;
            check(dban_upscale(lr.get(), m.id, scale, model.get(), &up, &seconds), std::string(m.name) + " on " + stem);
            ImagePtr sr(up);
            double p = 0.0, s = 0.0;
            check(dban_evaluate_pair(sr.get(), hr.get(), &p, &s), "evaluating " + stem);
            check(dban_report_add(m.report.get(), stem.c_str(), p, s, seconds), "report");
            if (!dump.empty())
                save(sr.get(), fs::path(dump) / (stem + "_" + m.name + ".png"));
        }
    }

    std::ostringstream table;
    table << "method,psnr_db,ssim,seconds\n";
    for (const auto& m : methods) {
        double p = 0.0, s = 0.0, t = 0.0;
        check(dban_report_means(m.report.get(), &p, &s, &t), "report");
        table << m.name << ',' << fmt(p) << ',' << fmt(s) << ',' << fmt(t) << '\n';
        if (!output.empty()) {
            const fs::path detail = fs::path(output).replace_extension(std::string(".") + m.name + ".csv");
            check(dban_report_write(m.report.get(), detail.string().c_str()), "writing report");
        }
    }
    std::cout << "images " << files.size() << ", scale x" << scale << '\n' << table.str();
    if (!output.empty()) {
        std::ofstream out(output, std::ios::trunc);
        if (!out)
            throw UsageError("cannot write report '" + output + "'");
        out << table.str();
    }
    return kExitOk;
}

int exit_code_for(dban_status s) {
    return s == DBAN_ERR_INTERNAL || s == DBAN_ERR_TRAINING ? kExitInternal : kExitUsage;
}

} // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Training allocates many large short-lived buffers; keep them on the heap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Dense blended attention super-resolution"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_config("--config", "", "key=value configuration file; flags override it");
    app.get_config_formatter_base()->arrayDelimiter(',');

    int scale = 2;
    std::string input, output, checkpoint, reference, dump;
    auto* degrade = app.add_subcommand("degrade", "Bicubic-downscale every PNG in a directory");
    degrade->add_option("--input", input, "HR image directory")->required();
    degrade->add_option("--output", output, "Output directory")->required();
    degrade->add_option("--scale", scale, "Scale factor")->check(CLI::IsMember({2, 3, 4}));

    TrainArgs targs;
    auto* train = app.add_subcommand("train", "Train a model on HR images");
    train->add_option("--input", targs.input, "HR image directory")->required();
    train->add_option("--output,--checkpoint", targs.output, "Best-checkpoint path")->required();
    train->add_option("--log", targs.log, "Per-epoch metrics log (default: <checkpoint>.log)");
    train->add_option("--scale", targs.scale, "Scale factor")->check(CLI::IsMember({2, 3, 4}));
    train->add_option("--seed", targs.seed, "Random seed");
    train->add_option("--epochs", targs.epochs, "Epochs")->check(CLI::PositiveNumber);
    train->add_option("--batch-size", targs.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    train->add_option("--lr", targs.lr, "Initial learning rate")->check(CLI::PositiveNumber);
    train->add_option("--patch-size", targs.patch_size, "HR patch size")->check(CLI::PositiveNumber);
    train->add_option("--patch-stride", targs.patch_stride, "Patch grid stride")->check(CLI::PositiveNumber);
    train->add_option("--patience", targs.patience, "Epochs without improvement before halving")
        ->check(CLI::PositiveNumber);
    train->add_option("--val-fraction", targs.val_fraction, "Held-out patch fraction")->check(CLI::Range(0.0, 0.99));
    train->add_flag("--no-augment", targs.no_augment, "Disable flip/rotation augmentation");
    targs.model.attach(train);

    int sr_scale = 0;
    auto* sr = app.add_subcommand("sr", "Super-resolve an image or a directory");
    sr->add_option("--input", input, "LR image or directory")->required();
    sr->add_option("--output", output, "Output image or directory")->required();
    sr->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    sr->add_option("--scale", sr_scale, "Expected scale; must match the checkpoint")->check(CLI::IsMember({2, 3, 4}));

    auto* eval = app.add_subcommand("eval", "Score SR images against references");
    eval->add_option("--input", input, "SR image directory")->required();
    eval->add_option("--reference", reference, "HR image directory")->required();
    eval->add_option("--output", output, "Report CSV")->required();

    auto* compare = app.add_subcommand("compare", "Degrade HR images and score bilinear, bicubic and the model");
    compare->add_option("--input", input, "HR image directory")->required();
    compare->add_option("--scale", scale, "Scale factor")->check(CLI::IsMember({2, 3, 4}));
    compare->add_option("--checkpoint", checkpoint, "Optional model checkpoint");
    compare->add_option("--output", output, "Summary CSV");
    compare->add_option("--dump", dump, "Directory for reconstructed images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*degrade)
            return cmd_degrade(input, output, scale);
        if (*train)
            return cmd_train(targs);
        if (*sr)
            return cmd_sr(input, output, checkpoint, sr_scale);
        if (*eval)
            return cmd_eval(input, reference, output);
        if (*compare)
            return cmd_compare(input, scale, checkpoint, output, dump);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ApiError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.status);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}
