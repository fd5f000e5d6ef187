#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dban/dban.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("dban_capi_" + name)).string();
}

dban_image* make_image(int c, int h, int w, float phase = 0.0f) {
    std::vector<float> px(static_cast<std::size_t>(c * h * w));
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                px[static_cast<std::size_t>((ch * h + y) * w + x)] =
                    0.5f + 0.35f * std::sin(0.4f * x + phase + ch) * std::cos(0.3f * y);
    dban_image* img = nullptr;
    REQUIRE(dban_image_create(c, h, w, px.data(), &img) == DBAN_OK);
    return img;
}

void dims(const dban_image* img, int& c, int& h, int& w) {
    REQUIRE(dban_image_dims(img, &c, &h, &w) == DBAN_OK);
}

struct Epochs {
    std::vector<double> loss, psnr, lr;
};

void record(int, double loss, double psnr, double lr, void* user) {
    auto* e = static_cast<Epochs*>(user);
    e->loss.push_back(loss);
    e->psnr.push_back(psnr);
    e->lr.push_back(lr);
}

} // namespace

TEST_CASE("status names and version") {
    CHECK(std::string(dban_status_name(DBAN_OK)) == "ok");
    CHECK(std::string(dban_status_name(DBAN_ERR_VERSION)).size() > 0);
    CHECK(std::string(dban_version()).size() > 0);
}

TEST_CASE("argument errors set the last error message") {
    dban_image* img = nullptr;
    CHECK(dban_image_create(0, 4, 4, nullptr, &img) == DBAN_ERR_ARGUMENT);
    CHECK(img == nullptr);
    CHECK(std::string(dban_last_error()).find("dimensions") != std::string::npos);
    CHECK(dban_image_create(3, 4, 4, nullptr, nullptr) == DBAN_ERR_ARGUMENT);
    REQUIRE(dban_image_create(1, 2, 2, nullptr, &img) == DBAN_OK);
    CHECK(dban_image_data(img)[3] == 0.0f);
    dban_image_free(img);
    CHECK(dban_image_load(temp_path("missing.png").c_str(), 3, &img) == DBAN_ERR_IO);
    CHECK(std::string(dban_last_error()).find("missing.png") != std::string::npos);
    dban_image_free(nullptr);
    dban_model_free(nullptr);
    dban_report_free(nullptr);
}

TEST_CASE("image round trip, resize and degrade") {
    dban_image* img = make_image(3, 20, 18);
    int c, h, w;
    dims(img, c, h, w);
    CHECK(c == 3);
    CHECK(h == 20);

    dban_image* crop = nullptr;
    REQUIRE(dban_image_modcrop(img, 3, &crop) == DBAN_OK);
    dims(crop, c, h, w);
    CHECK(h == 18);
    CHECK(w == 18);

    dban_image* lr = nullptr;
    REQUIRE(dban_degrade(img, 3, &lr) == DBAN_OK);
    dims(lr, c, h, w);
    CHECK(h == 6);
    CHECK(w == 6);
    dban_image* ref = nullptr;
    REQUIRE(dban_resize(crop, 1, 3, DBAN_METHOD_BICUBIC, &ref) == DBAN_OK);
    CHECK(std::equal(dban_image_data(lr), dban_image_data(lr) + 3 * 36, dban_image_data(ref)));

    dban_image* up = nullptr;
    REQUIRE(dban_resize(lr, 2, 1, DBAN_METHOD_BILINEAR, &up) == DBAN_OK);
    dims(up, c, h, w);
    CHECK(h == 12);
    CHECK(dban_resize(lr, 1, 0, DBAN_METHOD_BICUBIC, &up) == DBAN_ERR_ARGUMENT);
    CHECK(dban_resize(lr, 2, 1, DBAN_METHOD_MODEL, &up) == DBAN_ERR_ARGUMENT);

    const auto path = temp_path("img.png");
    dban_image* q = nullptr;
    REQUIRE(dban_image_save(img, path.c_str()) == DBAN_OK);
    REQUIRE(dban_image_load(path.c_str(), 3, &q) == DBAN_OK);
    for (int i = 0; i < 3 * 20 * 18; ++i)
        CHECK(std::abs(dban_image_data(q)[i] - dban_image_data(img)[i]) <= 0.5f / 255.0f + 1e-6f);
    std::remove(path.c_str());

    for (auto* p : {img, crop, lr, ref, up, q})
        dban_image_free(p);
}

TEST_CASE("model parameter counts and shapes") {
    dban_model_config cfg;
    dban_model_config_default(&cfg, 0);
    std::int64_t n = 0;
    REQUIRE(dban_count_params(&cfg, &n) == DBAN_OK);
    CHECK(n == 7197699);
    cfg.scale = 5;
    CHECK(dban_count_params(&cfg, &n) == DBAN_ERR_CONFIG);

    dban_model_config_default(&cfg, 1);
    cfg.scale = 3;
    dban_model* m = nullptr;
    REQUIRE(dban_model_create(&cfg, 4, &m) == DBAN_OK);
    REQUIRE(dban_count_params(&cfg, &n) == DBAN_OK);
    CHECK(dban_model_param_count(m) == n);

    dban_image* lr = make_image(3, 10, 7);
    dban_image* sr = nullptr;
    REQUIRE(dban_super_resolve(m, lr, &sr) == DBAN_OK);
    int c, h, w;
    dims(sr, c, h, w);
    CHECK(h == 30);
    CHECK(w == 21);

    double secs = -1.0;
    dban_image* up = nullptr;
    REQUIRE(dban_upscale(lr, DBAN_METHOD_MODEL, 3, m, &up, &secs) == DBAN_OK);
    CHECK(secs >= 0.0);
    dban_image_free(up);
    up = nullptr;
    CHECK(dban_upscale(lr, DBAN_METHOD_MODEL, 2, m, &up, nullptr) == DBAN_ERR_CONFIG);
    CHECK(dban_upscale(lr, DBAN_METHOD_MODEL, 3, nullptr, &up, nullptr) == DBAN_ERR_ARGUMENT);

    dban_image* gray = make_image(1, 5, 5);
    CHECK(dban_super_resolve(m, gray, &up) == DBAN_ERR_SHAPE);

    for (auto* p : {lr, sr, gray})
        dban_image_free(p);
    dban_model_free(m);
}

TEST_CASE("model save and load") {
    dban_model_config cfg;
    dban_model_config_default(&cfg, 1);
    dban_model* m = nullptr;
    REQUIRE(dban_model_create(&cfg, 9, &m) == DBAN_OK);
    const auto path = temp_path("model.ckpt");
    REQUIRE(dban_model_save(m, path.c_str()) == DBAN_OK);
    dban_model* back = nullptr;
    REQUIRE(dban_model_load(path.c_str(), &back) == DBAN_OK);
    dban_model_config got;
    REQUIRE(dban_model_get_config(back, &got) == DBAN_OK);
    CHECK(got.growth == cfg.growth);
    CHECK(got.scale == cfg.scale);
    CHECK(dban_model_param_count(back) == dban_model_param_count(m));

    dban_image* lr = make_image(3, 6, 6);
    dban_image *a = nullptr, *b = nullptr;
    REQUIRE(dban_super_resolve(m, lr, &a) == DBAN_OK);
    REQUIRE(dban_super_resolve(back, lr, &b) == DBAN_OK);
    CHECK(std::equal(dban_image_data(a), dban_image_data(a) + 3 * 144, dban_image_data(b)));

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const char v[4] = {9, 0, 0, 0};
        f.write(v, 4);
    }
    dban_model* bad = nullptr;
    CHECK(dban_model_load(path.c_str(), &bad) == DBAN_ERR_VERSION);
    CHECK(bad == nullptr);
    std::remove(path.c_str());
    for (auto* p : {lr, a, b})
        dban_image_free(p);
    dban_model_free(m);
    dban_model_free(back);
}

TEST_CASE("training through the C interface") {
    const auto dir = std::filesystem::temp_directory_path() / "dban_capi_train";
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (int i = 0; i < 2; ++i) {
        dban_image* img = make_image(3, 24, 24, 0.7f * i);
        paths.push_back((dir / ("hr" + std::to_string(i) + ".png")).string());
        REQUIRE(dban_image_save(img, paths.back().c_str()) == DBAN_OK);
        dban_image_free(img);
    }
    std::vector<const char*> cpaths;
    for (const auto& p : paths)
        cpaths.push_back(p.c_str());

    dban_train_options opt;
    dban_train_options_default(&opt);
    CHECK(opt.batch_size == 16);
    CHECK(opt.patience == 10);
    CHECK(opt.learning_rate == 1e-4);
    opt.patch_size = 12;
    opt.patch_stride = 12;
    opt.batch_size = 4;
    opt.epochs = 2;
    opt.learning_rate = 1e-3;
    opt.seed = 3;

    dban_model_config cfg;
    dban_model_config_default(&cfg, 1);
    auto run = [&](const std::string& ckpt, Epochs& log) {
        dban_model* m = nullptr;
        REQUIRE(dban_model_create(&cfg, 1, &m) == DBAN_OK);
        REQUIRE(dban_train(m, cpaths.data(), cpaths.size(), &opt, ckpt.c_str(), record, &log) == DBAN_OK);
        return m;
    };
    Epochs la, lb;
    const auto ca = (dir / "a.ckpt").string(), cb = (dir / "b.ckpt").string();
    dban_model* ma = run(ca, la);
    dban_model* mb = run(cb, lb);
    REQUIRE(la.loss.size() == 2);
    CHECK(la.loss == lb.loss);
    CHECK(la.psnr == lb.psnr);
    CHECK(la.lr[0] == 1e-3);
    auto bytes = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::vector<char>(std::istreambuf_iterator<char>(f), {});
    };
    CHECK(std::filesystem::exists(ca));
    CHECK(bytes(ca) == bytes(cb));

    cfg.scale = 3;
    dban_model* wrong = nullptr;
    REQUIRE(dban_model_create(&cfg, 1, &wrong) == DBAN_OK);
    opt.patch_size = opt.patch_stride = 14;
    CHECK(dban_train(wrong, cpaths.data(), cpaths.size(), &opt, nullptr, nullptr, nullptr) == DBAN_ERR_ARGUMENT);
    opt.patch_size = opt.patch_stride = 40;
    CHECK(dban_train(ma, cpaths.data(), cpaths.size(), &opt, nullptr, nullptr, nullptr) == DBAN_ERR_ARGUMENT);
    opt.patch_size = opt.patch_stride = 12;
    opt.batch_size = 1000;
    CHECK(dban_train(ma, cpaths.data(), cpaths.size(), &opt, nullptr, nullptr, nullptr) == DBAN_ERR_TRAINING);

    dban_model_free(ma);
    dban_model_free(mb);
    dban_model_free(wrong);
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation and reports") {
    dban_image* a = make_image(3, 20, 20);
    dban_image* b = make_image(3, 20, 20, 0.05f);
    double p = 0, s = 0;
    REQUIRE(dban_evaluate_pair(a, a, &p, &s) == DBAN_OK);
    CHECK(std::isinf(p));
    CHECK(s == 1.0);
    REQUIRE(dban_evaluate_pair(a, b, &p, &s) == DBAN_OK);
    CHECK(std::isfinite(p));
    CHECK(s < 1.0);

    dban_report* r = dban_report_create();
    REQUIRE(r != nullptr);
    REQUIRE(dban_report_add(r, "one", 30.0, 0.9, NAN) == DBAN_OK);
    REQUIRE(dban_report_add(r, "two", 34.0, 0.7, 2.0) == DBAN_OK);
    REQUIRE(dban_report_add_unmatched(r, "lonely.png") == DBAN_OK);
    CHECK(dban_report_add(r, nullptr, 1.0, 1.0, NAN) == DBAN_ERR_ARGUMENT);
    double mp, ms, mt;
    REQUIRE(dban_report_means(r, &mp, &ms, &mt) == DBAN_OK);
    CHECK(mp == 32.0);
    CHECK(ms == doctest::Approx(0.8));
    CHECK(mt == 2.0);
    const auto path = temp_path("report.csv");
    REQUIRE(dban_report_write(r, path.c_str()) == DBAN_OK);
    std::ifstream f(path);
    const std::string text((std::istreambuf_iterator<char>(f)), {});
    CHECK(text == "id,psnr_db,ssim,seconds\none,30,0.9,\ntwo,34,0.7,2\nmean,32,0.8,2\n# unmatched: lonely.png\n");
    std::remove(path.c_str());
    dban_report_free(r);
    dban_image_free(a);
    dban_image_free(b);
}
