#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "phasemark/image.hpp"
#include "phasemark/image_io.hpp"

using namespace phasemark;

namespace {

std::filesystem::path tmp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("pgm load: 2x2 maxval 255") {
    const auto path = tmp_file("pm_2x2.pgm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n2 2\n255\n";
        const unsigned char bytes[4] = {0, 255, 128, 64};
        out.write(reinterpret_cast<const char*>(bytes), 4);
    }
    const ImageGray img = load_image(path.string());
    CHECK(img.width() == 2);
    CHECK(img.height() == 2);
    CHECK(img.at(0, 0) == doctest::Approx(0.0));
    CHECK(img.at(1, 0) == doctest::Approx(1.0));
    CHECK(img.at(0, 1) == doctest::Approx(128.0 / 255.0));
    CHECK(img.at(1, 1) == doctest::Approx(64.0 / 255.0));
}

TEST_CASE("8-bit save/load round trip within one quantization step") {
    ImageGray img(7, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x) img.at(x, y) = (x + 7 * y) / 34.0;
    for (const char* name : {"pm_rt.pgm", "pm_rt.png"}) {
        const auto path = tmp_file(name);
        save_image(img, path.string(), 8);
        const ImageGray back = load_image(path.string());
        REQUIRE(back.width() == img.width());
        REQUIRE(back.height() == img.height());
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x)
                CHECK(std::abs(back.at(x, y) - img.at(x, y)) <= 0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("16-bit precision: value 4095 of 65535") {
    ImageGray img(4, 4, 4095.0 / 65535.0);
    for (const char* name : {"pm_16.png", "pm_16.pgm"}) {
        const auto path = tmp_file(name);
        save_image(img, path.string(), 16);
        const ImageGray back = load_image(path.string());
        CHECK(back.at(2, 2) == doctest::Approx(4095.0 / 65535.0).epsilon(1e-12));
    }
}

TEST_CASE("16-bit save/load is lossless for representable values") {
    ImageGray img(64, 1);
    for (int x = 0; x < 64; ++x) img.at(x, 0) = (x * 1021 % 65536) / 65535.0;
    const auto path = tmp_file("pm_lossless.pgm");
    save_image(img, path.string(), 16);
    const ImageGray back = load_image(path.string());
    for (int x = 0; x < 64; ++x) CHECK(back.at(x, 0) == img.at(x, 0));
}

TEST_CASE("save quantization rounds half away from zero") {
    ImageGray img(1, 1, 0.5);
    const auto path = tmp_file("pm_half.pgm");
    save_image(img, path.string(), 8);
    std::ifstream in(path, std::ios::binary);
    std::string tok;
    in >> tok >> tok >> tok >> tok; // P5 w h maxval
    in.get();
    CHECK(in.get() == 128); // round(127.5) -> 128

    ImageGray one(1, 1, 1.0);
    const auto p16 = tmp_file("pm_one.pgm");
    save_image(one, p16.string(), 16);
    std::ifstream in2(p16, std::ios::binary);
    in2 >> tok >> tok >> tok >> tok;
    in2.get();
    CHECK(in2.get() == 0xff);
    CHECK(in2.get() == 0xff);
}

TEST_CASE("all-zero image stays all zero on disk") {
    ImageGray img(8, 3, 0.0);
    const auto path = tmp_file("pm_zero.pgm");
    save_image(img, path.string(), 8);
    const ImageGray back = load_image(path.string());
    CHECK((back.v == 0.0).all());
}

TEST_CASE("load errors: missing file, color png, bad format") {
    CHECK_THROWS_AS(load_image("/nonexistent/nowhere.pgm"), Error);

    const auto path = tmp_file("pm_garbage.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "not an image";
    }
    CHECK_THROWS_AS(load_image(path.string()), Error);
}

TEST_CASE("degrade: identity when all knobs are off") {
    ImageGray img(40, 40);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) img.at(x, y) = (x * y % 17) / 17.0;
    const ImageGray out = degrade(img, {16, 0.0, 0.0}, 7);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x)
            CHECK(std::abs(out.at(x, y) - img.at(x, y)) <= 0.5 / 65535.0 + 1e-12);
}

TEST_CASE("degrade: noise statistics of the seeded generator") {
    ImageGray img(100, 100, 0.5);
    const ImageGray out = degrade(img, {16, 0.1, 0.0}, 12345);
    const double mean = out.v.mean();
    const double var = (out.v - mean).square().mean();
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(mean - 0.5) < 0.01);
    CHECK(std::abs(std::sqrt(var) - 0.1) < 0.01);
}

TEST_CASE("degrade: deterministic for a fixed seed") {
    ImageGray img(32, 32, 0.3);
    const ImageGray a = degrade(img, {12, 0.05, 0.8}, 99);
    const ImageGray b = degrade(img, {12, 0.05, 0.8}, 99);
    CHECK((a.v == b.v).all());
    const ImageGray c = degrade(img, {12, 0.05, 0.8}, 100);
    CHECK(!(a.v == c.v).all());
}

TEST_CASE("blur preserves mean intensity on interior-dominated images") {
    ImageGray img(128, 128);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x)
            img.at(x, y) = 0.5 + 0.5 * std::sin(2 * kPi * x / 16.0) * std::sin(2 * kPi * y / 16.0);
    const ImageGray out = gaussian_blur(img, 1.5);
    CHECK(out.v.mean() == doctest::Approx(img.v.mean()).epsilon(1e-6));
    // blur must not push values outside [0,1]
    CHECK(out.v.minCoeff() >= -1e-12);
    CHECK(out.v.maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("degrade rejects invalid sensor specs") {
    ImageGray img(8, 8, 0.5);
    CHECK_THROWS_AS(degrade(img, {7, 0.0, 0.0}, 1), Error);
    CHECK_THROWS_AS(degrade(img, {8, -0.1, 0.0}, 1), Error);
}
