#include "phasemark/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace phasemark {

namespace {

int pgm_next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') { // comment to end of line
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (!std::isspace(c)) break;
    }
    if (c == EOF) return -1;
    do {
        tok.push_back(char(c));
        c = in.get();
    } while (c != EOF && !std::isspace(c));
    return 0;
}

ImageGray load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoError, "cannot open " + path);
    std::string tok;
    if (pgm_next_token(in, tok) || tok != "P5")
        raise(ErrorCode::IoError, "unsupported PGM magic in " + path);
    long w = 0, h = 0, maxval = 0;
    for (long* field : {&w, &h, &maxval}) {
        if (pgm_next_token(in, tok)) raise(ErrorCode::IoError, "truncated PGM header");
        *field = std::strtol(tok.c_str(), nullptr, 10);
    }
    if (w < 1 || h < 1) raise(ErrorCode::IoError, "bad PGM dimensions");
    if (maxval != 255 && maxval != 65535)
        raise(ErrorCode::IoError, "PGM maxval must be 255 or 65535");

    ImageGray img{int(w), int(h)};
    if (maxval == 255) {
        std::vector<unsigned char> row(static_cast<size_t>(w), 0);
        for (long y = 0; y < h; ++y) {
            in.read(reinterpret_cast<char*>(row.data()), w);
            if (!in) raise(ErrorCode::IoError, "truncated PGM data");
            for (long x = 0; x < w; ++x) img.v(y, x) = row[size_t(x)] / 255.0;
        }
    } else {
        std::vector<unsigned char> row(static_cast<size_t>(2 * w), 0);
        for (long y = 0; y < h; ++y) {
            in.read(reinterpret_cast<char*>(row.data()), 2 * w);
            if (!in) raise(ErrorCode::IoError, "truncated PGM data");
            for (long x = 0; x < w; ++x) {
                const unsigned v = unsigned(row[size_t(2 * x)]) << 8 | row[size_t(2 * x + 1)];
                img.v(y, x) = v / 65535.0; // big-endian 16-bit samples
            }
        }
    }
    return img;
}

void save_pgm(const ImageGray& img, const std::string& path, int bit_depth) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorCode::IoError, "cannot write " + path);
    const long maxval = bit_depth == 8 ? 255 : 65535;
    out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
    const int w = img.width(), h = img.height();
    if (bit_depth == 8) {
        std::vector<unsigned char> row(static_cast<size_t>(w), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const long q = std::llround(img.v(y, x) * 255.0);
                row[size_t(x)] = (unsigned char)std::clamp(q, 0l, 255l);
            }
            out.write(reinterpret_cast<const char*>(row.data()), w);
        }
    } else {
        std::vector<unsigned char> row(static_cast<size_t>(2 * w), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const long q = std::clamp<long>(std::llround(img.v(y, x) * 65535.0), 0, 65535);
                row[size_t(2 * x)] = (unsigned char)(q >> 8);
                row[size_t(2 * x + 1)] = (unsigned char)(q & 0xff);
            }
            out.write(reinterpret_cast<const char*>(row.data()), 2 * w);
        }
    }
    if (!out) raise(ErrorCode::IoError, "write failed for " + path);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageGray load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) raise(ErrorCode::IoError, "cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorCode::IoError, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorCode::IoError, "corrupt PNG " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorCode::IoError, "PNG is not grayscale: " + path);
    }
    if (depth != 8 && depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorCode::IoError, "PNG bit depth must be 8 or 16: " + path);
    }
    png_read_update_info(png, info);

    const size_t stride = png_get_rowbytes(png, info);
    std::vector<unsigned char> data(stride * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageGray img{int(w), int(h)};
    if (depth == 8) {
        for (png_uint_32 y = 0; y < h; ++y) {
            const unsigned char* r = data.data() + y * stride;
            for (png_uint_32 x = 0; x < w; ++x) img.v(y, x) = r[x] / 255.0;
        }
    } else {
        for (png_uint_32 y = 0; y < h; ++y) {
            const unsigned char* r = data.data() + y * stride;
            for (png_uint_32 x = 0; x < w; ++x) {
                const unsigned v = unsigned(r[2 * x]) << 8 | r[2 * x + 1]; // PNG is big-endian
                img.v(y, x) = v / 65535.0;
            }
        }
    }
    return img;
}

void save_png(const ImageGray& img, const std::string& path, int bit_depth) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) raise(ErrorCode::IoError, "cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        raise(ErrorCode::IoError, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(ErrorCode::IoError, "PNG write failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(img.width()), png_uint_32(img.height()), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const int w = img.width(), h = img.height();
    if (bit_depth == 8) {
        std::vector<unsigned char> row(static_cast<size_t>(w), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x)
                row[size_t(x)] =
                    (unsigned char)std::clamp<long>(std::llround(img.v(y, x) * 255.0), 0, 255);
            png_write_row(png, row.data());
        }
    } else {
        std::vector<unsigned char> row(static_cast<size_t>(2 * w), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const long q = std::clamp<long>(std::llround(img.v(y, x) * 65535.0), 0, 65535);
                row[size_t(2 * x)] = (unsigned char)(q >> 8);
                row[size_t(2 * x + 1)] = (unsigned char)(q & 0xff);
            }
            png_write_row(png, row.data());
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

} // namespace

ImageGray load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) raise(ErrorCode::IoError, "no such file: " + path);
    unsigned char magic[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(magic), 2);
    probe.close();
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm(path);
    if (magic[0] == 0x89 && magic[1] == 'P') return load_png(path);
    raise(ErrorCode::IoError, "unsupported image format: " + path);
}

void save_image(const ImageGray& img, const std::string& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        raise(ErrorCode::InvalidArgument, "save bit_depth must be 8 or 16");
    if (has_suffix(path, ".png")) {
        save_png(img, path, bit_depth);
    } else if (has_suffix(path, ".pgm")) {
        save_pgm(img, path, bit_depth);
    } else {
        raise(ErrorCode::IoError, "unknown image extension (want .png or .pgm): " + path);
    }
}

} // namespace phasemark
