#include "chroma/errors.hpp"
#include "chroma/image_io.hpp"

#ifdef CHROMA_WITH_JPEG
#include <csetjmp>
#include <cstdio>
#include <memory>

#include <jpeglib.h>
#endif

namespace chroma::io {

#ifdef CHROMA_WITH_JPEG

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

}  // namespace

bool jpeg_supported() { return true; }

color::Rgb8Image read_jpeg(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!file) {
        throw DataError("cannot open " + path.string());
    }
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = on_jpeg_error;
    // Only POD locals live across the setjmp boundary.
    color::Rgb8Image* result = new color::Rgb8Image();
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        delete result;
        throw DataError("cannot decode JPEG " + path.string() + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    *result = color::Rgb8Image(static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = result->at(static_cast<int>(cinfo.output_scanline), 0);
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    color::Rgb8Image out = std::move(*result);
    delete result;
    return out;
}

#else

bool jpeg_supported() { return false; }

color::Rgb8Image read_jpeg(const std::filesystem::path& path) {
    throw DataError("JPEG support not compiled in: " + path.string());
}

#endif

}  // namespace chroma::io
