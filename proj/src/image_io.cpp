#include "demark/image_io.hpp"

#include "demark/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <fstream>

namespace demark {

namespace {

std::vector<uchar> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

ImageU8 read_image_rgb(const std::filesystem::path& path) {
    auto bytes = read_bytes(path);
    cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (bgr.empty()) throw IoError("cannot decode image: " + path.string());
    ImageU8 out(bgr.rows, bgr.cols, 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            out.at(y, x, 0) = row[x][2];
            out.at(y, x, 1) = row[x][1];
            out.at(y, x, 2) = row[x][0];
        }
    }
    return out;
}

ImageU8 read_image_gray(const std::filesystem::path& path) {
    auto bytes = read_bytes(path);
    cv::Mat g = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
    if (g.empty()) throw IoError("cannot decode image: " + path.string());
    ImageU8 out(g.rows, g.cols, 1);
    for (int y = 0; y < g.rows; ++y) {
        const auto* row = g.ptr<uint8_t>(y);
        for (int x = 0; x < g.cols; ++x) out.at(y, x, 0) = row[x];
    }
    return out;
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    if (img.empty()) throw ValidationError("write_png: empty image");
    if (img.channels != 1 && img.channels != 3)
        throw ValidationError("write_png: expected 1 or 3 channels");
    cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.channels == 3) {
                m.at<cv::Vec3b>(y, x) = {img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0)};
            } else {
                m.at<uint8_t>(y, x) = img.at(y, x, 0);
            }
        }
    }
    std::vector<uchar> buf;
    if (!cv::imencode(".png", m, buf)) throw IoError("PNG encode failed: " + path.string());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

bool has_image_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

} // namespace demark
