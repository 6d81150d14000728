#include "nert/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "nert/errors.hpp"

namespace fs = std::filesystem;

namespace nert::io {

namespace {

cv::Mat to_mat(const Image& image) {
    const int type = image.channels == 1 ? CV_64FC1 : CV_64FC3;
    cv::Mat m(image.rows, image.cols, type);
    std::copy(image.data.begin(), image.data.end(), m.ptr<double>());
    return m;
}

Image from_mat(const cv::Mat& m) {
    cv::Mat d;
    m.convertTo(d, m.channels() == 1 ? CV_64FC1 : CV_64FC3);
    Image out(d.rows, d.cols, d.channels());
    for (int r = 0; r < d.rows; ++r) {
        const double* row = d.ptr<double>(r);
        std::copy(row, row + static_cast<std::size_t>(d.cols) * d.channels(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(r) * d.cols * d.channels());
    }
    return out;
}

}  // namespace

Image read_image(const fs::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image: " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image out = from_mat(rgb);
    const double scale = bgr.depth() == CV_16U ? 65535.0 : 255.0;
    for (double& v : out.data) v /= scale;
    return out;
}

void write_png(const fs::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw DomainError("write_png supports 1 or 3 channels");
    }
    cv::Mat bytes(image.rows, image.cols, image.channels == 1 ? CV_8UC1 : CV_8UC3);
    for (int r = 0; r < image.rows; ++r) {
        auto* row = bytes.ptr<std::uint8_t>(r);
        for (int c = 0; c < image.cols; ++c) {
            for (int ch = 0; ch < image.channels; ++ch) {
                const double v = std::clamp(image(r, c, ch), 0.0, 1.0);
                row[c * image.channels + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    if (image.channels == 3) cv::cvtColor(bytes, bytes, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::vector<std::uint8_t> encoded;
    if (!cv::imencode(".png", bytes, encoded)) throw DataError("PNG encoding failed: " + path.string());
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(encoded.data()), encoded.size()));
}

Image resize(const Image& image, int rows, int cols) {
    if (image.rows == rows && image.cols == cols) return image;
    if (rows <= 0 || cols <= 0) throw DomainError("resize target must be positive");
    cv::Mat out;
    cv::resize(to_mat(image), out, cv::Size(cols, rows), 0, 0, cv::INTER_AREA);
    return from_mat(out);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw DataError("SHA-256 digest failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename into " + path.string() + ": " + ec.message());
}

std::vector<fs::path> list_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto& p = entry.path();
        std::string ext = p.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".png") continue;
        if (p.filename() == "ground_truth.png") continue;
        out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
        return a.filename().string() < b.filename().string();
    });
    return out;
}

}  // namespace nert::io
