#include "polyper/image_io.hpp"

#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "polyper/error.hpp"

namespace polyper {

TensorF load_image_rgb(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image: " + path);
    TensorF out({3, bgr.rows, bgr.cols});
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            out.at(0, y, x) = row[x][2] / 255.0f;
            out.at(1, y, x) = row[x][1] / 255.0f;
            out.at(2, y, x) = row[x][0] / 255.0f;
        }
    }
    return out;
}

BinaryMask load_mask(const std::string& path) {
    cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw DataError("cannot read mask: " + path);
    BinaryMask out(gray.rows, gray.cols);
    for (int y = 0; y < gray.rows; ++y) {
        const std::uint8_t* row = gray.ptr<std::uint8_t>(y);
        for (int x = 0; x < gray.cols; ++x) out.set(y, x, row[x] >= 128);
    }
    return out;
}

void save_image_rgb(const std::string& path, const TensorF& image) {
    const int h = image.shape[1], w = image.shape[2];
    cv::Mat bgr(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                row[x][2 - c] = static_cast<std::uint8_t>(v * 255.0f + 0.5f);
            }
        }
    }
    if (!cv::imwrite(path, bgr)) throw DataError("cannot write image: " + path);
}

void save_mask(const std::string& path, const BinaryMask& mask) {
    cv::Mat gray(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y) {
        std::uint8_t* row = gray.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
    }
    if (!cv::imwrite(path, gray)) throw DataError("cannot write mask: " + path);
}

TensorF resize_image(const TensorF& image, int height, int width) {
    if (image.shape[1] == height && image.shape[2] == width) return image;
    TensorF out({3, height, width});
    for (int c = 0; c < 3; ++c) {
        cv::Mat src(image.shape[1], image.shape[2], CV_32FC1, const_cast<float*>(image.data()) +
                                                                 static_cast<std::int64_t>(c) * image.shape[1] * image.shape[2]);
        cv::Mat dst(height, width, CV_32FC1, out.data() + static_cast<std::int64_t>(c) * height * width);
        cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
    }
    return out;
}

BinaryMask resize_mask(const BinaryMask& mask, int height, int width) {
    if (mask.height == height && mask.width == width) return mask;
    cv::Mat src(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) src.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
    BinaryMask out(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out.set(y, x, dst.at<std::uint8_t>(y, x) >= 128);
    return out;
}

}  // namespace polyper
