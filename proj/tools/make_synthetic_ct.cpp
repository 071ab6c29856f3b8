// Writes a small synthetic CT-like dataset: an elliptical body with two dark
// lungs. COVID slices carry bright ground-glass patches inside the lungs;
// non-COVID slices show only sparse vessel dots.
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hybridct/rng.hpp"

namespace {

cv::Mat slice(hybridct::Rng& rng, bool covid, int size) {
  const double s = size / 128.0;
  cv::Mat img(size, size, CV_32F, cv::Scalar(0.02));
  const cv::Point center(size / 2 + static_cast<int>(rng.uniform(-4, 4) * s),
                         size / 2 + static_cast<int>(rng.uniform(-3, 3) * s));
  cv::ellipse(img, center, cv::Size(static_cast<int>(rng.uniform(52, 58) * s), static_cast<int>(rng.uniform(38, 44) * s)),
              rng.uniform(-5, 5), 0, 360, cv::Scalar(0.55), cv::FILLED);
  cv::Mat lungs(size, size, CV_8U, cv::Scalar(0));
  for (int side : {-1, 1}) {
    const cv::Point c(center.x + static_cast<int>(side * rng.uniform(22, 26) * s), center.y - static_cast<int>(2 * s));
    const cv::Size axes(static_cast<int>(rng.uniform(16, 20) * s), static_cast<int>(rng.uniform(27, 32) * s));
    const double angle = side * rng.uniform(5, 15);
    cv::ellipse(img, c, axes, angle, 0, 360, cv::Scalar(0.12), cv::FILLED);
    cv::ellipse(lungs, c, axes, angle, 0, 360, cv::Scalar(255), cv::FILLED);
  }
  // Spine.
  cv::circle(img, cv::Point(center.x, center.y + static_cast<int>(28 * s)), static_cast<int>(7 * s), cv::Scalar(0.95), cv::FILLED);

  cv::Mat overlay(size, size, CV_32F, cv::Scalar(0));
  const int spots = covid ? static_cast<int>(rng.uniform(6, 10)) : static_cast<int>(rng.uniform(8, 14));
  for (int i = 0; i < spots; ++i) {
    cv::Point p;
    do {
      p = cv::Point(static_cast<int>(rng.uniform(0, size - 1)), static_cast<int>(rng.uniform(0, size - 1)));
    } while (lungs.at<unsigned char>(p) == 0);
    if (covid) {
      cv::ellipse(overlay, p, cv::Size(static_cast<int>(rng.uniform(6, 12) * s), static_cast<int>(rng.uniform(5, 10) * s)),
                  rng.uniform(0, 180), 0, 360, cv::Scalar(rng.uniform(0.25, 0.4)), cv::FILLED);
    } else {
      cv::circle(overlay, p, std::max(1, static_cast<int>(1.2 * s)), cv::Scalar(0.35), cv::FILLED);
    }
  }
  if (covid) cv::GaussianBlur(overlay, overlay, cv::Size(0, 0), 3.0 * s);
  cv::Mat masked;
  overlay.copyTo(masked, lungs);
  img += masked;

  cv::Mat noise(size, size, CV_32F);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) noise.at<float>(y, x) = static_cast<float>(0.03 * rng.normal());
  img += noise;
  cv::Mat out;
  img.convertTo(out, CV_8U, 255.0);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic two-class CT-like dataset"};
  std::string out;
  int per_class = 32;
  int size = 128;
  std::uint64_t seed = 2024;
  app.add_option("--out", out, "Output root (receives COVID/ and non-COVID/)")->required();
  app.add_option("--per-class", per_class, "Images per class")->check(CLI::PositiveNumber);
  app.add_option("--size", size, "Image side in pixels")->check(CLI::Range(32, 1024));
  app.add_option("--seed", seed, "Random seed");
  CLI11_PARSE(app, argc, argv);

  hybridct::Rng rng(seed);
  for (bool covid : {true, false}) {
    const std::filesystem::path dir = std::filesystem::path(out) / (covid ? "COVID" : "non-COVID");
    std::filesystem::create_directories(dir);
    for (int i = 1; i <= per_class; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d.png", covid ? "covid" : "normal", i);
      if (!cv::imwrite((dir / name).string(), slice(rng, covid, size))) {
        std::cerr << "cannot write " << (dir / name) << "\n";
        return 1;
      }
    }
  }
  std::cout << "wrote " << 2 * per_class << " images to " << out << "\n";
  return 0;
}
