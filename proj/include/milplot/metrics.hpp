#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "milplot/byteplot.hpp"

namespace milplot::metrics {

using byteplot::ByteImage;

// Information-loss panel comparing an image with its resized reconstruction.
struct LossPanel {
  double mse = 0.0;
  double ssim = 0.0;
  double snr_db = 0.0;
  double entropy_original_bits = 0.0;
  double entropy_resized_bits = 0.0;
  double mutual_information_bits = 0.0;
  double mi_percent = 0.0;
};

double mse(const ByteImage& a, const ByteImage& b);

// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5), L = 255.
double ssim(const ByteImage& a, const ByteImage& b);
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// 10 log10(sum orig^2 / sum (orig - distorted)^2); +inf for identical input.
double snr_db(const ByteImage& original, const ByteImage& distorted);
double snr_db(std::span<const std::uint8_t> original, std::span<const std::uint8_t> distorted);

using Histogram = std::array<std::uint64_t, 256>;
Histogram pixel_histogram(std::span<const std::uint8_t> pixels);
inline Histogram pixel_histogram(const ByteImage& image) { return pixel_histogram(image.pixels); }

// Shannon entropy in bits of the 256-bin pixel histogram.
double entropy_bits(std::span<const std::uint8_t> pixels);
inline double entropy_bits(const ByteImage& image) { return entropy_bits(image.pixels); }

// MI in bits from the 256x256 joint histogram, computed as
// H(a) + H(b) - H(a,b) and clamped at zero.
double mutual_information_bits(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
inline double mutual_information_bits(const ByteImage& a, const ByteImage& b) {
  return mutual_information_bits(a.pixels, b.pixels);
}

// MI as a percentage of the original's entropy. NaN when that entropy is 0.
double mi_percent(double mutual_information, double entropy_original);

LossPanel loss_panel(const ByteImage& original, const ByteImage& reconstructed);

// |a - b| per pixel.
ByteImage difference_image(const ByteImage& a, const ByteImage& b);

struct EvalReport {
  std::size_t classes = 0;
  std::size_t samples = 0;
  // confusion[truth][predicted]
  std::vector<std::vector<std::uint64_t>> confusion;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_loss = 0.0;
  double auroc_macro = 0.0;
  std::vector<std::string> sample_ids;
  std::vector<double> network_ms;
  std::vector<double> end_to_end_ms;
};

// Argmax predictions plus macro-F1 (classes without support score 0),
// macro one-vs-rest AUROC (classes lacking positives or negatives are
// skipped) and mean cross-entropy.
EvalReport classification_report(std::span<const std::size_t> truths,
                                 const std::vector<std::vector<double>>& probabilities, std::size_t classes);

// One-vs-rest AUROC of a single score column via the rank statistic
// (average ranks for ties).
double auroc_binary(std::span<const double> scores, const std::vector<bool>& positive);

double macro_f1(const std::vector<std::vector<std::uint64_t>>& confusion);

// Column-normalised confusion matrix in percent (per-class precision).
std::vector<std::vector<double>> confusion_column_percent(const std::vector<std::vector<std::uint64_t>>& confusion);

// CSV serialisation. Headers:
//   panel:     mse,ssim,snr_db,entropy_original_bits,entropy_resized_bits,mutual_information_bits,mi_percent
//   report:    accuracy,macro_f1,mean_loss,auroc_macro,samples
//   confusion: truth,<class names...>
//   latency:   sample_id,network_ms,end_to_end_ms
void write_panel_csv(std::ostream& out, const LossPanel& panel);
void write_report_csv(std::ostream& out, const EvalReport& report);
void write_confusion_csv(std::ostream& out, const EvalReport& report, const std::vector<std::string>& class_names);
void write_latency_csv(std::ostream& out, const EvalReport& report);

std::string format_number(double v);

}  // namespace milplot::metrics
