#include "milplot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "milplot/error.hpp"

namespace milplot::metrics {

namespace {

void require_same_shape(const ByteImage& a, const ByteImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorKind::ShapeMismatch, "images differ in shape");
  }
}

double entropy_from_counts(std::span<const std::uint64_t> counts, double total) {
  double h = 0.0;
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kSsimWindow);
  const double centre = static_cast<double>(kSsimWindow / 2);
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - centre;
    k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
  }
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

// Separable "valid" Gaussian filtering of a w x h map.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t w, std::size_t h,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size();
  const std::size_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(ow * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * src[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double mse(const ByteImage& a, const ByteImage& b) {
  require_same_shape(a, b);
  if (a.pixels.empty()) throw Error(ErrorKind::EmptyInput, "mse of empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

double ssim(const ByteImage& a, const ByteImage& b) {
  require_same_shape(a, b);
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw Error(ErrorKind::TooSmall, "SSIM needs images of at least 11x11");
  }
  const std::size_t w = a.width, h = a.height, n = a.pixels.size();
  std::vector<double> fa(n), fb(n), faa(n), fbb(n), fab(n);
  for (std::size_t i = 0; i < n; ++i) {
    fa[i] = a.pixels[i];
    fb[i] = b.pixels[i];
    faa[i] = fa[i] * fa[i];
    fbb[i] = fb[i] * fb[i];
    fab[i] = fa[i] * fb[i];
  }
  const auto k = gaussian_kernel();
  const auto mu_a = filter_valid(fa, w, h, k);
  const auto mu_b = filter_valid(fb, w, h, k);
  const auto e_aa = filter_valid(faa, w, h, k);
  const auto e_bb = filter_valid(fbb, w, h, k);
  const auto e_ab = filter_valid(fab, w, h, k);

  constexpr double L = 255.0;
  constexpr double c1 = (0.01 * L) * (0.01 * L);
  constexpr double c2 = (0.03 * L) * (0.03 * L);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double snr_db(std::span<const std::uint8_t> original, std::span<const std::uint8_t> distorted) {
  if (original.size() != distorted.size()) throw Error(ErrorKind::ShapeMismatch, "snr inputs differ in length");
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double o = original[i];
    const double d = o - static_cast<double>(distorted[i]);
    signal += o * o;
    noise += d * d;
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

double snr_db(const ByteImage& original, const ByteImage& distorted) {
  require_same_shape(original, distorted);
  return snr_db(std::span<const std::uint8_t>(original.pixels), std::span<const std::uint8_t>(distorted.pixels));
}

Histogram pixel_histogram(std::span<const std::uint8_t> pixels) {
  Histogram h{};
  for (std::uint8_t v : pixels) ++h[v];
  return h;
}

double entropy_bits(std::span<const std::uint8_t> pixels) {
  if (pixels.empty()) return 0.0;
  const Histogram h = pixel_histogram(pixels);
  return entropy_from_counts(h, static_cast<double>(pixels.size()));
}

double mutual_information_bits(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::ShapeMismatch, "MI inputs differ in length");
  if (a.empty()) return 0.0;
  std::vector<std::uint64_t> joint(256 * 256, 0);
  for (std::size_t i = 0; i < a.size(); ++i) ++joint[a[i] * 256u + b[i]];
  const double total = static_cast<double>(a.size());
  const Histogram ha = pixel_histogram(a), hb = pixel_histogram(b);
  const double mi = entropy_from_counts(ha, total) + entropy_from_counts(hb, total) - entropy_from_counts(joint, total);
  return std::max(0.0, mi);
}

double mi_percent(double mutual_information, double entropy_original) {
  if (entropy_original <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return mutual_information / entropy_original * 100.0;
}

LossPanel loss_panel(const ByteImage& original, const ByteImage& reconstructed) {
  require_same_shape(original, reconstructed);
  LossPanel p;
  p.mse = mse(original, reconstructed);
  p.ssim = ssim(original, reconstructed);
  p.snr_db = snr_db(original, reconstructed);
  p.entropy_original_bits = entropy_bits(original);
  p.entropy_resized_bits = entropy_bits(reconstructed);
  p.mutual_information_bits = mutual_information_bits(original, reconstructed);
  p.mi_percent = mi_percent(p.mutual_information_bits, p.entropy_original_bits);
  return p;
}

ByteImage difference_image(const ByteImage& a, const ByteImage& b) {
  require_same_shape(a, b);
  ByteImage d(a.width, a.height);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    d.pixels[i] = static_cast<std::uint8_t>(std::abs(static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i])));
  }
  return d;
}

double auroc_binary(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw Error(ErrorKind::LengthMismatch, "scores/labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double macro_f1(const std::vector<std::vector<std::uint64_t>>& confusion) {
  const std::size_t C = confusion.size();
  if (C == 0) return 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    std::uint64_t tp = confusion[c][c], fn = 0, fp = 0;
    for (std::size_t o = 0; o < C; ++o) {
      if (o == c) continue;
      fn += confusion[c][o];
      fp += confusion[o][c];
    }
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
    total += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return total / static_cast<double>(C);
}

EvalReport classification_report(std::span<const std::size_t> truths,
                                  const std::vector<std::vector<double>>& probabilities, std::size_t classes) {
  if (truths.size() != probabilities.size()) throw Error(ErrorKind::LengthMismatch, "truths/probabilities differ in length");
  if (classes < 2) throw Error(ErrorKind::InvalidConfig, "need at least 2 classes");
  EvalReport r;
  r.classes = classes;
  r.samples = truths.size();
  r.confusion.assign(classes, std::vector<std::uint64_t>(classes, 0));
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto& p = probabilities[i];
    if (p.size() != classes) throw Error(ErrorKind::LengthMismatch, "probability row has wrong length");
    if (truths[i] >= classes) throw Error(ErrorKind::LengthMismatch, "truth label out of range");
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-5) throw Error(ErrorKind::NumericFailure, "probability row does not sum to 1");
    const auto predicted = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    ++r.confusion[truths[i]][predicted];
    if (predicted == truths[i]) ++correct;
    loss -= std::log(std::max(p[truths[i]], 1e-12));
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, truths.size()));
  r.accuracy = static_cast<double>(correct) / n;
  r.mean_loss = loss / n;
  r.macro_f1 = macro_f1(r.confusion);

  double auc_total = 0.0;
  std::size_t auc_classes = 0;
  std::vector<double> column(truths.size());
  std::vector<bool> positive_vec(truths.size());
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < truths.size(); ++i) {
      column[i] = probabilities[i][c];
      positive_vec[i] = truths[i] == c;
    }
    const double auc = auroc_binary(column, positive_vec);
    if (!std::isnan(auc)) {
      auc_total += auc;
      ++auc_classes;
    }
  }
  r.auroc_macro = auc_classes ? auc_total / static_cast<double>(auc_classes) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<std::vector<double>> confusion_column_percent(const std::vector<std::vector<std::uint64_t>>& confusion) {
  const std::size_t C = confusion.size();
  std::vector<std::vector<double>> pct(C, std::vector<double>(C, 0.0));
  for (std::size_t col = 0; col < C; ++col) {
    std::uint64_t total = 0;
    for (std::size_t row = 0; row < C; ++row) total += confusion[row][col];
    if (total == 0) continue;
    for (std::size_t row = 0; row < C; ++row) {
      pct[row][col] = 100.0 * static_cast<double>(confusion[row][col]) / static_cast<double>(total);
    }
  }
  return pct;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_panel_csv(std::ostream& out, const LossPanel& p) {
  out << "mse,ssim,snr_db,entropy_original_bits,entropy_resized_bits,mutual_information_bits,mi_percent\n";
  out << format_number(p.mse) << ',' << format_number(p.ssim) << ',' << format_number(p.snr_db) << ','
      << format_number(p.entropy_original_bits) << ',' << format_number(p.entropy_resized_bits) << ','
      << format_number(p.mutual_information_bits) << ',' << format_number(p.mi_percent) << '\n';
}

void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "accuracy,macro_f1,mean_loss,auroc_macro,samples\n";
  out << format_number(r.accuracy) << ',' << format_number(r.macro_f1) << ',' << format_number(r.mean_loss) << ','
      << format_number(r.auroc_macro) << ',' << r.samples << '\n';
}

void write_confusion_csv(std::ostream& out, const EvalReport& r, const std::vector<std::string>& class_names) {
  out << "truth";
  for (std::size_t c = 0; c < r.classes; ++c) out << ',' << (c < class_names.size() ? class_names[c] : std::to_string(c));
  out << '\n';
  for (std::size_t t = 0; t < r.classes; ++t) {
    out << (t < class_names.size() ? class_names[t] : std::to_string(t));
    for (std::size_t c = 0; c < r.classes; ++c) out << ',' << r.confusion[t][c];
    out << '\n';
  }
}

void write_latency_csv(std::ostream& out, const EvalReport& r) {
  out << "sample_id,network_ms,end_to_end_ms\n";
  for (std::size_t i = 0; i < r.network_ms.size(); ++i) {
    out << (i < r.sample_ids.size() ? r.sample_ids[i] : std::to_string(i)) << ',' << format_number(r.network_ms[i])
        << ',' << format_number(r.end_to_end_ms[i]) << '\n';
  }
}

}  // namespace milplot::metrics
