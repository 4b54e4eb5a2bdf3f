#include "cisfa/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cisfa/errors.hpp"

namespace cisfa::objectives {

GanFlavor gan_flavor_from_string(const std::string& s) {
  if (s == "ls" || s == "least-squares" || s == "lsgan") return GanFlavor::least_squares;
  if (s == "bce" || s == "binary-cross-entropy") return GanFlavor::binary_cross_entropy;
  throw InvalidMode("unknown GAN flavor '" + s + "'");
}

std::string to_string(GanFlavor f) { return f == GanFlavor::least_squares ? "ls" : "bce"; }

GclMode gcl_mode_from_string(const std::string& s) {
  if (s == "sum") return GclMode::sum;
  if (s == "sequential") return GclMode::sequential;
  throw InvalidMode("unknown gcl mode '" + s + "' (expected sum|sequential)");
}

std::string to_string(GclMode m) { return m == GclMode::sum ? "sum" : "sequential"; }

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Mean of a per-element loss toward `target`; writes d/ds · scale into grad.
double mean_term(std::span<const double> s, double target, GanFlavor flavor, double scale, std::span<double> grad) {
  if (s.empty()) return 0.0;
  const double n = static_cast<double>(s.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double l, d;
    if (flavor == GanFlavor::least_squares) {
      l = (s[i] - target) * (s[i] - target);
      d = 2.0 * (s[i] - target);
    } else {
      // binary cross-entropy with logits: softplus(s) − target·s
      l = softplus(s[i]) - target * s[i];
      d = sigmoid(s[i]) - target;
    }
    acc += l;
    if (!grad.empty()) grad[i] = scale * d / n;
  }
  return scale * acc / n;
}

void check_grad_size(std::span<double> grad, std::size_t n) {
  if (!grad.empty() && grad.size() != n) throw ShapeMismatch("gradient buffer size mismatch");
}

}  // namespace

double gan_d_loss(std::span<const double> real, std::span<const double> fake, const GanLossConfig& cfg,
                  std::span<double> grad_real, std::span<double> grad_fake) {
  check_grad_size(grad_real, real.size());
  check_grad_size(grad_fake, fake.size());
  const double scale = cfg.flavor == GanFlavor::least_squares ? 0.5 : 1.0;
  return mean_term(real, cfg.real_target, cfg.flavor, scale, grad_real) +
         mean_term(fake, cfg.fake_target, cfg.flavor, scale, grad_fake);
}

double gan_g_loss(std::span<const double> fake, const GanLossConfig& cfg, std::span<double> grad_fake) {
  check_grad_size(grad_fake, fake.size());
  return mean_term(fake, cfg.real_target, cfg.flavor, 1.0, grad_fake);
}

double soft_dice_loss(std::span<const double> probs, std::span<const std::int16_t> labels, int batch,
                      int channels, int pixels, double eps, std::span<double> grad_probs) {
  if (channels < 2) throw ShapeMismatch("soft dice needs background plus at least one class");
  const std::size_t np = static_cast<std::size_t>(batch) * channels * pixels;
  if (probs.size() != np || labels.size() != static_cast<std::size_t>(batch) * pixels)
    throw ShapeMismatch("soft dice: probability/label sizes do not match B×K×HW / B×HW");
  check_grad_size(grad_probs, np);

  const int classes = channels - 1;
  std::vector<double> inter(channels, 0.0), psum(channels, 0.0), ysum(channels, 0.0);
  for (int b = 0; b < batch; ++b)
    for (int c = 1; c < channels; ++c) {
      const double* p = probs.data() + (static_cast<std::size_t>(b) * channels + c) * pixels;
      const std::int16_t* y = labels.data() + static_cast<std::size_t>(b) * pixels;
      for (int i = 0; i < pixels; ++i) {
        const double yc = y[i] == c ? 1.0 : 0.0;
        inter[c] += p[i] * yc;
        psum[c] += p[i];
        ysum[c] += yc;
      }
    }

  double dice_mean = 0.0;
  for (int c = 1; c < channels; ++c) dice_mean += (2.0 * inter[c] + eps) / (psum[c] + ysum[c] + eps);
  dice_mean /= classes;

  if (!grad_probs.empty()) {
    std::fill(grad_probs.begin(), grad_probs.end(), 0.0);
    for (int c = 1; c < channels; ++c) {
      const double num = 2.0 * inter[c] + eps;
      const double den = psum[c] + ysum[c] + eps;
      for (int b = 0; b < batch; ++b) {
        double* g = grad_probs.data() + (static_cast<std::size_t>(b) * channels + c) * pixels;
        const std::int16_t* y = labels.data() + static_cast<std::size_t>(b) * pixels;
        for (int i = 0; i < pixels; ++i) {
          const double yc = y[i] == c ? 1.0 : 0.0;
          // d(num/den)/dp = (2y·den − num)/den²; the loss negates and averages.
          g[i] = -((2.0 * yc * den - num) / (den * den)) / classes;
        }
      }
    }
  }
  return 1.0 - dice_mean;
}

void LossReport::set(const std::string& name, double value) {
  for (auto& [k, v] : entries_)
    if (k == name) {
      v = value;
      return;
    }
  entries_.emplace_back(name, value);
}

bool LossReport::has(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

double LossReport::get(const std::string& name) const {
  for (const auto& [k, v] : entries_)
    if (k == name) return v;
  throw FormatError("loss report has no entry '" + name + "'");
}

void LossReport::check_finite() const {
  for (const auto& [k, v] : entries_)
    if (!std::isfinite(v))
      throw NonFiniteLoss("non-finite " + k + " at step " + std::to_string(step));
}

GeneratorTotal total_generator_loss(double adversarial, std::span<const double> per_layer_pcl) {
  GeneratorTotal out;
  out.total = adversarial;
  if (!per_layer_pcl.empty()) {
    double s = 0.0;
    for (double v : per_layer_pcl) s += v;
    out.pcl_mean = s / static_cast<double>(per_layer_pcl.size());
    out.total += *out.pcl_mean;
  }
  return out;
}

double total_segmenter_loss(double dice, std::optional<double> gcl, double adversarial, GclMode mode) {
  double total = dice + adversarial;
  if (gcl && mode == GclMode::sum) total += *gcl;
  return total;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

LossLog::LossLog(const std::filesystem::path& csv, const std::filesystem::path& jsonl, bool append) {
  const auto mode = append ? std::ios::app : std::ios::trunc;
  if (append && std::filesystem::exists(csv)) {
    std::ifstream in(csv);
    std::string line;
    if (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string col;
      std::getline(ss, col, ',');  // step
      while (std::getline(ss, col, ',')) header_.push_back(col);
    }
  }
  csv_.open(csv, std::ios::out | mode);
  jsonl_.open(jsonl, std::ios::out | mode);
  if (!csv_ || !jsonl_) throw FormatError("cannot open loss log in " + csv.parent_path().string());
}

void LossLog::write(const LossReport& r) {
  if (header_.empty()) {
    csv_ << "step";
    for (const auto& [k, v] : r.entries()) {
      header_.push_back(k);
      csv_ << ',' << k;
    }
    csv_ << '\n';
  }
  csv_ << r.step;
  for (const auto& col : header_) {
    csv_ << ',';
    if (r.has(col)) csv_ << fmt(r.get(col));
  }
  csv_ << '\n';
  csv_.flush();

  // Built by hand so numbers keep the same round-trip formatting as the CSV.
  jsonl_ << "{\"step\":" << r.step;
  for (const auto& [k, v] : r.entries()) jsonl_ << ",\"" << k << "\":" << fmt(v);
  jsonl_ << "}\n";
  jsonl_.flush();
}

LossTable read_loss_csv(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw FormatError("cannot open " + csv.string());
  LossTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw FormatError(csv.string() + " is empty");
  {
    std::stringstream ss(line);
    std::string col;
    std::getline(ss, col, ',');
    while (std::getline(ss, col, ',')) t.columns.push_back(col);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.empty()) continue;
    t.steps.push_back(std::stoll(cells[0]));
    std::vector<std::optional<double>> row(t.columns.size());
    for (std::size_t c = 0; c < t.columns.size() && c + 1 < cells.size(); ++c)
      if (!cells[c + 1].empty()) row[c] = std::stod(cells[c + 1]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace cisfa::objectives
