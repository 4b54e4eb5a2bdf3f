#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cisfa::objectives {

enum class GanFlavor { least_squares, binary_cross_entropy };

GanFlavor gan_flavor_from_string(const std::string& s);
std::string to_string(GanFlavor f);

struct GanLossConfig {
  GanFlavor flavor = GanFlavor::least_squares;
  double real_target = 1.0;
  double fake_target = 0.0;
};

/// Discriminator loss on raw (pre-activation) patch scores.
///  least-squares: ½·mean((real−1)²) + ½·mean(fake²)
///  BCE:           mean(softplus(−real)) + mean(softplus(fake))
/// Gradients are written into the optional spans (same sizes as the inputs).
double gan_d_loss(std::span<const double> real, std::span<const double> fake, const GanLossConfig& cfg,
                  std::span<double> grad_real = {}, std::span<double> grad_fake = {});

/// Non-saturating generator-side loss: least-squares mean((fake−1)²), BCE mean(softplus(−fake)).
double gan_g_loss(std::span<const double> fake, const GanLossConfig& cfg, std::span<double> grad_fake = {});

constexpr double kDiceEpsilon = 1e-5;

/// 1 − mean over foreground classes c ≥ 1 of (2·Σp_c·y_c + ε)/(Σp_c + Σy_c + ε).
/// `probs` is B×K×H×W (K = C+1, channel-major per sample), `labels` is B×H×W.
/// Sums run over the whole batch.
double soft_dice_loss(std::span<const double> probs, std::span<const std::int16_t> labels, int batch,
                      int channels, int pixels, double eps = kDiceEpsilon, std::span<double> grad_probs = {});

enum class GclMode { sum, sequential };
GclMode gcl_mode_from_string(const std::string& s);
std::string to_string(GclMode m);

/// Named scalars for one training step. Insertion order is the column order.
class LossReport {
 public:
  std::int64_t step = 0;

  void set(const std::string& name, double value);
  bool has(const std::string& name) const;
  double get(const std::string& name) const;
  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  /// Throws NonFiniteLoss naming the first non-finite entry.
  void check_finite() const;

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

struct GeneratorTotal {
  double total = 0.0;
  std::optional<double> pcl_mean;
};

/// L_G = adversarial + mean over tapped layers of the weighted patch loss.
/// An empty `per_layer_pcl` means the patch loss is disabled.
GeneratorTotal total_generator_loss(double adversarial, std::span<const double> per_layer_pcl);

/// sum mode: dice + gcl + adversarial. sequential mode: dice + adversarial
/// (gcl is minimised by a separate encoder step). Absent gcl contributes nothing.
double total_segmenter_loss(double dice, std::optional<double> gcl, double adversarial, GclMode mode);

/// Appends LossReports as CSV rows (header taken from the first report) and as
/// JSON lines. Values are printed with round-trip precision.
class LossLog {
 public:
  LossLog() = default;
  LossLog(const std::filesystem::path& csv, const std::filesystem::path& jsonl, bool append = false);

  void write(const LossReport& r);
  bool is_open() const { return csv_.is_open(); }

 private:
  std::ofstream csv_;
  std::ofstream jsonl_;
  std::vector<std::string> header_;
};

struct LossTable {
  std::vector<std::string> columns;  // excludes "step"
  std::vector<std::int64_t> steps;
  std::vector<std::vector<std::optional<double>>> rows;
};

LossTable read_loss_csv(const std::filesystem::path& csv);

}  // namespace cisfa::objectives
