#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "../support/oracles.hpp"
#include "cisfa/errors.hpp"
#include "cisfa/objectives.hpp"

using namespace cisfa;
using namespace cisfa::objectives;

namespace {

const GanLossConfig kLs{GanFlavor::least_squares, 1.0, 0.0};
const GanLossConfig kBce{GanFlavor::binary_cross_entropy, 1.0, 0.0};

std::vector<double> randn(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * normal01(rng);
  return v;
}

// Reference BCE discriminator loss written from the sigmoid form.
double bce_d_reference(const std::vector<double>& r, const std::vector<double>& f) {
  double a = 0, b = 0;
  for (double s : r) a += -std::log(1.0 / (1.0 + std::exp(-s)));
  for (double s : f) b += -std::log(1.0 - 1.0 / (1.0 + std::exp(-s)));
  return a / r.size() + b / f.size();
}

// Soft dice from the definition, one class at a time.
double dice_reference(const std::vector<double>& p, const std::vector<std::int16_t>& y, int b, int k, int hw) {
  double total = 0;
  for (int c = 1; c < k; ++c) {
    double inter = 0, ps = 0, ys = 0;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < hw; ++j) {
        const double pc = p[(i * k + c) * hw + j];
        const double yc = y[i * hw + j] == c;
        inter += pc * yc;
        ps += pc;
        ys += yc;
      }
    total += (2 * inter + kDiceEpsilon) / (ps + ys + kDiceEpsilon);
  }
  return 1.0 - total / (k - 1);
}

std::vector<double> random_probs(int b, int k, int hw, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(b) * k * hw);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < hw; ++j) {
      double s = 0;
      for (int c = 0; c < k; ++c) s += (p[(i * k + c) * hw + j] = std::exp(normal01(rng)));
      for (int c = 0; c < k; ++c) p[(i * k + c) * hw + j] /= s;
    }
  return p;
}

}  // namespace

TEST_CASE("least-squares GAN values") {
  CHECK(gan_d_loss(std::vector<double>(4, 1.0), std::vector<double>(4, 0.0), kLs) == 0.0);
  CHECK(gan_d_loss(std::vector<double>(4, 0.0), std::vector<double>(4, 1.0), kLs) == doctest::Approx(1.0));
  CHECK(gan_g_loss(std::vector<double>(3, 1.0), kLs) == 0.0);
  CHECK(gan_g_loss(std::vector<double>(3, 0.0), kLs) == doctest::Approx(1.0));
  double prev = 1e9;
  for (double s = 0.0; s <= 1.0; s += 0.1) {
    const double v = gan_g_loss(std::vector<double>{s, s}, kLs);
    CHECK(v < prev);
    prev = v;
  }
  // Generator loss on s equals twice the real half of the discriminator loss.
  Rng rng(1);
  const auto s = randn(9, rng);
  CHECK(gan_g_loss(s, kLs) == doctest::Approx(2.0 * gan_d_loss(s, {}, kLs)));
}

TEST_CASE("BCE GAN values") {
  CHECK(gan_d_loss(std::vector<double>(2, 1e3), std::vector<double>(2, -1e3), kBce) < 1e-12);
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = randn(5, rng, 2.0), f = randn(7, rng, 2.0);
    CHECK(gan_d_loss(r, f, kBce) == doctest::Approx(bce_d_reference(r, f)).epsilon(1e-12));
    CHECK(gan_d_loss(r, f, kBce) >= 0.0);
  }
  CHECK(std::isfinite(gan_g_loss(std::vector<double>{-800.0}, kBce)));
}

TEST_CASE("GAN gradients") {
  Rng rng(8);
  for (const auto& cfg : {kLs, kBce}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto r = randn(1 + uniform_index(rng, 12), rng), f = randn(1 + uniform_index(rng, 12), rng);
      std::vector<double> gr(r.size()), gf(f.size()), gg(f.size());
      gan_d_loss(r, f, cfg, gr, gf);
      gan_g_loss(f, cfg, gg);
      CHECK(oracle::max_relative_error(
                gr, oracle::numeric_gradient([&](const std::vector<double>& x) { return gan_d_loss(x, f, cfg); }, r)) <
            1e-4);
      CHECK(oracle::max_relative_error(
                gf, oracle::numeric_gradient([&](const std::vector<double>& x) { return gan_d_loss(r, x, cfg); }, f)) <
            1e-4);
      CHECK(oracle::max_relative_error(
                gg, oracle::numeric_gradient([&](const std::vector<double>& x) { return gan_g_loss(x, cfg); }, f)) <
            1e-4);
    }
  }
}

TEST_CASE("soft dice") {
  SUBCASE("uniform probabilities, one class") {
    const std::vector<double> p(8, 0.5);
    const std::vector<std::int16_t> y(4, 1);
    CHECK(soft_dice_loss(p, y, 1, 2, 4) == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
  }
  SUBCASE("one-hot of the label") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
      const int b = 2, k = 3, hw = 16;
      std::vector<std::int16_t> y(b * hw);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<std::int16_t>(i % k);
      std::vector<double> p(static_cast<std::size_t>(b) * k * hw, 0.0);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < hw; ++j) p[(i * k + y[i * hw + j]) * hw + j] = 1.0;
      CHECK(soft_dice_loss(p, y, b, k, hw) < 1e-3);
    }
  }
  SUBCASE("absent class contributes dice 1") {
    // Class 2 absent from label and prediction; class 1 predicted perfectly.
    const std::vector<std::int16_t> y{1, 0};
    const std::vector<double> p{0, 1, 1, 0, 0, 0};
    CHECK(soft_dice_loss(p, y, 1, 3, 2) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("matches the definition") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const int b = 1 + uniform_index(rng, 3), k = 2 + uniform_index(rng, 3), hw = 1 + uniform_index(rng, 20);
      const auto p = random_probs(b, k, hw, rng);
      std::vector<std::int16_t> y(b * hw);
      for (auto& v : y) v = static_cast<std::int16_t>(uniform_index(rng, k));
      const double v = soft_dice_loss(p, y, b, k, hw);
      CHECK(v == doctest::Approx(dice_reference(p, y, b, k, hw)).epsilon(1e-12));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-6);
    }
  }
  SUBCASE("gradient") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const int b = 1 + uniform_index(rng, 2), k = 2 + uniform_index(rng, 2), hw = 2 + uniform_index(rng, 6);
      const auto p = random_probs(b, k, hw, rng);
      std::vector<std::int16_t> y(b * hw);
      for (auto& v : y) v = static_cast<std::int16_t>(uniform_index(rng, k));
      std::vector<double> g(p.size());
      soft_dice_loss(p, y, b, k, hw, kDiceEpsilon, g);
      const auto num = oracle::numeric_gradient(
          [&](const std::vector<double>& x) { return soft_dice_loss(x, y, b, k, hw); }, p);
      CHECK(oracle::max_relative_error(g, num) < 1e-4);
    }
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(soft_dice_loss(std::vector<double>(3), std::vector<std::int16_t>(2), 1, 2, 2), ShapeMismatch);
    CHECK_THROWS_AS(soft_dice_loss(std::vector<double>(2), std::vector<std::int16_t>(2), 1, 1, 2), ShapeMismatch);
  }
}

TEST_CASE("composite totals") {
  const std::vector<double> layers(5, 0.5);
  const auto g = total_generator_loss(0.2, layers);
  CHECK(g.total == doctest::Approx(0.7));
  CHECK(*g.pcl_mean == doctest::Approx(0.5));
  const auto g0 = total_generator_loss(0.2, {});
  CHECK(g0.total == 0.2);
  CHECK(!g0.pcl_mean);
  CHECK(total_segmenter_loss(0.4, 0.1, 0.05, GclMode::sum) == doctest::Approx(0.55));
  CHECK(total_segmenter_loss(0.4, std::nullopt, 0.05, GclMode::sum) == doctest::Approx(0.45));
  CHECK(total_segmenter_loss(0.4, 0.1, 0.05, GclMode::sequential) == doctest::Approx(0.45));
  CHECK_THROWS_AS(gcl_mode_from_string("parallel"), InvalidMode);
  CHECK(gcl_mode_from_string("sequential") == GclMode::sequential);
  CHECK_THROWS_AS(gan_flavor_from_string("wgan"), InvalidMode);
}

TEST_CASE("loss report and log") {
  LossReport r;
  r.step = 3;
  r.set("L_a", 1.5);
  r.set("L_b", 0.1);
  r.set("L_a", 2.5);
  CHECK(r.entries().size() == 2);
  CHECK(r.get("L_a") == 2.5);
  CHECK(!r.has("L_c"));
  CHECK_NOTHROW(r.check_finite());
  r.set("L_c", std::nan(""));
  CHECK_THROWS_AS(r.check_finite(), NonFiniteLoss);

  const auto dir = std::filesystem::temp_directory_path() / "cisfa_losslog_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    LossLog log(dir / "l.csv", dir / "l.jsonl");
    LossReport a;
    a.step = 0;
    a.set("x", 0.1);
    a.set("y", 1.0 / 3.0);
    log.write(a);
    LossReport b;
    b.step = 1;
    b.set("x", 0.2);
    log.write(b);
  }
  {
    LossLog log(dir / "l.csv", dir / "l.jsonl", true);
    LossReport c;
    c.step = 2;
    c.set("y", 7.0);
    c.set("x", 0.3);
    log.write(c);
  }
  const auto t = read_loss_csv(dir / "l.csv");
  CHECK(t.columns == std::vector<std::string>{"x", "y"});
  CHECK(t.steps == std::vector<std::int64_t>{0, 1, 2});
  CHECK(*t.rows[0][1] == 1.0 / 3.0);  // round-trip precision
  CHECK(!t.rows[1][1]);
  CHECK(*t.rows[2][0] == 0.3);
  std::ifstream js(dir / "l.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(js, line)) ++lines;
  CHECK(lines == 3);
  std::filesystem::remove_all(dir);
}
