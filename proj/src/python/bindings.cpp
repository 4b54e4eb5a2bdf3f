#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "../../tools/commands.hpp"
#include "cisfa/contrastive.hpp"
#include "cisfa/data.hpp"
#include "cisfa/errors.hpp"
#include "cisfa/metrics.hpp"
#include "cisfa/objectives.hpp"
#include "cisfa/trainer.hpp"

namespace py = pybind11;
using namespace cisfa;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

contrastive::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  contrastive::Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

Array from_matrix(const contrastive::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), out.mutable_data());
  return out;
}

template <typename T, typename A>
Grid3<T> to_grid3(const A& a) {
  if (a.ndim() != 3) throw ShapeError("expected a 3-D array");
  Grid3<T> g(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), g.data.begin());
  return g;
}

template <typename T>
py::array_t<T> from_grid3(const Grid3<T>& g) {
  py::array_t<T> out({g.depth, g.height, g.width});
  std::copy(g.data.begin(), g.data.end(), out.mutable_data());
  return out;
}

contrastive::DenominatorMode denominator(const std::string& s) {
  if (s == "with-positive") return contrastive::DenominatorMode::with_positive;
  if (s == "negatives-only") return contrastive::DenominatorMode::negatives_only;
  throw InvalidMode("denominator must be with-positive or negatives-only");
}

objectives::GanLossConfig gan(const std::string& flavor) { return {objectives::gan_flavor_from_string(flavor)}; }

py::dict volume_dict(const data::Volume& v) {
  py::dict d;
  d["id"] = v.id;
  d["image"] = from_grid3(v.voxels);
  d["labels"] = v.labels ? py::object(from_grid3(*v.labels)) : py::none();
  d["spacing"] = v.spacing;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contrastive image synthesis and feature alignment: losses, metrics, synthetic data and training";

  py::register_exception<Error>(m, "Error");

  m.def(
      "patch_nce",
      [](const Array& query, const Array& key, std::vector<double> weights, double tau, const std::string& denom) {
        contrastive::Matrix gq, gk;
        const double loss =
            contrastive::patch_nce(to_matrix(query), to_matrix(key), weights, tau, denominator(denom), &gq, &gk);
        return py::make_tuple(loss, from_matrix(gq), from_matrix(gk));
      },
      py::arg("query"), py::arg("key"), py::arg("weights"), py::arg("tau") = 0.2,
      py::arg("denominator") = "with-positive", "Weighted patch InfoNCE. Returns (loss, d/dquery, d/dkey).");

  m.def(
      "global_nce",
      [](const Array& z, double tau) {
        const auto batch = contrastive::GlobalFeatureBatch::halves(to_matrix(z));
        contrastive::Matrix grad;
        const double loss = contrastive::global_nce(batch.vectors, batch.pairing, tau, &grad);
        return py::make_tuple(loss, from_matrix(grad));
      },
      py::arg("z"), py::arg("tau") = 0.2,
      "NT-Xent over 2t rows where row i pairs with row (i+t) mod 2t. Returns (loss, d/dz).");

  m.def(
      "patch_weight_map",
      [](const LabelArray& label, int h, int w, double weight) {
        if (label.ndim() != 2) throw ShapeError("expected a 2-D label map");
        LabelMap lm(label.shape(0), label.shape(1));
        std::copy(label.data(), label.data() + label.size(), lm.data.begin());
        const auto map = contrastive::patch_weight_map(lm, h, w, weight);
        Array out({map.height, map.width});
        std::copy(map.data.begin(), map.data.end(), out.mutable_data());
        return out;
      },
      py::arg("label"), py::arg("h"), py::arg("w"), py::arg("weight") = 2.0);

  m.def(
      "soft_dice_loss",
      [](const Array& probs, const LabelArray& labels) {
        if (probs.ndim() != 4 || labels.ndim() != 3) throw ShapeError("expected probs B×K×H×W and labels B×H×W");
        const int b = probs.shape(0), k = probs.shape(1), pixels = probs.shape(2) * probs.shape(3);
        std::vector<double> grad(probs.size());
        const double loss =
            objectives::soft_dice_loss({probs.data(), static_cast<std::size_t>(probs.size())},
                                       {labels.data(), static_cast<std::size_t>(labels.size())}, b, k, pixels,
                                       objectives::kDiceEpsilon, grad);
        Array g(std::vector<py::ssize_t>(probs.shape(), probs.shape() + 4));
        std::copy(grad.begin(), grad.end(), g.mutable_data());
        return py::make_tuple(loss, g);
      },
      py::arg("probs"), py::arg("labels"));

  m.def(
      "gan_d_loss",
      [](const Array& real, const Array& fake, const std::string& flavor) {
        return objectives::gan_d_loss({real.data(), static_cast<std::size_t>(real.size())},
                                      {fake.data(), static_cast<std::size_t>(fake.size())}, gan(flavor));
      },
      py::arg("real"), py::arg("fake"), py::arg("flavor") = "ls");
  m.def(
      "gan_g_loss",
      [](const Array& fake, const std::string& flavor) {
        return objectives::gan_g_loss({fake.data(), static_cast<std::size_t>(fake.size())}, gan(flavor));
      },
      py::arg("fake"), py::arg("flavor") = "ls");

  m.def(
      "dice_score", [](const MaskArray& p, const MaskArray& g) {
        return metrics::dice_score(to_grid3<std::uint8_t>(p), to_grid3<std::uint8_t>(g));
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "assd",
      [](const MaskArray& p, const MaskArray& g, std::array<double, 3> spacing) {
        return metrics::assd(to_grid3<std::uint8_t>(p), to_grid3<std::uint8_t>(g), spacing);
      },
      py::arg("pred"), py::arg("gt"), py::arg("spacing") = std::array<double, 3>{1.0, 1.0, 1.0},
      "Average symmetric surface distance in mm; None when either mask is empty.");

  m.def(
      "synth_dataset",
      [](std::uint64_t seed, int size, int classes, int volumes, int depth) {
        const auto ds = data::synth_dataset({size, classes, volumes, depth}, seed);
        py::dict out;
        py::list a, b;
        for (const auto& v : ds.domain_a) a.append(volume_dict(v));
        for (const auto& v : ds.domain_b) b.append(volume_dict(v));
        out["A"] = a;
        out["B"] = b;
        return out;
      },
      py::arg("seed") = 0, py::arg("size") = 32, py::arg("classes") = 2, py::arg("volumes") = 8,
      py::arg("depth") = 12);

  m.def(
      "config_json",
      [](const std::string& scale, const std::string& overrides) {
        if (scale != "paper" && scale != "desk") throw InvalidMode("scale must be desk or paper");
        auto base = scale == "paper" ? train::TrainConfig::paper_scale() : train::TrainConfig::desk_scale();
        auto cfg = train::config_from_json(nlohmann::json::parse(overrides), base);
        cfg.validate();
        return train::to_json(cfg).dump();
      },
      py::arg("scale") = "desk", py::arg("overrides") = "{}",
      "Resolved training configuration as a JSON string.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command-line invocation in process. Returns (exit_code, stdout, stderr).");
}
