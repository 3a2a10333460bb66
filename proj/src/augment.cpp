#include "maxup/augment.hpp"

#include <algorithm>
#include <cmath>

#include "maxup/error.hpp"

namespace maxup {

const char* to_string(AugmentKind k) noexcept {
  switch (k) {
    case AugmentKind::identity: return "identity";
    case AugmentKind::gaussian: return "gaussian";
    case AugmentKind::cutout: return "cutout";
  }
  return "?";
}

void validate(const AugmentationSpec& spec) {
  if (spec.kind == AugmentKind::gaussian && !(spec.sigma > 0.0 && std::isfinite(spec.sigma))) {
    throw BadSpec("gaussian augmentation needs sigma > 0, got " + std::to_string(spec.sigma));
  }
  if (spec.kind == AugmentKind::cutout &&
      !(spec.patch_fraction > 0.0 && spec.patch_fraction <= 1.0)) {
    throw BadSpec("cutout patch_fraction must lie in (0, 1], got " +
                  std::to_string(spec.patch_fraction));
  }
}

namespace {

std::pair<std::size_t, std::size_t> grid_of(const AugmentationSpec& spec, std::size_t n) {
  std::size_t h = spec.height, w = spec.width;
  if (h == 0 && w == 0) {
    h = w = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  } else if (h == 0) {
    h = w == 0 ? 0 : n / w;
  } else if (w == 0) {
    w = n / h;
  }
  if (h * w != n || n == 0) {
    throw BadSpec("cutout grid " + std::to_string(h) + "x" + std::to_string(w) +
                  " does not match input of size " + std::to_string(n));
  }
  return {h, w};
}

}  // namespace

void sample_one(const AugmentationSpec& spec, std::span<const double> x, RngStream& rng,
                std::vector<double>& out) {
  out.assign(x.begin(), x.end());
  switch (spec.kind) {
    case AugmentKind::identity:
      return;
    case AugmentKind::gaussian:
      for (double& v : out) v += spec.sigma * rng.normal();
      return;
    case AugmentKind::cutout: {
      const auto [h, w] = grid_of(spec, x.size());
      const auto side = static_cast<std::size_t>(std::clamp<long long>(
          std::llround(std::sqrt(spec.patch_fraction) * static_cast<double>(std::min(h, w))), 1,
          static_cast<long long>(std::min(h, w))));
      const std::size_t top = rng.uniform_index(h - side + 1);
      const std::size_t left = rng.uniform_index(w - side + 1);
      for (std::size_t r = top; r < top + side; ++r) {
        for (std::size_t c = left; c < left + side; ++c) out[r * w + c] = spec.fill_value;
      }
      return;
    }
  }
}

std::vector<Tensor> sample(const AugmentationSpec& spec, const Tensor& x, std::size_t m,
                           RngStream& rng) {
  validate(spec);
  if (m == 0) throw BadSpec("augmentation needs m >= 1");
  std::vector<Tensor> copies;
  copies.reserve(m);
  std::vector<double> buf;
  for (std::size_t i = 0; i < m; ++i) {
    sample_one(spec, x.values(), rng, buf);
    copies.emplace_back(x.shape(), buf);
  }
  return copies;
}

nlohmann::json to_json(const AugmentationSpec& spec) {
  nlohmann::json j{{"kind", to_string(spec.kind)}};
  if (spec.kind == AugmentKind::gaussian) j["sigma"] = spec.sigma;
  if (spec.kind == AugmentKind::cutout) {
    j["patch_fraction"] = spec.patch_fraction;
    j["fill_value"] = spec.fill_value;
    j["height"] = spec.height;
    j["width"] = spec.width;
  }
  return j;
}

AugmentationSpec augmentation_from_json(const nlohmann::json& j) {
  AugmentationSpec spec;
  const std::string kind = j.value("kind", std::string("identity"));
  if (kind == "identity") {
    spec.kind = AugmentKind::identity;
  } else if (kind == "gaussian") {
    spec.kind = AugmentKind::gaussian;
  } else if (kind == "cutout") {
    spec.kind = AugmentKind::cutout;
  } else {
    throw ConfigInvalid("augment.kind: unknown augmentation '" + kind + "'");
  }
  try {
    spec.sigma = j.value("sigma", spec.sigma);
    spec.patch_fraction = j.value("patch_fraction", spec.patch_fraction);
    spec.fill_value = j.value("fill_value", spec.fill_value);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("augment: ") + e.what());
  }
  try {
    validate(spec);
  } catch (const BadSpec& e) {
    throw ConfigInvalid(std::string("augment: ") + e.what());
  }
  return spec;
}

}  // namespace maxup
