#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxup/rng.hpp"
#include "maxup/tensor.hpp"

namespace maxup {

enum class AugmentKind { identity, gaussian, cutout };

/// Conditional perturbation distribution P(.|x).
///  - gaussian: x + sigma * z, z standard normal per coordinate.
///  - cutout: x viewed as a height x width grid (0 means square, inferred from
///    the input size); one square patch of side round(sqrt(patch_fraction) *
///    min(h, w)), clipped to [1, min(h, w)], placed uniformly inside the grid,
///    is set to fill_value.
struct AugmentationSpec {
  AugmentKind kind = AugmentKind::identity;
  double sigma = 0.0;
  double patch_fraction = 0.25;
  double fill_value = 0.0;
  std::size_t height = 0;
  std::size_t width = 0;

  static AugmentationSpec identity() { return {}; }
  static AugmentationSpec gaussian(double sigma) {
    AugmentationSpec s;
    s.kind = AugmentKind::gaussian;
    s.sigma = sigma;
    return s;
  }
  static AugmentationSpec cutout(double patch_fraction, double fill = 0.0) {
    AugmentationSpec s;
    s.kind = AugmentKind::cutout;
    s.patch_fraction = patch_fraction;
    s.fill_value = fill;
    return s;
  }
};

const char* to_string(AugmentKind k) noexcept;

/// Throws BadSpec for a nonpositive sigma or patch_fraction outside (0, 1].
void validate(const AugmentationSpec& spec);

/// Draws one augmented copy of x into `out` (resized as needed).
void sample_one(const AugmentationSpec& spec, std::span<const double> x, RngStream& rng,
                std::vector<double>& out);

/// m independent copies. Throws BadSpec on an invalid spec, m == 0, or a
/// cutout grid that does not match x.
std::vector<Tensor> sample(const AugmentationSpec& spec, const Tensor& x, std::size_t m,
                           RngStream& rng);

nlohmann::json to_json(const AugmentationSpec& spec);
/// Throws ConfigInvalid naming the offending key.
AugmentationSpec augmentation_from_json(const nlohmann::json& j);

}  // namespace maxup
