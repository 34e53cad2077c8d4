#pragma once

namespace samg {

/// Mixing weights of the three decoder candidates. The third coefficient is
/// implicitly 1 - w1 - w2. No box constraint is imposed.
struct AdaptedWeights {
  double w1 = 1.0 / 3.0;
  double w2 = 1.0 / 3.0;

  double w3() const noexcept { return 1.0 - w1 - w2; }
  bool operator==(const AdaptedWeights&) const = default;
};

}  // namespace samg
