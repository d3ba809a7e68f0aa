#pragma once

#include <cmath>
#include <vector>

#include "dpm/model.hpp"
#include "dpm/oracle.hpp"
#include "dpm/rng.hpp"

namespace testing {

inline dpm::PanelUnit make_unit(const dpm::ModelSpec& spec, std::vector<int> y0, std::vector<int> y,
                                std::vector<double> x) {
  dpm::PanelUnit u;
  u.y0 = std::move(y0);
  u.y = std::move(y);
  u.x = std::move(x);
  if (u.x.empty()) u.x.assign(static_cast<size_t>(spec.T) * spec.layers() * spec.Kx, 0.0);
  return u;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline dpm::Instance draw(const dpm::ModelSpec& spec, int i, std::uint64_t seed = 11) {
  return dpm::random_instance(spec, dpm::hash_key(seed, static_cast<std::uint64_t>(i), 0x7e57));
}

} // namespace testing
