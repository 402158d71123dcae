#pragma once

// Random (model, batch) instances for checking backward() against central
// differences of the long double oracle loss.

#include <random>

#include "nmg/nn.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Instance {
  nmg::MLPModel model;
  std::vector<nmg::PatchRecord> records;
  std::vector<oracle::Sample> samples;
};

/// Redraws until every kink (hidden unit at 0, row sum at 1, zero row error)
/// is at least `margin` away, so a 1e-6 step never crosses one.
inline Instance random_instance(std::uint64_t seed, double margin = 1e-3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 1.5);
  std::uniform_int_distribution<int> width(3, 8), rows_d(2, 3), batch_d(2, 5);
  for (;;) {
    const std::size_t rows = static_cast<std::size_t>(rows_d(rng)), cols = static_cast<std::size_t>(rows_d(rng));
    const std::vector<std::size_t> sizes{static_cast<std::size_t>(width(rng)), static_cast<std::size_t>(width(rng)),
                                         static_cast<std::size_t>(width(rng)), rows * cols};
    Instance in;
    in.model = nmg::init_mlp(sizes, rng());
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      for (std::size_t o = 0; o < sizes[l + 1]; ++o) in.model.params[in.model.bias_offset(l) + o] = 0.3 * u(rng);
    const int nb = batch_d(rng);
    for (int b = 0; b < nb; ++b) {
      nmg::PatchRecord r;
      r.patch_size = rows;
      for (std::size_t i = 0; i < sizes.front(); ++i) r.features.push_back(u(rng));
      for (std::size_t i = 0; i < rows * cols; ++i) r.target.push_back(0.5 * u(rng));
      for (std::size_t k = 0; k < rows; ++k) r.aux_lumped.push_back(pos(rng));
      in.samples.push_back({r.features, r.target, r.aux_lumped});
      in.records.push_back(std::move(r));
    }
    oracle::Kinks k;
    const std::vector<long double> lp(in.model.params.begin(), in.model.params.end());
    oracle::mlp_loss(sizes, lp, in.samples, 0.5, 0.5, &k);
    if (k.min_pre > margin && k.min_sum > margin && k.min_norm > margin) return in;
  }
}

/// Largest |analytic - fd| / (|analytic| + 1e-8) over all parameters.
inline double max_relative_error(const Instance& in, const nmg::LossConfig& cfg) {
  std::vector<const nmg::PatchRecord*> batch;
  for (const auto& r : in.records) batch.push_back(&r);
  std::vector<double> g;
  nmg::backward(in.model, batch, cfg, g);
  double worst = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto fd = static_cast<double>(
        oracle::central_difference(in.model.layer_sizes, in.model.params, in.samples, cfg.alpha, cfg.beta, p));
    worst = std::max(worst, std::abs(g[p] - fd) / (std::abs(g[p]) + 1e-8));
  }
  return worst;
}

}  // namespace gradcheck
