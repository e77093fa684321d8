#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "camsim/metrics.hpp"

namespace camsim {

/// P(IRT = k) = (1 - p)^(k - 1) * p.
double irt_pmf(double p, std::int64_t k);

/// Sum_{k=1..N} irt_pmf(pdr, k).
double nar_sum(double pdr, std::int64_t n);

/// 1 - (1 - pdr)^Z.
double nar_closed(double pdr, double z);

struct FitPair {
    double pdr = 0.0;
    double nar = 0.0;
    double weight = 1.0;
};

struct AwarenessModel {
    double z = 0.0;
    /// Weighted mean squared residual at z.
    double fit_error = 0.0;
    std::size_t n_bins = 0;
    std::string weights_mode = "samples";
    double z_low = 2.0;
    double z_high = 8.0;
};

nlohmann::json to_json(const AwarenessModel& m);

struct FitOptions {
    double z_min = 0.5;
    double z_max = 20.0;
    double grid_step = 0.5;
    double tolerance = 1e-7;
};

/// Weighted least-squares Z over [z_min, z_max]: a coarse grid brackets the
/// minimum, golden-section search refines it.
AwarenessModel fit_z(std::span<const FitPair> pairs, const FitOptions& options = {});

/// The fit objective: weighted mean of squared residuals.
double fit_objective(std::span<const FitPair> pairs, double z);

/// Pairs PDR and NAR bins with equal centers. PDR bins finer than the NAR bins
/// are merged first, weighted by their sample counts. weights_mode is
/// "samples" (NAR bin sample counts) or "uniform".
std::vector<FitPair> fit_pairs(const BinnedSeries& pdr, const BinnedSeries& nar, const std::string& weights_mode = "samples");

/// PDR series re-binned to `width_m`, each coarse bin the sample-weighted mean of its fine bins.
BinnedSeries rebin(const BinnedSeries& series, double width_m);

/// Model curve nar_closed(pdr_bin, z) on the PDR bin grid.
BinnedSeries model_series(const BinnedSeries& pdr, double z);

struct NarBounds {
    BinnedSeries lower;  // Z = 2
    BinnedSeries upper;  // Z = 8
};
NarBounds nar_bounds(const BinnedSeries& pdr, double z_low = 2.0, double z_high = 8.0);

struct ValidationReport {
    std::vector<double> centers;
    std::vector<double> abs_diff;
    double mean = 0.0;
    /// Sample std-dev of the differences over sqrt(bins).
    double standard_error = 0.0;
};

/// Bin-wise |measured - model|; both series must have the same bin centers.
ValidationReport validate_model(const BinnedSeries& measured, const BinnedSeries& model);

nlohmann::json to_json(const ValidationReport& r);

}  // namespace camsim
