#include "camsim/awareness_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "camsim/error.hpp"

namespace camsim {

double irt_pmf(double p, std::int64_t k)
{
    if (k < 1) throw ConfigError(fmt::format("inter-reception time must be >= 1, got {}", k));
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probability must be in [0, 1]");
    return std::pow(1.0 - p, static_cast<double>(k - 1)) * p;
}

double nar_sum(double pdr, std::int64_t n)
{
    if (n < 1) throw ConfigError("N must be >= 1");
    double sum = 0.0;
    for (std::int64_t k = 1; k <= n; ++k) sum += irt_pmf(pdr, k);
    return sum;
}

double nar_closed(double pdr, double z) { return 1.0 - std::pow(1.0 - pdr, z); }

nlohmann::json to_json(const AwarenessModel& m)
{
    return {{"Z", m.z}, {"fit_error", m.fit_error}, {"n_bins", m.n_bins}, {"weights_mode", m.weights_mode},
            {"Z_low", m.z_low}, {"Z_high", m.z_high}};
}

double fit_objective(std::span<const FitPair> pairs, double z)
{
    double num = 0.0, den = 0.0;
    for (const auto& p : pairs) {
        const double pdr = std::clamp(p.pdr, 1e-6, 1.0 - 1e-6);
        const double r = p.nar - nar_closed(pdr, z);
        num += p.weight * r * r;
        den += p.weight;
    }
    return den > 0.0 ? num / den : 0.0;
}

AwarenessModel fit_z(std::span<const FitPair> pairs, const FitOptions& options)
{
    std::size_t informative = 0;
    for (const auto& p : pairs) {
        if (!(p.pdr >= 0.0 && p.pdr <= 1.0) || !(p.nar >= 0.0 && p.nar <= 1.0))
            throw ConfigError("fit pairs must lie in [0, 1]");
        if (!(p.weight >= 0.0)) throw ConfigError("fit weights must be >= 0");
        if (p.pdr > 0.0 && p.pdr < 1.0 && p.weight > 0.0) ++informative;
    }
    if (informative == 0) throw ConfigError("Z is unidentifiable: no pair has 0 < pdr < 1");
    if (informative < 3) throw ConfigError(fmt::format("need at least 3 pairs with 0 < pdr < 1, got {}", informative));
    if (!(options.z_min > 0.0) || !(options.z_max > options.z_min)) throw ConfigError("bad Z search interval");

    auto f = [&](double z) { return fit_objective(pairs, z); };
    const auto steps = static_cast<std::size_t>(std::ceil((options.z_max - options.z_min) / options.grid_step - 1e-9));
    std::vector<double> grid;
    for (std::size_t i = 0; i <= steps; ++i) grid.push_back(std::min(options.z_min + static_cast<double>(i) * options.grid_step, options.z_max));
    std::size_t best = 0;
    double best_f = f(grid[0]);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double v = f(grid[i]);
        if (v < best_f) {
            best = i;
            best_f = v;
        }
    }
    double lo = grid[best == 0 ? 0 : best - 1];
    double hi = grid[std::min(best + 1, grid.size() - 1)];
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = hi - kInvPhi * (hi - lo);
    double x2 = lo + kInvPhi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > options.tolerance) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kInvPhi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kInvPhi * (hi - lo);
            f2 = f(x2);
        }
    }
    double z = 0.5 * (lo + hi);
    double fz = f(z);
    if (best_f < fz) {
        z = grid[best];
        fz = best_f;
    }
    AwarenessModel m;
    m.z = z;
    m.fit_error = fz;
    m.n_bins = pairs.size();
    return m;
}

BinnedSeries rebin(const BinnedSeries& series, double width_m)
{
    if (!(width_m > 0.0)) throw ConfigError("bin width must be > 0");
    std::map<std::size_t, std::vector<const Bin*>> groups;
    for (const auto& b : series.bins) groups[bin_index(b.center_m, width_m)].push_back(&b);
    BinnedSeries out;
    out.metric = series.metric;
    out.bin_width_m = width_m;
    out.window_s = series.window_s;
    out.min_samples = series.min_samples;
    for (const auto& [idx, bins] : groups) {
        Bin c;
        c.center_m = bin_center(idx, width_m);
        double wsum = 0.0, msum = 0.0, ssum = 0.0;
        for (const Bin* b : bins) {
            const double w = static_cast<double>(b->sample_count);
            wsum += w;
            msum += w * b->mean;
            ssum += w * b->std;
            c.sample_count += b->sample_count;
        }
        if (wsum > 0.0) {
            c.mean = msum / wsum;
            c.std = ssum / wsum;
        }
        c.excluded = c.sample_count < out.min_samples;
        out.bins.push_back(c);
    }
    return out;
}

std::vector<FitPair> fit_pairs(const BinnedSeries& pdr, const BinnedSeries& nar, const std::string& weights_mode)
{
    if (weights_mode != "samples" && weights_mode != "uniform")
        throw ConfigError(fmt::format("unknown weights mode '{}'", weights_mode));
    const BinnedSeries coarse =
        std::abs(pdr.bin_width_m - nar.bin_width_m) < 1e-9 ? pdr : rebin(pdr, nar.bin_width_m);
    std::vector<FitPair> out;
    for (const auto& n : nar.bins) {
        if (n.excluded) continue;
        const Bin* p = coarse.find(n.center_m);
        if (!p || p->excluded) continue;
        out.push_back({p->mean, n.mean, weights_mode == "samples" ? static_cast<double>(n.sample_count) : 1.0});
    }
    return out;
}

BinnedSeries model_series(const BinnedSeries& pdr, double z)
{
    BinnedSeries out;
    out.metric = Metric::NAR;
    out.bin_width_m = pdr.bin_width_m;
    out.min_samples = pdr.min_samples;
    for (const auto& b : pdr.bins) {
        if (b.excluded) continue;
        Bin m;
        m.center_m = b.center_m;
        m.mean = nar_closed(b.mean, z);
        m.sample_count = b.sample_count;
        out.bins.push_back(m);
    }
    return out;
}

NarBounds nar_bounds(const BinnedSeries& pdr, double z_low, double z_high)
{
    return {model_series(pdr, z_low), model_series(pdr, z_high)};
}

ValidationReport validate_model(const BinnedSeries& measured, const BinnedSeries& model)
{
    const auto a = measured.included();
    const auto b = model.included();
    if (a.size() != b.size()) throw ConfigError(fmt::format("bin mismatch: {} measured vs {} model bins", a.size(), b.size()));
    ValidationReport r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i].center_m - b[i].center_m) > 1e-6)
            throw ConfigError(fmt::format("bin mismatch at {} m vs {} m", a[i].center_m, b[i].center_m));
        r.centers.push_back(a[i].center_m);
        r.abs_diff.push_back(std::abs(a[i].mean - b[i].mean));
    }
    if (r.abs_diff.empty()) return r;
    const double n = static_cast<double>(r.abs_diff.size());
    double sum = 0.0;
    for (double d : r.abs_diff) sum += d;
    r.mean = sum / n;
    if (r.abs_diff.size() > 1) {
        double ss = 0.0;
        for (double d : r.abs_diff) ss += (d - r.mean) * (d - r.mean);
        r.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return r;
}

nlohmann::json to_json(const ValidationReport& r)
{
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t i = 0; i < r.centers.size(); ++i) bins.push_back({{"bin_center_m", r.centers[i]}, {"abs_diff", r.abs_diff[i]}});
    return {{"mean_abs_diff", r.mean}, {"standard_error", r.standard_error}, {"n_bins", r.centers.size()}, {"bins", bins}};
}

}  // namespace camsim
