#include "camsim/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "camsim/csv.hpp"
#include "camsim/error.hpp"
#include "camsim/rng.hpp"

namespace camsim {

namespace {

constexpr double kEps = 1e-9;

std::size_t window_index(double t, double window_s)
{
    return static_cast<std::size_t>(std::floor(t / window_s + kEps));
}

std::optional<std::size_t> find_dense(const Scenario& scn, NodeId id)
{
    const auto& ids = scn.node_ids();
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids.begin());
}

void finish_bin(Bin& bin, std::uint64_t min_samples)
{
    const auto [m, s] = mean_std(bin.per_node);
    bin.mean = m;
    bin.std = s;
    bin.excluded = bin.sample_count < min_samples;
}

bool time_sorted(std::span<const LinkSample> log)
{
    return std::is_sorted(log.begin(), log.end(),
                          [](const LinkSample& a, const LinkSample& b) { return a.time_s < b.time_s; });
}

std::vector<LinkSample> time_ordered(std::span<const LinkSample> log)
{
    std::vector<LinkSample> copy(log.begin(), log.end());
    std::stable_sort(copy.begin(), copy.end(),
                     [](const LinkSample& a, const LinkSample& b) { return a.time_s < b.time_s; });
    return copy;
}

}  // namespace

std::string_view to_string(Metric m)
{
    switch (m) {
    case Metric::PDR: return "PDR";
    case Metric::NAR: return "NAR";
    case Metric::RNAR: return "RNAR";
    }
    return "?";
}

Metric parse_metric(std::string_view text)
{
    if (text == "PDR") return Metric::PDR;
    if (text == "NAR") return Metric::NAR;
    if (text == "RNAR") return Metric::RNAR;
    throw ConfigError(fmt::format("unknown metric '{}'", text));
}

std::vector<Bin> BinnedSeries::included() const
{
    std::vector<Bin> out;
    for (const auto& b : bins)
        if (!b.excluded) out.push_back(b);
    return out;
}

const Bin* BinnedSeries::find(double center_m) const
{
    for (const auto& b : bins)
        if (std::abs(b.center_m - center_m) < 1e-6) return &b;
    return nullptr;
}

std::size_t bin_index(double distance_m, double width_m)
{
    return static_cast<std::size_t>(std::floor(std::max(distance_m, 0.0) / width_m));
}

double bin_center(std::size_t index, double width_m) { return (static_cast<double>(index) + 0.5) * width_m; }

std::pair<double, double> mean_std(std::span<const double> values)
{
    if (values.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

// ---------------------------------------------------------------------------
// PDR

PdrAccumulator::PdrAccumulator(double bin_width_m) : width_(bin_width_m)
{
    if (!(bin_width_m > 0.0)) throw ConfigError("bin width must be > 0");
}

void PdrAccumulator::add(const LinkSample& s)
{
    auto& c = counts_[(static_cast<std::uint64_t>(s.tx_id) << 32) | bin_index(s.distance_m, width_)];
    ++c.first;
    if (s.received) ++c.second;
}

BinnedSeries PdrAccumulator::finish(std::uint64_t min_samples) const
{
    std::map<std::size_t, std::vector<std::pair<NodeId, std::pair<std::uint64_t, std::uint64_t>>>> by_bin;
    for (const auto& [key, c] : counts_)
        by_bin[static_cast<std::size_t>(key & 0xFFFFFFFFu)].emplace_back(static_cast<NodeId>(key >> 32), c);
    BinnedSeries series;
    series.metric = Metric::PDR;
    series.bin_width_m = width_;
    series.min_samples = min_samples;
    for (auto& [b, rows] : by_bin) {
        std::sort(rows.begin(), rows.end());
        Bin bin;
        bin.center_m = bin_center(b, width_);
        for (const auto& [tx, c] : rows) {
            bin.nodes.push_back(tx);
            bin.per_node.push_back(static_cast<double>(c.second) / static_cast<double>(c.first));
            bin.per_node_samples.push_back(c.first);
            bin.sample_count += c.first;
        }
        finish_bin(bin, min_samples);
        series.bins.push_back(std::move(bin));
    }
    return series;
}

BinnedSeries compute_pdr(std::span<const LinkSample> log, double bin_width_m, std::uint64_t min_samples)
{
    if (log.empty()) throw ConfigError("log is empty");
    PdrAccumulator acc(bin_width_m);
    acc.add(log);
    return acc.finish(min_samples);
}

// ---------------------------------------------------------------------------
// NAR

NeighborTruth::NeighborTruth(const Scenario& scenario, double bin_width_m, double window_s, double max_distance_m,
                             double equipped_fraction, std::uint64_t seed)
    : width_(bin_width_m), window_s_(window_s), node_count_(scenario.node_ids().size())
{
    if (!(bin_width_m > 0.0)) throw ConfigError("bin width must be > 0");
    if (!(window_s > 0.0)) throw ConfigError("window must be > 0");
    if (!(equipped_fraction >= 0.0 && equipped_fraction <= 1.0)) throw ConfigError("equipped fraction must be in [0, 1]");
    if (equipped_fraction < 1.0) {
        equipped_.resize(node_count_);
        for (std::size_t d = 0; d < node_count_; ++d)
            equipped_[d] = rng::uniform(rng::key(seed, rng::Stream::equipped, scenario.node_ids()[d]), 0) <= equipped_fraction;
    }
    const auto windows = static_cast<std::size_t>(std::floor(scenario.duration_s() / window_s + kEps));
    std::vector<std::uint32_t> dense;
    for (std::size_t w = 0; w < windows; ++w) {
        const double t = static_cast<double>(w) * window_s;
        const auto k = scenario.tick_of(t);
        if (!k) throw ConfigError(fmt::format("window start {} s is off the {} s tick grid", t, scenario.tick_s()));
        const auto nodes = scenario.at_tick(*k);
        dense.resize(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i)
            dense[i] = static_cast<std::uint32_t>(scenario.dense_index(nodes[i].node_id));
        receiver_start_.push_back(receivers_.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (!equipped(dense[i])) continue;
            receivers_.push_back(dense[i]);
            entry_start_.push_back(entries_.size());
            for (std::size_t j = 0; j < nodes.size(); ++j) {
                if (j == i) continue;
                const double d = distance(nodes[i].position, nodes[j].position);
                if (d > max_distance_m) continue;
                entries_.push_back({dense[j], static_cast<std::uint32_t>(bin_index(d, width_))});
            }
        }
    }
    entry_start_.push_back(entries_.size());
}

std::span<const std::uint32_t> NeighborTruth::receivers(std::size_t w) const
{
    const std::size_t begin = receiver_start_.at(w);
    const std::size_t end = w + 1 < receiver_start_.size() ? receiver_start_[w + 1] : receivers_.size();
    return {receivers_.data() + begin, end - begin};
}

std::span<const NeighborTruth::Entry> NeighborTruth::neighbors(std::size_t w, std::size_t receiver_slot) const
{
    const std::size_t slot = receiver_start_.at(w) + receiver_slot;
    return {entries_.data() + entry_start_[slot], entry_start_[slot + 1] - entry_start_[slot]};
}

std::optional<std::size_t> NeighborTruth::window_of(double t) const
{
    if (t < -kEps) return std::nullopt;
    const std::size_t w = window_index(t, window_s_);
    if (w >= window_count()) return std::nullopt;
    return w;
}

NarAccumulator::NarAccumulator(const NeighborTruth& truth, const Scenario& scenario)
    : truth_(&truth), scenario_(&scenario), n_(truth.node_count()), heard_(n_ * n_, 0), per_node_(n_)
{
}

void NarAccumulator::add(const LinkSample& s)
{
    if (!s.received) return;
    const auto w = truth_->window_of(s.time_s);
    if (!w) return;
    const auto rx = find_dense(*scenario_, s.rx_id);
    const auto tx = find_dense(*scenario_, s.tx_id);
    if (!rx || !tx || !truth_->equipped(*tx)) return;
    mark(*w, *rx, *tx);
}

void NarAccumulator::mark(std::size_t w, std::size_t rx, std::size_t tx)
{
    if (open_ && w < current_) throw ConfigError("receptions arrived out of window order");
    while (current_ < w) close_window();
    open_ = true;
    const std::size_t cell = rx * n_ + tx;
    if (!heard_[cell]) {
        heard_[cell] = 1;
        touched_.push_back(static_cast<std::uint32_t>(cell));
    }
}

void NarAccumulator::close_window()
{
    if (current_ < truth_->window_count()) {
        const auto receivers = truth_->receivers(current_);
        for (std::size_t slot = 0; slot < receivers.size(); ++slot) {
            const std::size_t rx = receivers[slot];
            const auto entries = truth_->neighbors(current_, slot);
            std::uint32_t max_bin = 0;
            for (const auto& e : entries) max_bin = std::max(max_bin, e.bin);
            if (nt_scratch_.size() <= max_bin) {
                nt_scratch_.resize(max_bin + 1, 0);
                nd_scratch_.resize(max_bin + 1, 0);
            }
            for (const auto& e : entries) {
                ++nt_scratch_[e.bin];
                if (heard_[rx * n_ + e.neighbor]) ++nd_scratch_[e.bin];
            }
            auto& acc = per_node_[rx];
            if (acc.size() <= max_bin) acc.resize(max_bin + 1, {0.0, 0});
            for (const auto& e : entries) {
                if (nt_scratch_[e.bin] == 0) continue;  // already folded in
                acc[e.bin].first += static_cast<double>(nd_scratch_[e.bin]) / static_cast<double>(nt_scratch_[e.bin]);
                ++acc[e.bin].second;
                nt_scratch_[e.bin] = 0;
                nd_scratch_[e.bin] = 0;
            }
        }
    }
    for (auto cell : touched_) heard_[cell] = 0;
    touched_.clear();
    ++current_;
}

void NarAccumulator::close_all()
{
    while (current_ < truth_->window_count()) close_window();
    open_ = true;
}

void NarAccumulator::merge(NarAccumulator& other)
{
    if (other.truth_ != truth_) throw ConfigError("cannot merge NAR results over different ground truth");
    close_all();
    other.close_all();
    for (std::size_t d = 0; d < n_; ++d) {
        auto& mine = per_node_[d];
        const auto& theirs = other.per_node_[d];
        if (mine.size() < theirs.size()) mine.resize(theirs.size(), {0.0, 0});
        for (std::size_t b = 0; b < theirs.size(); ++b) {
            mine[b].first += theirs[b].first;
            mine[b].second += theirs[b].second;
        }
    }
}

BinnedSeries NarAccumulator::finish(std::uint64_t min_samples)
{
    close_all();
    std::size_t max_bins = 0;
    for (const auto& acc : per_node_) max_bins = std::max(max_bins, acc.size());
    BinnedSeries series;
    series.metric = Metric::NAR;
    series.bin_width_m = truth_->bin_width_m();
    series.window_s = truth_->window_s();
    series.min_samples = min_samples;
    const auto& ids = scenario_->node_ids();
    for (std::size_t b = 0; b < max_bins; ++b) {
        Bin bin;
        bin.center_m = bin_center(b, series.bin_width_m);
        for (std::size_t d = 0; d < per_node_.size(); ++d) {
            if (per_node_[d].size() <= b || per_node_[d][b].second == 0) continue;
            const auto [sum, count] = per_node_[d][b];
            bin.nodes.push_back(ids[d]);
            bin.per_node.push_back(sum / static_cast<double>(count));
            bin.per_node_samples.push_back(count);
            bin.sample_count += count;
        }
        if (bin.nodes.empty()) continue;
        finish_bin(bin, min_samples);
        series.bins.push_back(std::move(bin));
    }
    return series;
}

BinnedSeries compute_nar(std::span<const LinkSample> log, const Scenario& scenario, double bin_width_m,
                         double window_s, std::uint64_t min_samples, double max_distance_m,
                         double equipped_fraction, std::uint64_t seed)
{
    const NeighborTruth truth(scenario, bin_width_m, window_s, max_distance_m, equipped_fraction, seed);
    NarAccumulator acc(truth, scenario);
    if (time_sorted(log)) {
        acc.add(log);
    } else {
        const auto sorted = time_ordered(log);
        acc.add(sorted);
    }
    return acc.finish(min_samples);
}

// ---------------------------------------------------------------------------
// RNAR

RnarAccumulator::RnarAccumulator(double window_s, std::optional<double> duration_s)
    : window_s_(window_s), duration_s_(duration_s)
{
    if (!(window_s > 0.0)) throw ConfigError("window must be > 0");
}

void RnarAccumulator::add(const LinkSample& s)
{
    if (!s.received) return;
    const std::size_t w = window_index(s.time_s, window_s_);
    if (duration_s_ && static_cast<double>(w + 1) * window_s_ > *duration_s_ + kEps) return;
    auto& heard = heard_[{w, s.rx_id}];
    auto [it, inserted] = heard.try_emplace(s.tx_id, s.time_s, s.distance_m);
    if (!inserted && s.time_s < it->second.first) it->second = {s.time_s, s.distance_m};
}

RnarResult RnarAccumulator::finish(double r_m, double profile_step_m) const
{
    if (!(r_m >= 0.0)) throw ConfigError("R must be >= 0");
    RnarResult out;
    out.r_m = r_m;
    out.window_s = window_s_;
    // rx -> per-window sorted distances
    std::map<NodeId, std::vector<std::vector<double>>> per_rx;
    double farthest = 0.0;
    for (const auto& [key, heard] : heard_) {
        std::vector<double> d;
        d.reserve(heard.size());
        for (const auto& [tx, td] : heard) d.push_back(td.second);
        std::sort(d.begin(), d.end());
        farthest = std::max(farthest, d.back());
        const auto n = d.size();
        const auto na = static_cast<std::uint64_t>(d.end() - std::upper_bound(d.begin(), d.end(), r_m));
        out.windows.push_back({key.second, key.first, na, n, static_cast<double>(na) / static_cast<double>(n)});
        per_rx[key.second].push_back(std::move(d));
    }
    std::sort(out.windows.begin(), out.windows.end(),
              [](const RnarWindow& a, const RnarWindow& b) { return std::tie(a.window, a.rx) < std::tie(b.window, b.rx); });
    if (per_rx.empty()) return out;
    const auto steps = static_cast<std::size_t>(std::floor(farthest / profile_step_m)) + 1;
    for (std::size_t s = 0; s <= steps; ++s) {
        const double r = static_cast<double>(s) * profile_step_m;
        std::vector<double> node_means;
        std::uint64_t windows = 0;
        for (const auto& [rx, lists] : per_rx) {
            double sum = 0.0;
            for (const auto& d : lists)
                sum += static_cast<double>(d.end() - std::upper_bound(d.begin(), d.end(), r)) / static_cast<double>(d.size());
            node_means.push_back(sum / static_cast<double>(lists.size()));
            windows += lists.size();
        }
        const auto [m, sd] = mean_std(node_means);
        out.profile.push_back({r, m, sd, windows});
    }
    return out;
}

RnarResult compute_rnar(std::span<const LinkSample> log, double r_m, double window_s, std::optional<double> duration_s)
{
    RnarAccumulator acc(window_s, duration_s);
    acc.add(log);
    return acc.finish(r_m);
}

// ---------------------------------------------------------------------------
// Ranges

RangeResult effective_range(const BinnedSeries& pdr, double threshold)
{
    RangeResult r{0.0, true};
    for (const auto& b : pdr.bins) {
        if (b.excluded) continue;
        if (b.mean < threshold) break;
        r = {b.center_m, false};
    }
    return r;
}

RangeResult max_range(const BinnedSeries& pdr)
{
    RangeResult r{0.0, true};
    for (const auto& b : pdr.bins)
        if (!b.excluded && b.mean > 0.0) r = {b.center_m, false};
    return r;
}

RangeResult nar_threshold_distance(const BinnedSeries& nar, double level) { return effective_range(nar, level); }

// ---------------------------------------------------------------------------
// Burst and IRT statistics

void BurstAccumulator::add(const LinkSample& s)
{
    auto& l = links_[(static_cast<std::uint64_t>(s.tx_id) << 32) | s.rx_id];
    if (l.n > 0) {
        l.ok_after += s.received ? 1 : 0;
        l.prev_ok += l.last ? 1 : 0;
        l.both_ok += (l.last && s.received) ? 1 : 0;
    }
    ++l.n;
    l.ok += s.received ? 1 : 0;
    l.last = s.received;
}

BurstStats BurstAccumulator::finish() const
{
    BurstStats out;
    std::uint64_t after = 0, ok_after = 0, prev_ok = 0, both = 0;
    for (const auto& [key, l] : links_) {
        if (l.ok == 0 || l.ok == l.n) continue;
        ++out.links;
        after += l.n - 1;
        ok_after += l.ok_after;
        prev_ok += l.prev_ok;
        both += l.both_ok;
    }
    out.transitions = after;
    if (after > 0) out.p_success = static_cast<double>(ok_after) / static_cast<double>(after);
    if (prev_ok > 0) out.p_success_after_success = static_cast<double>(both) / static_cast<double>(prev_ok);
    return out;
}

void IrtAccumulator::add(const LinkSample& s)
{
    auto& l = links_[(static_cast<std::uint64_t>(s.tx_id) << 32) | s.rx_id];
    if (s.received) {
        if (l.seen_success) ++hist_[l.since + 1];
        l.seen_success = true;
        l.since = 0;
    } else if (l.seen_success) {
        ++l.since;
    }
}

// ---------------------------------------------------------------------------
// Files

void write_series_csv(const std::filesystem::path& path, const BinnedSeries& series)
{
    std::string out = fmt::format("# metric={} bin_width_m={} window_s={} min_samples={}\n", to_string(series.metric),
                                  series.bin_width_m, series.window_s, series.min_samples);
    out += "bin_center_m,mean,std,n\n";
    for (const auto& b : series.bins)
        if (!b.excluded) out += fmt::format("{},{:.6f},{:.6f},{}\n", b.center_m, b.mean, b.std, b.sample_count);
    csv::write_atomic(path, out);
}

BinnedSeries read_series_csv(const std::filesystem::path& path)
{
    const std::string text = csv::read_file(path);
    const std::string source = path.string();
    BinnedSeries series;
    series.min_samples = 0;
    bool header = false;
    std::size_t line_no = 0;
    for (auto line : csv::lines(text)) {
        ++line_no;
        const auto t = csv::trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            for (auto tok : csv::split(t.substr(1), ' ')) {
                tok = csv::trim(tok);
                const auto eq = tok.find('=');
                if (eq == std::string_view::npos) continue;
                const auto k = tok.substr(0, eq);
                const auto v = tok.substr(eq + 1);
                if (k == "metric") {
                    try {
                        series.metric = parse_metric(v);
                    } catch (const ConfigError& e) {
                        throw ParseError(source, line_no, e.what());
                    }
                } else if (k == "bin_width_m") series.bin_width_m = csv::to_double(v, source, line_no);
                else if (k == "window_s") series.window_s = csv::to_double(v, source, line_no);
                else if (k == "min_samples") series.min_samples = static_cast<std::uint64_t>(csv::to_int(v, source, line_no));
            }
            continue;
        }
        if (!header) {
            if (t != "bin_center_m,mean,std,n") throw ParseError(source, line_no, "expected header 'bin_center_m,mean,std,n'");
            header = true;
            continue;
        }
        const auto f = csv::split(t, ',');
        if (f.size() != 4) throw ParseError(source, line_no, fmt::format("expected 4 fields, got {}", f.size()));
        Bin b;
        b.center_m = csv::to_double(f[0], source, line_no);
        b.mean = csv::to_double(f[1], source, line_no);
        b.std = csv::to_double(f[2], source, line_no);
        const auto n = csv::to_int(f[3], source, line_no);
        if (n < 0) throw ParseError(source, line_no, "negative sample count");
        if (b.mean < 0.0 || b.mean > 1.0) throw ParseError(source, line_no, "metric value outside [0, 1]");
        b.sample_count = static_cast<std::uint64_t>(n);
        if (!series.bins.empty() && b.center_m <= series.bins.back().center_m)
            throw ParseError(source, line_no, "bin centers must increase");
        series.bins.push_back(b);
    }
    if (!header) throw ParseError(source, line_no, "missing header");
    return series;
}

void write_rnar_csv(const std::filesystem::path& path, const RnarResult& result)
{
    std::string out = fmt::format("# metric=RNAR window_s={} profile_step_m=50\n", result.window_s);
    out += "r_m,mean,std,n\n";
    for (const auto& p : result.profile) out += fmt::format("{},{:.6f},{:.6f},{}\n", p.r_m, p.mean, p.std, p.n);
    csv::write_atomic(path, out);
}

void write_series_plot(const std::filesystem::path& path, std::span<const PlotCurve> curves, std::string_view ylabel,
                       std::string_view output_png)
{
    std::string out;
    out += "set terminal pngcairo size 900,600 font ',11'\n";
    out += fmt::format("set output '{}'\n", output_png);
    out += "set datafile separator ','\n";
    out += "set xlabel 'Distance (m)'\n";
    out += fmt::format("set ylabel '{}'\n", ylabel);
    out += "set yrange [0:1.05]\nset grid\nset key bottom left\n";
    out += "plot ";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& c = curves[i];
        if (i) out += ", \\\n     ";
        if (c.error_bars)
            out += fmt::format("'{}' every ::1 using 1:2:3 with yerrorlines pt 7 ps 0.6 title '{}'", c.csv_file, c.title);
        else
            out += fmt::format("'{}' every ::1 using 1:2 with lines lw 2 title '{}'", c.csv_file, c.title);
    }
    out += "\n";
    csv::write_atomic(path, out);
}

}  // namespace camsim
