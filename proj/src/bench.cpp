#include "frito/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "frito/attention.hpp"

namespace frito {

void BenchConfig::validate() const {
    spec.validate();
    if (d == 0 || heads == 0 || d % heads != 0) {
        throw ConfigError("bench needs heads dividing width d");
    }
    if (repeats < 5) throw ConfigError("bench needs at least 5 repeats");
    if (warmups < 2) throw ConfigError("bench needs at least 2 warmups");
    if (threads == 0) throw ConfigError("bench thread count must be positive");
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t idx = static_cast<std::size_t>(
        std::llround(q * static_cast<double>(sorted.size() - 1)));
    return sorted[idx];
}

double time_once(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
    cfg.validate();
    BenchReport report;
    report.cfg = cfg;
    report.t = cfg.spec.seq_len();

    Rng rng(cfg.seed);
    const auto params = AttentionParams<float>::init(cfg.d, cfg.heads, rng, 0.02);
    const auto x = Tensor<float>::random_normal({report.t, cfg.d}, rng, 1.0);
    const AttentionMask mask = build_mask(cfg.spec);
    const ScoreBufferCost cost = score_buffer_cost(cfg.spec, cfg.d);

    struct Setup {
        std::string name;
        std::function<void()> fn;
        std::uint64_t analytic_per_head;
        std::uint64_t macs;
        bool possible;
        std::string why_not;
    };
    std::vector<Setup> setups;
    setups.push_back({"vanilla", [&] { attn_full(x, params, nullptr); }, cost.full_scores,
                      cost.macs_full, true, ""});
    setups.push_back({"masked_full", [&] { attn_full(x, params, &mask); }, cost.full_scores,
                      cost.macs_full, true, ""});
    const bool sparse_ok = cfg.spec.v == 1;
    const std::string sparse_why = sparse_ok ? "" : "sparse execution requires v = 1";
    setups.push_back({"sparse", [&] { attn_sparse_frito(x, params, cfg.spec, 1); },
                      sparse_ok ? *cost.sparse_scores : 0, sparse_ok ? *cost.macs_sparse : 0,
                      sparse_ok, sparse_why});
    if (cfg.threads > 1) {
        setups.push_back({"sparse_parallel",
                          [&] { attn_sparse_frito(x, params, cfg.spec, cfg.threads); },
                          sparse_ok ? *cost.sparse_scores : 0, sparse_ok ? *cost.macs_sparse : 0,
                          sparse_ok, sparse_why});
    }

    // Counted run per feasible variant, outside the timing set.
    std::vector<std::vector<double>> samples(setups.size());
    for (std::size_t i = 0; i < setups.size(); ++i) {
        BenchVariant v;
        v.name = setups[i].name;
        if (!setups[i].possible) {
            v.skipped = true;
            v.skip_reason = setups[i].why_not;
        } else {
            try {
                score_counter_reset();
                setups[i].fn();
                v.score_scalars_counter = score_counter_scalars();
                v.score_scalars_per_head = setups[i].analytic_per_head;
                v.score_scalars_analytic =
                    static_cast<std::uint64_t>(setups[i].analytic_per_head) * cfg.heads;
                v.macs = setups[i].macs;
                samples[i].reserve(cfg.repeats);
            } catch (const std::exception& e) {
                v.skipped = true;
                v.skip_reason = e.what();
            }
        }
        report.variants.push_back(std::move(v));
    }

    // Warmup and timed rounds interleave the variants so slow drift (clock
    // scaling, background load) lands on every variant, not on whichever ran
    // last. The order inside each round is shuffled with a seeded generator:
    // a fixed cycle can phase-lock with periodic interference (scheduler
    // quota windows, background daemons) and hand one variant the quiet
    // slots. Each sample keeps the faster of two back-to-back passes;
    // preemption only ever adds time, so the minimum is the better estimate
    // of the undisturbed cost. Medians then compare like against like.
    std::vector<std::size_t> order(setups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    for (std::size_t round = 0; round < cfg.warmups; ++round) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (const std::size_t i : order) {
            if (!report.variants[i].skipped) setups[i].fn();
        }
    }
    for (std::size_t round = 0; round < cfg.repeats; ++round) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (const std::size_t i : order) {
            if (report.variants[i].skipped) continue;
            const double first = time_once(setups[i].fn);
            const double second = time_once(setups[i].fn);
            samples[i].push_back(std::min(first, second));
        }
    }

    double vanilla_median = 0.0;
    std::uint64_t vanilla_scalars = 0;
    for (std::size_t i = 0; i < setups.size(); ++i) {
        BenchVariant& v = report.variants[i];
        if (v.skipped) continue;
        std::sort(samples[i].begin(), samples[i].end());
        v.median_ms = quantile_sorted(samples[i], 0.5);
        v.p10_ms = quantile_sorted(samples[i], 0.1);
        v.p90_ms = quantile_sorted(samples[i], 0.9);
        if (v.name == "vanilla") {
            vanilla_median = v.median_ms;
            vanilla_scalars = v.score_scalars_analytic;
        }
        if (vanilla_median > 0.0) v.speed_delta = vanilla_median / v.median_ms - 1.0;
        if (vanilla_scalars > 0) {
            v.memory_delta = static_cast<double>(v.score_scalars_analytic) / vanilla_scalars - 1.0;
        }
    }
    return report;
}

namespace {

std::string pct(double delta) {
    std::ostringstream os;
    os << std::showpos << std::fixed << std::setprecision(1) << delta * 100.0 << "%";
    return os.str();
}

}  // namespace

std::string emit_report_text(const BenchReport& report) {
    std::ostringstream os;
    const auto& c = report.cfg;
    os << "attention benchmark: t=" << report.t << " d=" << c.d << " heads=" << c.heads
       << " h=" << c.spec.h << " w=" << c.spec.w << " k=" << c.spec.k << " r=" << c.spec.r
       << " v=" << c.spec.v << "\n";
    os << "protocol: " << c.repeats << " repeats after " << c.warmups
       << " warmups, interleaved, min of 2 passes per sample, medians reported, seed=" << c.seed
       << ", threads=" << c.threads << "\n";
    os << "deltas vs vanilla medians: speed > 0 is faster, memory < 0 is smaller\n";
    os << std::left << std::setw(16) << "method" << std::right << std::setw(12) << "median_ms"
       << std::setw(12) << "p10_ms" << std::setw(12) << "p90_ms" << std::setw(10) << "speed"
       << std::setw(16) << "scores/head" << std::setw(10) << "memory" << std::setw(14) << "macs"
       << "\n";
    for (const auto& v : report.variants) {
        if (v.skipped) {
            os << std::left << std::setw(16) << v.name << "skipped: " << v.skip_reason << "\n";
            continue;
        }
        os << std::left << std::setw(16) << v.name << std::right << std::fixed
           << std::setprecision(3) << std::setw(12) << v.median_ms << std::setw(12) << v.p10_ms
           << std::setw(12) << v.p90_ms << std::setw(10) << pct(v.speed_delta) << std::setw(16)
           << v.score_scalars_per_head << std::setw(10) << pct(v.memory_delta) << std::setw(14)
           << v.macs << "\n";
    }
    return os.str();
}

std::string emit_report_jsonl(const BenchReport& report) {
    std::ostringstream os;
    const auto& c = report.cfg;
    nlohmann::json header = {
        {"record", "config"}, {"t", report.t},       {"d", c.d},
        {"heads", c.heads},   {"h", c.spec.h},       {"w", c.spec.w},
        {"k", c.spec.k},      {"r", c.spec.r},       {"v", c.spec.v},
        {"repeats", c.repeats}, {"warmups", c.warmups}, {"threads", c.threads},
        {"seed", c.seed},
    };
    os << header.dump() << "\n";
    for (const auto& v : report.variants) {
        nlohmann::json j = {{"record", "variant"}, {"method", v.name}, {"skipped", v.skipped}};
        if (v.skipped) {
            j["skip_reason"] = v.skip_reason;
        } else {
            j["median_ms"] = v.median_ms;
            j["p10_ms"] = v.p10_ms;
            j["p90_ms"] = v.p90_ms;
            j["speed_delta"] = v.speed_delta;
            j["memory_delta"] = v.memory_delta;
            j["score_scalars_analytic"] = v.score_scalars_analytic;
            j["score_scalars_counter"] = v.score_scalars_counter;
            j["score_scalars_per_head"] = v.score_scalars_per_head;
            j["macs"] = v.macs;
        }
        os << j.dump() << "\n";
    }
    return os.str();
}

}  // namespace frito
