#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frito/freq_mask.hpp"

namespace frito {

struct BenchConfig {
    FreqMaskSpec spec{12, 50, 1, 6, 1};
    std::size_t d = 256;
    std::size_t heads = 8;
    std::size_t repeats = 7;   // timed runs per variant
    std::size_t warmups = 2;   // discarded runs per variant
    unsigned threads = 1;      // > 1 adds a parallel sparse variant
    std::uint64_t seed = 42;

    void validate() const;
};

struct BenchVariant {
    std::string name;
    bool skipped = false;
    std::string skip_reason;
    double median_ms = 0.0, p10_ms = 0.0, p90_ms = 0.0;
    // Score-buffer scalars for one full forward pass (all heads), analytic and
    // as measured by the allocation counter; they must agree exactly.
    std::uint64_t score_scalars_analytic = 0;
    std::uint64_t score_scalars_counter = 0;
    std::uint64_t score_scalars_per_head = 0;
    std::uint64_t macs = 0;
    // Deltas vs the vanilla baseline, computed from medians: positive speed
    // delta = faster than vanilla, negative memory delta = smaller buffers.
    double speed_delta = 0.0;
    double memory_delta = 0.0;
};

struct BenchReport {
    BenchConfig cfg;
    std::size_t t = 0;
    std::vector<BenchVariant> variants;
};

// Times attention forwards for vanilla (unmasked), masked-full, and sparse
// execution on the same seeded input and parameters. Timed rounds interleave
// the variants with a rotating start, and each sample is the faster of two
// back-to-back passes, so background load skews no single variant. Sparse
// needs v = 1; impossible variants are reported as skipped rather than
// failing.
BenchReport run_bench(const BenchConfig& cfg);

std::string emit_report_text(const BenchReport& report);
std::string emit_report_jsonl(const BenchReport& report);

}  // namespace frito
