#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "frito/model.hpp"
#include "frito/rng.hpp"

namespace frito {

// Synthetic spectrogram task: each class carries its energy in a private
// contiguous mel band, and each domain recolors the whole spectrogram with a
// spectral tilt plus coarse-band gains. The class signal is purely positional
// along frequency while domains only rescale, so accuracy on unseen domains
// measures whether a model keyed on band location rather than absolute level.
struct SynthTaskSpec {
    std::size_t classes = 4;
    std::size_t domains = 3;       // ids 0..domains-1
    std::size_t train_domain = 0;  // identity coloration; the only domain seen in training
    std::size_t mels = 32;
    std::size_t frames = 32;
    double signal = 1.0;
    double noise = 0.1;
    std::uint64_t seed = 7;  // fixes the per-domain colorations

    void validate() const {
        if (classes < 2) throw ConfigError("task needs at least 2 classes");
        if (domains < 1) throw ConfigError("task needs at least 1 domain");
        if (train_domain >= domains) throw ConfigError("train domain id out of range");
        if (mels < classes) throw ConfigError("need at least one mel row per class");
        if (frames == 0) throw ConfigError("frames must be positive");
        if (signal <= 0.0) throw ConfigError("signal level must be positive");
        if (noise < 0.0) throw ConfigError("noise level must be non-negative");
    }
};

// Mel rows [lo, hi) owned by a class.
inline std::pair<std::size_t, std::size_t> class_band(const SynthTaskSpec& task, std::size_t cls) {
    if (cls >= task.classes) throw ConfigError("class id " + std::to_string(cls) + " out of range");
    return {cls * task.mels / task.classes, (cls + 1) * task.mels / task.classes};
}

namespace detail {

// Per-mel multiplicative coloration of one domain: exp-tilt across frequency
// times eight coarse-band gains. The train domain is the identity so its
// samples are the uncolored reference distribution.
inline std::vector<double> domain_gain(const SynthTaskSpec& task, std::size_t dom) {
    if (dom >= task.domains) throw ConfigError("domain id " + std::to_string(dom) + " out of range");
    std::vector<double> g(task.mels, 1.0);
    if (dom == task.train_domain) return g;
    Rng rng(task.seed + 0x9E3779B97F4A7C15ULL * (dom + 1));
    const double tilt = 1.2 * rng.normal();
    constexpr std::size_t bands = 8;
    double band_gain[bands];
    for (auto& b : band_gain) b = std::exp(0.5 * rng.normal());
    for (std::size_t m = 0; m < task.mels; ++m) {
        const double x = task.mels > 1 ? static_cast<double>(m) / (task.mels - 1) - 0.5 : 0.0;
        g[m] = std::exp(tilt * x) * band_gain[std::min(bands - 1, m * bands / task.mels)];
    }
    return g;
}

}  // namespace detail

// One mels x frames spectrogram: uniform floor noise everywhere, class energy
// in the class band, then the domain coloration. Consumes rng draws in a fixed
// order, so a seeded rng makes the sample stream reproducible.
template <class T>
Tensor<T> synth_sample(const SynthTaskSpec& task, std::size_t cls, std::size_t dom, Rng& rng) {
    task.validate();
    const auto [lo, hi] = class_band(task, cls);
    const std::vector<double> gain = detail::domain_gain(task, dom);
    Tensor<T> out({task.mels, task.frames});
    for (std::size_t m = 0; m < task.mels; ++m) {
        for (std::size_t f = 0; f < task.frames; ++f) {
            double e = task.noise * rng.uniform();
            if (m >= lo && m < hi) e += task.signal * (0.6 + 0.4 * rng.uniform());
            out.at(m, f) = static_cast<T>(e * gain[m]);
        }
    }
    return out;
}

template <class T>
struct Sample {
    Tensor<T> gram;
    std::size_t label = 0;
};

// Labels cycle through the classes so every class is present; content comes
// from the rng stream.
template <class T>
std::vector<Sample<T>> make_eval_set(const SynthTaskSpec& task, std::size_t dom, std::size_t count,
                                     Rng& rng) {
    std::vector<Sample<T>> set;
    set.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t cls = i % task.classes;
        set.push_back({synth_sample<T>(task, cls, dom, rng), cls});
    }
    return set;
}

struct EvalResult {
    double accuracy = 0.0;
    std::vector<std::size_t> correct_per_class, count_per_class;
    std::vector<std::size_t> predictions;

    double class_accuracy(std::size_t c) const {
        return count_per_class[c] == 0
                   ? 0.0
                   : static_cast<double>(correct_per_class[c]) / count_per_class[c];
    }
};

template <class T>
EvalResult evaluate(const ModelParams<T>& p, const std::vector<Sample<T>>& set, AttnExec exec,
                    const AttentionMask* mask = nullptr) {
    EvalResult r;
    r.correct_per_class.assign(p.cfg.classes, 0);
    r.count_per_class.assign(p.cfg.classes, 0);
    std::size_t correct = 0;
    for (const auto& s : set) {
        if (s.label >= p.cfg.classes) {
            throw ConfigError("eval sample label " + std::to_string(s.label) +
                              " out of range for a " + std::to_string(p.cfg.classes) +
                              "-class model");
        }
        const Tensor<T> l = forward(p, s.gram, exec, mask);
        const std::size_t pred = argmax(l);
        r.predictions.push_back(pred);
        ++r.count_per_class.at(s.label);
        if (pred == s.label) {
            ++correct;
            ++r.correct_per_class[s.label];
        }
    }
    r.accuracy = set.empty() ? 0.0 : static_cast<double>(correct) / set.size();
    return r;
}

template <class T>
EvalResult evaluate(const ModelParams<T>& p, const SynthTaskSpec& task, std::size_t dom,
                    AttnExec exec, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    return evaluate(p, make_eval_set<T>(task, dom, count, rng), exec);
}

struct TrainConfig {
    std::size_t steps = 300;
    std::size_t batch = 8;
    double lr = 1e-3;  // lr = 0 is legal and leaves parameters untouched
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;        // training sample stream
    std::uint64_t eval_seed = 1234;  // eval sets, disjoint stream by construction
    std::size_t eval_every = 50;   // 0 = final eval only
    std::size_t eval_samples = 64;  // per domain

    void validate() const {
        if (steps == 0 || batch == 0) throw ConfigError("steps and batch must be positive");
        if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("Adam betas must lie in [0, 1)");
        }
        if (eps <= 0.0) throw ConfigError("Adam eps must be positive");
        if (eval_samples == 0) throw ConfigError("eval_samples must be positive");
    }
};

// Adam with bias correction, no weight decay, no schedule. State tensors line
// up index-for-index with the collected parameter list.
template <class T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    std::size_t step = 0;

    static AdamState make(ModelParams<T>& p) {
        AdamState st;
        for (const auto& np : collect_params(p)) {
            st.m.push_back(Tensor<T>(np.tensor->shape()));
            st.v.push_back(Tensor<T>(np.tensor->shape()));
        }
        return st;
    }
};

template <class T>
void adam_step(std::vector<NamedParam<T>>& params, const std::vector<NamedParam<T>>& grads,
               AdamState<T>& st, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != st.m.size()) {
        throw ShapeError("optimizer state does not match parameter list");
    }
    ++st.step;
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T corr1 = T(1) - std::pow(b1, static_cast<T>(st.step));
    const T corr2 = T(1) - std::pow(b2, static_cast<T>(st.step));
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i].tensor;
        const Tensor<T>& g = *grads[i].tensor;
        if (!p.same_shape(g)) {
            throw ShapeError("gradient shape mismatch for " + params[i].name);
        }
        Tensor<T>& m = st.m[i];
        Tensor<T>& v = st.v[i];
        for (std::size_t n = 0; n < p.size(); ++n) {
            m[n] = b1 * m[n] + (T(1) - b1) * g[n];
            v[n] = b2 * v[n] + (T(1) - b2) * g[n] * g[n];
            const T mhat = m[n] / corr1;
            const T vhat = v[n] / corr2;
            p[n] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace detail {

inline std::string format_num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

template <class T>
struct TrainResult {
    ModelParams<T> best;   // by train-domain accuracy, earliest step on ties
    ModelParams<T> last;
    std::vector<std::string> log;
    double best_train_accuracy = 0.0;
    std::size_t best_step = 0;
};

// Deterministic training loop, full-masked attention only. Logs one
// `step=N loss=L` line per step and `eval step=N domain=D acc=A` lines at the
// eval cadence (domain ids in order, train domain included). Aborts if the
// loss stops being finite.
template <class T>
TrainResult<T> train(const ModelParams<T>& start, const SynthTaskSpec& task,
                     const TrainConfig& tc) {
    task.validate();
    tc.validate();
    if (task.classes != start.cfg.classes) {
        throw ConfigError("task has " + std::to_string(task.classes) + " classes, model expects " +
                          std::to_string(start.cfg.classes));
    }
    const AttentionMask mask = build_mask(start.cfg.mask_spec);

    // Eval sets, one per domain, generated up front from the dedicated seed.
    Rng eval_rng(tc.eval_seed);
    std::vector<std::vector<Sample<T>>> eval_sets;
    for (std::size_t dom = 0; dom < task.domains; ++dom) {
        eval_sets.push_back(make_eval_set<T>(task, dom, tc.eval_samples, eval_rng));
    }

    TrainResult<T> res{start, start, {}, -1.0, 0};
    ModelParams<T>& model = res.last;
    auto params = collect_params(model);
    AdamState<T> opt = AdamState<T>::make(model);
    Rng data_rng(tc.seed);
    std::size_t sample_counter = 0;

    auto run_eval = [&](std::size_t step) {
        for (std::size_t dom = 0; dom < task.domains; ++dom) {
            const EvalResult er = evaluate(model, eval_sets[dom], AttnExec::masked, &mask);
            res.log.push_back("eval step=" + std::to_string(step) + " domain=" +
                              std::to_string(dom) + " acc=" + detail::format_num(er.accuracy));
            if (dom == task.train_domain && er.accuracy > res.best_train_accuracy) {
                res.best_train_accuracy = er.accuracy;
                res.best_step = step;
                res.best = model;
            }
        }
    };

    for (std::size_t step = 1; step <= tc.steps; ++step) {
        ModelParams<T> acc = ModelParams<T>::zeros_like(model);
        auto acc_list = collect_params(acc);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < tc.batch; ++b) {
            const std::size_t cls = sample_counter++ % task.classes;
            const Tensor<T> gram = synth_sample<T>(task, cls, task.train_domain, data_rng);
            ForwardBackwardResult<T> fb = forward_backward(model, gram, cls, &mask);
            loss_sum += static_cast<double>(fb.loss);
            auto g_list = collect_params(fb.grads);
            for (std::size_t i = 0; i < acc_list.size(); ++i) {
                Tensor<T>& dst = *acc_list[i].tensor;
                const Tensor<T>& src = *g_list[i].tensor;
                for (std::size_t n = 0; n < dst.size(); ++n) dst[n] += src[n];
            }
        }
        const double mean_loss = loss_sum / tc.batch;
        if (!std::isfinite(mean_loss)) {
            throw Error("training diverged: non-finite loss at step " + std::to_string(step));
        }
        const T inv_batch = T(1) / static_cast<T>(tc.batch);
        for (auto& np : acc_list)
            for (std::size_t n = 0; n < np.tensor->size(); ++n) (*np.tensor)[n] *= inv_batch;
        adam_step(params, acc_list, opt, tc);
        res.log.push_back("step=" + std::to_string(step) + " loss=" + detail::format_num(mean_loss));
        if ((tc.eval_every > 0 && step % tc.eval_every == 0) || step == tc.steps) {
            run_eval(step);
        }
    }
    return res;
}

}  // namespace frito
