#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "frito/bench.hpp"
#include "frito/manifest.hpp"
#include "frito/model.hpp"
#include "frito/trainer.hpp"

namespace fs = std::filesystem;
using namespace frito;

namespace {

// Flag beats config file beats default: only overwrite the target when the
// flag was absent and the file has the key.
void take_u64(const CLI::Option* opt, const KvConfig& file, const char* key, std::uint64_t& v) {
    if (opt->count() == 0 && file.has(key)) v = file.get_u64(key);
}
void take_size(const CLI::Option* opt, const KvConfig& file, const char* key, std::size_t& v) {
    if (opt->count() == 0 && file.has(key)) v = static_cast<std::size_t>(file.get_u64(key));
}
void take_double(const CLI::Option* opt, const KvConfig& file, const char* key, double& v) {
    if (opt->count() == 0 && file.has(key)) v = file.get_double(key);
}

std::string sample_name(std::size_t i) {
    std::ostringstream os;
    os << "sample_" << std::setw(5) << std::setfill('0') << i << ".frt1";
    return os.str();
}

// Shared model/task/train flag bundle for train-like commands.
struct TrainSetup {
    // model
    std::size_t d = 32, depth = 2, heads = 2, mlp_ratio = 4;
    std::size_t k = 1, r = 2, v = 1, patch_f = 4, patch_t = 4;
    std::uint64_t model_seed = 1;
    // task
    std::size_t classes = 4, domains = 3;
    std::size_t mels = 32, frames = 32;
    double signal = 1.0, noise = 0.1;
    std::uint64_t task_seed = 7;
    // loop
    std::size_t steps = 300, batch = 8, eval_every = 50, eval_samples = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1, eval_seed = 1234;

    EncoderConfig encoder_config() const {
        EncoderConfig cfg;
        cfg.grid = {mels / patch_f, frames / patch_t, patch_f, patch_t, k, d};
        cfg.mask_spec = {cfg.grid.h, cfg.grid.w, k, r, v};
        cfg.depth = depth;
        cfg.heads = heads;
        cfg.mlp_ratio = mlp_ratio;
        cfg.classes = classes;
        cfg.seed = model_seed;
        return cfg;
    }

    SynthTaskSpec task_spec() const {
        SynthTaskSpec task;
        task.classes = classes;
        task.domains = domains;
        task.mels = mels;
        task.frames = frames;
        task.signal = signal;
        task.noise = noise;
        task.seed = task_seed;
        return task;
    }

    TrainConfig train_config() const {
        TrainConfig tc;
        tc.steps = steps;
        tc.batch = batch;
        tc.lr = lr;
        tc.seed = seed;
        tc.eval_seed = eval_seed;
        tc.eval_every = eval_every;
        tc.eval_samples = eval_samples;
        return tc;
    }

    void record(RunManifest& m) const {
        m.set_config("d", static_cast<std::uint64_t>(d));
        m.set_config("depth", static_cast<std::uint64_t>(depth));
        m.set_config("heads", static_cast<std::uint64_t>(heads));
        m.set_config("mlp_ratio", static_cast<std::uint64_t>(mlp_ratio));
        m.set_config("k", static_cast<std::uint64_t>(k));
        m.set_config("r", static_cast<std::uint64_t>(r));
        m.set_config("v", static_cast<std::uint64_t>(v));
        m.set_config("patch_f", static_cast<std::uint64_t>(patch_f));
        m.set_config("patch_t", static_cast<std::uint64_t>(patch_t));
        m.set_config("model_seed", model_seed);
        m.set_config("classes", static_cast<std::uint64_t>(classes));
        m.set_config("domains", static_cast<std::uint64_t>(domains));
        m.set_config("mels", static_cast<std::uint64_t>(mels));
        m.set_config("frames", static_cast<std::uint64_t>(frames));
        m.set_config("signal", signal);
        m.set_config("noise", noise);
        m.set_config("task_seed", task_seed);
        m.set_config("steps", static_cast<std::uint64_t>(steps));
        m.set_config("batch", static_cast<std::uint64_t>(batch));
        m.set_config("lr", lr);
        m.set_config("seed", seed);
        m.set_config("eval_seed", eval_seed);
        m.set_config("eval_every", static_cast<std::uint64_t>(eval_every));
        m.set_config("eval_samples", static_cast<std::uint64_t>(eval_samples));
    }
};

const std::vector<std::string> kTrainKeys = {
    "d",     "depth",   "heads",  "mlp_ratio", "k",       "r",          "v",
    "patch_f", "patch_t", "model_seed", "classes", "domains", "mels",    "frames",
    "signal", "noise",  "task_seed", "steps",  "batch",   "lr",         "seed",
    "eval_seed", "eval_every", "eval_samples"};

struct TrainOpts {
    const CLI::Option *d, *depth, *heads, *mlp_ratio, *k, *r, *v, *patch_f, *patch_t, *model_seed;
    const CLI::Option *classes, *domains, *mels, *frames, *signal, *noise, *task_seed;
    const CLI::Option *steps, *batch, *lr, *seed, *eval_seed, *eval_every, *eval_samples;
};

TrainOpts add_train_flags(CLI::App* cmd, TrainSetup& s) {
    TrainOpts o;
    o.d = cmd->add_option("--d", s.d, "embedding width");
    o.depth = cmd->add_option("--depth", s.depth, "transformer block count");
    o.heads = cmd->add_option("--heads", s.heads, "attention heads");
    o.mlp_ratio = cmd->add_option("--mlp-ratio", s.mlp_ratio, "MLP hidden multiplier");
    o.k = cmd->add_option("--k", s.k, "global token count");
    o.r = cmd->add_option("--r", s.r, "cluster size in patch rows");
    o.v = cmd->add_option("--v", s.v, "cluster window overlap factor");
    o.patch_f = cmd->add_option("--patch-f", s.patch_f, "mel bins per patch");
    o.patch_t = cmd->add_option("--patch-t", s.patch_t, "frames per patch");
    o.model_seed = cmd->add_option("--model-seed", s.model_seed, "weight init seed");
    o.classes = cmd->add_option("--classes", s.classes, "class count");
    o.domains = cmd->add_option("--domains", s.domains, "domain count (domain 0 trains)");
    o.mels = cmd->add_option("--mels", s.mels, "mel bins per spectrogram");
    o.frames = cmd->add_option("--frames", s.frames, "frames per spectrogram");
    o.signal = cmd->add_option("--signal", s.signal, "class band energy");
    o.noise = cmd->add_option("--noise", s.noise, "noise floor level");
    o.task_seed = cmd->add_option("--task-seed", s.task_seed, "domain coloration seed");
    o.steps = cmd->add_option("--steps", s.steps, "training steps");
    o.batch = cmd->add_option("--batch", s.batch, "samples per step");
    o.lr = cmd->add_option("--lr", s.lr, "Adam learning rate");
    o.seed = cmd->add_option("--seed", s.seed, "training stream seed");
    o.eval_seed = cmd->add_option("--eval-seed", s.eval_seed, "eval set seed");
    o.eval_every = cmd->add_option("--eval-every", s.eval_every, "steps between evals (0 = final only)");
    o.eval_samples = cmd->add_option("--eval-samples", s.eval_samples, "eval samples per domain");
    return o;
}

void apply_config(const TrainOpts& o, const KvConfig& file, TrainSetup& s) {
    file.restrict_keys(kTrainKeys);
    take_size(o.d, file, "d", s.d);
    take_size(o.depth, file, "depth", s.depth);
    take_size(o.heads, file, "heads", s.heads);
    take_size(o.mlp_ratio, file, "mlp_ratio", s.mlp_ratio);
    take_size(o.k, file, "k", s.k);
    take_size(o.r, file, "r", s.r);
    take_size(o.v, file, "v", s.v);
    take_size(o.patch_f, file, "patch_f", s.patch_f);
    take_size(o.patch_t, file, "patch_t", s.patch_t);
    take_u64(o.model_seed, file, "model_seed", s.model_seed);
    take_size(o.classes, file, "classes", s.classes);
    take_size(o.domains, file, "domains", s.domains);
    take_size(o.mels, file, "mels", s.mels);
    take_size(o.frames, file, "frames", s.frames);
    take_double(o.signal, file, "signal", s.signal);
    take_double(o.noise, file, "noise", s.noise);
    take_u64(o.task_seed, file, "task_seed", s.task_seed);
    take_size(o.steps, file, "steps", s.steps);
    take_size(o.batch, file, "batch", s.batch);
    take_double(o.lr, file, "lr", s.lr);
    take_u64(o.seed, file, "seed", s.seed);
    take_u64(o.eval_seed, file, "eval_seed", s.eval_seed);
    take_size(o.eval_every, file, "eval_every", s.eval_every);
    take_size(o.eval_samples, file, "eval_samples", s.eval_samples);
}

int cmd_mask_dump(std::size_t h, std::size_t w, std::size_t k, std::size_t r, std::size_t v,
                  const std::string& out, const std::string& tensor_out) {
    const FreqMaskSpec spec{h, w, k, r, v};
    const AttentionMask mask = build_mask(spec);
    std::cout << mask.ascii();
    std::cout << "t=" << mask.t() << " zeros=" << mask.zero_count()
              << " blocks=" << mask.blocks().size() << "\n";

    RunManifest m("mask-dump");
    m.set_config("h", static_cast<std::uint64_t>(h));
    m.set_config("w", static_cast<std::uint64_t>(w));
    m.set_config("k", static_cast<std::uint64_t>(k));
    m.set_config("r", static_cast<std::uint64_t>(r));
    m.set_config("v", static_cast<std::uint64_t>(v));
    std::string manifest_path = "frito-mask-dump.manifest";
    if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw IoError("cannot write " + out);
        f << mask.ascii();
        m.add_artifact("ascii", out);
        manifest_path = out + ".manifest";
    }
    if (!tensor_out.empty()) {
        tensor_write(mask.export_tensor(), tensor_out);
        m.add_artifact("tensor", tensor_out);
        manifest_path = tensor_out + ".manifest";
    }
    std::cout << "manifest: " << m.write(manifest_path) << "\n";
    return 0;
}

int cmd_synth_data(const TrainSetup& s, std::size_t count, const std::string& out_dir,
                   std::uint64_t data_seed) {
    const SynthTaskSpec task = s.task_spec();
    task.validate();
    fs::create_directories(out_dir);
    Rng rng(data_seed);
    std::ofstream labels(fs::path(out_dir) / "labels.tsv", std::ios::trunc);
    if (!labels) throw IoError("cannot write labels.tsv in " + out_dir);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t cls = i % task.classes;
        const std::size_t dom = (i / task.classes) % task.domains;
        const Tensor<float> gram = synth_sample<float>(task, cls, dom, rng);
        const std::string name = sample_name(i);
        tensor_write(gram, (fs::path(out_dir) / name).string());
        labels << name << "\t" << cls << "\t" << dom << "\n";
    }
    labels.close();

    RunManifest m("synth-data");
    s.record(m);
    m.set_config("count", static_cast<std::uint64_t>(count));
    m.set_config("data_seed", data_seed);
    m.add_artifact("labels", (fs::path(out_dir) / "labels.tsv").string());
    m.add_artifact("dir", out_dir);
    std::cout << "wrote " << count << " samples to " << out_dir << "\n";
    std::cout << "manifest: " << m.write((fs::path(out_dir) / "manifest.txt").string()) << "\n";
    return 0;
}

int cmd_train(const TrainSetup& s, const std::string& out_dir) {
    const EncoderConfig cfg = s.encoder_config();
    cfg.validate();
    const SynthTaskSpec task = s.task_spec();
    const TrainConfig tc = s.train_config();
    fs::create_directories(out_dir);

    ModelParams<float> start = ModelParams<float>::init(cfg);
    TrainResult<float> result = train(start, task, tc);

    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.frito").string();
    const std::string log_path = (fs::path(out_dir) / "metrics.log").string();
    save_checkpoint(result.best, ckpt_path);
    {
        std::ofstream log(log_path, std::ios::trunc);
        if (!log) throw IoError("cannot write " + log_path);
        for (const auto& line : result.log) log << line << "\n";
    }
    std::cout << "best train-domain accuracy " << result.best_train_accuracy << " at step "
              << result.best_step << "\n";
    std::cout << "checkpoint: " << ckpt_path << "\n";
    std::cout << "metrics: " << log_path << "\n";

    RunManifest m("train");
    s.record(m);
    m.add_artifact("checkpoint", ckpt_path);
    m.add_artifact("metrics", log_path);
    std::cout << "manifest: " << m.write((fs::path(out_dir) / "manifest.txt").string()) << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const TrainSetup& s,
             const std::string& mode, std::size_t count, std::uint64_t seed) {
    const ModelParams<float> model = load_checkpoint<float>(ckpt_path);
    AttnExec exec = AttnExec::masked;
    if (mode == "sparse") {
        if (model.cfg.mask_spec.v != 1) {
            throw ConfigError("checkpoint config has v = " + std::to_string(model.cfg.mask_spec.v) +
                              "; sparse evaluation requires v = 1");
        }
        exec = AttnExec::sparse;
    } else if (mode != "full") {
        throw ConfigError("mode must be full or sparse, got '" + mode + "'");
    }
    const AttentionMask mask = build_mask(model.cfg.mask_spec);
    const AttentionMask* mask_ptr = exec == AttnExec::masked ? &mask : nullptr;

    // Domain id -> eval set, either read from disk or generated.
    std::map<std::size_t, std::vector<Sample<float>>> sets;
    if (!data_dir.empty()) {
        std::ifstream labels(fs::path(data_dir) / "labels.tsv");
        if (!labels) throw IoError("cannot open labels.tsv in " + data_dir);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(labels, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream is(line);
            std::string name;
            std::size_t cls = 0, dom = 0;
            if (!(is >> name >> cls >> dom)) {
                throw CorruptError("bad labels.tsv line " + std::to_string(lineno) + " in " +
                                   data_dir);
            }
            sets[dom].push_back(
                {tensor_read<float>((fs::path(data_dir) / name).string()), cls});
        }
    } else {
        const SynthTaskSpec task = s.task_spec();
        task.validate();
        if (task.classes != model.cfg.classes) {
            throw ConfigError("task declares " + std::to_string(task.classes) +
                              " classes but the checkpoint expects " +
                              std::to_string(model.cfg.classes) +
                              "; pass --classes to match");
        }
        Rng rng(seed);
        for (std::size_t dom = 0; dom < task.domains; ++dom) {
            sets[dom] = make_eval_set<float>(task, dom, count, rng);
        }
    }

    RunManifest m("eval");
    m.set_config("checkpoint", ckpt_path);
    m.set_config("mode", mode);
    for (const auto& [dom, set] : sets) {
        const EvalResult r = evaluate(model, set, exec, mask_ptr);
        std::cout << "domain " << dom << ": accuracy " << std::fixed << std::setprecision(4)
                  << r.accuracy << " over " << set.size() << " samples, per-class";
        for (std::size_t c = 0; c < model.cfg.classes; ++c) {
            std::cout << " " << std::setprecision(4) << r.class_accuracy(c);
        }
        std::cout << "\n";
        m.set_config("accuracy_domain_" + std::to_string(dom), r.accuracy);
    }
    std::cout << "manifest: " << m.write(ckpt_path + ".eval.manifest") << "\n";
    return 0;
}

int cmd_bench(const BenchConfig& cfg, const std::string& format, const std::string& out) {
    const BenchReport report = run_bench(cfg);
    const std::string rendered =
        format == "jsonl" ? emit_report_jsonl(report) : emit_report_text(report);
    std::cout << rendered;
    RunManifest m("bench");
    m.set_config("h", static_cast<std::uint64_t>(cfg.spec.h));
    m.set_config("w", static_cast<std::uint64_t>(cfg.spec.w));
    m.set_config("k", static_cast<std::uint64_t>(cfg.spec.k));
    m.set_config("r", static_cast<std::uint64_t>(cfg.spec.r));
    m.set_config("v", static_cast<std::uint64_t>(cfg.spec.v));
    m.set_config("d", static_cast<std::uint64_t>(cfg.d));
    m.set_config("heads", static_cast<std::uint64_t>(cfg.heads));
    m.set_config("repeats", static_cast<std::uint64_t>(cfg.repeats));
    m.set_config("warmups", static_cast<std::uint64_t>(cfg.warmups));
    m.set_config("threads", static_cast<std::uint64_t>(cfg.threads));
    m.set_config("seed", cfg.seed);
    m.set_config("format", format);
    std::string manifest_path = "frito-bench.manifest";
    if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw IoError("cannot write " + out);
        f << rendered;
        m.add_artifact("report", out);
        manifest_path = out + ".manifest";
    }
    std::cout << "manifest: " << m.write(manifest_path) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// verify: the one-shot oracle suites.

bool verify_mask_grid(bool quick, std::ostream& os) {
    std::size_t specs = 0;
    for (std::size_t h = 1; h <= 8; ++h) {
        for (std::size_t w = 1; w <= 8; ++w) {
            for (std::size_t k = 0; k <= 3; ++k) {
                for (std::size_t r = 1; r <= h; ++r) {
                    for (std::size_t v = 1; v <= 4; ++v) {
                        const FreqMaskSpec spec{h, w, k, r, v};
                        const AttentionMask a = build_mask(spec);
                        const AttentionMask b = oracle_mask(spec);
                        if (a.visibility() != b.visibility()) {
                            os << "[fail] mask-grid: divergence at h=" << h << " w=" << w
                               << " k=" << k << " r=" << r << " v=" << v << "\n";
                            return false;
                        }
                        ++specs;
                    }
                }
            }
        }
    }
    (void)quick;
    os << "[ok] mask-grid: " << specs << " specs match the reference construction\n";
    return true;
}

template <class T>
bool sparse_matches_full(const FreqMaskSpec& spec, std::uint64_t seed, double tol, double& worst) {
    Rng rng(seed);
    const std::size_t d = 32, heads = 4;
    const auto params = AttentionParams<T>::init(d, heads, rng, 0.05);
    const auto x = Tensor<T>::random_normal({spec.seq_len(), d}, rng, 1.0);
    const AttentionMask mask = build_mask(spec);
    const auto full = attn_full(x, params, &mask);
    const auto sparse = attn_sparse_frito(x, params, spec);
    const double diff = max_abs_diff(full, sparse);
    worst = std::max(worst, diff);
    return diff <= tol;
}

bool verify_equivalence(bool quick, std::ostream& os) {
    const std::vector<FreqMaskSpec> specs = {
        {4, 3, 1, 1, 1}, {5, 2, 1, 3, 1}, {8, 4, 2, 2, 1}, {6, 5, 0, 2, 1}, {7, 3, 3, 4, 1},
    };
    const std::size_t seeds = quick ? 3 : 20;
    double worst_f32 = 0.0, worst_f64 = 0.0;
    for (const auto& spec : specs) {
        for (std::uint64_t s = 0; s < seeds; ++s) {
            if (!sparse_matches_full<float>(spec, 1000 + s, 1e-5, worst_f32) ||
                !sparse_matches_full<double>(spec, 2000 + s, 1e-10, worst_f64)) {
                os << "[fail] sparse-equivalence: spec h=" << spec.h << " w=" << spec.w
                   << " k=" << spec.k << " r=" << spec.r << " seed " << s
                   << " exceeds tolerance\n";
                return false;
            }
        }
    }
    os << "[ok] sparse-equivalence: " << specs.size() * seeds << " cases per dtype, worst f32 "
       << std::scientific << std::setprecision(2) << worst_f32 << ", worst f64 " << worst_f64
       << std::defaultfloat << "\n";
    return true;
}

bool verify_gradients(bool quick, std::ostream& os) {
    // Attention-level check.
    {
        const FreqMaskSpec spec{2, 2, 1, 1, 2};
        const AttentionMask mask = build_mask(spec);
        Rng rng(9);
        const std::size_t d = 8, heads = 2, t = spec.seq_len();
        const auto params = AttentionParams<double>::init(d, heads, rng, 0.1);
        auto x = Tensor<double>::random_normal({t, d}, rng, 1.0);
        const auto upstream = Tensor<double>::random_normal({t, d}, rng, 1.0);
        const AttentionGrads<double> g = attn_full_backward(x, params, &mask, upstream);
        auto loss = [&](const Tensor<double>& xv) {
            const auto out = attn_full(xv, params, &mask);
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
            return s;
        };
        const double step = 1e-5;
        double max_rel = 0.0;
        const std::size_t stride = quick ? 5 : 1;
        for (std::size_t i = 0; i < x.size(); i += stride) {
            const double keep = x[i];
            x[i] = keep + step;
            const double up = loss(x);
            x[i] = keep - step;
            const double dn = loss(x);
            x[i] = keep;
            const double fd = (up - dn) / (2 * step);
            const double rel = std::abs(fd - g.x[i]) / std::max(1.0, std::abs(fd));
            max_rel = std::max(max_rel, rel);
        }
        if (max_rel > 1e-4) {
            os << "[fail] gradients: attention input grad relative error " << max_rel << "\n";
            return false;
        }
    }
    // Model-level check on a tiny config.
    {
        EncoderConfig cfg;
        cfg.grid = {3, 2, 2, 2, 1, 8};
        cfg.mask_spec = {3, 2, 1, 2, 1};
        cfg.depth = 1;
        cfg.heads = 2;
        cfg.mlp_ratio = 2;
        cfg.classes = 3;
        cfg.seed = 11;
        ModelParams<double> model = ModelParams<double>::init(cfg);
        Rng rng(13);
        const auto gram = Tensor<double>::random_normal({6, 4}, rng, 1.0);
        const std::size_t label = 1;
        const ForwardBackwardResult<double> fb = forward_backward(model, gram, label);
        auto params = collect_params(model);
        ModelParams<double> grads_copy = fb.grads;
        auto grads = collect_params(grads_copy);
        const double step = 1e-5;
        double max_rel = 0.0;
        const std::size_t stride = quick ? 13 : 3;
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor<double>& tensor = *params[pi].tensor;
            for (std::size_t i = 0; i < tensor.size(); i += stride) {
                const double keep = tensor[i];
                tensor[i] = keep + step;
                const double up = forward_backward(model, gram, label).loss;
                tensor[i] = keep - step;
                const double dn = forward_backward(model, gram, label).loss;
                tensor[i] = keep;
                const double fd = (up - dn) / (2 * step);
                const double an = (*grads[pi].tensor)[i];
                const double rel = std::abs(fd - an) / std::max(1.0, std::abs(fd));
                max_rel = std::max(max_rel, rel);
            }
        }
        if (max_rel > 1e-4) {
            os << "[fail] gradients: model parameter grad relative error " << max_rel << "\n";
            return false;
        }
        os << "[ok] gradients: attention and model match finite differences\n";
    }
    return true;
}

int cmd_verify(bool full) {
    const bool quick = !full;
    bool ok = true;
    ok = verify_mask_grid(quick, std::cout) && ok;
    ok = verify_equivalence(quick, std::cout) && ok;
    ok = verify_gradients(quick, std::cout) && ok;
    RunManifest m("verify");
    m.set_config("mode", std::string(full ? "full" : "quick"));
    std::cout << "manifest: " << m.write("frito-verify.manifest") << "\n";
    if (!ok) {
        std::cout << "verification FAILED\n";
        return 1;
    }
    std::cout << "verification passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency-regularized attention toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("frito ") + kToolVersion);
    // Help answers to --help only; the short -h slot belongs to the patch-row
    // count used by mask-dump and bench.
    app.set_help_flag("--help", "print help and exit");

    // mask-dump
    auto* md = app.add_subcommand("mask-dump", "render an attention mask as ASCII art");
    std::size_t md_h = 5, md_w = 2, md_k = 1, md_r = 1, md_v = 1;
    std::string md_out, md_tensor_out;
    md->add_option("--h", md_h, "patch rows")->required();
    md->add_option("--w", md_w, "patch columns")->required();
    md->add_option("--k", md_k, "global tokens")->required();
    md->add_option("--r", md_r, "cluster size")->required();
    md->add_option("--v", md_v, "window overlap factor")->required();
    md->add_option("--out", md_out, "write the ASCII rendering to this file");
    md->add_option("--tensor-out", md_tensor_out, "write the additive mask as an FRT1 tensor");

    // shared train-like flag bundles
    TrainSetup sd_setup, tr_setup, ev_setup;
    std::string sd_dir, tr_dir, tr_config, sd_config;
    std::size_t sd_count = 96;
    std::uint64_t sd_seed = 99;

    auto* sd = app.add_subcommand("synth-data", "generate labeled synthetic spectrograms");
    sd->add_option("--config", sd_config, "key=value config file");
    TrainOpts sd_opts = add_train_flags(sd, sd_setup);
    sd->add_option("--count", sd_count, "total sample count");
    sd->add_option("--data-seed", sd_seed, "sample content seed");
    sd->add_option("--out-dir", sd_dir, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train the toy encoder on the synthetic task");
    tr->add_option("--config", tr_config, "key=value config file");
    TrainOpts tr_opts = add_train_flags(tr, tr_setup);
    tr->add_option("--out-dir", tr_dir, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint per domain");
    std::string ev_ckpt, ev_dir, ev_mode = "full";
    std::size_t ev_count = 64;
    std::uint64_t ev_seed = 1234;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data-dir", ev_dir, "evaluate files listed in labels.tsv");
    TrainOpts ev_opts = add_train_flags(ev, ev_setup);
    ev->add_option("--mode", ev_mode, "full or sparse");
    ev->add_option("--count", ev_count, "generated samples per domain");
    ev->add_option("--eval-data-seed", ev_seed, "generated sample seed");

    auto* be = app.add_subcommand("bench", "time attention execution variants");
    BenchConfig bench_cfg;
    std::size_t be_t = 0;
    std::string be_format = "text", be_out;
    be->add_option("--t", be_t, "sequence length; derives w as (t-k)/h");
    be->add_option("--h", bench_cfg.spec.h, "patch rows");
    auto* be_w = be->add_option("--w", bench_cfg.spec.w, "patch columns");
    be->add_option("--k", bench_cfg.spec.k, "global tokens");
    be->add_option("--r", bench_cfg.spec.r, "cluster size");
    be->add_option("--v", bench_cfg.spec.v, "window overlap factor");
    be->add_option("--d", bench_cfg.d, "embedding width");
    be->add_option("--heads", bench_cfg.heads, "attention heads");
    be->add_option("--repeats", bench_cfg.repeats, "timed repeats");
    be->add_option("--warmups", bench_cfg.warmups, "warmup runs");
    be->add_option("--threads", bench_cfg.threads, "adds a parallel sparse variant when > 1");
    be->add_option("--seed", bench_cfg.seed, "input/parameter seed");
    be->add_option("--format", be_format, "text or jsonl")
        ->check(CLI::IsMember({"text", "jsonl"}));
    be->add_option("--out", be_out, "also write the report to this file");

    auto* vf = app.add_subcommand("verify", "run the oracle suites");
    bool vf_full = false, vf_quick = false;
    vf->add_flag("--full", vf_full, "exhaustive mode");
    vf->add_flag("--quick", vf_quick, "reduced probe density (default)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the diagnostic
        return 2;
    }

    try {
        if (md->parsed()) {
            return cmd_mask_dump(md_h, md_w, md_k, md_r, md_v, md_out, md_tensor_out);
        }
        if (sd->parsed()) {
            if (!sd_config.empty()) apply_config(sd_opts, KvConfig::load(sd_config), sd_setup);
            return cmd_synth_data(sd_setup, sd_count, sd_dir, sd_seed);
        }
        if (tr->parsed()) {
            if (!tr_config.empty()) apply_config(tr_opts, KvConfig::load(tr_config), tr_setup);
            return cmd_train(tr_setup, tr_dir);
        }
        if (ev->parsed()) {
            (void)ev_opts;
            return cmd_eval(ev_ckpt, ev_dir, ev_setup, ev_mode, ev_count, ev_seed);
        }
        if (be->parsed()) {
            if (be_t > 0) {
                if (be_w->count() > 0) {
                    throw ConfigError("--t and --w are mutually exclusive");
                }
                if (be_t <= bench_cfg.spec.k ||
                    (be_t - bench_cfg.spec.k) % bench_cfg.spec.h != 0) {
                    throw ConfigError("--t must equal k + h*w for integer w");
                }
                bench_cfg.spec.w = (be_t - bench_cfg.spec.k) / bench_cfg.spec.h;
            }
            return cmd_bench(bench_cfg, be_format, be_out);
        }
        if (vf->parsed()) {
            if (vf_full && vf_quick) throw ConfigError("pick one of --quick/--full");
            return cmd_verify(vf_full);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
