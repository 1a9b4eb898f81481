#include "ssa/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <sstream>

#include "ssa/errors.hpp"
#include "ssa/metrics.hpp"

namespace ssa {

void TrainConfig::validate() const {
    model.validate();
    auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (steps < 1) fail("steps must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(lr_start > 0.0) || !(lr_min >= 0.0) || lr_min > lr_start) fail("need 0 <= lr_min <= lr_start, lr_start > 0");
    if (!(lambda_ssim >= 0.0)) fail("lambda_ssim must be >= 0");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(eps > 0.0)) fail("eps must be positive");
    if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
    if (probe_every < 0) fail("probe_every must be >= 0");
    if (probe_per_bucket < 1) fail("probe_per_bucket must be >= 1");
}

double cosine_lr(int step, int total, double lr_start, double lr_min) {
    if (total < 1 || step < 0 || step > total) {
        throw ArgumentError("cosine_lr: need 0 <= step <= total, total >= 1 (step " + std::to_string(step) +
                            ", total " + std::to_string(total) + ")");
    }
    return lr_min + 0.5 * (lr_start - lr_min) * (1.0 + std::cos(std::numbers::pi * step / total));
}

OptimizerState make_optimizer_state(const std::vector<Parameter<float>*>& params) {
    OptimizerState st;
    for (const auto* p : params) {
        st.m.emplace_back(p->value.dims(), 0.0f);
        st.v.emplace_back(p->value.dims(), 0.0f);
    }
    return st;
}

void optimizer_step(const std::vector<Parameter<float>*>& params, OptimizerState& state, const AdamWSettings& s) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw StateError("optimizer_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& p = *params[k];
        if (p.grad.dims() != p.value.dims() || state.m[k].dims() != p.value.dims()) {
            throw ShapeError("optimizer_step: '" + p.name + "' gradient/moment dims differ from the parameter");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p.touched[i] && !std::isfinite(p.grad[i])) {
                throw NumericError("optimizer_step: non-finite gradient in '" + p.name + "' at element " +
                                   std::to_string(i) + " (step aborted)");
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(s.beta1, t);
    const double bc2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!p.touched[i]) continue;
            const double g = p.grad[i];
            const double mi = s.beta1 * m[i] + (1.0 - s.beta1) * g;
            const double vi = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + s.eps);
            const double w = p.value[i];
            p.value[i] = static_cast<float>(w - s.lr * (update + s.weight_decay * w));
        }
    }
}

TrainerState initial_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainerState st;
    st.model = Model(cfg.model);
    Rng init_rng(derive_seed(cfg.seed, 1));
    st.model.init(init_rng);
    st.opt = make_optimizer_state(st.model.parameters());
    st.sampler = Rng(derive_seed(cfg.seed, 2));
    st.total_steps = cfg.steps;
    return st;
}

namespace {

const std::string kMomentPrefix = "adam.m:";
const std::string kVariancePrefix = "adam.v:";

int meta_int(const CheckpointFile& ck, const std::string& key) {
    const std::string* v = ck.find_meta(key);
    if (v == nullptr) throw FormatError("checkpoint metadata lacks '" + key + "'");
    try {
        return std::stoi(*v);
    } catch (const std::exception&) {
        throw FormatError("checkpoint metadata '" + key + "' is not an integer: " + *v);
    }
}

}  // namespace

void save_checkpoint(const TrainerState& st, const std::string& path) {
    CheckpointFile ck;
    append_model_meta(st.model.config(), ck);
    ck.meta.emplace_back("train.step", std::to_string(st.step));
    ck.meta.emplace_back("train.total_steps", std::to_string(st.total_steps));
    ck.meta.emplace_back("opt.step", std::to_string(st.opt.step));
    std::ostringstream rng;
    rng << st.sampler;
    ck.meta.emplace_back("sampler.rng", rng.str());
    append_model_tensors(st.model, ck);
    const auto params = st.model.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        ck.tensors.emplace_back(kMomentPrefix + params[k]->name, st.opt.m[k]);
        ck.tensors.emplace_back(kVariancePrefix + params[k]->name, st.opt.v[k]);
    }
    const std::string tmp = path + ".tmp";
    write_checkpoint_file(tmp, ck);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot move checkpoint into place at '" + path + "': " + ec.message());
}

TrainerState load_checkpoint(const std::string& path) {
    const CheckpointFile ck = read_checkpoint_file(path);
    TrainerState st;
    st.model = model_from_checkpoint(ck);
    st.step = meta_int(ck, "train.step");
    st.total_steps = meta_int(ck, "train.total_steps");
    st.opt.step = meta_int(ck, "opt.step");
    const std::string* rng = ck.find_meta("sampler.rng");
    if (rng == nullptr) throw FormatError(path + ": checkpoint lacks sampler state");
    std::istringstream in(*rng);
    in >> st.sampler;
    if (in.fail()) throw FormatError(path + ": malformed sampler state");
    for (const auto* p : st.model.parameters()) {
        const Tensor4* m = ck.find_tensor(kMomentPrefix + p->name);
        const Tensor4* v = ck.find_tensor(kVariancePrefix + p->name);
        if (m == nullptr || v == nullptr) throw FormatError(path + ": checkpoint lacks moments for '" + p->name + "'");
        if (m->dims() != p->value.dims() || v->dims() != p->value.dims()) {
            throw FormatError(path + ": moment dims for '" + p->name + "' do not match the parameter");
        }
        st.opt.m.push_back(*m);
        st.opt.v.push_back(*v);
    }
    return st;
}

std::string train_log_header() { return "step,bucket_id,loss,l1,ssim_loss,lr"; }

std::string train_log_row(const StepLog& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%.9g", r.step, r.bucket_id.c_str(), r.loss, r.l1,
                  r.ssim_loss, r.lr);
    return buf;
}

SampleLoss evaluate_sample(const Model& model, const FusionSample& s, double lambda_ssim) {
    Tape<float> tape(false);
    Model& m = const_cast<Model&>(model);  // grad-disabled tape never writes parameters
    const Var y = tape.constant(s.y_lr);
    const Var z = tape.constant(s.z_hr);
    const Var gt = tape.constant(s.x_hr);
    const auto trace = fuse(tape, m, y, z);
    const auto terms = total_loss(tape, trace.output, gt, static_cast<float>(lambda_ssim));
    return {tape.value(terms.total)[0], tape.value(terms.l1)[0], tape.value(terms.ssim_loss)[0]};
}

ProbeLog probe_loss(const Model& model, const std::vector<DatasetBucket>& buckets, const TrainConfig& cfg, int step) {
    ProbeLog r;
    r.step = step;
    std::size_t count = 0;
    for (const auto& b : buckets) {
        const std::size_t n = std::min<std::size_t>(b.samples.size(), static_cast<std::size_t>(cfg.probe_per_bucket));
        for (std::size_t i = 0; i < n; ++i) {
            const auto l = evaluate_sample(model, b.samples[i], cfg.lambda_ssim);
            r.l1 += l.l1;
            r.loss += l.total;
            ++count;
        }
    }
    if (count > 0) {
        r.l1 /= static_cast<double>(count);
        r.loss /= static_cast<double>(count);
    }
    return r;
}

void check_buckets(const std::vector<DatasetBucket>& buckets, const ModelConfig& model) {
    if (buckets.empty()) throw ConfigError("training needs at least one bucket");
    for (const auto& b : buckets) {
        if (b.samples.empty()) throw ConfigError("bucket '" + b.dataset_id + "' is empty");
        if (b.bands + b.msi_bands > model.c_max) {
            throw ConfigError("bucket '" + b.dataset_id + "': C + c = " + std::to_string(b.bands + b.msi_bands) +
                              " exceeds c_max = " + std::to_string(model.c_max));
        }
    }
}

StepLog train_step(TrainerState& st, const TrainConfig& cfg, const std::vector<DatasetBucket>& buckets) {
    Rng sampler = st.sampler;  // committed only when the step succeeds
    const Minibatch mb = sample_minibatch(buckets, sampler, cfg.batch_size);
    if (!is_homogeneous(mb)) throw StateError("minibatch from bucket '" + buckets[mb.bucket].dataset_id + "' is not homogeneous");
    StepLog log;
    log.step = st.step;
    log.bucket_id = buckets[mb.bucket].dataset_id;
    log.lr = cosine_lr(st.step, st.total_steps, cfg.lr_start, cfg.lr_min);

    st.model.zero_grad();
    const float inv_batch = 1.0f / static_cast<float>(mb.samples.size());
    for (const FusionSample* s : mb.samples) {
        Tape<float> tape;
        const Var y = tape.constant(s->y_lr);
        const Var z = tape.constant(s->z_hr);
        const Var gt = tape.constant(s->x_hr);
        const auto trace = fuse(tape, st.model, y, z);
        const auto terms = total_loss(tape, trace.output, gt, static_cast<float>(cfg.lambda_ssim));
        const double total = tape.value(terms.total)[0];
        if (!std::isfinite(total)) {
            st.model.zero_grad();
            throw NumericError("non-finite loss at step " + std::to_string(st.step) + " on bucket '" + log.bucket_id + "'");
        }
        log.loss += total;
        log.l1 += tape.value(terms.l1)[0];
        log.ssim_loss += tape.value(terms.ssim_loss)[0];
        tape.backward(terms.total, inv_batch);
    }
    const double n = static_cast<double>(mb.samples.size());
    log.loss /= n;
    log.l1 /= n;
    log.ssim_loss /= n;

    AdamWSettings a;
    a.lr = log.lr;
    a.beta1 = cfg.beta1;
    a.beta2 = cfg.beta2;
    a.eps = cfg.eps;
    a.weight_decay = cfg.weight_decay;
    try {
        optimizer_step(st.model.parameters(), st.opt, a);
    } catch (const NumericError& e) {
        st.model.zero_grad();
        throw NumericError(std::string(e.what()) + " at step " + std::to_string(st.step));
    }
    st.sampler = sampler;
    ++st.step;
    return log;
}

TrainSummary train(TrainerState& st, const TrainConfig& cfg, const std::vector<DatasetBucket>& buckets,
                   const TrainOutputs& outputs) {
    cfg.validate();
    check_buckets(buckets, st.model.config());
    if (st.total_steps != cfg.steps) {
        throw ConfigError("state was created for " + std::to_string(st.total_steps) + " steps but config asks for " +
                          std::to_string(cfg.steps));
    }
    const int end = outputs.stop_after >= 0 ? std::min(outputs.stop_after, cfg.steps) : cfg.steps;
    TrainSummary summary;
    auto probe = [&] {
        const ProbeLog p = probe_loss(st.model, buckets, cfg, st.step);
        summary.probes.push_back(p);
        if (outputs.probe_log != nullptr) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", p.step, p.l1, p.loss);
            *outputs.probe_log << buf << std::flush;
        }
    };
    auto checkpoint = [&] {
        if (!outputs.checkpoint_path.empty()) save_checkpoint(st, outputs.checkpoint_path);
    };

    while (st.step < end) {
        if (cfg.probe_every > 0 && st.step % cfg.probe_every == 0) probe();
        StepLog row;
        try {
            row = train_step(st, cfg, buckets);
        } catch (const NumericError&) {
            checkpoint();
            throw;
        }
        summary.steps.push_back(row);
        if (outputs.log != nullptr) *outputs.log << train_log_row(row) << '\n' << std::flush;
        if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 && st.step < end) checkpoint();
    }
    if (st.step == cfg.steps && cfg.probe_every > 0) probe();
    checkpoint();
    return summary;
}

}  // namespace ssa
