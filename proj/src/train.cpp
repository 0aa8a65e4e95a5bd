#include "polyper/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "polyper/checkpoint.hpp"
#include "polyper/error.hpp"
#include "polyper/loss.hpp"

namespace polyper {

namespace {

namespace fs = std::filesystem;

struct Optimizer {
    const RunConfig& cfg;
    std::map<std::string, TensorF> m, v;  // adamw moments / sgd velocity
    long long t = 0;

    explicit Optimizer(const RunConfig& c) : cfg(c) {}

    void step(ParamStore<float>& params, const std::map<std::string, TensorF>& grads) {
        ++t;
        const float lr = static_cast<float>(cfg.lr);
        const float wd = static_cast<float>(cfg.weight_decay);
        if (cfg.optimizer == "adamw") {
            const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
            const float c1 = 1.0f - std::pow(b1, static_cast<float>(t));
            const float c2 = 1.0f - std::pow(b2, static_cast<float>(t));
            for (const auto& [name, g] : grads) {
                TensorF& p = params.get(name);
                TensorF& mm = m.try_emplace(name, TensorF(p.shape)).first->second;
                TensorF& vv = v.try_emplace(name, TensorF(p.shape)).first->second;
                for (std::int64_t i = 0; i < p.size(); ++i) {
                    mm.v[i] = b1 * mm.v[i] + (1.0f - b1) * g.v[i];
                    vv.v[i] = b2 * vv.v[i] + (1.0f - b2) * g.v[i] * g.v[i];
                    const float mhat = mm.v[i] / c1;
                    const float vhat = vv.v[i] / c2;
                    p.v[i] -= lr * (mhat / (std::sqrt(vhat) + 1e-8f) + wd * p.v[i]);
                }
            }
        } else {  // sgd with momentum
            const float mu = static_cast<float>(cfg.momentum);
            for (const auto& [name, g] : grads) {
                TensorF& p = params.get(name);
                TensorF& vel = m.try_emplace(name, TensorF(p.shape)).first->second;
                for (std::int64_t i = 0; i < p.size(); ++i) {
                    vel.v[i] = mu * vel.v[i] + g.v[i] + wd * p.v[i];
                    p.v[i] -= lr * vel.v[i];
                }
            }
        }
    }
};

std::string fmt(const char* pattern, double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, x);
    return buf;
}

}  // namespace

BinaryMask predict_mask(const PolyperModel<float>& model, const Sample& sample, Mode mode, int stages_k) {
    Tape<float> tape;
    ForwardOptions<float> opt;
    opt.mode = mode;
    opt.stages_k = stages_k;
    const ForwardResult<float> fwd = model.forward(tape, sample.image, opt);
    return threshold_logits(tape.val(fwd.final_logits));
}

EvalReport eval_model(const PolyperModel<float>& model, const std::vector<Sample>& data, Mode mode,
                      int stages_k) {
    return evaluate([&](const Sample& s) { return predict_mask(model, s, mode, stages_k); }, data);
}

std::vector<Sample> load_dataset(const RunConfig& cfg, bool val) {
    if (cfg.data == "synth") return generate_synth(cfg.synth_spec(val));
    const int sz = cfg.resolved_input_size();
    return load_folder(val ? cfg.val_images : cfg.train_images, val ? cfg.val_masks : cfg.train_masks, sz);
}

TrainResult train(const RunConfig& cfg, bool echo) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<Sample> train_set = load_dataset(cfg, false);
    std::vector<Sample> val_set = load_dataset(cfg, true);
    if (train_set.empty() || val_set.empty()) throw DataError("train: empty dataset");

    PolyperModel<float> model;
    model.cfg = cfg.model();
    model.init(cfg.seed);

    const std::string out_dir = cfg.resolved_out_dir();
    fs::create_directories(out_dir);
    const std::string log_path = (fs::path(out_dir) / "metrics.log").string();
    std::ofstream log(log_path);
    if (!log) throw DataError("cannot write log: " + log_path);
    auto emit = [&](const std::string& line) {
        log << line << "\n";
        log.flush();
        if (echo) std::printf("%s\n", line.c_str());
    };

    Rng shuffle_rng(cfg.seed ^ 0x5350bd21a2fd3a5full);
    Rng aug_rng(cfg.seed ^ 0x7b0c11d3e4a5f697ull);
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();  // forces a shuffle on first use

    Optimizer optim(cfg);
    const Mode run_mode = cfg.parsed_mode();
    const int warmup_steps = static_cast<int>(cfg.warmup_frac * cfg.steps);

    TrainResult result;
    result.log_path = log_path;
    result.checkpoint_path = (fs::path(out_dir) / "best.ckpt").string();
    result.ema_history.reserve(cfg.steps);
    double ema = 0.0;
    double last_loss = 0.0;

    for (int step = 1; step <= cfg.steps; ++step) {
        const Mode mode = step <= warmup_steps ? Mode::NoBsr : run_mode;
        std::map<std::string, TensorF> grads;
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);
                cursor = 0;
            }
            const Sample& base = train_set[order[cursor++]];
            Sample s = cfg.augment
                           ? flip_sample(base, aug_rng.bernoulli(0.5), aug_rng.bernoulli(0.5))
                           : base;
            Tape<float> tape;
            ForwardOptions<float> opt;
            opt.mode = mode;
            opt.stages_k = cfg.stages_k;
            const ForwardResult<float> fwd = model.forward(tape, s.image, opt);
            const int loss = segmentation_loss(tape, fwd.final_logits, fwd.initial_logits, s.mask);
            batch_loss += tape.val(loss).v[0];
            tape.backward(loss);
            fwd.bound.accumulate_grads(grads);
        }
        batch_loss /= cfg.batch_size;
        if (!std::isfinite(batch_loss))
            throw Error("training diverged at step " + std::to_string(step) +
                        ": loss=" + std::to_string(batch_loss));
        const float inv = 1.0f / static_cast<float>(cfg.batch_size);
        for (auto& [name, g] : grads)
            for (auto& x : g.v) x *= inv;
        optim.step(model.params, grads);

        last_loss = batch_loss;
        ema = step == 1 ? batch_loss : 0.9 * ema + 0.1 * batch_loss;
        result.ema_history.push_back(ema);

        if (step % cfg.log_interval == 0 || step == cfg.steps)
            emit("step=" + std::to_string(step) + " loss=" + fmt("%.6f", batch_loss) + " ema=" +
                 fmt("%.6f", ema));

        if (step % cfg.val_interval == 0 || step == cfg.steps) {
            const EvalReport rep = eval_model(model, val_set, run_mode, cfg.stages_k);
            emit("step=" + std::to_string(step) + " val_mdice=" + fmt("%.6f", rep.all.m_dice) +
                 " val_miou=" + fmt("%.6f", rep.all.m_iou));
            if (rep.all.m_dice > result.best_val_dice || result.best_step == 0) {
                result.best_val_dice = rep.all.m_dice;
                result.best_val_iou = rep.all.m_iou;
                result.best_step = step;
                save_checkpoint(result.checkpoint_path, {cfg.to_text(), model.params});
            }
        }
    }
    result.final_loss = last_loss;
    emit("final best_step=" + std::to_string(result.best_step) + " best_val_mdice=" +
         fmt("%.6f", result.best_val_dice) + " best_val_miou=" + fmt("%.6f", result.best_val_iou));

    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json j;
    j["best_step"] = result.best_step;
    j["best_val_mdice"] = result.best_val_dice;
    j["best_val_miou"] = result.best_val_iou;
    j["final_loss"] = result.final_loss;
    j["steps"] = cfg.steps;
    j["elapsed_seconds"] = result.elapsed_seconds;
    j["checkpoint"] = result.checkpoint_path;
    std::ofstream rep((fs::path(out_dir) / "train_report.json").string());
    rep << j.dump(2) << "\n";
    return result;
}

}  // namespace polyper
