#include "cmtda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cmtda/blending.hpp"
#include "cmtda/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cmtda {

Tensor crop_view(const DatasetView& data, const CropDraw& d, int size) {
    return crop(data.image(d.index), d.y0, d.x0, size, size);
}

Tensor photometric_jitter(const Tensor& image, Rng& rng) {
    const float scale = static_cast<float>(rng.uniform(0.88, 1.12));
    const float offset = static_cast<float>(rng.uniform(-0.04, 0.04));
    const float contrast = static_cast<float>(rng.uniform(0.90, 1.08));
    Tensor out = image;
    for (float& v : out.v) v = (v - 0.5f) * contrast + 0.5f;
    for (float& v : out.v) v = v * scale + offset;
    clamp01(out);
    return out;
}

std::vector<CropDraw> draw_crops(Rng& rng, const DatasetView& data, int crop, int batch) {
    std::vector<CropDraw> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        CropDraw d{};
        d.index = rng.uniform_int(0, data.size() - 1);
        const Tensor& img = data.image(d.index);
        if (img.h < crop || img.w < crop) throw ConfigError("crop larger than dataset image");
        d.y0 = rng.uniform_int(0, img.h - crop);
        d.x0 = rng.uniform_int(0, img.w - crop);
        out.push_back(d);
    }
    return out;
}

double weighted_target_loss(SegNet& student, const std::vector<Tensor>& images,
                            const std::vector<LabelMap>& labels,
                            const std::vector<Tensor>& weights) {
    if (images.empty() || images.size() != labels.size())
        throw ConfigError("weighted_target_loss: bad batch");
    const double scale =
        1.0 / (static_cast<double>(images.size()) * images[0].h * images[0].w);
    double loss = 0.0;
    for (std::size_t b = 0; b < images.size(); ++b) {
        const Tensor* w = weights.empty() ? nullptr : &weights[b];
        loss += student.train_accumulate(images[b], labels[b], w, scale);
    }
    return loss;
}

void train_source(SegNet& model, const DatasetView& source_train, int iters, float lr,
                  float momentum, int batch, int crop_size, std::uint64_t seed,
                  const std::string& log_path) {
    if (source_train.size() == 0) throw ConfigError("train_source: empty dataset");
    if (iters == 0) return;
    Rng rng = Rng::derive(seed, kRngSourceTrain);
    Rng rng_jit = Rng::derive(seed, kRngJitter);
    SgdMomentum opt(model.params().size(), lr, momentum);
    std::ofstream log;
    if (!log_path.empty()) log.open(log_path, std::ios::trunc);
    const double scale = 1.0 / (static_cast<double>(batch) * crop_size * crop_size);
    for (int iter = 0; iter < iters; ++iter) {
        const auto draws = draw_crops(rng, source_train, crop_size, batch);
        model.zero_grads();
        double loss = 0.0;
        for (const CropDraw& d : draws) {
            const Tensor img = photometric_jitter(crop_view(source_train, d, crop_size), rng_jit);
            const LabelMap lab =
                crop(source_train.labels(d.index), d.y0, d.x0, crop_size, crop_size);
            loss += model.train_accumulate(img, lab, nullptr, scale);
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("train_source: non-finite loss at iter " +
                                     std::to_string(iter));
        opt.step(model.params(), model.grads());
        if (log.is_open() && (iter % 25 == 0 || iter + 1 == iters)) {
            json rec{{"iter", iter}, {"loss", loss}};
            log << rec.dump() << '\n';
        }
    }
}

namespace {

Tensor mask_product(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
    return out;
}

double mask_mean(const Tensor& m) {
    double s = 0.0;
    for (float v : m.v) s += v;
    return m.v.empty() ? 0.0 : s / static_cast<double>(m.v.size());
}

Tensor class_map_to_gray(const LabelMap& m, int num_classes) {
    Tensor g(1, m.h, m.w);
    for (std::size_t i = 0; i < m.v.size(); ++i)
        g.v[i] = static_cast<float>(m.v[i]) / static_cast<float>(num_classes - 1);
    return g;
}

}  // namespace

StepArtifacts adapt_step(TeacherEnsemble& ens, const DatasetView& target_train,
                         const DatasetView* source_train,
                         const std::vector<const WeatherVector*>& stored_vectors,
                         ClassPrototypes& protos, const StepConfig& cfg, std::uint64_t run_seed,
                         const std::string& domain_tag, const std::string& step_dir) {
    const int n = cfg.step_index;
    if (n >= 2 && !ens.previous_teacher)
        throw ConfigError("adapt_step: step " + std::to_string(n) + " needs a previous teacher");
    if (n >= 2 && static_cast<int>(stored_vectors.size()) != n - 1)
        throw ConfigError("adapt_step: expected " + std::to_string(n - 1) + " stored weather vectors");
    if (cfg.flags.with_source && !source_train)
        throw ConfigError("adapt_step: with_source requires a source dataset");

    fs::create_directories(step_dir);
    std::ofstream log(step_dir + "/log.jsonl", std::ios::trunc);

    StepArtifacts art{WeatherVector(domain_tag, 3, cfg.crop, cfg.crop), step_dir, 0, 0, 0.0};
    if (ens.previous_teacher) art.prev_teacher_digest_before = params_digest(*ens.previous_teacher);

    Rng rng_t = step_stream(run_seed, kRngTargetBatch, n);
    Rng rng_s = step_stream(run_seed, kRngSourceBatch, n);
    Rng rng_c = step_stream(run_seed, kRngCompose, n);
    Rng rng_j = step_stream(run_seed, kRngJitter, n);
    Rng rng_jt = step_stream(run_seed, kRngTargetJitter, n);

    SgdMomentum opt(ens.student.params().size(), cfg.lr, cfg.momentum);
    const int B = cfg.batch_size;
    const double scale = 1.0 / (static_cast<double>(B) * cfg.crop * cfg.crop);
    const bool track_protos =
        cfg.flags.with_source && (cfg.flags.feature_mask || cfg.flags.blending);
    const bool need_prev = n >= 2 && (cfg.flags.model_mask || cfg.flags.blending);
    const bool do_replay = cfg.flags.replay && n >= 2;

    for (int iter = 0; iter < cfg.iters; ++iter) {
        const double alpha = alpha_at(cfg.alpha, iter);

        const auto tdraws = draw_crops(rng_t, target_train, cfg.crop, B);
        std::vector<CropDraw> sdraws;
        if (source_train) sdraws = draw_crops(rng_s, *source_train, cfg.crop, B);

        std::vector<Tensor> tcrops, composed, weights, soft_targets;
        std::vector<LabelMap> pseudo;
        double mean_w = 0.0, mean_mod = 0.0, mean_feat = 0.0;

        for (int b = 0; b < B; ++b) {
            Tensor clean = crop_view(target_train, tdraws[static_cast<std::size_t>(b)], cfg.crop);

            auto cur = ens.teacher.forward_with_features(clean);
            const Tensor q_cur = confidence_from_probs(cur.probs);
            const LabelMap argmax_cur = argmax_map(cur.probs);

            std::optional<SegNet::Inference> pre;
            Tensor q_pre;
            if (need_prev) {
                pre = ens.previous_teacher->forward_with_features(clean);
                q_pre = confidence_from_probs(pre->probs);
            }

            // pseudo-label, optionally blended with the previous teacher
            LabelMap p = argmax_cur;
            Tensor m_feat_pre;
            if (cfg.flags.blending && n >= 2) {
                if (cfg.flags.with_source) {
                    const LabelMap argmax_pre = argmax_map(pre->probs);
                    const TargetRepresentation tr_pre = target_representation(
                        pre->features, downsample_labels(argmax_pre, ens.teacher.arch().stride));
                    m_feat_pre = feature_level_mask(tr_pre, protos, argmax_pre,
                                                    cfg.eq3_alt_denominator);
                } else {
                    m_feat_pre = Tensor(1, cfg.crop, cfg.crop, 1.f);
                }
                const BlendResult blend = blend_pseudo_label(
                    {cur.probs, pre->probs, q_cur, q_pre, m_feat_pre});
                p = blend.pseudo_label;
            }

            if (cfg.soft_pseudo_labels) {
                Tensor t = cur.probs;
                if (cfg.flags.blending && n >= 2) {
                    const Tensor m_con = confidence_mask(q_pre, q_cur);
                    const std::size_t npix = static_cast<std::size_t>(cfg.crop) * cfg.crop;
                    for (std::size_t j = 0; j < npix; ++j) {
                        const float gate = m_con.v[j] * m_feat_pre.v[j];
                        float z = 0.f;
                        for (int c = 0; c < t.c; ++c) {
                            float& tv = t.v[static_cast<std::size_t>(c) * npix + j];
                            tv += gate * pre->probs.v[static_cast<std::size_t>(c) * npix + j];
                            z += tv;
                        }
                        for (int c = 0; c < t.c; ++c)
                            t.v[static_cast<std::size_t>(c) * npix + j] /= z;
                    }
                }
                soft_targets.push_back(std::move(t));
            }

            // per-pixel learning weight
            Tensor w(1, cfg.crop, cfg.crop, 1.f);
            if (cfg.flags.model_mask && n >= 2) {
                const Tensor m_mod = model_level_mask(q_cur, q_pre, alpha);
                mean_mod += mask_mean(m_mod);
                w = mask_product(w, m_mod);
            } else {
                mean_mod += 1.0;
            }
            if (cfg.flags.feature_mask && cfg.flags.with_source) {
                const TargetRepresentation tr_cur = target_representation(
                    cur.features, downsample_labels(argmax_cur, ens.teacher.arch().stride));
                const Tensor m_feat =
                    feature_level_mask(tr_cur, protos, argmax_cur, cfg.eq3_alt_denominator);
                mean_feat += mask_mean(m_feat);
                w = mask_product(w, m_feat);
            } else {
                mean_feat += 1.0;
            }
            mean_w += mask_mean(w);

            // teacher guidance comes from the clean crop; the student sees the
            // replay-composed crop under photometric jitter (weak-to-strong
            // consistency, as in the teacher-student UDA line this follows)
            Tensor comp = clean;
            if (do_replay) comp = replay_all(clean, stored_vectors, cfg.compose, rng_c);
            comp = photometric_jitter(comp, rng_jt);

            if (cfg.debug_dump_every > 0 && iter % cfg.debug_dump_every == 0 && b == 0) {
                const std::string d = step_dir + "/debug";
                fs::create_directories(d);
                char tag[32];
                std::snprintf(tag, sizeof tag, "it%05d", iter);
                write_png_gray(d + "/" + tag + "_pseudo.png",
                               class_map_to_gray(p, ens.teacher.arch().num_classes));
                write_png_gray(d + "/" + tag + "_w.png", w);
                if (need_prev)
                    write_png_gray(d + "/" + tag + "_mcon.png", confidence_mask(q_pre, q_cur));
                if (m_feat_pre.size() > 0)
                    write_png_gray(d + "/" + tag + "_mfeatpre.png", m_feat_pre);
                write_png_rgb(d + "/" + tag + "_composed.png", comp);
            }

            tcrops.push_back(std::move(clean));
            composed.push_back(std::move(comp));
            weights.push_back(std::move(w));
            pseudo.push_back(std::move(p));
        }

        // student update
        ens.student.zero_grads();
        double loss_src = 0.0, loss_tgt = 0.0;
        if (cfg.flags.with_source) {
            for (int b = 0; b < B; ++b) {
                const CropDraw& d = sdraws[static_cast<std::size_t>(b)];
                const Tensor img =
                    photometric_jitter(crop_view(*source_train, d, cfg.crop), rng_j);
                const LabelMap lab = crop(source_train->labels(d.index), d.y0, d.x0, cfg.crop, cfg.crop);
                loss_src += ens.student.train_accumulate(img, lab, nullptr, scale);
            }
        }
        for (int b = 0; b < B; ++b) {
            const std::size_t bi = static_cast<std::size_t>(b);
            if (cfg.soft_pseudo_labels)
                loss_tgt += ens.student.train_accumulate_soft(composed[bi], soft_targets[bi],
                                                              &weights[bi], scale);
            else
                loss_tgt +=
                    ens.student.train_accumulate(composed[bi], pseudo[bi], &weights[bi], scale);
        }
        if (!std::isfinite(loss_src) || !std::isfinite(loss_tgt)) {
            std::ostringstream os;
            os << "adapt_step: non-finite loss at step " << n << " iter " << iter
               << " (src=" << loss_src << " tgt=" << loss_tgt << ")";
            throw std::runtime_error(os.str());
        }
        opt.step(ens.student.params(), ens.student.grads());
        ema_update(ens);

        // prototype tracking from the freshly updated teacher
        if (track_protos) {
            for (int b = 0; b < B; ++b) {
                const CropDraw& d = sdraws[static_cast<std::size_t>(b)];
                const Tensor img = crop_view(*source_train, d, cfg.crop);
                const LabelMap lab =
                    crop(source_train->labels(d.index), d.y0, d.x0, cfg.crop, cfg.crop);
                const Tensor feats = ens.teacher.encoder_features(img);
                update_source_prototypes(protos, feats,
                                         downsample_labels(lab, ens.teacher.arch().stride));
            }
        }
        for (int b = 0; b < B; ++b) accumulate_weather(art.weather, tcrops[static_cast<std::size_t>(b)]);

        if (iter == 0) art.first_logged_target_loss = loss_tgt;
        if (iter % cfg.log_every == 0 || iter + 1 == cfg.iters) {
            json rec{{"iter", iter},
                     {"loss_src", loss_src},
                     {"loss_tgt", loss_tgt},
                     {"alpha", alpha},
                     {"mean_w", mean_w / B},
                     {"mean_mmod", mean_mod / B},
                     {"mean_mfeat", mean_feat / B}};
            log << rec.dump() << '\n';
        }
    }

    if (ens.previous_teacher) {
        art.prev_teacher_digest_after = params_digest(*ens.previous_teacher);
        if (art.prev_teacher_digest_after != art.prev_teacher_digest_before)
            throw std::logic_error("adapt_step: previous teacher parameters changed during step");
    }

    save_checkpoint(ens.student, step_dir + "/student.ckpt");
    save_checkpoint(ens.teacher, step_dir + "/teacher.ckpt");
    art.weather.save(step_dir + "/weather.wv");
    save_prototypes(protos, step_dir + "/protos.pt0");
    return art;
}

EvalResult evaluate_model(SegNet& model, const DatasetView& val, int num_classes) {
    ConfusionMatrix cm(num_classes);
    for (int i = 0; i < val.size(); ++i) {
        const Tensor probs = model.forward_probs(val.image(i));
        cm.add(argmax_map(probs), val.labels(i));
    }
    const IouReport rep = iou_scores(cm);
    return {rep.miou, rep.iou};
}

MetricMatrix run_sequence(const RunConfig& cfg, const std::string& out_dir, bool resume) {
    fs::create_directories(out_dir);

    const std::string canonical = cfg.canonical_text();
    const std::string cfg_path = out_dir + "/config.canonical";
    if (fs::exists(cfg_path)) {
        std::ifstream is(cfg_path);
        std::stringstream buf;
        buf << is.rdbuf();
        if (buf.str() != canonical)
            throw ConfigError("resume mismatch: stored run config differs (hash " + cfg.hash() + ")");
    } else {
        std::ofstream os(cfg_path, std::ios::trunc);
        os << canonical;
    }

    const Manifest manifest = load_manifest(cfg.manifest_path);
    const int K = static_cast<int>(cfg.steps.size());

    if (!cfg.base.flags.with_source && cfg.init_checkpoint.empty())
        throw ConfigError("without-source mode requires init_checkpoint");

    std::vector<DatasetView> target_train, target_val;
    target_train.reserve(static_cast<std::size_t>(K));
    target_val.reserve(static_cast<std::size_t>(K));
    for (const auto& d : cfg.steps) {
        target_train.emplace_back(manifest, d, "train", false);
        target_val.emplace_back(manifest, d, "val", true);
    }
    std::optional<DatasetView> source_train;
    if (cfg.base.flags.with_source || cfg.init_checkpoint.empty())
        source_train.emplace(manifest, "source", "train", true);

    // step-0 model
    SegNet model(cfg.arch);
    if (!cfg.init_checkpoint.empty()) {
        model = load_checkpoint(cfg.init_checkpoint, &cfg.arch);
    } else {
        Rng rng_init = Rng::derive(cfg.seed, kRngInit);
        model.init_params(rng_init);
        std::cout << "[source] training " << cfg.source_iters << " iters\n";
        train_source(model, *source_train, cfg.source_iters, cfg.source_lr, cfg.base.momentum,
                     cfg.base.batch_size, cfg.base.crop, cfg.seed, out_dir + "/source_log.jsonl");
        save_checkpoint(model, out_dir + "/source.ckpt");
    }

    MetricMatrix mm(cfg.steps);
    std::optional<MetricMatrix> prior;
    if (resume && fs::exists(out_dir + "/metrics.json"))
        prior = load_metrics_json(out_dir + "/metrics.json");

    ClassPrototypes protos(cfg.arch.num_classes, cfg.arch.feature_dim(), cfg.base.proto_decay);
    std::vector<WeatherVector> weather_bank;
    std::optional<SegNet> prev_teacher;

    for (int k = 1; k <= K; ++k) {
        const StepConfig sc = cfg.step_config(k);
        const std::string step_dir = out_dir + "/step_" + std::to_string(k);
        const std::string done_marker = step_dir + "/done";

        if (resume && fs::exists(done_marker) && prior) {
            model = load_checkpoint(step_dir + "/student.ckpt", &cfg.arch);
            prev_teacher = load_checkpoint(step_dir + "/teacher.ckpt", &cfg.arch);
            weather_bank.push_back(WeatherVector::load(step_dir + "/weather.wv"));
            protos = load_prototypes(step_dir + "/protos.pt0");
            for (int k2 = 1; k2 <= k; ++k2)
                mm.set(k2 - 1, k - 1, prior->get(k2 - 1, k - 1), prior->per_class(k2 - 1, k - 1));
            std::cout << "[step " << k << "/" << K << " " << cfg.steps[static_cast<std::size_t>(k - 1)]
                      << "] resumed from artifacts\n";
            continue;
        }

        TeacherEnsemble ens(model, sc.ema_decay);
        if (k >= 2) ens.previous_teacher = prev_teacher;

        std::vector<const WeatherVector*> stored;
        for (const auto& wv : weather_bank) stored.push_back(&wv);

        std::cout << "[step " << k << "/" << K << " " << cfg.steps[static_cast<std::size_t>(k - 1)]
                  << "] " << sc.iters << " iters\n";
        StepArtifacts art =
            adapt_step(ens, target_train[static_cast<std::size_t>(k - 1)],
                       source_train ? &*source_train : nullptr, stored, protos, sc, cfg.seed,
                       cfg.steps[static_cast<std::size_t>(k - 1)], step_dir);

        for (int k2 = 1; k2 <= k; ++k2) {
            EvalResult ev = evaluate_model(ens.teacher, target_val[static_cast<std::size_t>(k2 - 1)],
                                           cfg.arch.num_classes);
            mm.set(k2 - 1, k - 1, ev.miou, ev.per_class);
        }

        model = ens.student;
        prev_teacher = ens.teacher;
        weather_bank.push_back(std::move(art.weather));
        save_metrics_json(mm, out_dir + "/metrics.json");
        std::ofstream marker(done_marker, std::ios::trunc);
        marker << "ok\n";
    }

    save_metrics_json(mm, out_dir + "/metrics.json");
    return mm;
}

}  // namespace cmtda
