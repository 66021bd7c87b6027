#include "coldrec/pipeline.hpp"

#include <spdlog/spdlog.h>

namespace coldrec {

using json = nlohmann::json;

namespace {

std::vector<std::string> item_ids(const Dataset& data) {
    std::vector<std::string> ids;
    ids.reserve(data.items.size());
    for (const auto& it : data.items) ids.push_back(it.id);
    return ids;
}

}  // namespace

std::string to_string(DocumentField field) {
    switch (field) {
        case DocumentField::synopsis: return "synopsis";
        case DocumentField::reviews: return "reviews";
        default: return "both";
    }
}

json EdgeFeatureConfig::to_json() const {
    return {{"field", coldrec::to_string(field)}, {"vocab", vocab}, {"components", components}, {"seed", seed}};
}

EdgeFeatureConfig EdgeFeatureConfig::from_json(const json& j) {
    EdgeFeatureConfig c;
    c.field = parse_document_field(j.value("field", std::string("both")));
    c.vocab = j.value("vocab", c.vocab);
    c.components = j.value("components", c.components);
    c.seed = j.value("seed", c.seed);
    return c;
}

Matrix bundle_edge_features(const Bundle& bundle, const EdgeFeatureConfig& cfg) {
    if (!bundle.data.graph) throw std::invalid_argument("the bundle has no item graph (edges.jsonl)");
    const TextEncoder enc = fit_bundle_text_encoder(bundle, cfg.field, cfg.vocab, cfg.components, cfg.seed);
    return edge_text_features(*bundle.data.graph, enc.tfidf, enc.svd);
}

LatentFactors run_wmf(const Bundle& bundle, const WmfConfig& cfg, const std::filesystem::path& out) {
    std::vector<double> history;
    LatentFactors f = wmf_train(bundle.train_prefs, cfg, &history);
    const auto stats = standardize_factors(f, bundle.factorized_users(), bundle.split.train);
    save_factors(out, f,
                 {{"config", cfg.to_json()},
                  {"loss_history", history},
                  {"user_stats", stats.user_stats.to_json()},
                  {"item_stats", stats.item_stats.to_json()}});
    return f;
}

TrainResult run_training(const TrainJob& job, const std::filesystem::path& out) {
    const Bundle bundle = load_bundle(job.data);
    const LatentFactors raw = load_factors(job.factors);
    const ContentMatrix content = load_external_embeddings(job.content, item_ids(bundle.data));
    Matrix edge_features;
    if (job.arch.graph == GraphKind::gine) edge_features = bundle_edge_features(bundle, job.edges);
    const ModelInputs inputs = build_model_inputs(bundle, raw, content, std::move(edge_features));

    Architecture arch = job.arch;
    const Architecture sized = architecture_for(inputs);
    arch.pref_dim = sized.pref_dim;
    arch.user_content_dim = sized.user_content_dim;
    arch.item_content_dim = sized.item_content_dim;
    arch.edge_dim = sized.edge_dim;

    ValidationFn validate;
    std::optional<Scenario> val;
    if (job.validate) {
        val = build_scenario(bundle, ItemMode::cold, 0.0, job.cfg.seed, true);
        if (val->users.empty()) {
            spdlog::info("no validation user has a relevant item; skipping validation");
            val.reset();
        } else {
            ModelScoring scoring{job.cfg.baseline, false};
            validate = [&, scoring](const EncoderParams& p) {
                return scenario_recall(model_scores(p, inputs, bundle, *val, scoring), *val, job.val_k);
            };
        }
    }

    TrainResult result = train(inputs, bundle, arch, job.cfg, validate, job.log);

    Checkpoint ckpt;
    ckpt.params = result.params;
    ckpt.mask = result.mask;
    ckpt.rng_state = result.rng_state;
    ckpt.meta = {{"train", job.cfg.to_json()},
                 {"baseline", to_string(job.cfg.baseline)},
                 {"factors", job.factors.string()},
                 {"content", job.content.string()},
                 {"edges", job.edges.to_json()},
                 {"initial_loss", result.initial_loss},
                 {"final_epoch_loss", result.final_epoch_loss}};
    checkpoint_save(ckpt, out);
    return result;
}

ModelContext load_model_context(const std::filesystem::path& ckpt, const std::filesystem::path& data,
                                const std::optional<std::filesystem::path>& factors,
                                const std::optional<std::filesystem::path>& content) {
    ModelContext ctx;
    ctx.ckpt = checkpoint_load(ckpt);
    ctx.model_hash = checkpoint_hash(ckpt);
    const auto& meta = ctx.ckpt.meta;
    auto recorded = [&](const char* key, const std::optional<std::filesystem::path>& given) {
        if (given) return *given;
        if (!meta.contains(key)) {
            throw std::invalid_argument(std::string("checkpoint does not record a ") + key + " path; pass --" + key);
        }
        return std::filesystem::path(meta.at(key).get<std::string>());
    };
    ctx.bundle = load_bundle(data);
    ctx.raw = load_factors(recorded("factors", factors));
    ctx.content = load_external_embeddings(recorded("content", content), item_ids(ctx.bundle.data));
    ctx.baseline = parse_baseline_mode(meta.value("baseline", std::string("deepnaninet")));

    Matrix edge_features;
    if (ctx.ckpt.params.arch.graph == GraphKind::gine) {
        edge_features = bundle_edge_features(ctx.bundle, EdgeFeatureConfig::from_json(meta.value("edges", json::object())));
    }
    ctx.inputs = build_model_inputs(ctx.bundle, ctx.raw, ctx.content, std::move(edge_features));
    const Architecture sized = architecture_for(ctx.inputs);
    const auto& a = ctx.ckpt.params.arch;
    if (a.pref_dim != sized.pref_dim || a.user_content_dim != sized.user_content_dim ||
        a.item_content_dim != sized.item_content_dim || (a.graph == GraphKind::gine && a.edge_dim != sized.edge_dim)) {
        throw std::invalid_argument("checkpoint architecture does not match the factors/content it is used with");
    }
    return ctx;
}

ScorerKind parse_scorer_kind(const std::string& name) {
    if (name == "model") return ScorerKind::model;
    if (name == "wmf") return ScorerKind::wmf;
    if (name == "popularity") return ScorerKind::popularity;
    if (name == "random") return ScorerKind::random;
    throw std::invalid_argument("unknown scorer '" + name + "' (expected model, wmf, popularity or random)");
}

std::string to_string(ScorerKind kind) {
    switch (kind) {
        case ScorerKind::wmf: return "wmf";
        case ScorerKind::popularity: return "popularity";
        case ScorerKind::random: return "random";
        default: return "model";
    }
}

Report evaluate_context(const ModelContext& ctx, const EvalOptions& opts) {
    const Scenario sc = build_scenario(ctx.bundle, opts.scenario, opts.user_mix, opts.seed);
    Scorer scorer;
    switch (opts.scorer) {
        case ScorerKind::model:
            scorer = [&](const Scenario& s) {
                return model_scores(ctx.ckpt.params, ctx.inputs, ctx.bundle, s, {ctx.baseline, opts.guest_approximation});
            };
            break;
        case ScorerKind::wmf:
            scorer = [&](const Scenario& s) { return wmf_scores(ctx.raw, ctx.bundle, s); };
            break;
        case ScorerKind::popularity:
            scorer = [&](const Scenario& s) {
                return ranking_scores(popularity_baseline(ctx.bundle.train_prefs, s.candidates), s);
            };
            break;
        case ScorerKind::random:
            scorer = [&](const Scenario& s) { return ranking_scores(random_baseline(s.candidates, opts.seed), s); };
            break;
    }
    json config = {{"scorer", to_string(opts.scorer)},
                   {"guest_approximation", opts.guest_approximation},
                   {"baseline", to_string(ctx.baseline)}};
    if (opts.scorer == ScorerKind::model) config["model_hash"] = ctx.model_hash;
    Report r = evaluate(scorer, sc, opts.k, config);
    r.meta["scorer"] = to_string(opts.scorer);
    return r;
}

}  // namespace coldrec
