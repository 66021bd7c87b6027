#include "coldrec/cli.hpp"

#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "coldrec/pipeline.hpp"
#include "coldrec/serving.hpp"
#include "coldrec/synthetic.hpp"

namespace coldrec {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void use_stderr_logger() {
    static bool done = false;
    if (done) return;
    done = true;
    auto logger = spdlog::stderr_logger_mt("coldrec");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
}

std::array<double, 3> parse_split(const std::string& text) {
    std::array<double, 3> r{};
    std::istringstream ss(text);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, ':')) {
        if (i == 3) throw CLI::ValidationError("--split", "expected three ratios like 8:1:1");
        try {
            r[i++] = std::stod(part);
        } catch (const std::exception&) {
            throw CLI::ValidationError("--split", "'" + part + "' is not a number");
        }
    }
    if (i != 3) throw CLI::ValidationError("--split", "expected three ratios like 8:1:1");
    for (double x : r)
        if (!(x > 0.0)) throw CLI::ValidationError("--split", "ratios must be positive");
    return r;
}

std::vector<std::string> split_ids(const std::string& text) {
    std::vector<std::string> ids;
    std::istringstream ss(text);
    std::string id;
    while (std::getline(ss, id, ','))
        if (!id.empty()) ids.push_back(id);
    return ids;
}

void emit_json(const json& j, const std::string& target, std::ostream& out) {
    if (target == "-") {
        out << j.dump(2) << "\n";
        return;
    }
    std::ofstream f(target, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + target);
    f << j.dump(2) << "\n";
}

struct FoldFlags {
    std::size_t n_folds = 5;
    std::size_t fold = 1;
    std::optional<std::uint64_t> fold_seed;
    double min_rating = 7.0;

    void add(CLI::App* cmd) {
        cmd->add_option("--n-folds", n_folds, "Warm holdout folds")->capture_default_str();
        cmd->add_option("--fold", fold, "Held-out fold (1-based)")->capture_default_str();
        cmd->add_option("--fold-seed", fold_seed, "Fold seed (defaults to --seed)");
        cmd->add_option("--min-rating", min_rating, "Basket and relevance threshold")->capture_default_str();
    }
    FoldConfig config(std::uint64_t seed) const { return {n_folds, fold, fold_seed.value_or(seed), min_rating}; }
};

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::optional<std::string> path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw CLI::ValidationError("--config", "needs a file");
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (!path) return rest;

    std::ifstream in(*path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + *path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw CLI::ValidationError("--config", *path + ": " + e.what());
    }
    if (!cfg.is_object()) throw CLI::ValidationError("--config", *path + ": expected a JSON object");

    auto present = [&](const std::string& flag) {
        for (const auto& a : rest)
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    for (const auto& [key, value] : cfg.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (present(flag)) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) rest.push_back(flag);
        } else if (value.is_array()) {
            std::string joined;
            for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar(v);
            rest.push_back(flag);
            rest.push_back(joined);
        } else if (!value.is_null()) {
            rest.push_back(flag);
            rest.push_back(scalar(value));
        }
    }
    return rest;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    use_stderr_logger();
    CLI::App app{"coldrec: cold-start recommendation pipeline", "coldrec"};
    app.require_subcommand(1);
    app.add_option("--config", "JSON file supplying any flag; command-line flags win");
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    // prepare
    auto* prepare = app.add_subcommand("prepare", "Validate raw files and write a dataset bundle");
    std::string p_inter, p_items, p_edges, p_out, p_split = "8:1:1";
    std::uint64_t p_seed = 1;
    FoldFlags p_folds;
    prepare->add_option("--interactions", p_inter, "interactions.tsv")->required()->check(CLI::ExistingFile);
    prepare->add_option("--items", p_items, "items.jsonl")->required()->check(CLI::ExistingFile);
    prepare->add_option("--edges", p_edges, "edges.jsonl")->check(CLI::ExistingFile);
    prepare->add_option("--out", p_out, "Bundle directory")->required();
    prepare->add_option("--split", p_split, "train:val:test item ratios")->capture_default_str();
    prepare->add_option("--seed", p_seed, "Split seed")->capture_default_str();
    p_folds.add(prepare);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic bundle with ground-truth labels");
    SyntheticConfig s_cfg;
    std::string s_out, s_split = "8:1:1";
    FoldFlags s_folds;
    synth->add_option("--users", s_cfg.n_users)->capture_default_str();
    synth->add_option("--items", s_cfg.n_items)->capture_default_str();
    synth->add_option("--clusters", s_cfg.n_clusters)->capture_default_str();
    synth->add_option("--noise", s_cfg.noise)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    synth->add_option("--seed", s_cfg.seed)->capture_default_str();
    synth->add_option("--min-interactions", s_cfg.min_interactions)->capture_default_str();
    synth->add_option("--max-interactions", s_cfg.max_interactions)->capture_default_str();
    synth->add_option("--split", s_split)->capture_default_str();
    synth->add_option("--out", s_out, "Bundle directory")->required();
    s_folds.add(synth);

    // wmf
    auto* wmf = app.add_subcommand("wmf", "Factorize the training fold");
    WmfConfig w_cfg;
    std::string w_data, w_out, w_conf = "binary";
    bool w_det = false;
    wmf->add_option("--data", w_data, "Bundle directory")->required()->check(CLI::ExistingDirectory);
    wmf->add_option("--rank", w_cfg.rank)->capture_default_str();
    wmf->add_option("--alpha", w_cfg.alpha)->capture_default_str();
    wmf->add_option("--lambda", w_cfg.lambda)->capture_default_str();
    wmf->add_option("--sweeps", w_cfg.sweeps)->capture_default_str();
    wmf->add_option("--tolerance", w_cfg.tolerance)->capture_default_str();
    wmf->add_option("--confidence", w_conf)->capture_default_str()->check(CLI::IsMember({"binary", "rating-scaled"}));
    wmf->add_option("--threads", w_cfg.threads)->capture_default_str();
    wmf->add_option("--seed", w_cfg.seed)->capture_default_str();
    wmf->add_flag("--deterministic", w_det, "Accepted for symmetry; ALS is order-independent per row");
    wmf->add_option("--out", w_out, "factors.bin")->required();

    // encode
    auto* encode = app.add_subcommand("encode", "Build item content vectors");
    std::string e_data, e_mode = "tfidf-svd", e_emb, e_out, e_field = "both", e_format = "binary";
    std::size_t e_vocab = 8000, e_comp = 300;
    std::uint64_t e_seed = 1;
    encode->add_option("--data", e_data, "Bundle directory")->required()->check(CLI::ExistingDirectory);
    encode->add_option("--mode", e_mode)->capture_default_str()->check(CLI::IsMember({"tfidf-svd", "external"}));
    encode->add_option("--vocab", e_vocab)->capture_default_str();
    encode->add_option("--components", e_comp)->capture_default_str();
    encode->add_option("--field", e_field)->capture_default_str()->check(CLI::IsMember({"synopsis", "reviews", "both"}));
    encode->add_option("--seed", e_seed)->capture_default_str();
    encode->add_option("--embeddings", e_emb, "Precomputed embeddings (text or EMB1)")->check(CLI::ExistingFile);
    encode->add_option("--format", e_format)->capture_default_str()->check(CLI::IsMember({"binary", "text"}));
    encode->add_option("--out", e_out, "content.bin")->required();

    // train
    auto* trn = app.add_subcommand("train", "Train the two-tower model");
    TrainJob job;
    std::string t_data, t_factors, t_content, t_out, t_graph = "none", t_mask = "dropout", t_baseline = "deepnaninet",
                                                       t_act = "tanh", t_edge_field = "both", t_log;
    bool t_no_bn = false, t_no_val = false, t_det = false;
    trn->add_option("--data", t_data)->required()->check(CLI::ExistingDirectory);
    trn->add_option("--factors", t_factors)->required()->check(CLI::ExistingFile);
    trn->add_option("--content", t_content)->required()->check(CLI::ExistingFile);
    trn->add_option("--out", t_out, "Checkpoint path")->required();
    trn->add_option("--graph", t_graph)->capture_default_str()->check(CLI::IsMember({"none", "gcn", "gine"}));
    trn->add_option("--user-drop-p", job.cfg.mask.user_drop_p)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    trn->add_option("--item-drop-p", job.cfg.mask.item_drop_p)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    trn->add_option("--mask", t_mask)->capture_default_str()->check(
        CLI::IsMember({"identity", "zero", "dropout", "gaussian"}));
    trn->add_option("--dropout-rate", job.cfg.mask.rate)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    trn->add_option("--baseline", t_baseline)->capture_default_str()->check(
        CLI::IsMember({"deepnaninet", "dropoutnet"}));
    trn->add_option("--user-transform-p", job.cfg.mask.user_transform_p)->capture_default_str()->check(
        CLI::Range(0.0, 1.0));
    trn->add_option("--epochs", job.cfg.epochs)->capture_default_str();
    trn->add_option("--seed", job.cfg.seed)->capture_default_str();
    trn->add_option("--lr", job.cfg.learning_rate)->capture_default_str();
    trn->add_option("--lr-decay", job.cfg.lr_decay)->capture_default_str();
    trn->add_option("--batch-users", job.cfg.batch_users)->capture_default_str();
    trn->add_option("--items-per-user", job.cfg.items_per_user)->capture_default_str();
    trn->add_option("--negative-ratio", job.cfg.negative_ratio)->capture_default_str();
    trn->add_option("--corrupt-rate", job.cfg.corrupt_rate)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    trn->add_option("--pref-width", job.arch.pref_width)->capture_default_str();
    trn->add_option("--content-width", job.arch.content_width)->capture_default_str();
    trn->add_option("--output-dim", job.arch.output_dim)->capture_default_str();
    trn->add_option("--graph-hidden", job.arch.graph_hidden)->capture_default_str();
    trn->add_option("--graph-out", job.arch.graph_out)->capture_default_str();
    trn->add_option("--gine-layers", job.arch.gine_layers)->capture_default_str();
    trn->add_option("--activation", t_act)->capture_default_str()->check(CLI::IsMember({"tanh", "identity"}));
    trn->add_flag("--no-batch-norm", t_no_bn);
    trn->add_option("--edge-vocab", job.edges.vocab)->capture_default_str();
    trn->add_option("--edge-components", job.edges.components)->capture_default_str();
    trn->add_option("--edge-field", t_edge_field)->capture_default_str()->check(
        CLI::IsMember({"synopsis", "reviews", "both"}));
    trn->add_option("--val-k", job.val_k)->capture_default_str();
    trn->add_flag("--no-validate", t_no_val);
    trn->add_option("--log", t_log, "Training log (JSON lines)");
    trn->add_flag("--deterministic", t_det, "Single training thread (always the case)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or baseline on a scenario");
    std::string v_ckpt, v_data, v_factors, v_content, v_scenario = "cold", v_scorer = "model", v_out = "-";
    EvalOptions v_opts;
    ev->add_option("--ckpt", v_ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", v_data)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--factors", v_factors)->check(CLI::ExistingFile);
    ev->add_option("--content", v_content)->check(CLI::ExistingFile);
    ev->add_option("--scenario", v_scenario)->capture_default_str()->check(CLI::IsMember({"warm", "cold"}));
    ev->add_option("--user-mix", v_opts.user_mix)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    ev->add_option("--k", v_opts.k)->capture_default_str()->check(CLI::PositiveNumber);
    ev->add_option("--seed", v_opts.seed)->capture_default_str();
    ev->add_option("--scorer", v_scorer)->capture_default_str()->check(
        CLI::IsMember({"model", "wmf", "popularity", "random"}));
    ev->add_flag("--guest-approx", v_opts.guest_approximation, "Out-of-matrix users use the mean encoded basket item");
    ev->add_option("--out", v_out, "Report path, - for stdout")->capture_default_str();

    // serve
    auto* srv = app.add_subcommand("serve", "Serve recommendations over HTTP");
    std::string r_ckpt, r_data, r_factors, r_content, r_bind = "127.0.0.1:8080";
    srv->add_option("--ckpt", r_ckpt)->required()->check(CLI::ExistingFile);
    srv->add_option("--data", r_data)->required()->check(CLI::ExistingDirectory);
    srv->add_option("--factors", r_factors)->check(CLI::ExistingFile);
    srv->add_option("--content", r_content)->check(CLI::ExistingFile);
    srv->add_option("--bind", r_bind)->capture_default_str();

    // recommend
    auto* rec = app.add_subcommand("recommend", "Top-k for a guest basket or a known user");
    std::string c_ckpt, c_data, c_factors, c_content, c_basket, c_user, c_mode = "encode";
    std::size_t c_k = 10;
    rec->add_option("--ckpt", c_ckpt)->required()->check(CLI::ExistingFile);
    rec->add_option("--data", c_data)->required()->check(CLI::ExistingDirectory);
    rec->add_option("--factors", c_factors)->check(CLI::ExistingFile);
    rec->add_option("--content", c_content)->check(CLI::ExistingFile);
    auto* basket_opt = rec->add_option("--basket", c_basket, "Comma-separated item ids");
    auto* user_opt = rec->add_option("--user", c_user, "Known user id");
    basket_opt->excludes(user_opt);
    rec->add_option("--k", c_k)->capture_default_str()->check(CLI::PositiveNumber);
    rec->add_option("--mode", c_mode)->capture_default_str()->check(CLI::IsMember({"encode", "approximate"}));

    auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };

    try {
        std::vector<std::string> args = expand_config(raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (*rec && c_basket.empty() && c_user.empty()) {
            throw CLI::ValidationError("recommend", "needs --basket or --user");
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(log_level));
        if (*prepare) {
            Dataset data = load_dataset(p_inter, p_items, p_edges.empty() ? std::nullopt : std::optional<fs::path>(p_edges));
            if (data.duplicate_interactions > 0) {
                spdlog::warn("{} duplicate interactions; the last rating was kept", data.duplicate_interactions);
            }
            ItemSplit split = split_items(data.items.size(), parse_split(p_split), p_seed);
            const Bundle b = make_bundle(std::move(data), std::move(split), p_seed, p_folds.config(p_seed));
            save_bundle(b, p_out);
            spdlog::info("bundle: {} users, {} items, {} interactions -> {}", b.data.user_ids.size(), b.data.items.size(),
                         b.data.prefs.nnz(), p_out);
        } else if (*synth) {
            SyntheticData s = generate_synthetic(s_cfg);
            ItemSplit split = split_items(s.data.items.size(), parse_split(s_split), s_cfg.seed);
            const Bundle b = make_bundle(s.data, std::move(split), s_cfg.seed, s_folds.config(s_cfg.seed));
            save_bundle(b, s_out);
            write_ground_truth(s, fs::path(s_out) / "labels.json");
            spdlog::info("synthetic bundle: {} users, {} items -> {}", s_cfg.n_users, s_cfg.n_items, s_out);
        } else if (*wmf) {
            w_cfg.confidence = w_conf == "binary" ? ConfidenceMode::binary : ConfidenceMode::rating_scaled;
            w_cfg.validate();
            const Bundle b = load_bundle(w_data);
            run_wmf(b, w_cfg, w_out);
            spdlog::info("factors -> {}", w_out);
        } else if (*encode) {
            const Bundle b = load_bundle(e_data);
            ContentMatrix content;
            std::vector<std::string> ids;
            for (const auto& it : b.data.items) ids.push_back(it.id);
            if (e_mode == "external") {
                if (e_emb.empty()) throw CLI::ValidationError("--embeddings", "required with --mode external");
                content = load_external_embeddings(e_emb, ids);
            } else {
                const TextEncoder enc = fit_bundle_text_encoder(b, parse_document_field(e_field), e_vocab, e_comp, e_seed);
                content.vectors = enc.encode(item_documents(b.data, parse_document_field(e_field)));
                content.ids = ids;
                content.source = ContentSource::tfidf_svd;
            }
            if (e_format == "text") save_embeddings_text(e_out, content);
            else save_embeddings_binary(e_out, content);
            spdlog::info("content {}x{} -> {}", content.rows(), content.dim(), e_out);
        } else if (*trn) {
            job.data = t_data;
            job.factors = t_factors;
            job.content = t_content;
            job.arch.graph = parse_graph_kind(t_graph);
            job.arch.batch_norm = !t_no_bn;
            job.arch.activation = t_act == "tanh" ? Activation::tanh : Activation::identity;
            job.cfg.mask.mode = parse_mask_mode(t_mask);
            job.cfg.baseline = parse_baseline_mode(t_baseline);
            job.cfg.deterministic = true;
            job.edges.field = parse_document_field(t_edge_field);
            job.edges.seed = job.cfg.seed;
            job.validate = !t_no_val;
            job.log = t_log;
            const auto result = run_training(job, t_out);
            spdlog::info("loss {:.6g} -> {:.6g}; checkpoint -> {}", result.initial_loss, result.final_epoch_loss, t_out);
        } else if (*ev) {
            v_opts.scenario = parse_item_mode(v_scenario);
            v_opts.scorer = parse_scorer_kind(v_scorer);
            const ModelContext ctx = load_model_context(v_ckpt, v_data, opt_path(v_factors), opt_path(v_content));
            const Report r = evaluate_context(ctx, v_opts);
            emit_json(r.to_json(), v_out, out);
            spdlog::info("{} recall@{} = {:.4f} over {} users", r.scenario, r.k, r.recall, r.n_users_evaluated);
        } else if (*srv) {
            const auto [host, port] = parse_bind_address(r_bind);
            const ModelContext ctx = load_model_context(r_ckpt, r_data, opt_path(r_factors), opt_path(r_content));
            auto index = std::make_shared<const ServingIndex>(build_index(ctx.ckpt.params, ctx.inputs, ctx.bundle, ctx.model_hash));
            RecommendationServer server(index);
            server.run(host, port);
        } else if (*rec) {
            const ModelContext ctx = load_model_context(c_ckpt, c_data, opt_path(c_factors), opt_path(c_content));
            const ServingIndex index = build_index(ctx.ckpt.params, ctx.inputs, ctx.bundle, ctx.model_hash);
            const auto recs = c_user.empty()
                                  ? recommend_guest(index, split_ids(c_basket), c_k, parse_guest_mode(c_mode))
                                  : recommend_user(index, c_user, c_k);
            out << recommendations_json(recs).dump(2) << "\n";
        }
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace coldrec
