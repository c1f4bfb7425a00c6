// Command-line driver: train, cache, predict, eval, bench, gen-data.
//
// Every command reads one config file ([section] key = value), applies
// --seed overrides, and stamps the SHA-256 of the effective config into
// each output (CSV header comment, or a .sha sidecar next to binaries).
// Exit codes: 0 success, 2 usage or config problems, 1 runtime failures.

#include <sys/stat.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cacheflow/cacheflow.hpp"

namespace cf = cacheflow;

namespace {

struct CommonOpts {
    std::string config_path;
    long long seed = -1;  // <0 means: use the seeds in the config file
    std::string out = ".";
};

bool file_exists(const std::string& path) {
    struct stat st {};
    return ::stat(path.c_str(), &st) == 0;
}

void require_path(const std::string& path, const std::string& key) {
    if (!file_exists(path))
        throw cf::ConfigError("config key " + key + ": cannot open " + path);
}

void make_dir(const std::string& path) {
    if (path.empty() || path == ".") return;
    std::string partial;
    for (std::size_t i = 0; i <= path.size(); ++i) {
        if (i == path.size() || path[i] == '/') {
            if (!partial.empty() && !file_exists(partial)) ::mkdir(partial.c_str(), 0755);
        }
        if (i < path.size()) partial.push_back(path[i]);
    }
}

cf::Config load_config(const CommonOpts& opts) {
    if (opts.config_path.empty()) throw cf::ConfigError("--config is required");
    require_path(opts.config_path, "--config");
    cf::Config cfg = cf::Config::parse_file(opts.config_path);
    if (opts.seed >= 0) {
        // One flag reseeds every stage deterministically.
        cfg.set("data", "seed", std::to_string(opts.seed));
        cfg.set("model", "init_seed", std::to_string(opts.seed + 1));
        cfg.set("train", "seed", std::to_string(opts.seed + 2));
        cfg.set("predict", "seed", std::to_string(opts.seed + 3));
        cfg.set("eval", "seed", std::to_string(opts.seed + 4));
        cfg.set("bench", "seed", std::to_string(opts.seed + 5));
    }
    return cfg;
}

void write_sidecar(const std::string& artifact_path, const cf::Config& cfg) {
    std::FILE* f = std::fopen((artifact_path + ".sha").c_str(), "wb");
    if (!f) throw cf::IoError("cannot write sidecar for " + artifact_path);
    std::fprintf(f, "config_hash=%s\n", cfg.hash_hex().c_str());
    std::fclose(f);
}

std::FILE* open_csv(const std::string& path, const cf::Config& cfg) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw cf::IoError("cannot write " + path);
    std::fprintf(f, "# config_hash=%s\n", cfg.hash_hex().c_str());
    return f;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

cf::BenchmarkSpec benchmark_spec(const cf::Config& cfg) {
    cf::BenchmarkSpec s;
    s.generator = cfg.require_string("data", "generator");
    s.past_frames = static_cast<std::size_t>(cfg.get_int("data", "past_frames", 8));
    s.future_frames = static_cast<std::size_t>(cfg.get_int("data", "future_frames", 12));
    s.joints = static_cast<std::size_t>(cfg.get_int("data", "joints", 1));
    s.train_size = static_cast<std::size_t>(cfg.get_int("data", "train_size", 2000));
    s.test_size = static_cast<std::size_t>(cfg.get_int("data", "test_size", 200));
    s.modes = static_cast<std::size_t>(cfg.get_int("data", "modes", 2));
    s.noise_scale = cfg.get_double("data", "noise_scale", 0.02);
    s.seed = static_cast<std::uint64_t>(cfg.get_int("data", "seed", 0));
    s.fps = cfg.get_double("data", "fps", 25.0);
    s.weight_low = cfg.get_double("data", "weight_low", 0.25);
    s.weight_high = cfg.get_double("data", "weight_high", 0.75);
    s.phase_jitter = cfg.get_double("data", "phase_jitter", 0.08);
    return s;
}

// Dataset source: either [data] generator (synthesized on the fly) or
// train_path/test_path pointing at array files.
cf::SplitDataset resolve_dataset(const cf::Config& cfg) {
    if (cfg.has("data", "generator")) return cf::generate(benchmark_spec(cfg));
    if (!cfg.has("data", "train_path") && !cfg.has("data", "test_path"))
        throw cf::ConfigError(
            "missing required config key data.generator (or data.train_path/data.test_path)");
    cf::SplitDataset ds;
    if (cfg.has("data", "train_path")) {
        std::string p = cfg.require_string("data", "train_path");
        require_path(p, "data.train_path");
        ds.train = cf::load_array_file(p);
    }
    if (cfg.has("data", "test_path")) {
        std::string p = cfg.require_string("data", "test_path");
        require_path(p, "data.test_path");
        ds.test = cf::load_array_file(p);
    }
    return ds;
}

cf::Codec make_codec(const cf::Config& cfg, const cf::Dataset& train) {
    std::string kind = cfg.get_string("codec", "kind", "linear");
    if (train.futures.empty()) throw cf::ConfigError("codec fitting needs training futures");
    const cf::PoseSequence& f0 = train.futures[0];
    if (kind == "identity") return cf::Codec::identity_codec(f0.frames, f0.joints, f0.fps);
    if (kind == "linear") {
        std::size_t d = static_cast<std::size_t>(cfg.get_int("model", "dim", 8));
        return cf::fit_linear(train.futures, d);
    }
    throw cf::ConfigError("codec.kind must be identity or linear, got '" + kind + "'");
}

cf::ModelSpec model_spec(const cf::Config& cfg, std::size_t cond_input_dim,
                         std::size_t latent_dim) {
    cf::ModelSpec ms;
    ms.dim = latent_dim;
    ms.flow_hidden = cfg.get_size_list("model", "flow_hidden", {256, 256});
    ms.flow_act = cf::activation_from_string(cfg.get_string("model", "flow_activation", "silu"));
    ms.cond_input_dim = cond_input_dim;
    ms.rnn_hidden = static_cast<std::size_t>(cfg.get_int("model", "rnn_hidden", 128));
    ms.modes = static_cast<std::size_t>(cfg.get_int("model", "modes", 50));
    ms.sigma_floor = cfg.get_double("model", "sigma_floor", cf::kDefaultSigmaFloor);
    return ms;
}

cf::IntegratorConfig integrator_config(const cf::Config& cfg, const std::string& section,
                                       const std::string& default_scheme, long long default_steps) {
    cf::IntegratorConfig ic;
    ic.scheme =
        cf::scheme_from_string(cfg.get_string(section, "integrator_scheme", default_scheme));
    ic.steps = static_cast<std::size_t>(cfg.get_int(section, "integrator_steps", default_steps));
    return ic;
}

// Artifacts produced by cmd_train / cmd_cache under one directory.
struct Artifacts {
    cf::Codec codec;
    cf::CacheFlowModel model;
    std::string dir;
};

std::string artifacts_dir(const cf::Config& cfg, const std::string& section,
                          const std::string& fallback) {
    return cfg.get_string(section, "artifacts", fallback);
}

Artifacts load_artifacts(const cf::Config& cfg, const std::string& dir, std::size_t cond_dim) {
    std::string model_path = dir + "/model.cfparam";
    std::string codec_path = dir + "/codec.cfcodec";
    require_path(model_path, "artifacts (model.cfparam)");
    require_path(codec_path, "artifacts (codec.cfcodec)");
    cf::Codec codec = cf::Codec::load(codec_path);
    cf::CacheFlowModel model(model_spec(cfg, cond_dim, codec.latent_dim),
                             static_cast<std::uint64_t>(cfg.get_int("model", "init_seed", 1)));
    model.store().load(model_path);
    return Artifacts{std::move(codec), std::move(model), dir};
}

cf::TripletCache load_cache(const std::string& dir) {
    std::string path = dir + "/cache.cfcache";
    require_path(path, "artifacts (cache.cfcache)");
    return cf::TripletCache::load(path);
}

std::size_t cond_dim_of(const cf::Dataset& ds) {
    if (ds.pasts.empty()) throw cf::ConfigError("dataset has no past sequences");
    return ds.pasts[0].joints * 3;
}

int cmd_gen_data(const CommonOpts& opts) {
    cf::Config cfg = load_config(opts);
    cf::SplitDataset ds = cf::generate(benchmark_spec(cfg));
    make_dir(opts.out);
    std::string train_path = opts.out + "/train.cfdata";
    std::string test_path = opts.out + "/test.cfdata";
    cf::save_array_file(train_path, ds.train);
    cf::save_array_file(test_path, ds.test);
    write_sidecar(train_path, cfg);
    write_sidecar(test_path, cfg);
    std::printf("gen-data: wrote %zu train / %zu test items to %s\n", ds.train.size(),
                ds.test.size(), opts.out.c_str());
    return 0;
}

int cmd_train(const CommonOpts& opts) {
    cf::Config cfg = load_config(opts);
    cf::SplitDataset ds = resolve_dataset(cfg);
    if (ds.train.size() == 0)
        throw cf::ConfigError("missing required config key data.train_path (or data.generator)");

    cf::Codec codec = make_codec(cfg, ds.train);
    cf::Matrix targets = cf::encode_all(codec, ds.train.futures);
    cf::CacheFlowModel model(model_spec(cfg, cond_dim_of(ds.train), codec.latent_dim),
                             static_cast<std::uint64_t>(cfg.get_int("model", "init_seed", 1)));

    cf::TrainConfig tc;
    tc.epochs = static_cast<std::size_t>(cfg.get_int("train", "epochs", 10));
    tc.batch_size = static_cast<std::size_t>(cfg.get_int("train", "batch_size", 64));
    tc.lr = cfg.get_double("train", "lr", 5e-4);
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("train", "seed", 0));
    tc.lambda_nll = cfg.get_double("train", "lambda_nll", 1.0);
    tc.lambda_cfm = cfg.get_double("train", "lambda_cfm", 1.0);
    tc.integrator = integrator_config(cfg, "train", "euler", 8);
    tc.log_every = static_cast<std::size_t>(cfg.get_int("train", "log_every", 50));

    std::vector<cf::Condition> conds = cf::dataset_conditions(ds.train);
    cf::TrainResult result = cf::train(model, conds, targets, tc);

    make_dir(opts.out);
    std::string model_path = opts.out + "/model.cfparam";
    std::string codec_path = opts.out + "/codec.cfcodec";
    model.store().save(model_path);
    codec.save(codec_path);
    write_sidecar(model_path, cfg);
    write_sidecar(codec_path, cfg);

    std::FILE* f = open_csv(opts.out + "/loss.csv", cfg);
    std::fprintf(f, "step,cfm,nll,total\n");
    for (const cf::LossRecord& r : result.curve)
        std::fprintf(f, "%zu,%.17g,%.17g,%.17g\n", r.step, r.cfm, r.nll, r.total);
    std::fclose(f);

    std::printf("train: %zu steps, final loss %.6f, artifacts in %s\n", result.steps,
                result.curve.empty() ? 0.0 : result.curve.back().total, opts.out.c_str());
    return 0;
}

int cmd_cache(const CommonOpts& opts) {
    cf::Config cfg = load_config(opts);
    cf::SplitDataset ds = resolve_dataset(cfg);
    if (ds.train.size() == 0)
        throw cf::ConfigError("missing required config key data.train_path (or data.generator)");
    Artifacts art = load_artifacts(cfg, artifacts_dir(cfg, "cache", opts.out),
                                   cond_dim_of(ds.train));

    cf::IntegratorConfig ic = integrator_config(cfg, "cache", "rk4", 32);
    std::string prec = cfg.get_string("cache", "precision", "f32");
    if (prec != "f32" && prec != "f64")
        throw cf::ConfigError("cache.precision must be f32 or f64, got '" + prec + "'");

    double t0 = now_ms();
    cf::TripletCache cache =
        cf::build_cache(art.model.store(), art.model.flow(), art.codec, ds.train.futures, ic,
                        art.model.flow_fingerprint(), prec == "f32" ? 4 : 8);
    double t1 = now_ms();

    make_dir(opts.out);
    std::string cache_path = opts.out + "/cache.cfcache";
    cache.save(cache_path);
    write_sidecar(cache_path, cfg);
    std::printf("cache: %zu triplets (d=%zu, %s) in %.1f ms -> %s\n", cache.size(), cache.dim(),
                prec.c_str(), t1 - t0, cache_path.c_str());
    return 0;
}

int cmd_predict(const CommonOpts& opts) {
    cf::Config cfg = load_config(opts);
    cf::SplitDataset ds = resolve_dataset(cfg);
    if (ds.test.size() == 0)
        throw cf::ConfigError("missing required config key data.test_path (or data.generator)");
    std::string dir = artifacts_dir(cfg, "predict", opts.out);
    Artifacts art = load_artifacts(cfg, dir, cond_dim_of(ds.test));
    cf::TripletCache cache = load_cache(dir);

    std::size_t n = static_cast<std::size_t>(cfg.get_int("predict", "n", 50));
    std::string method = cfg.get_string("predict", "method", "nn");
    cf::Rng rng(static_cast<std::uint64_t>(cfg.get_int("predict", "seed", 0)));

    make_dir(opts.out);
    std::FILE* f = open_csv(opts.out + "/predictions.csv", cfg);
    std::fprintf(f, "condition_id,rank,cache_index,log_prob\n");
    cf::Dataset decoded;
    decoded.fps = art.codec.fps;

    std::vector<cf::Condition> conds = cf::dataset_conditions(ds.test);
    for (std::size_t i = 0; i < conds.size(); ++i) {
        cf::PredictionSet ps;
        if (method == "nn") {
            ps = cf::sample_nn(art.model, cache, conds[i], n, rng);
        } else if (method == "random") {
            ps = cf::sample_random(cache, n, rng);
        } else if (method == "most-likely") {
            cf::DensityReport rep = cf::estimate_density(art.model, cache, conds[i]);
            ps = cf::sample_most_likely(rep, n);
        } else {
            std::fclose(f);
            throw cf::ConfigError("predict.method must be nn, random, or most-likely, got '" +
                                  method + "'");
        }
        for (std::size_t r = 0; r < ps.indices.size(); ++r) {
            if (ps.log_prob.empty())
                std::fprintf(f, "%zu,%zu,%zu,\n", i, r, ps.indices[r]);
            else
                std::fprintf(f, "%zu,%zu,%zu,%.17g\n", i, r, ps.indices[r], ps.log_prob[r]);
        }
        std::vector<cf::PoseSequence> futures =
            cf::decode_predictions(cache, art.codec, ps.indices);
        for (auto& fut : futures) {
            decoded.pasts.push_back(ds.test.pasts[i]);
            decoded.futures.push_back(std::move(fut));
        }
    }
    std::fclose(f);

    std::string dump_path = opts.out + "/predictions.cfdata";
    cf::save_array_file(dump_path, decoded);
    write_sidecar(dump_path, cfg);
    std::printf("predict: %zu conditions x %zu samples (%s) -> %s\n", conds.size(), n,
                method.c_str(), opts.out.c_str());
    return 0;
}

struct EvalRow {
    std::string method;
    double apd = 0, ade = 0, fde = 0, mmade = 0, mmfde = 0;
    double mm_log_prob = 0;
    std::size_t excluded = 0;
    double time_ms = 0;
};

int cmd_eval(const CommonOpts& opts, const std::string& methods_flag) {
    cf::Config cfg = load_config(opts);
    std::string methods_csv =
        !methods_flag.empty() ? methods_flag : cfg.get_string("eval", "methods", "");
    std::vector<std::string> methods;
    {
        std::string item;
        for (std::size_t i = 0; i <= methods_csv.size(); ++i) {
            if (i == methods_csv.size() || methods_csv[i] == ',') {
                if (!item.empty()) methods.push_back(item);
                item.clear();
            } else if (methods_csv[i] != ' ') {
                item.push_back(methods_csv[i]);
            }
        }
    }
    if (methods.empty())
        throw cf::ConfigError("eval: no methods selected (use --methods or eval.methods)");
    static const std::vector<std::string> known = {"cacheflow", "gmm-only", "kde-over-samples",
                                                   "random", "most-likely"};
    for (const auto& m : methods)
        if (std::find(known.begin(), known.end(), m) == known.end())
            throw cf::ConfigError("eval: unknown method '" + m + "'");

    cf::SplitDataset ds = resolve_dataset(cfg);
    if (ds.test.size() == 0)
        throw cf::ConfigError("missing required config key data.test_path (or data.generator)");

    std::string main_dir = artifacts_dir(cfg, "eval", opts.out);
    std::size_t cdim = cond_dim_of(ds.test);
    Artifacts art = load_artifacts(cfg, main_dir, cdim);
    cf::TripletCache cache = load_cache(main_dir);

    // gmm-only reads a separately trained run when one is configured
    // (lambda_cfm = 0 leaves that flow at identity); otherwise it reuses
    // the main artifacts and the row duplicates cacheflow.
    std::unique_ptr<Artifacts> gmm_art;
    std::unique_ptr<cf::TripletCache> gmm_cache;
    if (std::find(methods.begin(), methods.end(), "gmm-only") != methods.end()) {
        std::string gdir = cfg.get_string("eval", "gmm_only_artifacts", main_dir);
        gmm_art = std::make_unique<Artifacts>(load_artifacts(cfg, gdir, cdim));
        gmm_cache = std::make_unique<cf::TripletCache>(load_cache(gdir));
    }

    std::size_t n_samples = static_cast<std::size_t>(cfg.get_int("eval", "n_samples", 50));
    cf::IntegratorConfig ic = integrator_config(cfg, "cache", "rk4", 32);
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("eval", "seed", 0));

    double tau = cfg.has("eval", "tau")
                     ? cfg.require_double("eval", "tau")
                     : cf::calibrate_tau(ds.test.pasts, static_cast<std::size_t>(cfg.get_int(
                                                            "eval", "target_median", 5)));
    cf::MultimodalGT mmgt = cf::build_mmgt(ds.test.pasts, tau);

    std::vector<cf::Condition> conds = cf::dataset_conditions(ds.test);
    cf::Matrix test_lat = cf::encode_all(art.codec, ds.test.futures);
    cf::Matrix gmm_test_lat;
    if (gmm_art) gmm_test_lat = cf::encode_all(gmm_art->codec, ds.test.futures);

    std::vector<EvalRow> rows;
    for (const std::string& method : methods) {
        bool is_gmm = method == "gmm-only";
        Artifacts& a = is_gmm ? *gmm_art : art;
        cf::TripletCache& c = is_gmm ? *gmm_cache : cache;
        const cf::Matrix& lat = is_gmm ? gmm_test_lat : test_lat;

        cf::Rng rng(seed);  // same stream per method: rows differ by method only
        EvalRow row;
        row.method = method;
        std::vector<double> member_lps;
        std::vector<double> times;
        double apd_s = 0, ade_s = 0, fde_s = 0, mmade_s = 0, mmfde_s = 0;

        for (std::size_t i = 0; i < conds.size(); ++i) {
            cf::GmmParams g = a.model.base().regress(a.model.store(), conds[i]);
            cf::PredictionSet ps;
            double t0 = now_ms();
            if (method == "random") {
                ps = cf::sample_random(c, n_samples, rng);
            } else if (method == "most-likely") {
                cf::DensityReport rep = cf::estimate_density(a.model, c, conds[i]);
                ps = cf::sample_most_likely(rep, n_samples);
            } else {
                ps = cf::sample_nn(a.model, c, conds[i], n_samples, rng);
            }
            times.push_back(now_ms() - t0);

            std::vector<cf::PoseSequence> preds = cf::decode_predictions(c, a.codec, ps.indices);
            apd_s += cf::apd(preds);
            ade_s += cf::ade(preds, ds.test.futures[i]);
            fde_s += cf::fde(preds, ds.test.futures[i]);
            std::vector<cf::PoseSequence> gt_set;
            for (std::size_t m : mmgt.members[i]) gt_set.push_back(ds.test.futures[m]);
            mmade_s += cf::mmade(preds, gt_set);
            mmfde_s += cf::mmfde(preds, gt_set);

            for (std::size_t m : mmgt.members[i]) {
                cf::LatentVector x(lat.row_ptr(m), lat.row_ptr(m) + lat.cols);
                if (method == "kde-over-samples") {
                    cf::Matrix samples(ps.indices.size(), c.dim());
                    for (std::size_t r = 0; r < ps.indices.size(); ++r)
                        for (std::size_t q = 0; q < c.dim(); ++q)
                            samples.at(r, q) = c.xs().at(ps.indices[r], q);
                    cf::KdeModel kde = cf::fit_kde(samples);
                    member_lps.push_back(cf::kde_log_prob(kde, x));
                } else {
                    member_lps.push_back(cf::flow_density_log_prob(a.model, g, x, ic));
                }
            }
        }

        std::size_t nc = conds.size();
        row.apd = apd_s / nc;
        row.ade = ade_s / nc;
        row.fde = fde_s / nc;
        row.mmade = mmade_s / nc;
        row.mmfde = mmfde_s / nc;
        cf::MmLogProb mlp = cf::mm_log_prob_per_dim(member_lps, c.dim());
        row.mm_log_prob = mlp.per_dim;
        row.excluded = mlp.excluded;
        row.time_ms = median(times);
        rows.push_back(row);
        std::printf("eval %-16s apd %.4f ade %.4f fde %.4f mmade %.4f mmfde %.4f "
                    "mm_log_prob/d %.4f (excl %zu) %.3f ms\n",
                    method.c_str(), row.apd, row.ade, row.fde, row.mmade, row.mmfde,
                    row.mm_log_prob, row.excluded, row.time_ms);
    }

    make_dir(opts.out);
    std::FILE* f = open_csv(opts.out + "/metrics.csv", cfg);
    std::fprintf(f, "method,apd,ade,fde,mmade,mmfde,mm_log_prob_per_dim,excluded,time_ms\n");
    for (const EvalRow& r : rows)
        std::fprintf(f, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%.17g\n", r.method.c_str(),
                     r.apd, r.ade, r.fde, r.mmade, r.mmfde, r.mm_log_prob, r.excluded, r.time_ms);
    std::fclose(f);
    std::printf("eval: wrote %s/metrics.csv (tau %.6g)\n", opts.out.c_str(), tau);
    return 0;
}

int cmd_bench(const CommonOpts& opts, bool density_only) {
    cf::Config cfg = load_config(opts);
    std::size_t k = static_cast<std::size_t>(cfg.get_int("bench", "k", 10000));
    std::size_t reps = static_cast<std::size_t>(cfg.get_int("bench", "repetitions", 30));
    std::size_t full_reps = static_cast<std::size_t>(cfg.get_int("bench", "full_repetitions", 3));
    std::size_t warmup = static_cast<std::size_t>(cfg.get_int("bench", "warmup", 5));
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("bench", "seed", 0));
    cf::IntegratorConfig ic = integrator_config(cfg, "bench", "rk4", 32);

    // Timing is weight-independent, so the model may be random-init
    // (no artifacts configured) or a trained checkpoint.
    std::size_t cond_dim = static_cast<std::size_t>(cfg.get_int("data", "joints", 1)) * 3;
    std::size_t dim = static_cast<std::size_t>(cfg.get_int("model", "dim", 8));
    std::unique_ptr<cf::CacheFlowModel> model;
    std::unique_ptr<cf::Codec> codec;  // decode timed only when a real codec exists
    if (cfg.has("bench", "artifacts")) {
        Artifacts art = load_artifacts(cfg, cfg.require_string("bench", "artifacts"), cond_dim);
        dim = art.codec.latent_dim;
        codec = std::make_unique<cf::Codec>(std::move(art.codec));
        model = std::make_unique<cf::CacheFlowModel>(std::move(art.model));
    } else {
        model = std::make_unique<cf::CacheFlowModel>(model_spec(cfg, cond_dim, dim),
                                                     static_cast<std::uint64_t>(
                                                         cfg.get_int("model", "init_seed", 1)));
    }

    cf::Rng rng(seed);
    cf::Matrix xs(k, dim);
    for (double& v : xs.data) v = rng.normal();
    std::size_t past_frames = static_cast<std::size_t>(cfg.get_int("data", "past_frames", 8));
    cf::Matrix past(past_frames, cond_dim);
    for (double& v : past.data) v = rng.normal();
    cf::Condition cond{past};

    double t0 = now_ms();
    cf::TripletCache cache =
        cf::build_cache(model->store(), model->flow(), xs, ic, model->flow_fingerprint());
    double cache_build_ms = now_ms() - t0;

    // (b) cached per-condition density estimation over all K triplets.
    std::vector<double> cached_times, predict_times;
    for (std::size_t i = 0; i < warmup + reps; ++i) {
        cf::DensityReport rep = cf::estimate_density(*model, cache, cond);
        if (i >= warmup) cached_times.push_back(rep.eval_seconds * 1e3);
        if (!density_only) {
            double p0 = now_ms();
            cf::Rng srng(seed + 1 + i);
            cf::PredictionSet ps = cf::sample_nn(*model, cache, cond, 50, srng);
            if (codec) cf::decode_predictions(cache, *codec, ps.indices);
            if (i >= warmup) predict_times.push_back(now_ms() - p0);
        }
    }

    // (c) uncached flow integration of the same K points.
    std::vector<double> uncached_times;
    for (std::size_t i = 0; i < warmup + reps; ++i) {
        double u0 = now_ms();
        cf::flow_inverse_points(model->store(), model->flow(), xs, ic);
        if (i >= warmup) uncached_times.push_back(now_ms() - u0);
    }

    // Full uncached density (inverse with log-det, then the base) is the
    // slowest path; a few repetitions pin the order of magnitude.
    std::vector<double> uncached_density_times;
    for (std::size_t i = 0; i < full_reps; ++i) {
        double u0 = now_ms();
        cf::BatchFlowResult inv = cf::flow_inverse(model->store(), model->flow(), xs, ic);
        cf::GmmParams g = model->base().regress(model->store(), cond);
        double acc = 0.0;
        for (std::size_t r = 0; r < k; ++r)
            acc += cf::gmm_log_prob_ptr(g, inv.endpoints.row_ptr(r)) + inv.log_det_inv[r];
        if (acc != acc) std::fprintf(stderr, "bench: non-finite uncached density sum\n");
        uncached_density_times.push_back(now_ms() - u0);
    }

    double cached_ms = median(cached_times);
    double uncached_ms = median(uncached_times);
    double uncached_density_ms = median(uncached_density_times);

    make_dir(opts.out);
    std::FILE* f = open_csv(opts.out + "/bench.csv", cfg);
    std::fprintf(f, "metric,value\n");
    std::fprintf(f, "k,%zu\n", k);
    std::fprintf(f, "repetitions,%zu\n", reps);
    std::fprintf(f, "cache_build_ms,%.6g\n", cache_build_ms);
    std::fprintf(f, "cached_density_ms,%.6g\n", cached_ms);
    if (!density_only) std::fprintf(f, "cached_predict_ms,%.6g\n", median(predict_times));
    std::fprintf(f, "uncached_flow_ms,%.6g\n", uncached_ms);
    std::fprintf(f, "uncached_density_ms,%.6g\n", uncached_density_ms);
    std::fprintf(f, "speedup_flow,%.6g\n", uncached_ms / cached_ms);
    std::fprintf(f, "speedup_density,%.6g\n", uncached_density_ms / cached_ms);
    std::fclose(f);

    std::printf("bench: k=%zu cached %.3f ms, uncached flow %.1f ms (%.0fx), "
                "uncached density %.1f ms (%.0fx), build %.1f ms\n",
                k, cached_ms, uncached_ms, uncached_ms / cached_ms, uncached_density_ms,
                uncached_density_ms / cached_ms, cache_build_ms);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CacheFlow: cached continuous-flow density estimation and motion prediction"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string methods_flag;
    bool density_only = false;
    std::function<int()> run;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "Config file path");
        sub->add_option("--seed", opts.seed, "Override all stage seeds deterministically");
        sub->add_option("--out", opts.out, "Output directory");
    };

    CLI::App* s_train = app.add_subcommand("train", "Train the flow and base density");
    add_common(s_train);
    s_train->callback([&] { run = [&] { return cmd_train(opts); }; });

    CLI::App* s_cache = app.add_subcommand("cache", "Build the triplet cache");
    add_common(s_cache);
    s_cache->callback([&] { run = [&] { return cmd_cache(opts); }; });

    CLI::App* s_predict = app.add_subcommand("predict", "Sample future predictions");
    add_common(s_predict);
    s_predict->callback([&] { run = [&] { return cmd_predict(opts); }; });

    CLI::App* s_eval = app.add_subcommand("eval", "Compare methods on one dataset");
    add_common(s_eval);
    s_eval->add_option("--methods", methods_flag,
                       "Comma list: cacheflow,gmm-only,kde-over-samples,random,most-likely");
    s_eval->callback([&] { run = [&] { return cmd_eval(opts, methods_flag); }; });

    CLI::App* s_bench = app.add_subcommand("bench", "Time cached vs uncached inference");
    add_common(s_bench);
    s_bench->add_flag("--density-only", density_only, "Skip the sampling+decode timing");
    s_bench->callback([&] { run = [&] { return cmd_bench(opts, density_only); }; });

    CLI::App* s_gen = app.add_subcommand("gen-data", "Write a synthetic benchmark to disk");
    add_common(s_gen);
    s_gen->callback([&] { run = [&] { return cmd_gen_data(opts); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return run();
    } catch (const cf::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const cf::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
