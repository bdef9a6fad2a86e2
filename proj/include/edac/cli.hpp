#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "edac/checks.hpp"
#include "edac/datagen.hpp"

namespace edac {

// Config document driving every command. JSON file plus flag overrides;
// unknown keys are rejected.
struct RunConfig {
    struct Env {
        std::string name = "pointmass1d";
    } env;
    struct Data {
        std::string tier = "medium";
        uint64_t n = 20000;
        uint64_t seed = 1;
        std::string path;  // defaults to <output.dir>/<env>-<tier>.odrl
    } data;
    struct Train {
        std::string algorithm = "edac";
        int n = 10;
        double eta = 1.0;
        bool beta_auto = true;
        double beta = 1.0;
        double gamma = 0.99;
        double rho = 0.995;
        double lr_q = 3e-4;
        double lr_policy = 3e-4;
        int batch_size = 256;
        int total_steps = 50000;
        uint64_t seed = 0;
        int checkpoint_every = 5000;
        int log_every = 100;
        int width = 256;
        double cql_alpha = 1.0;
        int cql_m = 4;
        double var_c = 1.0;
        std::string es_variant = "cosine";
        bool es_stop_normalizer = false;
    } train;
    struct Eval {
        int episodes = 10;
        uint64_t seed = 0;
        std::string checkpoint;  // defaults to the latest in output.dir
    } eval;
    struct Analyze {
        int rows = 1024;
        int bins = 32;
        uint64_t seed = 0;
    } analyze;
    struct Output {
        std::string dir = "runs/default";
    } output;

    TrainConfig train_config() const {
        TrainConfig tc;
        tc.algorithm = algo_from_name(train.algorithm);
        tc.n = train.n;
        tc.eta = train.eta;
        tc.beta_auto = train.beta_auto;
        tc.beta = train.beta;
        tc.gamma = train.gamma;
        tc.rho = train.rho;
        tc.lr_q = train.lr_q;
        tc.lr_policy = train.lr_policy;
        tc.batch_size = train.batch_size;
        tc.total_steps = train.total_steps;
        tc.seed = train.seed;
        tc.width = train.width;
        tc.cql_alpha = train.cql_alpha;
        tc.cql_m = train.cql_m;
        tc.var_c = train.var_c;
        if (train.es_variant == "cosine")
            tc.es_variant = EsVariant::Cosine;
        else if (train.es_variant == "raw")
            tc.es_variant = EsVariant::RawInner;
        else
            throw ConfigError("config: es_variant must be 'cosine' or 'raw'");
        tc.es_stop_normalizer = train.es_stop_normalizer;
        tc.validate();
        return tc;
    }

    std::string dataset_path() const {
        if (!data.path.empty()) return data.path;
        return output.dir + "/" + env.name + "-" + data.tier + ".odrl";
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& section,
                                const std::vector<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const auto& a : allowed) ok = ok || key == a;
        if (!ok)
            throw ConfigError("config: unknown key '" + key + "' in section '" + section + "'");
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig c;
    detail::reject_unknown_keys(j, "(root)",
                                {"env", "data", "train", "eval", "analyze", "output"});
    if (j.contains("env")) {
        const auto& s = j.at("env");
        detail::reject_unknown_keys(s, "env", {"name"});
        if (s.contains("name")) s.at("name").get_to(c.env.name);
    }
    if (j.contains("data")) {
        const auto& s = j.at("data");
        detail::reject_unknown_keys(s, "data", {"tier", "n", "seed", "path"});
        if (s.contains("tier")) s.at("tier").get_to(c.data.tier);
        if (s.contains("n")) s.at("n").get_to(c.data.n);
        if (s.contains("seed")) s.at("seed").get_to(c.data.seed);
        if (s.contains("path")) s.at("path").get_to(c.data.path);
    }
    if (j.contains("train")) {
        const auto& s = j.at("train");
        detail::reject_unknown_keys(
            s, "train",
            {"algorithm", "N", "eta", "beta", "gamma", "rho", "lr_q", "lr_policy", "batch_size",
             "total_steps", "seed", "checkpoint_every", "log_every", "width", "cql_alpha",
             "cql_m", "var_c", "es_variant", "es_stop_normalizer"});
        if (s.contains("algorithm")) s.at("algorithm").get_to(c.train.algorithm);
        if (s.contains("N")) s.at("N").get_to(c.train.n);
        if (s.contains("eta")) s.at("eta").get_to(c.train.eta);
        if (s.contains("beta")) {
            const auto& b = s.at("beta");
            if (b.is_string()) {
                if (b.get<std::string>() != "auto")
                    throw ConfigError("config: train.beta must be a number or \"auto\"");
                c.train.beta_auto = true;
            } else {
                c.train.beta_auto = false;
                b.get_to(c.train.beta);
            }
        }
        if (s.contains("gamma")) s.at("gamma").get_to(c.train.gamma);
        if (s.contains("rho")) s.at("rho").get_to(c.train.rho);
        if (s.contains("lr_q")) s.at("lr_q").get_to(c.train.lr_q);
        if (s.contains("lr_policy")) s.at("lr_policy").get_to(c.train.lr_policy);
        if (s.contains("batch_size")) s.at("batch_size").get_to(c.train.batch_size);
        if (s.contains("total_steps")) s.at("total_steps").get_to(c.train.total_steps);
        if (s.contains("seed")) s.at("seed").get_to(c.train.seed);
        if (s.contains("checkpoint_every")) s.at("checkpoint_every").get_to(c.train.checkpoint_every);
        if (s.contains("log_every")) s.at("log_every").get_to(c.train.log_every);
        if (s.contains("width")) s.at("width").get_to(c.train.width);
        if (s.contains("cql_alpha")) s.at("cql_alpha").get_to(c.train.cql_alpha);
        if (s.contains("cql_m")) s.at("cql_m").get_to(c.train.cql_m);
        if (s.contains("var_c")) s.at("var_c").get_to(c.train.var_c);
        if (s.contains("es_variant")) s.at("es_variant").get_to(c.train.es_variant);
        if (s.contains("es_stop_normalizer"))
            s.at("es_stop_normalizer").get_to(c.train.es_stop_normalizer);
    }
    if (j.contains("eval")) {
        const auto& s = j.at("eval");
        detail::reject_unknown_keys(s, "eval", {"episodes", "seed", "checkpoint"});
        if (s.contains("episodes")) s.at("episodes").get_to(c.eval.episodes);
        if (s.contains("seed")) s.at("seed").get_to(c.eval.seed);
        if (s.contains("checkpoint")) s.at("checkpoint").get_to(c.eval.checkpoint);
    }
    if (j.contains("analyze")) {
        const auto& s = j.at("analyze");
        detail::reject_unknown_keys(s, "analyze", {"rows", "bins", "seed"});
        if (s.contains("rows")) s.at("rows").get_to(c.analyze.rows);
        if (s.contains("bins")) s.at("bins").get_to(c.analyze.bins);
        if (s.contains("seed")) s.at("seed").get_to(c.analyze.seed);
    }
    if (j.contains("output")) {
        const auto& s = j.at("output");
        detail::reject_unknown_keys(s, "output", {"dir"});
        if (s.contains("dir")) s.at("dir").get_to(c.output.dir);
    }
    return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json train = {{"algorithm", c.train.algorithm},
                            {"N", c.train.n},
                            {"eta", c.train.eta},
                            {"gamma", c.train.gamma},
                            {"rho", c.train.rho},
                            {"lr_q", c.train.lr_q},
                            {"lr_policy", c.train.lr_policy},
                            {"batch_size", c.train.batch_size},
                            {"total_steps", c.train.total_steps},
                            {"seed", c.train.seed},
                            {"checkpoint_every", c.train.checkpoint_every},
                            {"log_every", c.train.log_every},
                            {"width", c.train.width},
                            {"cql_alpha", c.train.cql_alpha},
                            {"cql_m", c.train.cql_m},
                            {"var_c", c.train.var_c},
                            {"es_variant", c.train.es_variant},
                            {"es_stop_normalizer", c.train.es_stop_normalizer}};
    if (c.train.beta_auto)
        train["beta"] = "auto";
    else
        train["beta"] = c.train.beta;
    return {{"env", {{"name", c.env.name}}},
            {"data",
             {{"tier", c.data.tier}, {"n", c.data.n}, {"seed", c.data.seed}, {"path", c.data.path}}},
            {"train", train},
            {"eval",
             {{"episodes", c.eval.episodes},
              {"seed", c.eval.seed},
              {"checkpoint", c.eval.checkpoint}}},
            {"analyze",
             {{"rows", c.analyze.rows}, {"bins", c.analyze.bins}, {"seed", c.analyze.seed}}},
            {"output", {{"dir", c.output.dir}}}};
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parse_run_config(nlohmann::json::parse(is));
}

// ---- shared helpers ---------------------------------------------------------

namespace detail {

inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string ckpt_name(int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%08" PRId64 ".edac", step);
    return buf;
}

// (step, path) for every ckpt_*.edac in the run directory, ascending.
inline std::vector<std::pair<int64_t, std::string>> list_checkpoints(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::pair<int64_t, std::string>> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt_", 0) == 0 && name.size() >= 10 &&
            name.substr(name.size() - 5) == ".edac")
            out.emplace_back(std::stoll(name.substr(5, name.size() - 10)),
                             entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Behavior-action sampler reconstructed from the dataset metadata: the
// persisted stochastic policies for policy tiers, uniform for random data.
class BehaviorSampler {
public:
    BehaviorSampler(const OfflineDataset& data, const std::string& dataset_path) {
        namespace fs = std::filesystem;
        action_dim_ = data.spec.action_dim;
        if (data.tier == "random") return;
        const fs::path base = fs::path(dataset_path).parent_path();
        for (const std::string& rel : data.behavior_policy_files)
            policies_.push_back(load_policy_checkpoint((base / rel).string()));
        if (policies_.empty())
            throw ConfigError("dataset tier '" + data.tier +
                              "' records no behavior policy; cannot sample behavior actions");
    }

    std::vector<double> operator()(const std::vector<double>& state, Rng& rng) const {
        if (policies_.empty()) {
            std::vector<double> a(action_dim_);
            for (auto& x : a) x = rng.uniform(-1.0, 1.0);
            return a;
        }
        const size_t pick = policies_.size() == 1 ? 0 : rng.below(policies_.size());
        return policy_sample_action(policies_[pick], state, rng);
    }

private:
    int action_dim_;
    std::vector<GaussianPolicy> policies_;
};

struct ReferenceCache {
    ReferenceRun run;
    std::string dir;  // absolute/relative directory holding the persisted files
};

// Loads (or trains and persists) the reference run for an env + seed.
inline ReferenceCache reference_run_cached(const EnvSpec& spec, uint64_t seed,
                                           const std::string& out_dir, std::ostream& log) {
    namespace fs = std::filesystem;
    ReferenceCache cache;
    cache.dir = out_dir + "/ref-" + spec.name + "-seed" + std::to_string(seed);
    const std::string scores_path = cache.dir + "/scores.json";
    if (fs::exists(scores_path)) {
        std::ifstream is(scores_path);
        nlohmann::json s = nlohmann::json::parse(is);
        cache.run.expert = load_policy_checkpoint(cache.dir + "/expert.edac");
        cache.run.medium = load_policy_checkpoint(cache.dir + "/medium.edac");
        cache.run.expert_score = s.at("expert_score").get<double>();
        cache.run.medium_score = s.at("medium_score").get<double>();
        cache.run.medium_step = s.at("medium_step").get<size_t>();
        cache.run.anchors.random_ref = s.at("anchors").at("random_ref").get<double>();
        cache.run.anchors.expert_ref = s.at("anchors").at("expert_ref").get<double>();
        cache.run.replay = load_dataset(cache.dir + "/replay.odrl").transitions;
        return cache;
    }

    log << "training reference policies for " << spec.name << " (seed " << seed << ")...\n";
    cache.run = train_reference_policies(spec, seed, ReferenceRunOptions::for_env(spec));
    fs::create_directories(cache.dir);
    save_policy_checkpoint(cache.dir + "/expert.edac", cache.run.expert);
    save_policy_checkpoint(cache.dir + "/medium.edac", cache.run.medium);
    OfflineDataset replay;
    replay.transitions = cache.run.replay;
    replay.tier = "full-replay";
    replay.spec = spec;
    replay.seed = seed;
    replay.anchors = cache.run.anchors;
    replay.behavior_score = cache.run.expert_score;
    save_dataset(replay, cache.dir + "/replay.odrl");
    nlohmann::json s = {{"expert_score", cache.run.expert_score},
                        {"medium_score", cache.run.medium_score},
                        {"medium_step", cache.run.medium_step},
                        {"anchors",
                         {{"random_ref", cache.run.anchors.random_ref},
                          {"expert_ref", cache.run.anchors.expert_ref}}}};
    std::ofstream os(scores_path);
    os << s.dump(2) << "\n";
    return cache;
}

}  // namespace detail

// ---- commands -----------------------------------------------------------------

// Builds one tier dataset (plus the cached reference run it needs) and writes
// the ODRL file, its meta sidecar, and the persisted behavior policies.
inline int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
    namespace fs = std::filesystem;
    const EnvSpec spec = env_spec(cfg.env.name);
    bool known = false;
    for (const auto& t : known_tiers()) known = known || t == cfg.data.tier;
    if (!known) {
        std::string valid;
        for (const auto& t : known_tiers()) valid += (valid.empty() ? "" : ", ") + t;
        throw ConfigError("unknown tier '" + cfg.data.tier + "' (valid: " + valid + ")");
    }

    fs::create_directories(cfg.output.dir);
    detail::ReferenceCache ref = detail::reference_run_cached(spec, cfg.data.seed,
                                                              cfg.output.dir, out);
    OfflineDataset dataset = collect(spec, cfg.data.tier, ref.run, cfg.data.n, cfg.data.seed);

    const std::string path = cfg.dataset_path();
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    auto rel_to_dataset = [&](const std::string& target) {
        return fs::relative(target, parent.empty() ? fs::path(".") : parent).string();
    };
    if (cfg.data.tier == "medium")
        dataset.behavior_policy_files = {rel_to_dataset(ref.dir + "/medium.edac")};
    else if (cfg.data.tier == "expert")
        dataset.behavior_policy_files = {rel_to_dataset(ref.dir + "/expert.edac")};
    else if (cfg.data.tier == "medium-expert")
        dataset.behavior_policy_files = {rel_to_dataset(ref.dir + "/medium.edac"),
                                         rel_to_dataset(ref.dir + "/expert.edac")};
    save_dataset(dataset, path);

    out << "wrote " << path << " (" << dataset.size() << " transitions, tier " << cfg.data.tier
        << ")\n";
    out << "scores: expert " << detail::fmt_double(ref.run.expert_score) << ", medium "
        << detail::fmt_double(ref.run.medium_score) << ", behavior "
        << detail::fmt_double(dataset.behavior_score) << "; anchors [random "
        << detail::fmt_double(dataset.anchors.random_ref) << ", expert "
        << detail::fmt_double(dataset.anchors.expert_ref) << "]\n";
    return 0;
}

// Runs the offline training loop: checkpoints at the configured cadence and
// StepMetrics JSON-lines in <output.dir>/metrics.jsonl.
inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
    namespace fs = std::filesystem;
    const TrainConfig tc = cfg.train_config();
    OfflineDataset dataset = load_dataset(cfg.dataset_path());

    fs::create_directories(cfg.output.dir);
    {
        std::ofstream cs(cfg.output.dir + "/config.json");
        cs << run_config_to_json(cfg).dump(2) << "\n";
    }

    TrainerState st = init_trainer(tc, dataset.spec.state_dim, dataset.spec.action_dim);
    std::ofstream metrics(cfg.output.dir + "/metrics.jsonl");
    if (!metrics) throw IoError(IoError::Kind::Open, "cannot open metrics.jsonl for writing");

    try {
        for (int i = 0; i < tc.total_steps; ++i) {
            StepMetrics m = train_step(st, dataset.transitions, tc);
            if ((m.step + 1) % cfg.train.log_every == 0)
                metrics << nlohmann::json(m).dump() << "\n";
            if ((m.step + 1) % cfg.train.checkpoint_every == 0)
                save_trainer_checkpoint(cfg.output.dir + "/" + detail::ckpt_name(m.step + 1), st);
        }
    } catch (const NumericError& e) {
        out << "training aborted: " << e.what() << "\n";
        return 3;  // last-good checkpoint files remain in place
    }
    if (tc.total_steps % cfg.train.checkpoint_every != 0)
        save_trainer_checkpoint(cfg.output.dir + "/" + detail::ckpt_name(tc.total_steps), st);
    out << "trained " << tc.total_steps << " steps (" << algo_name(tc.algorithm) << ", N=" << tc.n
        << ") -> " << cfg.output.dir << "\n";
    return 0;
}

// Deterministic evaluation (action = tanh(mu)) of a checkpoint; prints the
// report as JSON on the given stream.
inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    OfflineDataset dataset = load_dataset(cfg.dataset_path());
    std::string ckpt = cfg.eval.checkpoint;
    if (ckpt.empty()) {
        auto found = detail::list_checkpoints(cfg.output.dir);
        if (found.empty())
            throw ConfigError("no checkpoint given and none found in " + cfg.output.dir);
        ckpt = found.back().second;
    }
    LoadedCheckpoint lc = load_trainer_checkpoint(ckpt);

    Rng rng(cfg.eval.seed);
    std::vector<double> returns;
    double sum = 0.0;
    for (int e = 0; e < cfg.eval.episodes; ++e) {
        const double ret = rollout_return(dataset.spec, rng.raw(), rng,
                                          [&lc](const std::vector<double>& s, Rng&) {
                                              return policy_mean_action(lc.policy, s);
                                          });
        returns.push_back(ret);
        sum += ret;
    }
    const double mean_return = sum / cfg.eval.episodes;
    nlohmann::json report = {{"mean_return", mean_return},
                             {"normalized_score", normalized_score(mean_return, dataset.anchors)},
                             {"returns", returns},
                             {"seed", cfg.eval.seed},
                             {"checkpoint", ckpt}};
    out << report.dump(2) << "\n";
    return 0;
}

// Validator batteries with fixed seeds; one line per check, nonzero exit iff
// any check fails.
inline int cmd_check(const std::string& suite, std::ostream& out) {
    std::vector<CheckResult> results;
    if (suite == "math") {
        results = run_math_checks();
    } else if (suite == "gradients") {
        results = run_gradient_checks();
    } else if (suite == "all") {
        results = run_math_checks();
        auto grads = run_gradient_checks();
        results.insert(results.end(), grads.begin(), grads.end());
    } else {
        throw ConfigError("unknown check suite '" + suite + "' (valid: math, gradients, all)");
    }
    bool all_pass = true;
    for (const CheckResult& r : results) {
        out << (r.pass ? "[PASS] " : "[FAIL] ") << r.name
            << "  measured=" << detail::fmt_double(r.measured)
            << "  tolerance=" << detail::fmt_double(r.tolerance) << "\n";
        all_pass = all_pass && r.pass;
    }
    out << (all_pass ? "all checks passed" : "CHECK FAILURES PRESENT") << "\n";
    return all_pass ? 0 : 3;
}

// Walks the run directory's checkpoint series and writes the diagnostic CSVs
// (clip-penalty report, pairwise gradient cosines, action-distance histogram).
inline int cmd_analyze(const RunConfig& cfg, std::ostream& out) {
    OfflineDataset dataset = load_dataset(cfg.dataset_path());
    auto checkpoints = detail::list_checkpoints(cfg.output.dir);
    if (checkpoints.empty()) throw ConfigError("no checkpoints found in " + cfg.output.dir);
    detail::BehaviorSampler behavior(dataset, cfg.dataset_path());

    // Fixed evaluation rows shared by every checkpoint in the series.
    Rng rng(cfg.analyze.seed);
    const int rows = std::min<int>(cfg.analyze.rows, static_cast<int>(dataset.size()));
    Tensor s_rows(rows, dataset.spec.state_dim), a_rows(rows, dataset.spec.action_dim);
    for (int i = 0; i < rows; ++i) {
        const Transition& t = dataset.transitions[rng.below(dataset.size())];
        for (int j = 0; j < dataset.spec.state_dim; ++j) s_rows.at(i, j) = t.s[j];
        for (int j = 0; j < dataset.spec.action_dim; ++j) a_rows.at(i, j) = t.a[j];
    }

    std::ofstream penalty_csv(cfg.output.dir + "/penalty_report.csv");
    std::ofstream cos_csv(cfg.output.dir + "/cossim.csv");
    penalty_csv << "step,behavior_penalty,random_penalty,gap,behavior_q_std,random_q_std\n";
    cos_csv << "step,min_pairwise_cos_sim,mean_pairwise_cos_sim\n";

    LoadedCheckpoint last;
    for (const auto& [step, path] : checkpoints) {
        LoadedCheckpoint lc = load_trainer_checkpoint(path);
        PenaltyReport rep =
            penalty_report(lc.ensemble, dataset, behavior, rows, cfg.analyze.seed + 1);
        penalty_csv << step << ',' << detail::fmt_double(rep.mean_penalty_behavior) << ','
                    << detail::fmt_double(rep.mean_penalty_random) << ','
                    << detail::fmt_double(rep.gap) << ','
                    << detail::fmt_double(rep.q_std_behavior) << ','
                    << detail::fmt_double(rep.q_std_random) << "\n";
        CosSimStats cs = pairwise_cos_sim(lc.ensemble, s_rows, a_rows);
        cos_csv << step << ',' << detail::fmt_double(cs.min_pairwise) << ','
                << detail::fmt_double(cs.mean_pairwise) << "\n";
        last = std::move(lc);
    }

    ActionDistHist hist = action_distance_hist(
        dataset,
        [&last](const std::vector<double>& s, Rng& r) {
            return policy_sample_action(last.policy, s, r);
        },
        cfg.analyze.bins, cfg.analyze.seed + 2);
    std::ofstream hist_csv(cfg.output.dir + "/action_dist.csv");
    hist_csv << "bin_lo,bin_hi,count\n";
    for (size_t b = 0; b < hist.counts.size(); ++b)
        hist_csv << detail::fmt_double(hist.edges[b]) << ',' << detail::fmt_double(hist.edges[b + 1])
                 << ',' << hist.counts[b] << "\n";

    out << "analyzed " << checkpoints.size() << " checkpoints -> " << cfg.output.dir
        << "/{penalty_report,cossim,action_dist}.csv (mean sq action distance "
        << detail::fmt_double(hist.mean) << ")\n";
    return 0;
}

}  // namespace edac
