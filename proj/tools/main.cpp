#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "edac/cli.hpp"

using namespace edac;

namespace {

// Flag values only override the config file when actually passed.
template <typename T>
void maybe(const CLI::App& app, const std::string& flag, T& target, const T& parsed) {
    if (app.count(flag) > 0) target = parsed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale offline RL lab: ensemble critics, gradient diversification, "
                 "and executable math checks"};
    app.require_subcommand(1);

    std::string config_path;

    // -- gen-data --
    auto* gen = app.add_subcommand("gen-data", "Build one tier dataset (plus reference policies)");
    std::string g_env, g_tier, g_out, g_path;
    uint64_t g_n = 0, g_seed = 0;
    gen->add_option("--config", config_path, "JSON config file");
    gen->add_option("--env", g_env, "environment name");
    gen->add_option("--tier", g_tier, "dataset tier");
    gen->add_option("--n", g_n, "transition count (rollout tiers)");
    gen->add_option("--seed", g_seed, "collection seed");
    gen->add_option("--out", g_out, "output directory");
    gen->add_option("--path", g_path, "explicit dataset path");

    // -- train --
    auto* tr = app.add_subcommand("train", "Run the offline training loop");
    std::string t_algo, t_data, t_out, t_beta, t_es_variant;
    int t_n = 0, t_steps = 0, t_batch = 0, t_width = 0, t_ckpt_every = 0, t_log_every = 0;
    double t_eta = 0, t_gamma = 0, t_rho = 0, t_lr_q = 0, t_lr_policy = 0;
    uint64_t t_seed = 0;
    tr->add_option("--config", config_path, "JSON config file");
    tr->add_option("--algo", t_algo, "sac | sac-n | edac | rem | cql-lite | var-reg");
    tr->add_option("--N", t_n, "ensemble size");
    tr->add_option("--eta", t_eta, "ES weight (edac)");
    tr->add_option("--beta", t_beta, "temperature: number or 'auto'");
    tr->add_option("--gamma", t_gamma, "discount");
    tr->add_option("--rho", t_rho, "target smoothing coefficient");
    tr->add_option("--lr-q", t_lr_q, "critic learning rate");
    tr->add_option("--lr-policy", t_lr_policy, "policy learning rate");
    tr->add_option("--batch", t_batch, "batch size");
    tr->add_option("--steps", t_steps, "total training steps");
    tr->add_option("--seed", t_seed, "training seed");
    tr->add_option("--width", t_width, "hidden layer width");
    tr->add_option("--ckpt-every", t_ckpt_every, "checkpoint cadence");
    tr->add_option("--log-every", t_log_every, "metrics cadence");
    tr->add_option("--data", t_data, "dataset path");
    tr->add_option("--out", t_out, "run directory");
    tr->add_option("--es-variant", t_es_variant, "cosine | raw");

    // -- eval --
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint deterministically");
    std::string e_data, e_out, e_ckpt;
    int e_episodes = 0;
    uint64_t e_seed = 0;
    ev->add_option("--config", config_path, "JSON config file");
    ev->add_option("--data", e_data, "dataset path (for anchors and env)");
    ev->add_option("--ckpt", e_ckpt, "checkpoint file (default: latest in --out)");
    ev->add_option("--episodes", e_episodes, "evaluation episodes");
    ev->add_option("--seed", e_seed, "evaluation seed");
    ev->add_option("--out", e_out, "run directory");

    // -- check --
    auto* ck = app.add_subcommand("check", "Run validator batteries");
    std::string suite = "all";
    ck->add_option("suite", suite, "math | gradients | all");

    // -- analyze --
    auto* an = app.add_subcommand("analyze", "Write diagnostic CSVs over a checkpoint series");
    std::string a_data, a_out;
    int a_rows = 0, a_bins = 0;
    uint64_t a_seed = 0;
    an->add_option("--config", config_path, "JSON config file");
    an->add_option("--data", a_data, "dataset path");
    an->add_option("--out", a_out, "run directory with checkpoints");
    an->add_option("--rows", a_rows, "evaluation rows");
    an->add_option("--bins", a_bins, "histogram bins");
    an->add_option("--seed", a_seed, "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_run_config(config_path);

        if (gen->parsed()) {
            maybe(*gen, "--env", cfg.env.name, g_env);
            maybe(*gen, "--tier", cfg.data.tier, g_tier);
            maybe(*gen, "--n", cfg.data.n, g_n);
            maybe(*gen, "--seed", cfg.data.seed, g_seed);
            maybe(*gen, "--out", cfg.output.dir, g_out);
            maybe(*gen, "--path", cfg.data.path, g_path);
            return cmd_gen_data(cfg, std::cout);
        }
        if (tr->parsed()) {
            maybe(*tr, "--algo", cfg.train.algorithm, t_algo);
            maybe(*tr, "--N", cfg.train.n, t_n);
            maybe(*tr, "--eta", cfg.train.eta, t_eta);
            if (tr->count("--beta") > 0) {
                if (t_beta == "auto") {
                    cfg.train.beta_auto = true;
                } else {
                    cfg.train.beta_auto = false;
                    cfg.train.beta = std::stod(t_beta);
                }
            }
            maybe(*tr, "--gamma", cfg.train.gamma, t_gamma);
            maybe(*tr, "--rho", cfg.train.rho, t_rho);
            maybe(*tr, "--lr-q", cfg.train.lr_q, t_lr_q);
            maybe(*tr, "--lr-policy", cfg.train.lr_policy, t_lr_policy);
            maybe(*tr, "--batch", cfg.train.batch_size, t_batch);
            maybe(*tr, "--steps", cfg.train.total_steps, t_steps);
            maybe(*tr, "--seed", cfg.train.seed, t_seed);
            maybe(*tr, "--width", cfg.train.width, t_width);
            maybe(*tr, "--ckpt-every", cfg.train.checkpoint_every, t_ckpt_every);
            maybe(*tr, "--log-every", cfg.train.log_every, t_log_every);
            maybe(*tr, "--data", cfg.data.path, t_data);
            maybe(*tr, "--out", cfg.output.dir, t_out);
            maybe(*tr, "--es-variant", cfg.train.es_variant, t_es_variant);
            return cmd_train(cfg, std::cout);
        }
        if (ev->parsed()) {
            maybe(*ev, "--data", cfg.data.path, e_data);
            maybe(*ev, "--ckpt", cfg.eval.checkpoint, e_ckpt);
            maybe(*ev, "--episodes", cfg.eval.episodes, e_episodes);
            maybe(*ev, "--seed", cfg.eval.seed, e_seed);
            maybe(*ev, "--out", cfg.output.dir, e_out);
            return cmd_eval(cfg, std::cout);
        }
        if (ck->parsed()) return cmd_check(suite, std::cout);
        if (an->parsed()) {
            maybe(*an, "--data", cfg.data.path, a_data);
            maybe(*an, "--out", cfg.output.dir, a_out);
            maybe(*an, "--rows", cfg.analyze.rows, a_rows);
            maybe(*an, "--bins", cfg.analyze.bins, a_bins);
            maybe(*an, "--seed", cfg.analyze.seed, a_seed);
            return cmd_analyze(cfg, std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
