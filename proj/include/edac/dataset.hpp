#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edac/checkpoint.hpp"
#include "edac/env.hpp"
#include "edac/tensor.hpp"

namespace edac {

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    double r = 0.0;
    std::vector<double> s_next;
    bool done = false;

    bool operator==(const Transition& o) const {
        return s == o.s && a == o.a && r == o.r && s_next == o.s_next && done == o.done;
    }
};

// Offline transitions plus the metadata needed to evaluate and analyze
// against them: the environment, score anchors, and the behavior policies
// that produced the data (checkpoint files, relative to the dataset path).
struct OfflineDataset {
    std::vector<Transition> transitions;
    std::string tier;
    EnvSpec spec;
    uint64_t seed = 0;
    ScoreAnchors anchors;
    std::vector<std::string> behavior_policy_files;
    double behavior_score = 0.0;

    size_t size() const { return transitions.size(); }
};

inline const std::vector<std::string>& known_tiers() {
    static const std::vector<std::string> tiers{"random",        "medium",        "expert",
                                                "medium-expert", "medium-replay", "full-replay"};
    return tiers;
}

// ---- binary format ---------------------------------------------------------
// magic "ODRL", u32 version=1, u32 state_dim, u32 action_dim, u64 count, then
// count records of little-endian f64: s, a, r, s_next, done as 0/1.

inline constexpr char kOdrlMagic[4] = {'O', 'D', 'R', 'L'};
inline constexpr uint32_t kOdrlVersion = 1;

inline void to_json(nlohmann::json& j, const EnvSpec& s) {
    j = {{"name", s.name},       {"state_dim", s.state_dim},
         {"action_dim", s.action_dim}, {"horizon", s.horizon},
         {"gamma", s.gamma},     {"dt", s.dt},
         {"mass", s.mass},       {"damping", s.damping},
         {"goal", s.goal},       {"action_cost", s.action_cost},
         {"gravity", s.gravity}, {"length", s.length},
         {"max_speed", s.max_speed}};
}

inline void from_json(const nlohmann::json& j, EnvSpec& s) {
    j.at("name").get_to(s.name);
    j.at("state_dim").get_to(s.state_dim);
    j.at("action_dim").get_to(s.action_dim);
    j.at("horizon").get_to(s.horizon);
    j.at("gamma").get_to(s.gamma);
    j.at("dt").get_to(s.dt);
    j.at("mass").get_to(s.mass);
    j.at("damping").get_to(s.damping);
    j.at("goal").get_to(s.goal);
    j.at("action_cost").get_to(s.action_cost);
    j.at("gravity").get_to(s.gravity);
    j.at("length").get_to(s.length);
    j.at("max_speed").get_to(s.max_speed);
}

inline void save_dataset(const OfflineDataset& d, const std::string& path) {
    if (d.transitions.empty())
        throw IoError(IoError::Kind::Invalid, "refusing to save an empty dataset");
    const int sd = d.spec.state_dim, ad = d.spec.action_dim;
    for (const Transition& t : d.transitions)
        if (static_cast<int>(t.s.size()) != sd || static_cast<int>(t.a.size()) != ad ||
            static_cast<int>(t.s_next.size()) != sd)
            throw IoError(IoError::Kind::Dimension, "transition dimensions do not match EnvSpec");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoError::Kind::Open, "cannot open dataset for writing: " + path);
    os.write(kOdrlMagic, 4);
    detail::put_u32(os, kOdrlVersion);
    detail::put_u32(os, static_cast<uint32_t>(sd));
    detail::put_u32(os, static_cast<uint32_t>(ad));
    detail::put_u64(os, d.transitions.size());
    for (const Transition& t : d.transitions) {
        for (double x : t.s) detail::put_f64(os, x);
        for (double x : t.a) detail::put_f64(os, x);
        detail::put_f64(os, t.r);
        for (double x : t.s_next) detail::put_f64(os, x);
        detail::put_f64(os, t.done ? 1.0 : 0.0);
    }
    if (!os) throw IoError(IoError::Kind::Open, "write failed: " + path);

    nlohmann::json meta = {{"tier", d.tier},
                           {"seed", d.seed},
                           {"anchors", {{"random_ref", d.anchors.random_ref},
                                        {"expert_ref", d.anchors.expert_ref}}},
                           {"env", d.spec},
                           {"behavior_policies", d.behavior_policy_files},
                           {"behavior_score", d.behavior_score}};
    std::ofstream ms(path + ".meta.json");
    if (!ms) throw IoError(IoError::Kind::Open, "cannot open meta sidecar for writing");
    ms << meta.dump(2) << "\n";
}

inline OfflineDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open dataset: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kOdrlMagic, 4) != 0)
        throw IoError(IoError::Kind::Magic, "bad dataset magic in " + path);
    uint32_t version, sd, ad;
    uint64_t count;
    if (!detail::get_u32(is, version)) throw IoError(IoError::Kind::Truncated, "truncated header");
    if (version != kOdrlVersion)
        throw IoError(IoError::Kind::Version, "unsupported dataset version in " + path);
    if (!detail::get_u32(is, sd) || !detail::get_u32(is, ad) || !detail::get_u64(is, count))
        throw IoError(IoError::Kind::Truncated, "truncated dataset header in " + path);
    if (count == 0) throw IoError(IoError::Kind::Invalid, "empty dataset file: " + path);

    OfflineDataset d;
    d.transitions.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
        Transition& t = d.transitions[i];
        t.s.resize(sd);
        t.a.resize(ad);
        t.s_next.resize(sd);
        double done01 = 0.0;
        bool ok = true;
        for (auto& x : t.s) ok = ok && detail::get_f64(is, x);
        for (auto& x : t.a) ok = ok && detail::get_f64(is, x);
        ok = ok && detail::get_f64(is, t.r);
        for (auto& x : t.s_next) ok = ok && detail::get_f64(is, x);
        ok = ok && detail::get_f64(is, done01);
        if (!ok) throw IoError(IoError::Kind::Truncated, "truncated dataset body in " + path);
        t.done = done01 != 0.0;
    }

    std::ifstream ms(path + ".meta.json");
    if (!ms) throw IoError(IoError::Kind::Open, "missing meta sidecar: " + path + ".meta.json");
    nlohmann::json meta = nlohmann::json::parse(ms, nullptr, /*allow_exceptions=*/true);
    meta.at("tier").get_to(d.tier);
    meta.at("seed").get_to(d.seed);
    d.anchors.random_ref = meta.at("anchors").at("random_ref").get<double>();
    d.anchors.expert_ref = meta.at("anchors").at("expert_ref").get<double>();
    d.spec = meta.at("env").get<EnvSpec>();
    meta.at("behavior_policies").get_to(d.behavior_policy_files);
    meta.at("behavior_score").get_to(d.behavior_score);
    if (d.spec.state_dim != static_cast<int>(sd) || d.spec.action_dim != static_cast<int>(ad))
        throw IoError(IoError::Kind::Dimension,
                      "dataset dimensions disagree with meta EnvSpec in " + path);
    return d;
}

// ---- minibatch machinery ----------------------------------------------------

struct Batch {
    Tensor s, a, r, s_next, done;  // B x dim, rewards/done B x 1
    int size() const { return s.rows; }
};

inline std::vector<size_t> sample_indices(size_t dataset_size, int batch_size, Rng& rng) {
    std::vector<size_t> idx(batch_size);
    for (auto& i : idx) i = rng.below(dataset_size);
    return idx;
}

inline Batch make_batch(const std::vector<Transition>& transitions,
                        const std::vector<size_t>& idx) {
    const int sd = static_cast<int>(transitions.front().s.size());
    const int ad = static_cast<int>(transitions.front().a.size());
    const int b = static_cast<int>(idx.size());
    Batch out{Tensor(b, sd), Tensor(b, ad), Tensor(b, 1), Tensor(b, sd), Tensor(b, 1)};
    for (int row = 0; row < b; ++row) {
        const Transition& t = transitions[idx[row]];
        for (int j = 0; j < sd; ++j) out.s.at(row, j) = t.s[j];
        for (int j = 0; j < ad; ++j) out.a.at(row, j) = t.a[j];
        out.r.at(row, 0) = t.r;
        for (int j = 0; j < sd; ++j) out.s_next.at(row, j) = t.s_next[j];
        out.done.at(row, 0) = t.done ? 1.0 : 0.0;
    }
    return out;
}

}  // namespace edac
