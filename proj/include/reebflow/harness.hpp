#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "reebflow/acceptance.hpp"
#include "reebflow/coeffs.hpp"
#include "reebflow/config.hpp"
#include "reebflow/graphdiff.hpp"
#include "reebflow/limit.hpp"
#include "reebflow/morse.hpp"
#include "reebflow/reeb_build.hpp"
#include "reebflow/sde.hpp"

namespace reebflow {

namespace harness {

inline void write_file(const std::string& dir, const std::string& name,
                       const std::string& content) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/" + name, std::ios::binary);
    if (!out) throw Error("cannot write " + dir + "/" + name);
    out << content;
}

inline std::function<double(const Vec&)> make_observable(const ExperimentConfig& cfg) {
    if (cfg.observable == "one") return [](const Vec&) { return 1.0; };
    if (cfg.observable == "indicator_q1_pos") {
        int qi = cfg.field->is_separable() ? cfg.field->p_dim() : cfg.field->dim() / 2;
        return [qi](const Vec& x) { return x[qi] > 0 ? 1.0 : 0.0; };
    }
    int k = std::stoi(cfg.observable.substr(std::string("coordinate:").size()));
    return [k](const Vec& x) { return x[k]; };
}

inline ReebGraph build_graph(const ExperimentConfig& cfg) {
    ReebBuildOptions opt;
    opt.resolution = cfg.resolution;
    opt.vertex_tol = cfg.vertex_tol;
    opt.threads = cfg.threads;
    CriticalSearchOptions search;
    return build_reeb_auto(cfg.field, opt, search);
}

inline std::vector<EdgeCoefficientTable> build_tables(const ExperimentConfig& cfg,
                                                      const ReebGraph& g) {
    TabulateOptions t;
    t.z_points_interior = cfg.z_points_interior;
    t.refine_levels = cfg.refine_levels;
    t.refine_ratio = cfg.refine_ratio;
    t.refine_span = cfg.refine_span;
    t.mc_samples = cfg.mc_samples;
    t.seed = cfg.seed;
    t.threads = cfg.threads;
    return tabulate_edges(g, *cfg.make_a2(), *cfg.make_b(), *cfg.make_beta(), t);
}

inline nlohmann::json classification_json(const std::vector<VertexClassification>& cls) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cls) {
        nlohmann::json jc{{"vertex", c.vertex},
                          {"entrance", c.entrance},
                          {"exit", c.exit},
                          {"essential", c.essential}};
        nlohmann::json br = nlohmann::json::array();
        for (auto& [e, p] : c.branch) br.push_back({{"edge", e}, {"p", p}});
        jc["branch"] = br;
        nlohmann::json bh = nlohmann::json::object();
        for (auto& [e, v] : c.bhat_limit) bh[fmt_int(e)] = v;
        jc["bhat_limit"] = bh;
        arr.push_back(jc);
    }
    return arr;
}

inline nlohmann::json gluing_json(const GluingWeights& gw) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto& [vid, gs] : gw.gamma) {
        nlohmann::json jv{{"vertex", vid}};
        nlohmann::json g = nlohmann::json::array();
        for (auto& [e, val] : gs) g.push_back({{"edge", e}, {"gamma", val}});
        jv["gamma"] = g;
        arr.push_back(jv);
    }
    return arr;
}

// --- Subcommands. -----------------------------------------------------------

/// reeb: build + validate + export reeb.json. Returns false on validation
/// failure.
inline bool run_reeb(const ExperimentConfig& cfg) {
    ReebGraph g = build_graph(cfg);
    auto rep = g.validate();
    nlohmann::json j = g.to_json();
    j["validation"] = {{"is_tree", rep.is_tree},
                       {"orders_ok", rep.orders_ok},
                       {"vertex_index_ok", rep.vertex_index_ok},
                       {"fork_count_ok", rep.fork_count_ok},
                       {"join_count_ok", rep.join_count_ok},
                       {"a2_component_ok", rep.a2_component_ok},
                       {"counts",
                        {{"min", rep.n_min},
                         {"max", rep.n_max},
                         {"pass", rep.n_pass},
                         {"fork", rep.n_fork},
                         {"join", rep.n_join}}},
                       {"notes", rep.notes}};
    write_file(cfg.out_dir, "reeb.json", j.dump(2) + "\n");
    return rep.all_ok();
}

/// coeffs: tabulate + gluing + classification; writes coeffs_<edge>.csv and
/// gluing.json.
inline bool run_coeffs(const ExperimentConfig& cfg) {
    ReebGraph g = build_graph(cfg);
    auto tables = build_tables(cfg, g);
    auto gw = gluing_weights(tables, g);
    auto cls = classify_vertices(g, tables);
    for (const auto& t : tables)
        write_file(cfg.out_dir, "coeffs_" + fmt_int(t.edge) + ".csv", table_to_csv(t));
    nlohmann::json j{{"gluing", gluing_json(gw)}, {"classification", classification_json(cls)}};
    auto roots = drift_roots(g, tables);
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : roots)
        jr.push_back({{"edge", r.edge}, {"z", r.z}, {"attracting", r.attracting}});
    j["drift_roots"] = jr;
    write_file(cfg.out_dir, "gluing.json", j.dump(2) + "\n");
    return true;
}

/// branch: SDE exit statistics at a fork against the branch-ratio oracle;
/// writes exits.json and a sample path CSV.
inline bool run_branch(const ExperimentConfig& cfg) {
    ReebGraph g = build_graph(cfg);
    auto tables = build_tables(cfg, g);
    auto cls = classify_vertices(g, tables);
    int vertex = cfg.branch_vertex;
    if (vertex < 0)
        for (const auto& c : cls)
            if (c.essential && vertex < 0) vertex = c.vertex;
    if (vertex < 0) throw ConfigInvalid("branch.vertex: no essential vertex found");
    const VertexClassification* vc = nullptr;
    for (const auto& c : cls)
        if (c.vertex == vertex) vc = &c;
    int entrance = cfg.branch_entrance >= 0
                       ? cfg.branch_entrance
                       : (vc && !vc->entrance.empty() ? vc->entrance[0] : -1);
    if (entrance < 0) throw ConfigInvalid("branch.entrance: no entrance edge at the vertex");

    SdeConfig scfg;
    scfg.field = cfg.field;
    scfg.epsilon = cfg.epsilon;
    scfg.kappa = cfg.kappa;
    scfg.delta = cfg.delta;
    scfg.T = cfg.sde_T;
    scfg.dt = cfg.sde_dt();
    scfg.seed = cfg.seed;
    scfg.a2 = cfg.make_a2();
    scfg.b = cfg.make_b();
    scfg.beta = cfg.make_beta();
    scfg.x0 = Vec::Zero(cfg.field->dim());
    scfg.subsample = cfg.subsample;
    auto st = first_exit_stats(scfg, g, vertex, entrance, cfg.branch_h, cfg.branch_h_start,
                               cfg.branch_n_traj, cfg.threads);

    nlohmann::json j{{"vertex", vertex}, {"entrance", entrance}, {"n", st.n},
                     {"timeouts", st.timeouts}};
    nlohmann::json counts = nlohmann::json::object();
    for (auto& [e, c] : st.counts) counts[fmt_int(e)] = c;
    j["counts"] = counts;
    nlohmann::json freq = nlohmann::json::object(), wil = nlohmann::json::object();
    for (auto& [e, c] : st.counts) {
        freq[fmt_int(e)] = st.frequency(e);
        auto ci = st.wilson(e);
        wil[fmt_int(e)] = {{"lo", ci.lo}, {"hi", ci.hi}};
    }
    j["frequency"] = freq;
    j["wilson99"] = wil;
    j["mean_exit_time"] = st.mean_time();
    bool ok = true;
    if (vc && vc->essential) {
        nlohmann::json ref = nlohmann::json::object();
        long long down = 0;
        for (auto& [e, p] : vc->branch) down += st.counts.count(e) ? st.counts.at(e) : 0;
        for (auto& [e, p] : vc->branch) {
            long long c = st.counts.count(e) ? st.counts.at(e) : 0;
            double f = down > 0 ? static_cast<double>(c) / down : 0.0;
            auto ci = wilson_interval(c, down);
            ref[fmt_int(e)] = {{"predicted", p}, {"conditional_frequency", f},
                               {"wilson_lo", ci.lo}, {"wilson_hi", ci.hi}};
            if (!(p >= ci.lo && p <= ci.hi)) ok = false;
        }
        j["branch_check"] = ref;
        j["branch_ok"] = ok;
    }
    write_file(cfg.out_dir, "exits.json", j.dump(2) + "\n");

    // One sample path for plotting.
    SdeConfig pcfg = scfg;
    pcfg.T = std::min(cfg.sde_T, 2.0);
    ShellSampler shell(g, entrance, g.vertices[vertex].z +
                                        (g.edges[entrance].lower == vertex ? 1 : -1) *
                                            cfg.branch_h_start,
                       1e-3);
    Rng rng(cfg.seed, "exit", 0);
    pcfg.x0 = shell.draw(rng);
    auto path = simulate_full(pcfg, &g, 0);
    std::string csv = "t";
    for (int i = 0; i < cfg.field->dim(); ++i) csv += ",x" + fmt_int(i);
    csv += ",H,edge\n";
    for (std::size_t i = 0; i < path.t.size(); ++i) {
        csv += fmt_g17(path.t[i]);
        for (int k = 0; k < cfg.field->dim(); ++k) csv += "," + fmt_g17(path.x[i][k]);
        csv += "," + fmt_g17(path.H[i]) + "," + fmt_int(path.y[i].edge) + "\n";
    }
    write_file(cfg.out_dir, "paths_sde_0.csv", csv);
    return ok;
}

/// converge: solver exit distributions across a delta sweep, compared with
/// the branch-ratio limits; writes report.csv rows.
inline bool run_converge(const ExperimentConfig& cfg) {
    ReebGraph g = build_graph(cfg);
    auto tables = build_tables(cfg, g);
    auto gw = gluing_weights(tables, g);
    auto cls = classify_vertices(g, tables);
    int vertex = cfg.branch_vertex;
    if (vertex < 0)
        for (const auto& c : cls)
            if (c.essential && vertex < 0) vertex = c.vertex;
    if (vertex < 0) throw ConfigInvalid("converge: no essential vertex found");
    const VertexClassification* vc = nullptr;
    for (const auto& c : cls)
        if (c.vertex == vertex) vc = &c;

    std::vector<ReportRow> rows;
    double prev_gap = 1e300;
    bool ok = true;
    for (double d : cfg.converge_deltas) {
        auto probs = vertex_exit_distribution(g, tables, gw, d, vertex, cfg.converge_h);
        double gap = 0;
        for (auto& [e, p] : vc->branch) gap = std::max(gap, std::fabs(probs.at(e) - p));
        rows.push_back(row_le("converge", "gap@delta=" + fmt_g17(d), gap, prev_gap + 1e-12,
                              "branch ratio limit"));
        ok = ok && rows.back().pass;
        prev_gap = gap;
    }
    write_file(cfg.out_dir, "report.csv", report_to_csv(rows));
    return ok;
}

/// limit: exact limiting distribution, sampled limit paths, and the long-time
/// observable; writes limit_dist.json and paths_limit.csv.
inline bool run_limit(const ExperimentConfig& cfg) {
    ReebGraph g = build_graph(cfg);
    auto tables = build_tables(cfg, g);
    auto cls = classify_vertices(g, tables);
    GraphPoint y0;
    y0.edge = cfg.limit_start_edge >= 0 ? cfg.limit_start_edge : g.open_edge;
    y0.z = cfg.limit_start_z != 0.0
               ? cfg.limit_start_z
               : 0.5 * (g.edges[y0.edge].z_lo + g.edges[y0.edge].z_hi);
    auto dist = limit_distribution(g, tables, cls, y0);

    // Empirical branch frequencies from sampled limit paths.
    std::map<std::string, long long> hits;
    LimitOptions lo;
    lo.T = cfg.limit_T;
    std::vector<std::string> keys(cfg.limit_n_runs);
    parallel_for(cfg.limit_n_runs, cfg.threads, [&](long long i) {
        auto path = simulate_limit(g, tables, cls, y0, lo, cfg.seed, i);
        keys[i] = path.target_vertex >= 0 ? "v" + fmt_int(path.target_vertex)
                                          : "e" + fmt_int(path.final_edge);
    });
    for (auto& k : keys) ++hits[k];

    nlohmann::json j;
    nlohmann::json targets = nlohmann::json::array();
    bool ok = true;
    for (const auto& tg : dist.targets) {
        std::string key = tg.is_vertex ? "v" + fmt_int(tg.vertex) : "e" + fmt_int(tg.edge);
        long long c = hits.count(key) ? hits.at(key) : 0;
        auto ci = wilson_interval(c, cfg.limit_n_runs, 3.0);
        bool in = tg.probability >= ci.lo && tg.probability <= ci.hi;
        ok = ok && in;
        nlohmann::json jt{{"is_vertex", tg.is_vertex},
                          {"vertex", tg.vertex},
                          {"edge", tg.edge},
                          {"z", tg.z},
                          {"probability", tg.probability},
                          {"essential_vertices", tg.essential_vertices},
                          {"path_edges", tg.path_edges},
                          {"empirical_frequency", static_cast<double>(c) / cfg.limit_n_runs},
                          {"empirical_in_3sigma", in}};
        targets.push_back(jt);
    }
    j["start"] = {{"edge", y0.edge}, {"z", y0.z}};
    j["targets"] = targets;
    j["total_probability"] = dist.total_probability();

    auto f = make_observable(cfg);
    auto obs = expected_observable(g, dist, f, cfg.observable_mc, 1e-3, cfg.seed, cfg.threads);
    j["observable"] = {{"name", cfg.observable}, {"value", obs.value}, {"se", obs.se}};
    write_file(cfg.out_dir, "limit_dist.json", j.dump(2) + "\n");

    auto path = simulate_limit(g, tables, cls, y0, lo, cfg.seed, 0);
    std::string csv = "t,edge,z\n";
    for (const auto& seg : path.segments)
        for (std::size_t i = 0; i < seg.t.size(); ++i)
            csv += fmt_g17(seg.t[i]) + "," + fmt_int(seg.edge) + "," + fmt_g17(seg.z[i]) + "\n";
    write_file(cfg.out_dir, "paths_limit.csv", csv);
    return ok;
}

/// verify: the acceptance suite; writes report.csv, prints one line per
/// criterion, returns pass/fail.
inline bool run_verify(const ExperimentConfig& cfg, bool slow, std::FILE* log = stderr) {
    AcceptanceOptions opt;
    opt.seed = cfg.seed;
    opt.threads = cfg.threads;
    opt.slow = slow;
    auto rows = run_acceptance(opt);
    write_file(cfg.out_dir, "report.csv", report_to_csv(rows));
    bool all = true;
    std::string cur;
    bool cur_ok = true;
    auto flush = [&]() {
        if (!cur.empty()) std::fprintf(log, "[%s] %s\n", cur_ok ? "PASS" : "FAIL", cur.c_str());
    };
    for (const auto& r : rows) {
        std::string group = r.experiment.substr(0, r.experiment.find('.'));
        if (group != cur) {
            flush();
            cur = group;
            cur_ok = true;
        }
        cur_ok = cur_ok && r.pass;
        all = all && r.pass;
    }
    flush();
    return all;
}

}  // namespace harness

}  // namespace reebflow
