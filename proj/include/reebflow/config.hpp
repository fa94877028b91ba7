#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "reebflow/common.hpp"
#include "reebflow/field.hpp"

namespace reebflow {

/**
 * Experiment configuration: one JSON document with per-module blocks. Parsing
 * is fail-fast with field-level diagnostics, and every block's preconditions
 * are checked before any computation starts.
 */
struct ExperimentConfig {
    // field
    std::string field_name = "doublewell1d";
    double field_c = 0.0;
    std::shared_ptr<const ScalarField> field;

    std::uint64_t seed = 1;
    int threads = 0;
    std::string out_dir = "out";

    // reeb
    int resolution = 256;
    double vertex_tol = 1e-6;

    // models
    std::string b_name = "momentum_drag";
    double b_lambda = 0.5;
    std::vector<double> b_const;
    std::string beta_name = "zero";
    std::vector<double> beta_const;
    std::string a2_name = "identity";
    std::vector<double> a2_diag;

    // coeffs
    int z_points_interior = 32;
    int refine_levels = 12;
    double refine_ratio = 0.7;
    double refine_span = 0.25;
    long long mc_samples = 1000000;

    // sde
    double epsilon = 1e-3;
    double kappa = 0.05;
    double delta = 1e-2;
    double sde_T = 10.0;
    int dt_divisor = 50;
    int subsample = 100;
    std::vector<double> x0;

    // branch
    int branch_vertex = -1;     // -1: first essential vertex
    int branch_entrance = -1;   // -1: the entrance edge from classification
    double branch_h = 0.05;
    double branch_h_start = 0.025;
    long long branch_n_traj = 2000;

    // graphdiff
    double gd_delta = 1e-3;
    double gd_T = 10.0;
    double gd_dt = 1e-4;
    double gd_h_v = 0.04;
    int gd_start_edge = -1;  // -1: open edge
    double gd_start_z = 0.0;

    // limit
    int limit_start_edge = -1;
    double limit_start_z = 0.0;
    double limit_T = 100.0;
    long long limit_n_runs = 1000;
    std::string observable = "one";  // one | indicator_q1_pos | coordinate:<k>
    long long observable_mc = 200000;

    // converge
    std::vector<double> converge_deltas{1e-2, 1e-3, 1e-4};
    double converge_h = 0.04;

    std::shared_ptr<const VectorField> make_b() const {
        if (b_name == "zero") return std::make_shared<ZeroField>();
        if (b_name == "momentum_drag") {
            int pd = field->is_separable() ? field->p_dim() : field->dim() / 2;
            return std::make_shared<MomentumDrag>(b_lambda, pd);
        }
        if (b_name == "radial_contraction") return std::make_shared<RadialContraction>(b_lambda);
        if (b_name == "constant") {
            Vec v(field->dim());
            for (int i = 0; i < field->dim(); ++i)
                v[i] = i < static_cast<int>(b_const.size()) ? b_const[i] : 0.0;
            return std::make_shared<ConstantField>(v);
        }
        throw ConfigInvalid("models.b.name: unknown drift model '" + b_name + "'");
    }
    std::shared_ptr<const VectorField> make_beta() const {
        if (beta_name == "zero") return std::make_shared<ZeroField>();
        if (beta_name == "constant") {
            Vec v(field->dim());
            for (int i = 0; i < field->dim(); ++i)
                v[i] = i < static_cast<int>(beta_const.size()) ? beta_const[i] : 0.0;
            return std::make_shared<ConstantField>(v);
        }
        throw ConfigInvalid("models.beta.name: unknown drift model '" + beta_name + "'");
    }
    std::shared_ptr<const MatrixModel> make_a2() const {
        if (a2_name == "identity") return ConstantMatrixModel::identity(field->dim());
        if (a2_name == "diag") {
            Mat a = Mat::Zero(field->dim(), field->dim());
            for (int i = 0; i < field->dim(); ++i)
                a(i, i) = i < static_cast<int>(a2_diag.size()) ? a2_diag[i] : 1.0;
            return std::make_shared<ConstantMatrixModel>(a);
        }
        throw ConfigInvalid("models.a2.name: unknown diffusion model '" + a2_name + "'");
    }

    double sde_dt() const { return epsilon / dt_divisor; }

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    void validate() const;
};

namespace cfgdetail {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& e) {
        throw ConfigInvalid("key '" + key + "': " + e.what());
    }
}

}  // namespace cfgdetail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    using cfgdetail::get_or;
    ExperimentConfig c;
    if (!j.contains("field") || !j.at("field").contains("name"))
        throw ConfigInvalid("missing required key 'field.name'");
    c.field_name = j.at("field").at("name").get<std::string>();
    c.field_c = get_or(j.at("field"), "c", 0.0);
    c.field = make_field(c.field_name, c.field_c);  // throws ConfigInvalid on unknown name

    c.seed = get_or<std::uint64_t>(j, "seed", 1);
    c.threads = get_or(j, "threads", 0);
    c.out_dir = get_or<std::string>(j, "out", "out");

    if (j.contains("reeb")) {
        const auto& r = j.at("reeb");
        c.resolution = get_or(r, "resolution", c.resolution);
        c.vertex_tol = get_or(r, "vertex_tol", c.vertex_tol);
    }
    if (j.contains("models")) {
        const auto& m = j.at("models");
        if (m.contains("b")) {
            c.b_name = get_or<std::string>(m.at("b"), "name", c.b_name);
            c.b_lambda = get_or(m.at("b"), "lambda", c.b_lambda);
            c.b_const = get_or(m.at("b"), "value", c.b_const);
        }
        if (m.contains("beta")) {
            c.beta_name = get_or<std::string>(m.at("beta"), "name", c.beta_name);
            c.beta_const = get_or(m.at("beta"), "value", c.beta_const);
        }
        if (m.contains("a2")) {
            c.a2_name = get_or<std::string>(m.at("a2"), "name", c.a2_name);
            c.a2_diag = get_or(m.at("a2"), "diag", c.a2_diag);
        }
    }
    if (j.contains("coeffs")) {
        const auto& k = j.at("coeffs");
        c.z_points_interior = get_or(k, "z_points_interior", c.z_points_interior);
        c.refine_levels = get_or(k, "refine_levels", c.refine_levels);
        c.refine_ratio = get_or(k, "refine_ratio", c.refine_ratio);
        c.refine_span = get_or(k, "refine_span", c.refine_span);
        c.mc_samples = get_or<long long>(k, "mc_samples", c.mc_samples);
    }
    if (j.contains("sde")) {
        const auto& s = j.at("sde");
        c.epsilon = get_or(s, "epsilon", c.epsilon);
        c.kappa = get_or(s, "kappa", c.kappa);
        c.delta = get_or(s, "delta", c.delta);
        c.sde_T = get_or(s, "T", c.sde_T);
        c.dt_divisor = get_or(s, "dt_divisor", c.dt_divisor);
        c.subsample = get_or(s, "subsample", c.subsample);
        c.x0 = get_or(s, "x0", c.x0);
    }
    if (j.contains("branch")) {
        const auto& b = j.at("branch");
        c.branch_vertex = get_or(b, "vertex", c.branch_vertex);
        c.branch_entrance = get_or(b, "entrance", c.branch_entrance);
        c.branch_h = get_or(b, "h", c.branch_h);
        c.branch_h_start = get_or(b, "h_start", c.branch_h_start);
        c.branch_n_traj = get_or<long long>(b, "n_traj", c.branch_n_traj);
    }
    if (j.contains("graphdiff")) {
        const auto& gd = j.at("graphdiff");
        c.gd_delta = get_or(gd, "delta", c.gd_delta);
        c.gd_T = get_or(gd, "T", c.gd_T);
        c.gd_dt = get_or(gd, "dt", c.gd_dt);
        c.gd_h_v = get_or(gd, "h_v", c.gd_h_v);
        c.gd_start_edge = get_or(gd, "start_edge", c.gd_start_edge);
        c.gd_start_z = get_or(gd, "start_z", c.gd_start_z);
    }
    if (j.contains("limit")) {
        const auto& l = j.at("limit");
        c.limit_start_edge = get_or(l, "start_edge", c.limit_start_edge);
        c.limit_start_z = get_or(l, "start_z", c.limit_start_z);
        c.limit_T = get_or(l, "T", c.limit_T);
        c.limit_n_runs = get_or<long long>(l, "n_runs", c.limit_n_runs);
        c.observable = get_or<std::string>(l, "observable", c.observable);
        c.observable_mc = get_or<long long>(l, "mc_samples", c.observable_mc);
    }
    if (j.contains("converge")) {
        const auto& v = j.at("converge");
        c.converge_deltas = get_or(v, "deltas", c.converge_deltas);
        c.converge_h = get_or(v, "h", c.converge_h);
    }
    c.validate();
    return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigInvalid("config parse error in '" + path + "': " + e.what());
    }
    return from_json(j);
}

inline void ExperimentConfig::validate() const {
    if (!field) throw ConfigInvalid("field.name: no field constructed");
    if (resolution < 16) throw ConfigInvalid("reeb.resolution: must be >= 16");
    if (mc_samples < 1000) throw ConfigInvalid("coeffs.mc_samples: must be >= 1000");
    if (refine_ratio <= 0 || refine_ratio >= 1)
        throw ConfigInvalid("coeffs.refine_ratio: must lie in (0,1)");
    if (epsilon <= 0) throw ConfigInvalid("sde.epsilon: must be positive");
    if (kappa < 0 || delta < 0) throw ConfigInvalid("sde.kappa/delta: must be nonnegative");
    if (dt_divisor < 50)
        throw ConfigInvalid("sde.dt_divisor: must be >= 50 so dt <= epsilon/50");
    if (!x0.empty() && static_cast<int>(x0.size()) != field->dim())
        throw ConfigInvalid("sde.x0: expected " + fmt_int(field->dim()) + " components");
    if (branch_h <= 0 || branch_h_start <= 0 || branch_h_start > branch_h)
        throw ConfigInvalid("branch.h/h_start: need 0 < h_start <= h");
    if (branch_n_traj < 1) throw ConfigInvalid("branch.n_traj: must be positive");
    if (gd_h_v <= 0 || gd_dt <= 0 || gd_T <= 0) throw ConfigInvalid("graphdiff: bad parameters");
    if (limit_n_runs < 1) throw ConfigInvalid("limit.n_runs: must be positive");
    for (double d : converge_deltas)
        if (d <= 0) throw ConfigInvalid("converge.deltas: must be positive");
    // known observables
    if (observable != "one" && observable != "indicator_q1_pos" &&
        observable.rfind("coordinate:", 0) != 0)
        throw ConfigInvalid("limit.observable: unknown name '" + observable + "'");
}

}  // namespace reebflow
