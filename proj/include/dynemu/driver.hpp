#pragma once

// Experiment driver: configuration, the three pipelines (global SVD-GP,
// nearest-neighbor local fits, greedy local fits), per-point parallelism with
// deterministic per-point random streams, and JSON reporting.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dynemu/errors.hpp"
#include "dynemu/metrics.hpp"
#include "dynemu/neighborhood.hpp"
#include "dynemu/simulators.hpp"
#include "dynemu/svdmodel.hpp"

namespace dynemu {

using json = nlohmann::json;

enum class Method { svdgp, knnsvdgp, lasvdgp };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::svdgp: return "svdgp";
        case Method::knnsvdgp: return "knnsvdgp";
        default: return "lasvdgp";
    }
}

inline Method method_from_name(const std::string& s) {
    if (s == "svdgp") return Method::svdgp;
    if (s == "knnsvdgp") return Method::knnsvdgp;
    if (s == "lasvdgp") return Method::lasvdgp;
    throw argument_error("config: method must be one of svdgp, knnsvdgp, lasvdgp (got '" +
                         s + "')");
}

struct DataSpec {
    std::string simulator;  // "forrester" or "environ"; empty = file-backed
    Eigen::Index n_train = 0;
    Eigen::Index m_test = 0;
    TimeGrid grid;
    bool grid_set = false;
    std::string design_path;
    std::string response_path;
    int cv_train = 4;  // train:test ratio for file-backed repetitions
    int cv_test = 1;
};

struct ExperimentConfig {
    Method method = Method::lasvdgp;
    DataSpec data;
    Eigen::Index n = 40;
    Eigen::Index n0 = 0;  // 0 = ceil(n/2)
    double gamma = 0.95;
    double eta = 1e-6;
    SearchScheme scheme;
    int workers = 0;  // 0 = environment override, then hardware
    Eigen::Index repetitions = 1;
    std::uint64_t seed = 42;
    std::string output;
    std::string dump_predictions;  // directory; empty = off
    bool theta_summaries = false;
    bool force = false;
    PriorSpec prior;

    Eigen::Index resolved_n0() const {
        return n0 > 0 ? n0 : (n + 1) / 2;
    }
};

// Global-fit guard: refuse accidental dense fits past this size.
inline constexpr Eigen::Index kSvdGpTrainGuard = 3000;

namespace detail {

template <typename T>
T json_get(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw argument_error("config: field '" + key + "': " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    using detail::json_get;
    ExperimentConfig c;
    if (!j.contains("method")) throw argument_error("config: missing 'method'");
    c.method = method_from_name(json_get<std::string>(j, "method", ""));
    if (!j.contains("data") || !j.at("data").is_object())
        throw argument_error("config: missing 'data' object");
    const json& d = j.at("data");
    c.data.simulator = json_get<std::string>(d, "simulator", "");
    c.data.design_path = json_get<std::string>(d, "design", "");
    c.data.response_path = json_get<std::string>(d, "response", "");
    const bool sim = !c.data.simulator.empty();
    const bool file = !c.data.design_path.empty() || !c.data.response_path.empty();
    if (sim == file)
        throw argument_error(
            "config: data needs either 'simulator' or 'design'+'response', not both");
    if (sim) {
        if (c.data.simulator != "forrester" && c.data.simulator != "environ")
            throw argument_error("config: data.simulator must be forrester or environ");
        c.data.n_train = json_get<Eigen::Index>(d, "n_train", 0);
        c.data.m_test = json_get<Eigen::Index>(d, "m_test", 0);
        if (c.data.n_train < 2)
            throw argument_error("config: data.n_train must be at least 2");
        if (c.data.m_test < 0)
            throw argument_error("config: data.m_test must be non-negative");
        if (d.contains("grid")) {
            const json& g = d.at("grid");
            c.data.grid.start = json_get<double>(g, "start", 0.0);
            c.data.grid.end = json_get<double>(g, "end", 1.0);
            c.data.grid.length = json_get<Eigen::Index>(g, "length", 0);
            if (!(c.data.grid.start < c.data.grid.end) || c.data.grid.length < 2)
                throw argument_error("config: data.grid needs start < end and length >= 2");
            c.data.grid_set = true;
        }
    } else {
        if (c.data.design_path.empty() || c.data.response_path.empty())
            throw argument_error("config: file data needs both 'design' and 'response'");
        if (d.contains("cv_ratio")) {
            auto r = json_get<std::vector<int>>(d, "cv_ratio", {});
            if (r.size() != 2 || r[0] < 1 || r[1] < 1)
                throw argument_error("config: data.cv_ratio must be two positive integers");
            c.data.cv_train = r[0];
            c.data.cv_test = r[1];
        }
    }
    c.n = json_get<Eigen::Index>(j, "n", c.n);
    c.n0 = json_get<Eigen::Index>(j, "n0", 0);
    c.gamma = json_get<double>(j, "gamma", c.gamma);
    c.eta = json_get<double>(j, "eta", c.eta);
    if (!(c.gamma > 0.0 && c.gamma < 1.0))
        throw argument_error("config: gamma must lie in (0, 1)");
    if (!(c.eta >= 0.0)) throw argument_error("config: eta must be non-negative");
    if (j.contains("scheme")) {
        const json& s = j.at("scheme");
        std::string kind = detail::json_get<std::string>(s, "kind", "limit");
        if (kind == "exhaustive")
            c.scheme.kind = SearchScheme::Kind::exhaustive;
        else if (kind == "limit")
            c.scheme.kind = SearchScheme::Kind::limit;
        else
            throw argument_error("config: scheme.kind must be exhaustive or limit");
        c.scheme.m_lim = detail::json_get<Eigen::Index>(s, "m_lim", 0);
        c.scheme.r_lim = detail::json_get<Eigen::Index>(s, "r_lim", 0);
        if (c.scheme.m_lim < 0 || c.scheme.r_lim < 0)
            throw argument_error("config: scheme limits must be non-negative (0 = auto)");
    }
    c.workers = json_get<int>(j, "workers", 0);
    if (c.workers < 0) throw argument_error("config: workers must be non-negative");
    c.repetitions = json_get<Eigen::Index>(j, "repetitions", 1);
    if (c.repetitions < 1) throw argument_error("config: repetitions must be positive");
    c.seed = json_get<std::uint64_t>(j, "seed", 42);
    c.output = json_get<std::string>(j, "output", "");
    c.dump_predictions = json_get<std::string>(j, "dump_predictions", "");
    c.theta_summaries = json_get<bool>(j, "theta_summaries", false);
    c.force = json_get<bool>(j, "force", false);
    if (j.contains("prior")) {
        const json& p = j.at("prior");
        c.prior.alpha_i = json_get<double>(p, "alpha_i", 0.0);
        c.prior.beta_i = json_get<double>(p, "beta_i", 0.0);
        c.prior.alpha = json_get<double>(p, "alpha", 0.0);
        c.prior.beta = json_get<double>(p, "beta", 0.0);
        c.prior.theta_shape = json_get<double>(p, "theta_shape", 1.5);
        c.prior.theta_scale = json_get<double>(p, "theta_scale", 0.0);
        if (c.prior.alpha_i < 0 || c.prior.beta_i < 0 || c.prior.alpha < 0 ||
            c.prior.beta < 0 || !(c.prior.theta_shape > 0) || c.prior.theta_scale < 0)
            throw argument_error("config: prior hyperparameters out of range");
    }
    if (c.method != Method::svdgp) {
        if (c.n < 2) throw argument_error("config: n must be at least 2");
        if (c.n0 != 0 && !(c.n0 >= 2 && c.n0 <= c.n))
            throw argument_error("config: need 2 <= n0 <= n");
    }
    return c;
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["method"] = method_name(c.method);
    json d;
    if (!c.data.simulator.empty()) {
        d["simulator"] = c.data.simulator;
        d["n_train"] = c.data.n_train;
        d["m_test"] = c.data.m_test;
        if (c.data.grid_set)
            d["grid"] = {{"start", c.data.grid.start},
                         {"end", c.data.grid.end},
                         {"length", c.data.grid.length}};
    } else {
        d["design"] = c.data.design_path;
        d["response"] = c.data.response_path;
        d["cv_ratio"] = {c.data.cv_train, c.data.cv_test};
    }
    j["data"] = d;
    if (c.method != Method::svdgp) {
        j["n"] = c.n;
        j["n0"] = c.resolved_n0();
    }
    j["gamma"] = c.gamma;
    j["eta"] = c.eta;
    j["scheme"] = {{"kind", c.scheme.kind == SearchScheme::Kind::exhaustive
                              ? "exhaustive"
                              : "limit"},
                   {"m_lim", c.scheme.m_lim},
                   {"r_lim", c.scheme.r_lim}};
    j["workers"] = c.workers;
    j["repetitions"] = c.repetitions;
    j["seed"] = c.seed;
    j["theta_summaries"] = c.theta_summaries;
    j["force"] = c.force;
    j["prior"] = {{"alpha_i", c.prior.alpha_i},   {"beta_i", c.prior.beta_i},
                  {"alpha", c.prior.alpha},       {"beta", c.prior.beta},
                  {"theta_shape", c.prior.theta_shape},
                  {"theta_scale", c.prior.theta_scale}};
    return j;
}

inline int resolve_workers(const ExperimentConfig& c) {
    if (c.workers > 0) return c.workers;
    if (const char* env = std::getenv("DYNEMU_WORKERS")) {
        char* end = nullptr;
        long w = std::strtol(env, &end, 10);
        if (end && *end == '\0' && w > 0) return static_cast<int>(w);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace detail {

// Runs fn(i) for i in [0, count) on up to `workers` threads; fn must not throw.
template <typename Fn>
void parallel_for(Eigen::Index count, int workers, Fn&& fn) {
    if (count <= 0) return;
    const int w = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (w == 1) {
        for (Eigen::Index i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<Eigen::Index> next{0};
    auto body = [&] {
        while (true) {
            Eigen::Index i = next.fetch_add(1);
            if (i >= count) break;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
}

struct PointOutcome {
    Vector mean;
    Vector var;
    int p = -1;
    std::vector<int> p_history;
    std::vector<Vector> theta;  // theta-hat of the leading bases (up to 3)
    double t_neigh = 0, t_svd = 0, t_theta = 0, t_pred = 0;
    bool failed = false;
    std::string error;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double w = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

}  // namespace detail

// Removes every "timings" object recursively; reports are comparable across
// worker counts and machines after this.
inline void strip_timings(json& j) {
    if (j.is_object()) {
        j.erase("timings");
        for (auto& [k, v] : j.items()) strip_timings(v);
    } else if (j.is_array()) {
        for (auto& v : j) strip_timings(v);
    }
}

namespace detail {

struct RepData {
    Matrix X;   // training design
    Matrix Y;   // training response
    Matrix XT;  // test design
    Matrix YT;  // test truth
};

inline TimeGrid grid_for(const ExperimentConfig& c) {
    if (c.data.grid_set) return c.data.grid;
    return c.data.simulator == "environ" ? environ_grid() : forrester_grid();
}

inline RepData make_builtin_rep(const ExperimentConfig& c, std::uint64_t rep_seed) {
    const bool env = c.data.simulator == "environ";
    InputDomain dom = env ? environ_domain() : forrester_domain();
    TimeGrid grid = grid_for(c);
    RepData r;
    r.X = lhd(c.data.n_train, dom, derive_seed(rep_seed, 0));
    r.XT = c.data.m_test > 0 ? lhd(c.data.m_test, dom, derive_seed(rep_seed, 1))
                             : Matrix(0, dom.dim());
    auto sim = [&](const Vector& x, const TimeGrid& g) {
        return env ? environ(x, g) : forrester(x, g);
    };
    r.Y = evaluate_rows(sim, r.X, grid);
    r.YT = Matrix(grid.length, r.XT.rows());
    for (Eigen::Index i = 0; i < r.XT.rows(); ++i)
        r.YT.col(i) = sim(r.XT.row(i).transpose(), grid);
    return r;
}

inline RepData make_file_rep(const Dataset& ds, const CvSplit& split) {
    RepData r;
    const Eigen::Index q = ds.design.cols();
    const Eigen::Index L = ds.response.rows();
    r.X.resize(static_cast<Eigen::Index>(split.train.size()), q);
    r.Y.resize(L, static_cast<Eigen::Index>(split.train.size()));
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        r.X.row(static_cast<Eigen::Index>(i)) = ds.design.row(split.train[i]);
        r.Y.col(static_cast<Eigen::Index>(i)) = ds.response.col(split.train[i]);
    }
    r.XT.resize(static_cast<Eigen::Index>(split.test.size()), q);
    r.YT.resize(L, static_cast<Eigen::Index>(split.test.size()));
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        r.XT.row(static_cast<Eigen::Index>(i)) = ds.design.row(split.test[i]);
        r.YT.col(static_cast<Eigen::Index>(i)) = ds.response.col(split.test[i]);
    }
    return r;
}

inline json rep_report(const ExperimentConfig& c, const RepData& data,
                       const std::vector<PointOutcome>& points, double wall_s) {
    const Eigen::Index M = data.XT.rows();
    const Eigen::Index L = data.YT.rows();
    std::vector<Eigen::Index> ok;
    for (Eigen::Index i = 0; i < M; ++i)
        if (!points[static_cast<std::size_t>(i)].failed) ok.push_back(i);

    Matrix pred(L, static_cast<Eigen::Index>(ok.size()));
    Matrix var(L, static_cast<Eigen::Index>(ok.size()));
    Matrix truth(L, static_cast<Eigen::Index>(ok.size()));
    for (std::size_t i = 0; i < ok.size(); ++i) {
        pred.col(static_cast<Eigen::Index>(i)) = points[static_cast<std::size_t>(ok[i])].mean;
        var.col(static_cast<Eigen::Index>(i)) = points[static_cast<std::size_t>(ok[i])].var;
        truth.col(static_cast<Eigen::Index>(i)) = data.YT.col(ok[i]);
    }

    json rep;
    json score;
    if (!ok.empty()) {
        ScoreReport sr = score_report(truth, pred, var);
        Vector nm = Vector::Constant(M, std::numeric_limits<double>::quiet_NaN());
        Vector sc = Vector::Constant(M, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t i = 0; i < ok.size(); ++i) {
            nm(ok[i]) = sr.per_point_nmspe(static_cast<Eigen::Index>(i));
            sc(ok[i]) = sr.per_point_score(static_cast<Eigen::Index>(i));
        }
        score["mean_nmspe"] = sr.mean_nmspe;
        score["log_mean_nmspe"] = sr.log_mean_nmspe;
        score["mean_score"] = sr.mean_score;
        score["scored"] = sr.scored;
        score["excluded"] = sr.excluded;
        score["per_point_nmspe"] = std::vector<double>(nm.data(), nm.data() + nm.size());
        score["per_point_score"] = std::vector<double>(sc.data(), sc.data() + sc.size());
    } else {
        score["mean_nmspe"] = nullptr;
        score["log_mean_nmspe"] = nullptr;
        score["mean_score"] = nullptr;
        score["scored"] = 0;
        score["excluded"] = 0;
        score["per_point_nmspe"] = json::array();
        score["per_point_score"] = json::array();
    }
    rep["score"] = score;

    std::map<int, int> hist;
    for (Eigen::Index i : ok) ++hist[points[static_cast<std::size_t>(i)].p];
    json jh = json::object();
    for (auto& [p, cnt] : hist) jh[std::to_string(p)] = cnt;
    rep["p_histogram"] = jh;

    json fails = json::array();
    for (Eigen::Index i = 0; i < M; ++i)
        if (points[static_cast<std::size_t>(i)].failed)
            fails.push_back({{"index", i}, {"error", points[static_cast<std::size_t>(i)].error}});
    rep["failed_points"] = fails;

    json ph = json::array();
    for (Eigen::Index i : ok) {
        const auto& h = points[static_cast<std::size_t>(i)].p_history;
        if (h.size() > 1 && h.front() != h.back()) {
            ph.push_back({{"index", i}, {"p_history", h}});
        }
    }
    rep["p_changes"] = ph;

    if (c.theta_summaries && !ok.empty()) {
        json ts = json::array();
        std::size_t nb = 0;
        for (Eigen::Index i : ok)
            nb = std::max(nb, points[static_cast<std::size_t>(i)].theta.size());
        for (std::size_t b = 0; b < nb; ++b) {
            Eigen::Index q = data.X.cols();
            for (Eigen::Index d = 0; d < q; ++d) {
                std::vector<double> vals;
                for (Eigen::Index i : ok) {
                    const auto& th = points[static_cast<std::size_t>(i)].theta;
                    if (b < th.size()) vals.push_back(th[b](d));
                }
                if (vals.empty()) continue;
                std::sort(vals.begin(), vals.end());
                ts.push_back({{"basis", b},
                              {"dim", d},
                              {"min", vals.front()},
                              {"q25", quantile_sorted(vals, 0.25)},
                              {"median", quantile_sorted(vals, 0.5)},
                              {"q75", quantile_sorted(vals, 0.75)},
                              {"max", vals.back()},
                              {"count", vals.size()}});
            }
        }
        rep["theta_summaries"] = ts;
    }

    double tn = 0, tsvd = 0, tth = 0, tp = 0;
    for (const auto& po : points) {
        tn += po.t_neigh;
        tsvd += po.t_svd;
        tth += po.t_theta;
        tp += po.t_pred;
    }
    rep["timings"] = {{"neighborhood_s", tn}, {"svd_s", tsvd},      {"theta_opt_s", tth},
                      {"predict_s", tp},      {"total_s", wall_s}};
    return rep;
}

inline void keep_leading_thetas(const SvdGpModel& m, PointOutcome& out) {
    const std::size_t nb = std::min<std::size_t>(3, m.coef_fits.size());
    out.theta.reserve(nb);
    for (std::size_t b = 0; b < nb; ++b) out.theta.push_back(m.coef_fits[b].theta_hat.theta);
}

}  // namespace detail

// Runs the configured experiment and returns the JSON report. Per-point
// failures are recorded and skipped; they never abort the run or disturb
// other points.
inline json run_experiment(const ExperimentConfig& cfg) {
    const int workers = resolve_workers(cfg);
    Dataset ds;
    std::vector<CvSplit> splits;
    const bool file_backed = cfg.data.simulator.empty();
    if (file_backed) {
        ds = load_dataset(cfg.data.design_path, cfg.data.response_path);
        splits = mc_cv_splits(ds.design.rows(), cfg.data.cv_train, cfg.data.cv_test,
                              cfg.repetitions, cfg.seed);
    }

    auto wall0 = std::chrono::steady_clock::now();
    json reps = json::array();
    for (Eigen::Index rep = 0; rep < cfg.repetitions; ++rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
        detail::RepData data = file_backed
                                   ? detail::make_file_rep(ds, splits[static_cast<std::size_t>(rep)])
                                   : detail::make_builtin_rep(cfg, rep_seed);
        const Eigen::Index N = data.X.rows();
        const Eigen::Index M = data.XT.rows();
        if (cfg.method != Method::svdgp) {
            if (cfg.n > N)
                throw argument_error("config: n (" + std::to_string(cfg.n) +
                                     ") exceeds training size " + std::to_string(N));
            if (cfg.resolved_n0() > cfg.n)
                throw argument_error("config: n0 exceeds n");
        }

        auto t_rep0 = std::chrono::steady_clock::now();
        std::vector<detail::PointOutcome> points(static_cast<std::size_t>(M));

        SvdGpModel global_model;
        if (cfg.method == Method::svdgp) {
            if (N > kSvdGpTrainGuard && !cfg.force)
                throw guard_error(
                    "run: global svdgp fit refused at N = " + std::to_string(N) +
                    " > " + std::to_string(kSvdGpTrainGuard) +
                    " (dense cost grows as N^2 max(M, N)); set force=true to override");
            FitTimings ft;
            global_model = fit_svdgp(data.X, data.Y, cfg.gamma, cfg.prior, cfg.eta,
                                     FitOptions{}, &ft);
            if (M > 0) {
                points[0].t_svd += ft.svd_s;
                points[0].t_theta += ft.theta_s;
            }
        }

        auto point_task = [&](Eigen::Index i) {
            detail::PointOutcome& out = points[static_cast<std::size_t>(i)];
            try {
                Vector x0 = data.XT.row(i).transpose();
                auto t0 = std::chrono::steady_clock::now();
                if (cfg.method == Method::svdgp) {
                    PredictiveSummary ps = predict(global_model, x0);
                    out.mean = ps.mean;
                    out.var = ps.var;
                    out.p = static_cast<int>(global_model.basis.p);
                    detail::keep_leading_thetas(global_model, out);
                    out.t_pred +=
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                } else if (cfg.method == Method::knnsvdgp) {
                    std::vector<int> idx = knn(data.X, x0, cfg.n);
                    std::sort(idx.begin(), idx.end());
                    auto t1 = std::chrono::steady_clock::now();
                    out.t_neigh += std::chrono::duration<double>(t1 - t0).count();
                    Matrix lx(cfg.n, data.X.cols());
                    Matrix ly(data.Y.rows(), cfg.n);
                    for (Eigen::Index r = 0; r < cfg.n; ++r) {
                        lx.row(r) = data.X.row(idx[static_cast<std::size_t>(r)]);
                        ly.col(r) = data.Y.col(idx[static_cast<std::size_t>(r)]);
                    }
                    FitTimings ft;
                    SvdGpModel m = fit_svdgp(lx, ly, cfg.gamma, cfg.prior, cfg.eta,
                                             FitOptions{}, &ft);
                    out.t_svd += ft.svd_s;
                    out.t_theta += ft.theta_s;
                    auto t2 = std::chrono::steady_clock::now();
                    PredictiveSummary ps = predict(m, x0);
                    out.t_pred +=
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t2)
                            .count();
                    out.mean = ps.mean;
                    out.var = ps.var;
                    out.p = static_cast<int>(m.basis.p);
                    detail::keep_leading_thetas(m, out);
                } else {
                    rng_engine eng(derive_seed(derive_seed(rep_seed, 2),
                                               static_cast<std::uint64_t>(i)));
                    NeighborhoodTimings nt;
                    LocalState st = build_neighborhood(data.X, data.Y, x0, cfg.n,
                                                       cfg.resolved_n0(), cfg.gamma,
                                                       cfg.prior, cfg.eta, cfg.scheme,
                                                       eng, &nt);
                    out.t_neigh += nt.neighborhood_s;
                    out.t_svd += nt.svd_s;
                    out.t_theta += nt.theta_s;
                    auto t2 = std::chrono::steady_clock::now();
                    PredictiveSummary ps = predict(st.model, x0);
                    out.t_pred +=
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t2)
                            .count();
                    out.mean = ps.mean;
                    out.var = ps.var;
                    out.p = static_cast<int>(st.model.basis.p);
                    out.p_history = st.p_history;
                    detail::keep_leading_thetas(st.model, out);
                }
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
            }
        };
        detail::parallel_for(M, workers, point_task);
        double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_rep0).count();
        json rep_j = detail::rep_report(cfg, data, points, wall);
        rep_j["seed"] = rep_seed;
        reps.push_back(std::move(rep_j));

        if (!cfg.dump_predictions.empty() && M > 0) {
            std::filesystem::create_directories(cfg.dump_predictions);
            Matrix pm(data.YT.rows(), M), pv(data.YT.rows(), M);
            pm.setConstant(std::numeric_limits<double>::quiet_NaN());
            pv.setConstant(std::numeric_limits<double>::quiet_NaN());
            for (Eigen::Index i = 0; i < M; ++i)
                if (!points[static_cast<std::size_t>(i)].failed) {
                    pm.col(i) = points[static_cast<std::size_t>(i)].mean;
                    pv.col(i) = points[static_cast<std::size_t>(i)].var;
                }
            std::string base = cfg.dump_predictions + "/rep" + std::to_string(rep);
            write_csv_matrix(base + "_mean.csv", pm, "y");
            write_csv_matrix(base + "_var.csv", pv, "y");
        }
    }

    json report;
    report["config"] = config_to_json(cfg);
    report["repetitions"] = reps;
    json agg;
    std::vector<double> nms, scs;
    for (const auto& r : reps) {
        const json& s = r.at("score");
        if (s.at("mean_nmspe").is_number()) nms.push_back(s.at("mean_nmspe").get<double>());
        if (s.at("mean_score").is_number()) scs.push_back(s.at("mean_score").get<double>());
    }
    agg["mean_nmspe_per_rep"] = nms;
    agg["mean_score_per_rep"] = scs;
    if (!nms.empty()) {
        double m = 0;
        for (double v : nms) m += v;
        m /= static_cast<double>(nms.size());
        agg["mean_nmspe"] = m;
        agg["log_mean_nmspe"] = std::log(m);
    } else {
        agg["mean_nmspe"] = nullptr;
        agg["log_mean_nmspe"] = nullptr;
    }
    if (!scs.empty()) {
        double m = 0;
        for (double v : scs) m += v;
        agg["mean_score"] = m / static_cast<double>(scs.size());
    } else {
        agg["mean_score"] = nullptr;
    }
    report["aggregate"] = agg;
    report["timings"] = {
        {"total_s",
         std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count()}};
    return report;
}

inline json run_svdgp(ExperimentConfig cfg) {
    cfg.method = Method::svdgp;
    return run_experiment(cfg);
}

inline json run_knnsvdgp(ExperimentConfig cfg) {
    cfg.method = Method::knnsvdgp;
    return run_experiment(cfg);
}

inline json run_lasvdgp(ExperimentConfig cfg) {
    cfg.method = Method::lasvdgp;
    return run_experiment(cfg);
}

}  // namespace dynemu
