#include "dyncausal/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "dyncausal/baselines.hpp"
#include "dyncausal/error.hpp"
#include "dyncausal/pipeline.hpp"
#include "dyncausal/random.hpp"

namespace dyncausal {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CellKey {
    Method method;
    std::size_t estimand;
    Period period;
};

struct ReplicationOutcome {
    std::vector<Score> scores;  // one per cell key
    std::vector<double> seconds;  // per method
    std::vector<bool> failed;     // per method
    std::vector<std::string> errors;
    std::vector<ReplicationSeries> series;
};

bool ci_compatible(const EffectRequest& r) { return r.estimand == Estimand::SATE || r.estimand == Estimand::ATE; }

std::string fmt(double v) {
    if (std::isnan(v)) return "NaN";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::CausalTransfer: return "causal-transfer";
        case Method::BayesianImputation: return "bayesian-imputation";
        case Method::CausalImpact: return "causal-impact";
    }
    return "?";
}

Method parse_method(std::string_view text) {
    if (text == "causal-transfer" || text == "CT" || text == "ct") return Method::CausalTransfer;
    if (text == "bayesian-imputation" || text == "BI" || text == "bi") return Method::BayesianImputation;
    if (text == "causal-impact" || text == "CI" || text == "ci") return Method::CausalImpact;
    throw InputError("unknown method '" + std::string(text) + "'");
}

Score score(std::span<const double> truth_times, std::span<const double> truth, const EffectSeries& estimate,
            Period period) {
    if (truth_times.size() != truth.size()) throw InputError("truth times and values differ in length");
    std::unordered_map<double, double> by_time;
    for (std::size_t i = 0; i < truth.size(); ++i) by_time.emplace(truth_times[i], truth[i]);
    Score s;
    double se = 0.0, cover = 0.0, width = 0.0, bias = 0.0;
    for (const auto& p : estimate.points) {
        if (p.period != period) continue;
        auto it = by_time.find(p.time);
        if (it == by_time.end()) throw InputError("estimate at time " + fmt(p.time) + " has no truth value");
        if (std::isnan(p.point)) continue;
        const double tau = it->second;
        se += (tau - p.point) * (tau - p.point);
        bias += p.point - tau;
        cover += (tau >= p.lower && tau <= p.upper) ? 1.0 : 0.0;
        width += p.upper - p.lower;
        ++s.n;
    }
    if (s.n == 0) return {kNaN, kNaN, kNaN, kNaN, 0};
    const double k = static_cast<double>(s.n);
    s.mse = se / k;
    s.coverage = cover / k;
    s.width = width / k;
    s.bias = bias / k;
    return s;
}

Score score(const TruthTrace& truth, const EffectSeries& estimate, Period period) {
    return score(truth.effect_times, truth.series(estimate.estimand), estimate, period);
}

std::string cell_estimand(const EffectRequest& r) {
    return r.estimand == Estimand::CATE ? std::string("CATE") : r.label();
}

void BenchmarkConfig::validate() const {
    sim.validate();
    if (replications < 1) throw InputError("need at least one replication");
    if (methods.empty()) throw InputError("no methods selected");
    if (estimands.empty()) throw InputError("no estimands selected");
    if (B < 1) throw InputError("B must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw InputError("interval level must lie in (0, 1)");
    for (const auto& e : estimands)
        if (e.estimand == Estimand::Custom) throw InputError("custom estimands have no simulated truth");
    bool any = false;
    for (auto m : methods)
        for (const auto& e : estimands) any = any || m != Method::CausalImpact || ci_compatible(e);
    if (!any) throw InputError("causal impact supports SATE and ATE only");
}

const BenchmarkCell& BenchmarkReport::cell(Method m, const std::string& estimand, Period p) const {
    for (const auto& c : cells)
        if (c.method == to_string(m) && c.estimand == estimand && c.period == to_string(p)) return c;
    throw InputError("benchmark has no cell " + to_string(m) + "/" + estimand + "/" + to_string(p));
}

std::string BenchmarkReport::to_csv(bool include_timing) const {
    std::ostringstream os;
    os << "method,estimand,period,replications,mse,coverage,width,abs_bias";
    if (include_timing) os << ",wall_seconds";
    os << '\n';
    for (const auto& c : cells) {
        os << c.method << ',' << c.estimand << ',' << c.period << ',' << c.replications << ',' << fmt(c.mse) << ','
           << fmt(c.coverage) << ',' << fmt(c.width) << ',' << fmt(c.abs_bias);
        if (include_timing) os << ',' << fmt(c.wall_seconds);
        os << '\n';
    }
    return os.str();
}

std::string BenchmarkReport::to_json(bool include_timing) const {
    using nlohmann::json;
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json j;
    j["model_id"] = config.sim.model_id;
    j["d"] = config.sim.d;
    j["n"] = config.sim.n;
    j["assignment"] = config.sim.assignment;
    j["horizon"] = config.sim.horizon;
    j["master_seed"] = config.sim.seed;
    j["replications"] = config.replications;
    j["B"] = config.B;
    j["level"] = config.level;
    j["n_starts"] = config.n_starts;
    j["replication_seeds"] = replication_seeds;
    j["failures"] = failures;
    j["failure_messages"] = failure_messages;
    json cs = json::array();
    for (const auto& c : cells) {
        json cj;
        cj["method"] = c.method;
        cj["estimand"] = c.estimand;
        cj["period"] = c.period;
        cj["replications"] = c.replications;
        cj["mse"] = num(c.mse);
        cj["coverage"] = num(c.coverage);
        cj["width"] = num(c.width);
        cj["abs_bias"] = num(c.abs_bias);
        if (include_timing) cj["wall_seconds"] = c.wall_seconds;
        json per = json::array();
        for (const auto& s : c.per_replication)
            per.push_back({{"mse", num(s.mse)}, {"coverage", num(s.coverage)}, {"width", num(s.width)}, {"bias", num(s.bias)}});
        cj["per_replication"] = per;
        cs.push_back(cj);
    }
    j["cells"] = cs;
    return j.dump(2) + "\n";
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
    config.validate();
    const bool with_ci = std::find(config.methods.begin(), config.methods.end(), Method::CausalImpact) != config.methods.end();

    std::vector<CellKey> keys;
    for (auto m : config.methods)
        for (std::size_t e = 0; e < config.estimands.size(); ++e) {
            if (m == Method::CausalImpact && !ci_compatible(config.estimands[e])) continue;
            keys.push_back({m, e, Period::Past});
            if (m == Method::CausalTransfer && config.future && config.sim.horizon > 0) keys.push_back({m, e, Period::Future});
        }
    auto key_index = [&](Method m, std::size_t e, Period p) -> std::size_t {
        for (std::size_t k = 0; k < keys.size(); ++k)
            if (keys[k].method == m && keys[k].estimand == e && keys[k].period == p) return k;
        return keys.size();
    };

    BenchmarkReport report;
    report.config = config;
    for (std::size_t r = 0; r < config.replications; ++r)
        report.replication_seeds.push_back(derive_seed({config.sim.seed, tag(StreamRole::Replication), r}));

    std::vector<ReplicationOutcome> outcomes(config.replications);
    auto run_one = [&](std::size_t r) {
        ReplicationOutcome& out = outcomes[r];
        out.scores.assign(keys.size(), Score{kNaN, kNaN, kNaN, kNaN, 0});
        out.seconds.assign(config.methods.size(), 0.0);
        out.failed.assign(config.methods.size(), false);
        const std::uint64_t seed = report.replication_seeds[r];
        SimConfig sc = config.sim;
        sc.seed = seed;
        if (with_ci && sc.pre_period == 0) sc.pre_period = sc.n;
        const SimulatedPanel sp = generate(sc);
        const PanelDataset panel = slice_rows(sp.data, sc.pre_period, sc.n);
        const ModelFormula formula = benchmark_formula(sc.model_id);

        auto request_for = [&](const EffectRequest& tmpl) {
            EffectRequest req = tmpl;
            req.B = config.B;
            req.level = config.level;
            req.seed = seed;
            req.horizon = 0;
            if (req.estimand == Estimand::CATE) {
                req.cate_x_pre = sp.truth.new_unit_x_pre;
                req.cate_group = 0;
            }
            return req;
        };
        auto record = [&](Method m, std::size_t e, Period p, const EffectSeries& s) {
            const std::size_t k = key_index(m, e, p);
            if (k < keys.size()) out.scores[k] = score(sp.truth.effect_times, sp.truth.series(s.estimand), s, p);
        };

        for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
            const Method m = config.methods[mi];
            const auto start = std::chrono::steady_clock::now();
            try {
                if (m == Method::CausalTransfer) {
                    CausalTransferOptions opt;
                    opt.mle.n_starts = config.n_starts;
                    opt.mle.seed = seed;
                    const FittedPanel fitted = fit_causal_transfer(panel, formula, opt);
                    for (std::size_t e = 0; e < config.estimands.size(); ++e) {
                        EffectRequest req = request_for(config.estimands[e]);
                        if (config.future) req.horizon = sc.horizon;
                        EffectSeries s = estimate_effects(fitted, req, &sp.truth.future);
                        record(m, e, Period::Past, s);
                        if (req.horizon > 0) record(m, e, Period::Future, s);
                        if (config.keep_series) out.series.push_back({r, seed, to_string(m), std::move(s)});
                    }
                } else if (m == Method::BayesianImputation) {
                    for (std::size_t e = 0; e < config.estimands.size(); ++e) {
                        EffectSeries s = bayesian_imputation(panel, formula, request_for(config.estimands[e]));
                        record(m, e, Period::Past, s);
                        if (config.keep_series) out.series.push_back({r, seed, to_string(m), std::move(s)});
                    }
                } else {
                    CausalImpactConfig cc;
                    cc.pre_period = sc.pre_period;
                    cc.B = config.B;
                    cc.level = config.level;
                    cc.seed = seed;
                    cc.mle.n_starts = config.n_starts;
                    const CausalImpactResult ci = causal_impact_aggregate(sp.data, cc);
                    for (std::size_t e = 0; e < config.estimands.size(); ++e) {
                        if (!ci_compatible(config.estimands[e])) continue;
                        EffectSeries s = ci.effects;
                        s.estimand = config.estimands[e].label();
                        record(m, e, Period::Past, s);
                        if (config.keep_series) out.series.push_back({r, seed, to_string(m), std::move(s)});
                    }
                }
            } catch (const std::exception& ex) {
                out.failed[mi] = true;
                out.errors.push_back("replication " + std::to_string(r) + " " + to_string(m) + ": " + ex.what());
                for (std::size_t k = 0; k < keys.size(); ++k)
                    if (keys[k].method == m) out.scores[k] = Score{kNaN, kNaN, kNaN, kNaN, 0};
            }
            out.seconds[mi] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    };

    std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, config.replications);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::vector<std::string> worker_errors;
    auto worker = [&] {
        for (std::size_t r = next++; r < config.replications; r = next++) {
            try {
                run_one(r);
            } catch (const std::exception& ex) {
                std::lock_guard lock(error_mutex);
                worker_errors.push_back("replication " + std::to_string(r) + ": " + ex.what());
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (!worker_errors.empty()) throw InputError(worker_errors.front());

    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        std::size_t failed = 0;
        for (const auto& o : outcomes) failed += o.failed[mi] ? 1 : 0;
        report.failures[to_string(config.methods[mi])] = failed;
    }
    for (const auto& o : outcomes) {
        report.failure_messages.insert(report.failure_messages.end(), o.errors.begin(), o.errors.end());
        for (const auto& s : o.series) report.series.push_back(s);
    }
    for (const auto& [method, failed] : report.failures)
        if (failed * 10 > config.replications)
            throw EstimationError(method + " failed in " + std::to_string(failed) + " of " +
                                  std::to_string(config.replications) + " replications; first error: " +
                                  (report.failure_messages.empty() ? std::string("?") : report.failure_messages.front()));

    for (std::size_t k = 0; k < keys.size(); ++k) {
        BenchmarkCell c;
        c.method = to_string(keys[k].method);
        c.estimand = cell_estimand(config.estimands[keys[k].estimand]);
        c.period = to_string(keys[k].period);
        const auto mi = static_cast<std::size_t>(
            std::find(config.methods.begin(), config.methods.end(), keys[k].method) - config.methods.begin());
        double mse = 0, cov = 0, width = 0, bias = 0, secs = 0;
        for (const auto& o : outcomes) {
            const Score& s = o.scores[k];
            c.per_replication.push_back(s);
            if (o.failed[mi] || s.n == 0) continue;
            mse += s.mse;
            cov += s.coverage;
            width += s.width;
            bias += std::abs(s.bias);
            secs += o.seconds[mi];
            ++c.replications;
        }
        if (c.replications == 0) {
            c.mse = c.coverage = c.width = c.abs_bias = kNaN;
        } else {
            const double r = static_cast<double>(c.replications);
            c.mse = mse / r;
            c.coverage = cov / r;
            c.width = width / r;
            c.abs_bias = bias / r;
            c.wall_seconds = secs / r;
        }
        report.cells.push_back(std::move(c));
    }
    return report;
}

}  // namespace dyncausal
