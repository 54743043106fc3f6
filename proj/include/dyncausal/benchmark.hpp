#pragma once

#include <map>
#include <string>
#include <vector>

#include "dyncausal/effects.hpp"
#include "dyncausal/simulate.hpp"

namespace dyncausal {

enum class Method { CausalTransfer, BayesianImputation, CausalImpact };

std::string to_string(Method m);
Method parse_method(std::string_view text);

struct Score {
    double mse = 0.0;
    double coverage = 0.0;
    double width = 0.0;
    double bias = 0.0;  // mean_t (estimate - truth)
    std::size_t n = 0;  // scored time points
};

/// MSE, coverage and mean width of `estimate` against truth values keyed by
/// time, restricted to one period. Points with a NaN estimate are skipped;
/// a point whose time has no truth value is rejected.
Score score(std::span<const double> truth_times, std::span<const double> truth, const EffectSeries& estimate,
            Period period);
Score score(const TruthTrace& truth, const EffectSeries& estimate, Period period);

struct BenchmarkConfig {
    SimConfig sim;                 // sim.seed is the master seed
    std::size_t replications = 20;
    std::vector<Method> methods{Method::CausalTransfer};
    std::vector<EffectRequest> estimands;  // templates; B, level, seed and CATE x_pre are set per replication
    std::size_t B = 1000;
    double level = 0.95;
    std::size_t n_starts = 5;
    bool future = true;            // score CT future effects over sim.horizon
    std::size_t threads = 0;       // 0: hardware concurrency
    bool keep_series = false;

    void validate() const;
};

struct BenchmarkCell {
    std::string method;
    std::string estimand;
    std::string period;
    std::size_t replications = 0;  // successful replications aggregated
    double mse = 0.0;
    double coverage = 0.0;
    double width = 0.0;
    double abs_bias = 0.0;         // mean over replications of |mean_t bias|
    double wall_seconds = 0.0;     // mean per replication, method total
    std::vector<Score> per_replication;  // NaN-filled entries for failed replications
};

struct ReplicationSeries {
    std::size_t replication = 0;
    std::uint64_t seed = 0;
    std::string method;
    EffectSeries series;
};

struct BenchmarkReport {
    BenchmarkConfig config;
    std::vector<BenchmarkCell> cells;
    std::map<std::string, std::size_t> failures;  // per method
    std::vector<std::string> failure_messages;
    std::vector<std::uint64_t> replication_seeds;
    std::vector<ReplicationSeries> series;  // when keep_series

    const BenchmarkCell& cell(Method m, const std::string& estimand, Period p) const;
    std::string to_csv(bool include_timing = false) const;
    std::string to_json(bool include_timing = false) const;
};

/// Label under which an estimand is reported (CATE without its covariate).
std::string cell_estimand(const EffectRequest& r);

/// Replicated generate, fit, estimate and score. Fails when more than 10%
/// of the replications of any method fail.
BenchmarkReport run_benchmark(const BenchmarkConfig& config);

}  // namespace dyncausal
