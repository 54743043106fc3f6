// Command-line front end: estimate, forecast, simulate, benchmark.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dyncausal/baselines.hpp"
#include "dyncausal/benchmark.hpp"
#include "dyncausal/error.hpp"
#include "dyncausal/panel_io.hpp"
#include "dyncausal/pipeline.hpp"
#include "dyncausal/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dyncausal;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitIo = 4;

struct RunConfig {
    std::string command;
    // inputs
    std::string input;
    std::string future;
    std::size_t x_pre_window = 0;
    std::string transform = "none";
    std::string weights = "none";
    // model and method
    std::string formula = "y ~ T";
    std::string layout = "shared";
    std::string effect_dynamics = "ar";
    std::string method = "causal-transfer";
    std::vector<std::string> methods{"causal-transfer"};
    std::vector<std::string> estimands{"SATE"};
    std::size_t B = 1000;
    double level = 0.95;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    std::size_t n_starts = 5;
    std::string point_rule = "mean";
    double cate_x_pre = 0.0;
    std::size_t cate_group = 0;
    std::size_t group = 1;
    bool robust = false;
    double huber_k = 1.345;
    std::size_t pre_period = 0;
    // simulation and benchmark
    int model = 1;
    std::size_t d = 20;
    std::size_t n = 300;
    int assignment = 1;
    double noise_scale = 1.0;
    std::size_t replications = 20;
    std::size_t threads = 0;
    bool future_effects = true;
    // outputs
    std::string output;
    std::string format = "csv";
    std::string manifest;
    std::string truth;
    std::string plotdata;
};

/// Registers CLI options bound to RunConfig fields and remembers how to fill
/// each field from a JSON config when the option was not given.
class Binder {
public:
    Binder(CLI::App* app, RunConfig& cfg) : app_(app), cfg_(cfg) {}

    template <typename T>
    CLI::Option* add(const std::string& key, T RunConfig::*field, const std::string& help) {
        CLI::Option* opt = app_->add_option("--" + flag_name(key), cfg_.*field, help);
        fill_.push_back([this, opt, key, field](const json& j) {
            if (opt->count() == 0 && j.contains(key)) cfg_.*field = j.at(key).get<T>();
        });
        return opt;
    }

    CLI::Option* add_flag(const std::string& key, bool RunConfig::*field, const std::string& help) {
        CLI::Option* opt = app_->add_flag("--" + flag_name(key), cfg_.*field, help);
        fill_.push_back([this, opt, key, field](const json& j) {
            if (opt->count() == 0 && j.contains(key)) cfg_.*field = j.at(key).get<bool>();
        });
        return opt;
    }

    void apply(const json& j) const {
        for (const auto& f : fill_) f(j);
    }

private:
    static std::string flag_name(std::string key) {
        std::replace(key.begin(), key.end(), '_', '-');
        return key;
    }

    CLI::App* app_;
    RunConfig& cfg_;
    std::vector<std::function<void(const json&)>> fill_;
};

json config_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    if (c.command == "estimate" || c.command == "forecast") {
        j["input"] = c.input;
        j["future"] = c.future;
        j["x_pre_window"] = c.x_pre_window;
        j["transform"] = c.transform;
        j["weights"] = c.weights;
        j["formula"] = c.formula;
        j["layout"] = c.layout;
        j["effect_dynamics"] = c.effect_dynamics;
        j["method"] = c.method;
        j["pre_period"] = c.pre_period;
        j["robust"] = c.robust;
        j["huber_k"] = c.huber_k;
    }
    if (c.command == "simulate" || c.command == "benchmark") {
        j["model"] = c.model;
        j["d"] = c.d;
        j["n"] = c.n;
        j["assignment"] = c.assignment;
        j["pre_period"] = c.pre_period;
        j["noise_scale"] = c.noise_scale;
    }
    if (c.command == "benchmark") {
        j["methods"] = c.methods;
        j["replications"] = c.replications;
        j["threads"] = c.threads;
        j["future_effects"] = c.future_effects;
    }
    if (c.command != "simulate") {
        j["estimands"] = c.estimands;
        j["B"] = c.B;
        j["level"] = c.level;
        j["n_starts"] = c.n_starts;
        j["point_rule"] = c.point_rule;
        j["cate_x_pre"] = c.cate_x_pre;
        j["cate_group"] = c.cate_group;
        j["group"] = c.group;
    }
    j["horizon"] = c.horizon;
    j["seed"] = c.seed;
    j["output"] = c.output;
    j["format"] = c.format;
    j["truth"] = c.truth;
    j["plotdata"] = c.plotdata;
    return j;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the configuration without output locations.
std::string config_hash(const RunConfig& c) {
    json j = config_json(c);
    for (const char* k : {"output", "truth", "plotdata"}) j.erase(k);
    return hex(fnv1a(j.dump()));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Outputs are staged in memory and written through temporary files that
/// are renamed only after every output of the run has been produced.
class OutputSet {
public:
    void add(const std::string& path, std::string content) { files_.emplace_back(path, std::move(content)); }

    void commit() {
        std::vector<std::pair<fs::path, fs::path>> staged;
        try {
            for (const auto& [path, content] : files_) {
                const fs::path target(path);
                if (target.has_parent_path() && !fs::exists(target.parent_path()))
                    throw IoError("output directory '" + target.parent_path().string() + "' does not exist");
                fs::path tmp = target;
                tmp += ".tmp";
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw IoError("cannot write '" + tmp.string() + "'");
                staged.emplace_back(tmp, target);
                out << content;
                out.close();
                if (!out) throw IoError("write to '" + tmp.string() + "' failed");
            }
            for (const auto& [tmp, target] : staged) fs::rename(tmp, target);
        } catch (const fs::filesystem_error& e) {
            cleanup(staged);
            throw IoError(e.what());
        } catch (...) {
            cleanup(staged);
            throw;
        }
    }

private:
    static void cleanup(const std::vector<std::pair<fs::path, fs::path>>& staged) {
        std::error_code ec;
        for (const auto& [tmp, _] : staged) fs::remove(tmp, ec);
    }

    std::vector<std::pair<std::string, std::string>> files_;
};

json num(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json series_json(const std::vector<EffectSeries>& all) {
    json out = json::array();
    for (const auto& s : all) {
        json js;
        js["estimand"] = s.estimand;
        js["method"] = s.method;
        js["B"] = s.B;
        js["level"] = s.level;
        js["seed"] = s.seed;
        json pts = json::array();
        for (const auto& p : s.points)
            pts.push_back({{"t", p.time},
                           {"point", num(p.point)},
                           {"lower", num(p.lower)},
                           {"upper", num(p.upper)},
                           {"period", to_string(p.period)}});
        js["points"] = pts;
        js["notes"] = s.notes;
        out.push_back(js);
    }
    return out;
}

std::vector<EffectRequest> effect_requests(const RunConfig& c) {
    if (c.estimands.empty()) throw InputError("no estimand requested");
    if (c.point_rule != "mean" && c.point_rule != "analytic") throw InputError("point rule must be mean or analytic");
    std::vector<EffectRequest> out;
    for (const auto& e : c.estimands) {
        EffectRequest r;
        r.estimand = parse_estimand(e);
        r.B = c.B;
        r.level = c.level;
        r.horizon = c.horizon;
        r.seed = c.seed;
        r.point_rule = c.point_rule == "analytic" ? PointRule::Analytic : PointRule::SampleMean;
        r.cate_x_pre = c.cate_x_pre;
        r.cate_group = c.cate_group;
        r.group = c.group;
        r.validate();
        out.push_back(r);
    }
    return out;
}

void check_common(const RunConfig& c) {
    if (!(c.level > 0.0 && c.level < 1.0)) throw InputError("level must lie in (0, 1)");
    if (c.format != "csv" && c.format != "json") throw InputError("format must be csv or json");
    if (c.output.empty()) throw InputError("--output is required");
}

ModelFormula causal_formula(const RunConfig& c) {
    ModelFormula f = ModelFormula::parse(c.formula);
    if (c.layout == "unit-specific") f.unit_specific = true;
    else if (c.layout != "shared") throw InputError("layout must be shared or unit-specific");
    if (c.effect_dynamics == "random-walk") f.treatment_dynamics = TreatmentDynamics::RandomWalk;
    else if (c.effect_dynamics != "ar") throw InputError("effect-dynamics must be ar or random-walk");
    return f;
}

std::string manifest_path(const RunConfig& c) { return c.manifest.empty() ? c.output + ".manifest.json" : c.manifest; }

json manifest_base(const RunConfig& c) {
    json m;
    m["tool"] = "dyncausal";
    m["version"] = DYNCAUSAL_VERSION;
    m["command"] = c.command;
    m["config"] = config_json(c);
    m["config_hash"] = config_hash(c);
    m["seeds"] = {{"master", c.seed}};
    return m;
}

int run_estimate(const RunConfig& c, bool forecast) {
    check_common(c);
    if (c.input.empty()) throw InputError("--input is required");
    if (forecast && c.horizon == 0) throw InputError("forecast needs a horizon of at least 1");
    if (c.transform != "none" && c.transform != "sqrt") throw InputError("transform must be none or sqrt");
    if (c.weights != "none" && c.weights != "inv-sqrt-xpre") throw InputError("weights must be none or inv-sqrt-xpre");
    const Method method = parse_method(c.method);
    if (forecast && method != Method::CausalTransfer) throw InputError("only causal-transfer forecasts future effects");
    if (method != Method::CausalTransfer && c.horizon > 0) throw InputError(c.method + " has no future effects; use horizon 0");
    if (method != Method::CausalTransfer && (c.robust || c.weights != "none"))
        throw InputError("robust filtering and observation weights apply to causal-transfer only");

    IngestOptions io;
    io.x_pre_window = c.x_pre_window;
    PanelDataset data = ingest_panel(c.input, io);
    if (c.transform == "sqrt") apply_sqrt_transform(data);
    const auto requests = effect_requests(c);

    json m = manifest_base(c);
    m["input_hash"] = hex(fnv1a(read_file(c.input)));
    m["method"] = to_string(method);
    m["scale"] = c.transform == "sqrt" ? "sqrt (effects are reported on the transformed scale)" : "identity";
    m["units"] = data.d();
    m["time_points"] = data.n();
    std::vector<EffectSeries> results;

    if (method == Method::CausalTransfer) {
        const ModelFormula formula = causal_formula(c);
        if (const Diagnostic dg = validate_identifiability(data, formula); !dg.ok)
            throw InputError(dg.code + ": " + dg.message);
        CausalTransferOptions opt;
        opt.mle.n_starts = c.n_starts;
        opt.mle.seed = c.seed;
        opt.robust = c.robust;
        opt.robust_config.k = c.huber_k;
        if (c.weights == "inv-sqrt-xpre") opt.defaults.obs_weights = inv_sqrt_xpre_weights(data);
        const FittedPanel fitted = fit_causal_transfer(data, formula, opt);
        std::optional<FutureCovariates> fut;
        if (!c.future.empty()) {
            std::ifstream in(c.future);
            if (!in) throw IoError("cannot open '" + c.future + "'");
            fut = read_future_csv(in, data, c.future);
            m["future_input_hash"] = hex(fnv1a(read_file(c.future)));
        }
        for (const auto& r : requests) {
            EffectSeries s = estimate_effects(fitted, r, fut ? &*fut : nullptr);
            if (forecast) {
                EffectSeries f = s;
                f.points = s.of_period(Period::Future);
                s = std::move(f);
            }
            results.push_back(std::move(s));
        }
        m["formula"] = formula.to_string();
        json params = json::object();
        for (std::size_t i = 0; i < fitted.pm.spec.size(); ++i)
            params[fitted.pm.spec.params[i].name] = fitted.pm.natural[i];
        m["parameters"] = params;
        if (fitted.fit) {
            m["loglik"] = fitted.fit->loglik;
            m["mle"] = {{"n_starts", c.n_starts}, {"best_start", fitted.fit->best_start_index}};
        }
        m["robust"] = c.robust;
        m["weights"] = c.weights;
    } else if (method == Method::BayesianImputation) {
        const ModelFormula formula = ModelFormula::parse(c.formula);
        for (const auto& r : requests) results.push_back(bayesian_imputation(data, formula, r));
        m["formula"] = formula.to_string();
    } else {
        CausalImpactConfig cc;
        cc.pre_period = c.pre_period;
        cc.B = c.B;
        cc.level = c.level;
        cc.seed = c.seed;
        cc.point_rule = requests.front().point_rule;
        cc.mle.n_starts = c.n_starts;
        for (const auto& r : requests)
            if (r.estimand != Estimand::SATE && r.estimand != Estimand::ATE)
                throw InputError("causal-impact estimates SATE and ATE only");
        const CausalImpactResult ci = causal_impact_aggregate(data, cc);
        for (const auto& r : requests) {
            EffectSeries s = ci.effects;
            s.estimand = r.label();
            results.push_back(std::move(s));
        }
        m["parameters"] = {{"sigma2", ci.natural[0]}, {"w_level", ci.natural[1]}};
        if (cc.trend) m["parameters"]["w_trend"] = ci.natural[2];
        m["loglik"] = ci.loglik;
    }

    json notes = json::array();
    for (const auto& s : results)
        for (const auto& n : s.notes) notes.push_back(s.estimand + ": " + n);
    m["notes"] = notes;

    OutputSet outputs;
    if (c.format == "csv") {
        std::ostringstream os;
        write_effects_csv(os, results);
        outputs.add(c.output, os.str());
    } else {
        json j;
        j["method"] = to_string(method);
        j["series"] = series_json(results);
        outputs.add(c.output, j.dump(2) + "\n");
    }
    json files = json::array({c.output});
    if (!c.plotdata.empty()) {
        std::ostringstream os;
        emit_plotdata(os, results);
        outputs.add(c.plotdata, os.str());
        files.push_back(c.plotdata);
    }
    m["outputs"] = files;
    outputs.add(manifest_path(c), m.dump(2) + "\n");
    outputs.commit();
    return 0;
}

SimConfig sim_config(const RunConfig& c) {
    SimConfig s;
    s.model_id = c.model;
    s.d = c.d;
    s.n = c.n;
    s.assignment = c.assignment;
    s.horizon = c.horizon;
    s.pre_period = c.pre_period;
    s.seed = c.seed;
    s.noise_scale = c.noise_scale;
    s.validate();
    return s;
}

int run_simulate(const RunConfig& c) {
    if (c.output.empty()) throw InputError("--output is required");
    const SimConfig sc = sim_config(c);
    const SimulatedPanel sp = generate(sc);
    OutputSet outputs;
    std::ostringstream panel;
    write_panel_csv(panel, sp.data);
    outputs.add(c.output, panel.str());
    const std::string truth_path = c.truth.empty() ? c.output + ".truth.csv" : c.truth;
    std::ostringstream truth;
    write_truth_csv(truth, sp.truth);
    outputs.add(truth_path, truth.str());
    std::string future_path;
    if (sc.horizon > 0) {
        // future covariates in the forecast input format
        std::ostringstream fut;
        const auto& f = sp.truth.future;
        fut << "unit,t,T";
        for (std::size_t j = 0; j < f.z.size(); ++j) fut << (f.z.size() == 1 ? ",z" : ",z" + std::to_string(j + 1));
        fut << '\n';
        for (std::size_t i = 0; i < sp.data.d(); ++i)
            for (std::size_t t = 0; t < f.horizon(); ++t) {
                const auto ti = static_cast<Eigen::Index>(t), ii = static_cast<Eigen::Index>(i);
                fut << sp.data.units[i] << ',' << format_double(f.times[t]) << ','
                    << format_double(f.treatment.size() ? f.treatment(ti, ii) : sp.data.treatment(sp.data.treatment.rows() - 1, ii));
                for (const auto& z : f.z) fut << ',' << format_double(z(ti, ii));
                fut << '\n';
            }
        future_path = c.output + ".future.csv";
        outputs.add(future_path, fut.str());
    }
    json m = manifest_base(c);
    m["seeds"]["master"] = sc.seed;
    m["new_unit_x_pre"] = sp.truth.new_unit_x_pre;
    m["outputs"] = json::array({c.output, truth_path});
    if (!future_path.empty()) m["outputs"].push_back(future_path);
    outputs.add(manifest_path(c), m.dump(2) + "\n");
    outputs.commit();
    return 0;
}

std::string file_token(std::string s) {
    for (char& ch : s)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    return s;
}

int run_benchmark_cmd(const RunConfig& c) {
    check_common(c);
    BenchmarkConfig bc;
    bc.sim = sim_config(c);
    bc.replications = c.replications;
    bc.methods.clear();
    for (const auto& m : c.methods) bc.methods.push_back(parse_method(m));
    RunConfig templ = c;
    templ.horizon = 0;
    bc.estimands = effect_requests(templ);
    bc.B = c.B;
    bc.level = c.level;
    bc.n_starts = c.n_starts;
    bc.future = c.future_effects;
    bc.threads = c.threads;
    bc.keep_series = !c.plotdata.empty();
    const BenchmarkReport report = run_benchmark(bc);

    OutputSet outputs;
    outputs.add(c.output, c.format == "csv" ? report.to_csv() : report.to_json());
    const std::string hash = config_hash(c);
    json files = json::array({c.output});
    if (!c.plotdata.empty()) {
        std::error_code ec;
        fs::create_directories(c.plotdata, ec);
        if (!fs::is_directory(c.plotdata)) throw IoError("cannot create plotdata directory '" + c.plotdata + "'");
        for (auto m : bc.methods)
            for (const auto& e : bc.estimands) {
                std::vector<EffectSeries> group;
                for (const auto& rs : report.series)
                    if (rs.method == to_string(m) && (rs.series.estimand == e.label() ||
                                                      (e.estimand == Estimand::CATE && rs.series.estimand.rfind("CATE", 0) == 0))) {
                        EffectSeries s = rs.series;
                        s.method = rs.method + "#" + std::to_string(rs.replication);
                        group.push_back(std::move(s));
                    }
                std::ostringstream os;
                emit_plotdata(os, group);
                const std::string path =
                    (fs::path(c.plotdata) / ("plot_" + file_token(to_string(m)) + "_" + file_token(cell_estimand(e)) + "_" + hash + ".csv")).string();
                outputs.add(path, os.str());
                files.push_back(path);
            }
    }
    json m = manifest_base(c);
    m["replication_seeds"] = report.replication_seeds;
    m["failures"] = report.failures;
    m["failure_messages"] = report.failure_messages;
    m["outputs"] = files;
    outputs.add(manifest_path(c), m.dump(2) + "\n");
    outputs.commit();
    return 0;
}

void report_error(const std::string& type, const std::string& message, int code) {
    json e = {{"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
    std::cerr << e.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal effects from panel time series with state-space models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(DYNCAUSAL_VERSION));
    RunConfig cfg;
    std::string config_path;

    std::vector<std::pair<CLI::App*, std::unique_ptr<Binder>>> subs;
    auto make = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config or a previous run manifest; flags override it");
        auto b = std::make_unique<Binder>(sub, cfg);
        b->add("output", &RunConfig::output, "output path");
        b->add("format", &RunConfig::format, "csv or json");
        b->add("manifest", &RunConfig::manifest, "manifest path (default <output>.manifest.json)");
        b->add("seed", &RunConfig::seed, "master seed");
        b->add("horizon", &RunConfig::horizon, "future steps");
        b->add("pre_period", &RunConfig::pre_period, "pre-period length");
        b->add("plotdata", &RunConfig::plotdata, "long-format plot data path (benchmark: directory)");
        Binder* raw = b.get();
        subs.emplace_back(sub, std::move(b));
        return raw;
    };
    auto effect_options = [](Binder* b) {
        b->add("estimands", &RunConfig::estimands, "SATE, ATE, CATE, MCATE, MCATE_diff")->delimiter(',');
        b->add("B", &RunConfig::B, "effect samples per time point");
        b->add("level", &RunConfig::level, "interval level in (0, 1)");
        b->add("n_starts", &RunConfig::n_starts, "likelihood optimizer starts");
        b->add("point_rule", &RunConfig::point_rule, "mean or analytic");
        b->add("cate_x_pre", &RunConfig::cate_x_pre, "x_pre of the CATE unit");
        b->add("cate_group", &RunConfig::cate_group, "g level of the CATE unit");
        b->add("group", &RunConfig::group, "MCATE level");
    };
    auto estimate_options = [&](Binder* b) {
        effect_options(b);
        b->add("input", &RunConfig::input, "panel CSV");
        b->add("future", &RunConfig::future, "future covariates CSV");
        b->add("x_pre_window", &RunConfig::x_pre_window, "derive x_pre as the mean of y over the first N time points");
        b->add("transform", &RunConfig::transform, "none or sqrt");
        b->add("weights", &RunConfig::weights, "none or inv-sqrt-xpre");
        b->add("formula", &RunConfig::formula, "model formula, e.g. 'y ~ z + x_pre*T'");
        b->add("layout", &RunConfig::layout, "shared or unit-specific state layout (causal-transfer)");
        b->add("effect_dynamics", &RunConfig::effect_dynamics, "treatment-effect states: ar or random-walk");
        b->add("method", &RunConfig::method, "causal-transfer, bayesian-imputation or causal-impact");
        b->add_flag("robust", &RunConfig::robust, "Huber-robust filtering");
        b->add("huber_k", &RunConfig::huber_k, "Huber threshold");
    };
    auto sim_options = [](Binder* b) {
        b->add("model", &RunConfig::model, "simulation model 1..6");
        b->add("d", &RunConfig::d, "units");
        b->add("n", &RunConfig::n, "treatment-period length");
        b->add("assignment", &RunConfig::assignment, "assignment mechanism 1..3");
        b->add("noise_scale", &RunConfig::noise_scale, "noise standard deviation multiplier");
    };
    Binder* est = make("estimate", "estimate effects on a panel CSV");
    estimate_options(est);
    Binder* fc = make("forecast", "forecast future effects on a panel CSV");
    estimate_options(fc);
    Binder* sim = make("simulate", "generate a simulated panel and its truth");
    sim_options(sim);
    sim->add("truth", &RunConfig::truth, "truth CSV path (default <output>.truth.csv)");
    Binder* bench = make("benchmark", "replicated simulation benchmark");
    sim_options(bench);
    effect_options(bench);
    bench->add("methods", &RunConfig::methods, "methods to compare")->delimiter(',');
    bench->add("replications", &RunConfig::replications, "replications");
    bench->add("threads", &RunConfig::threads, "worker threads (0: all cores)");
    bench->add("future_effects", &RunConfig::future_effects, "score future effects (true/false)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        Binder* active = nullptr;
        for (auto& [sub, b] : subs)
            if (sub->parsed()) {
                cfg.command = sub->get_name();
                active = b.get();
            }
        if (!config_path.empty()) {
            json j;
            try {
                j = json::parse(read_file(config_path));
            } catch (const json::parse_error& e) {
                throw InputError("config '" + config_path + "' is not valid JSON: " + e.what());
            }
            if (j.contains("config")) j = j.at("config");
            if (j.contains("command") && j.at("command") != cfg.command)
                throw InputError("config is for command '" + j.at("command").get<std::string>() + "'");
            try {
                active->apply(j);
            } catch (const json::exception& e) {
                throw InputError("config '" + config_path + "': " + e.what());
            }
        }
        if (cfg.command == "estimate") return run_estimate(cfg, false);
        if (cfg.command == "forecast") return run_estimate(cfg, true);
        if (cfg.command == "simulate") return run_simulate(cfg);
        return run_benchmark_cmd(cfg);
    } catch (const InputError& e) {
        report_error("validation", e.what(), kExitValidation);
        return kExitValidation;
    } catch (const IoError& e) {
        report_error("io", e.what(), kExitIo);
        return kExitIo;
    } catch (const EstimationError& e) {
        report_error("estimation", e.what(), kExitEstimation);
        return kExitEstimation;
    } catch (const InferenceError& e) {
        report_error("estimation", e.what(), kExitEstimation);
        return kExitEstimation;
    } catch (const std::exception& e) {
        report_error("estimation", e.what(), kExitEstimation);
        return kExitEstimation;
    }
}
