#include "dyncausal/panel_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "dyncausal/error.hpp"

namespace dyncausal {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

/// Splits one CSV line; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv(const std::string& line, const std::string& where) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(field));
            field.clear();
        } else {
            field += c;
        }
    }
    if (quoted) throw InputError(where + ": unterminated quote");
    out.push_back(trim(field));
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* begin = s.data();
    if (*begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        if (s == "NaN" || s == "nan" || s == "NA") return kNaN;
        return std::nullopt;
    }
    return v;
}

double require_number(const std::string& s, const std::string& where, const std::string& column) {
    auto v = parse_number(s);
    if (!v || std::isnan(*v)) throw InputError(where + ": column " + column + " needs a number, got '" + s + "'");
    return *v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

struct Header {
    std::map<std::string, std::size_t> index;
    std::vector<std::string> z_names;

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = index.find(name);
        return it == index.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    }
};

Header parse_header(const std::string& line, const std::string& source) {
    Header h;
    const auto names = split_csv(line, source + ":1");
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string name = names[i];
        if (i == 0 && name.size() >= 3 && name.compare(0, 3, "\xEF\xBB\xBF") == 0) name = name.substr(3);
        if (!h.index.emplace(name, i).second) throw InputError(source + ":1: duplicate column '" + name + "'");
    }
    if (h.find("z")) h.z_names.push_back("z");
    for (int j = 1; h.find("z" + std::to_string(j)); ++j) h.z_names.push_back("z" + std::to_string(j));
    if (h.find("z") && h.z_names.size() > 1) throw InputError(source + ":1: use either z or z1, z2, ..., not both");
    for (const auto& [name, _] : h.index) {
        const bool known = name == "unit" || name == "t" || name == "y" || name == "T" || name == "x_pre" || name == "g" ||
                           std::find(h.z_names.begin(), h.z_names.end(), name) != h.z_names.end();
        if (!known) throw InputError(source + ":1: unknown column '" + name + "'");
    }
    return h;
}

bool numeric_less(const std::string& a, const std::string& b) {
    auto x = parse_number(a), y = parse_number(b);
    return *x < *y;
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "NaN";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

PanelDataset read_panel_csv(std::istream& in, const IngestOptions& options, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw InputError(source + ": empty file");
    const Header h = parse_header(line, source);
    for (const char* col : {"unit", "t", "y", "T"})
        if (!h.find(col)) throw InputError(source + ": missing required column '" + std::string(col) + "'");
    const std::size_t n_cols = h.index.size();
    const std::size_t c_unit = *h.find("unit"), c_t = *h.find("t"), c_y = *h.find("y"), c_T = *h.find("T");
    const auto c_x = h.find("x_pre");
    const auto c_g = h.find("g");
    std::vector<std::size_t> c_z;
    for (const auto& name : h.z_names) c_z.push_back(*h.find(name));

    struct Row {
        std::size_t line;
        double y, T;
        std::vector<double> z;
    };
    std::vector<std::string> units;
    std::unordered_map<std::string, std::size_t> unit_index;
    std::map<std::pair<std::size_t, double>, Row> rows;
    std::set<double> time_set;
    std::vector<std::optional<double>> x_pre;
    std::vector<std::optional<std::string>> g_label;
    std::vector<std::size_t> first_line;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto f = split_csv(line, where);
        if (f.size() != n_cols)
            throw InputError(where + ": expected " + std::to_string(n_cols) + " fields, found " + std::to_string(f.size()));
        const std::string& unit = f[c_unit];
        if (unit.empty()) throw InputError(where + ": empty unit");
        auto [it, inserted] = unit_index.emplace(unit, units.size());
        if (inserted) {
            units.push_back(unit);
            x_pre.emplace_back();
            g_label.emplace_back();
            first_line.push_back(line_no);
        }
        const std::size_t u = it->second;
        const double t = require_number(f[c_t], where, "t");
        Row r{line_no, kNaN, require_number(f[c_T], where, "T"), {}};
        if (!f[c_y].empty()) {
            auto y = parse_number(f[c_y]);
            if (!y) throw InputError(where + ": column y needs a number or an empty field, got '" + f[c_y] + "'");
            r.y = *y;
        }
        for (std::size_t j = 0; j < c_z.size(); ++j) r.z.push_back(require_number(f[c_z[j]], where, h.z_names[j]));
        if (c_x) {
            const double x = require_number(f[*c_x], where, "x_pre");
            if (x_pre[u] && *x_pre[u] != x) throw InputError(where + ": x_pre changes within unit " + unit);
            x_pre[u] = x;
        }
        if (c_g) {
            if (f[*c_g].empty()) throw InputError(where + ": empty g");
            if (g_label[u] && *g_label[u] != f[*c_g]) throw InputError(where + ": g changes within unit " + unit);
            g_label[u] = f[*c_g];
        }
        if (!rows.emplace(std::make_pair(u, t), std::move(r)).second)
            throw InputError(where + ": duplicate row for unit " + unit + " at t=" + f[c_t]);
        time_set.insert(t);
    }
    if (units.empty()) throw InputError(source + ": no data rows");

    PanelDataset data;
    data.units = units;
    data.times.assign(time_set.begin(), time_set.end());
    const auto n = static_cast<Eigen::Index>(data.times.size());
    const auto d = static_cast<Eigen::Index>(units.size());
    data.outcome = Matrix::Constant(n, d, kNaN);
    data.treatment = Matrix::Zero(n, d);
    data.z.assign(c_z.size(), Matrix::Zero(n, d));
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index t = 0; t < n; ++t) {
            auto it = rows.find({static_cast<std::size_t>(i), data.times[static_cast<std::size_t>(t)]});
            if (it == rows.end())
                throw InputError(source + ": unit " + units[static_cast<std::size_t>(i)] + " (first seen on line " +
                                 std::to_string(first_line[static_cast<std::size_t>(i)]) + ") has no row for t=" +
                                 format_double(data.times[static_cast<std::size_t>(t)]) +
                                 "; write the row with an empty y instead");
            data.outcome(t, i) = it->second.y;
            data.treatment(t, i) = it->second.T;
            for (std::size_t j = 0; j < c_z.size(); ++j) data.z[j](t, i) = it->second.z[j];
        }
    }
    if (c_x) {
        data.x_pre.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) data.x_pre[i] = *x_pre[static_cast<std::size_t>(i)];
    } else if (options.x_pre_window > 0) {
        const auto w = static_cast<Eigen::Index>(options.x_pre_window);
        if (w > n) throw InputError("x_pre window exceeds the number of time points");
        data.x_pre.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            double s = 0.0;
            int c = 0;
            for (Eigen::Index t = 0; t < w; ++t)
                if (!std::isnan(data.outcome(t, i))) {
                    s += data.outcome(t, i);
                    ++c;
                }
            if (c == 0) throw InputError("unit " + units[static_cast<std::size_t>(i)] + " has no observed y in the x_pre window");
            data.x_pre[i] = s / c;
        }
    }
    if (c_g) {
        std::vector<std::string> levels;
        for (const auto& g : g_label) levels.push_back(*g);
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        if (std::all_of(levels.begin(), levels.end(), [](const std::string& s) { return parse_number(s).has_value(); }))
            std::sort(levels.begin(), levels.end(), numeric_less);
        data.g_levels = levels;
        if (levels.size() > 1) {
            data.g = Matrix::Zero(d, static_cast<Eigen::Index>(levels.size() - 1));
            for (Eigen::Index i = 0; i < d; ++i) {
                const auto pos = std::find(levels.begin(), levels.end(), *g_label[static_cast<std::size_t>(i)]) - levels.begin();
                if (pos > 0) data.g(i, pos - 1) = 1.0;
            }
        }
    }
    data.validate();
    return data;
}

PanelDataset ingest_panel(const std::string& path, const IngestOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_panel_csv(in, options, path);
}

void write_panel_csv(std::ostream& out, const PanelDataset& data) {
    data.validate();
    std::vector<std::string> z_names;
    if (data.z.size() == 1) z_names.push_back("z");
    for (std::size_t j = 0; data.z.size() > 1 && j < data.z.size(); ++j) z_names.push_back("z" + std::to_string(j + 1));
    out << "unit,t,y,T";
    if (data.has_x_pre()) out << ",x_pre";
    for (const auto& z : z_names) out << ',' << z;
    const bool with_g = !data.g_levels.empty();
    if (with_g) out << ",g";
    out << '\n';
    for (std::size_t i = 0; i < data.d(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t t = 0; t < data.n(); ++t) {
            const auto ti = static_cast<Eigen::Index>(t);
            const double y = data.outcome(ti, ii);
            out << csv_field(data.units[i]) << ',' << format_double(data.times[t]) << ','
                << (std::isnan(y) ? std::string() : format_double(y)) << ',' << format_double(data.treatment(ti, ii));
            if (data.has_x_pre()) out << ',' << format_double(data.x_pre[ii]);
            for (const auto& z : data.z) out << ',' << format_double(z(ti, ii));
            if (with_g) out << ',' << csv_field(data.g_levels[group_of(data, i)]);
            out << '\n';
        }
    }
}

FutureCovariates read_future_csv(std::istream& in, const PanelDataset& data, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw InputError(source + ": empty file");
    const auto names = split_csv(line, source + ":1");
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < names.size(); ++i) idx[names[i]] = i;
    if (!idx.count("unit") || !idx.count("t")) throw InputError(source + ": future covariates need unit and t columns");
    std::vector<std::string> z_names;
    if (data.z.size() == 1) z_names.push_back("z");
    for (std::size_t j = 0; data.z.size() > 1 && j < data.z.size(); ++j) z_names.push_back("z" + std::to_string(j + 1));
    for (const auto& z : z_names)
        if (!idx.count(z)) throw InputError(source + ": future covariates lack column " + z);
    const bool with_T = idx.count("T") > 0;

    std::unordered_map<std::string, std::size_t> unit_index;
    for (std::size_t i = 0; i < data.d(); ++i) unit_index[data.units[i]] = i;
    std::map<std::pair<std::size_t, double>, std::vector<double>> rows;  // T, z...
    std::set<double> time_set;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto f = split_csv(line, where);
        if (f.size() != names.size()) throw InputError(where + ": expected " + std::to_string(names.size()) + " fields");
        auto u = unit_index.find(f[idx["unit"]]);
        if (u == unit_index.end()) throw InputError(where + ": unit " + f[idx["unit"]] + " is not in the panel");
        const double t = require_number(f[idx["t"]], where, "t");
        if (t <= data.times.back()) throw InputError(where + ": future time " + f[idx["t"]] + " is not after the panel");
        std::vector<double> vals;
        vals.push_back(with_T ? require_number(f[idx["T"]], where, "T") : 0.0);
        for (const auto& z : z_names) vals.push_back(require_number(f[idx[z]], where, z));
        if (!rows.emplace(std::make_pair(u->second, t), vals).second) throw InputError(where + ": duplicate row");
        time_set.insert(t);
    }
    FutureCovariates fut;
    fut.times.assign(time_set.begin(), time_set.end());
    const auto h = static_cast<Eigen::Index>(fut.times.size());
    const auto d = static_cast<Eigen::Index>(data.d());
    if (with_T) fut.treatment = Matrix::Zero(h, d);
    fut.z.assign(z_names.size(), Matrix::Zero(h, d));
    for (Eigen::Index t = 0; t < h; ++t)
        for (Eigen::Index i = 0; i < d; ++i) {
            auto it = rows.find({static_cast<std::size_t>(i), fut.times[static_cast<std::size_t>(t)]});
            if (it == rows.end())
                throw InputError(source + ": unit " + data.units[static_cast<std::size_t>(i)] + " has no row for t=" +
                                 format_double(fut.times[static_cast<std::size_t>(t)]));
            if (with_T) fut.treatment(t, i) = it->second[0];
            for (std::size_t j = 0; j < z_names.size(); ++j) fut.z[j](t, i) = it->second[j + 1];
        }
    return fut;
}

void write_truth_csv(std::ostream& out, const TruthTrace& truth) {
    out << "t,SATE,ATE,CATE,MCATE[g=0],MCATE[g=1],MCATE_diff\n";
    for (std::size_t k = 0; k < truth.effect_times.size(); ++k) {
        out << format_double(truth.effect_times[k]) << ',' << format_double(truth.sate[k]) << ','
            << format_double(truth.ate[k]) << ',' << format_double(truth.cate[k]) << ','
            << format_double(truth.mcate_g0[k]) << ',' << format_double(truth.mcate_g1[k]) << ','
            << format_double(truth.mcate_diff[k]) << '\n';
    }
}

void write_effects_csv(std::ostream& out, const std::vector<EffectSeries>& series) {
    out << "t,estimand,method,point,lower,upper,period\n";
    for (const auto& s : series)
        for (const auto& p : s.points)
            out << format_double(p.time) << ',' << csv_field(s.estimand) << ',' << s.method << ','
                << format_double(p.point) << ',' << format_double(p.lower) << ',' << format_double(p.upper) << ','
                << to_string(p.period) << '\n';
}

void emit_plotdata(std::ostream& out, const std::vector<EffectSeries>& series, const TruthTrace* truth) {
    out << "t,series,value\n";
    for (const auto& s : series) {
        const std::string base = s.method + ":" + s.estimand;
        std::map<double, double> truth_at;
        if (truth) {
            const auto& values = truth->series(s.estimand);
            for (std::size_t k = 0; k < values.size(); ++k) truth_at[truth->effect_times[k]] = values[k];
        }
        for (const auto& p : s.points) {
            const std::string t = format_double(p.time);
            out << t << ',' << csv_field(base + ":point") << ',' << format_double(p.point) << '\n';
            out << t << ',' << csv_field(base + ":lower") << ',' << format_double(p.lower) << '\n';
            out << t << ',' << csv_field(base + ":upper") << ',' << format_double(p.upper) << '\n';
            if (auto it = truth_at.find(p.time); it != truth_at.end())
                out << t << ',' << csv_field(base + ":truth") << ',' << format_double(it->second) << '\n';
        }
    }
}

void apply_sqrt_transform(PanelDataset& data) {
    for (Eigen::Index t = 0; t < data.outcome.rows(); ++t)
        for (Eigen::Index i = 0; i < data.outcome.cols(); ++i) {
            double& y = data.outcome(t, i);
            if (std::isnan(y)) continue;
            if (y < 0.0) throw InputError("sqrt transform needs non-negative y; unit " + data.units[static_cast<std::size_t>(i)] +
                                          " has " + format_double(y));
            y = std::sqrt(y);
        }
    if (data.has_x_pre()) {
        if ((data.x_pre.array() < 0.0).any()) throw InputError("sqrt transform needs non-negative x_pre");
        data.x_pre = data.x_pre.cwiseSqrt();
    }
}

Vector inv_sqrt_xpre_weights(const PanelDataset& data) {
    if (!data.has_x_pre()) throw InputError("inv-sqrt-xpre weights need x_pre");
    if (!(data.x_pre.array() > 0.0).all()) throw InputError("inv-sqrt-xpre weights need strictly positive x_pre");
    return data.x_pre.cwiseSqrt().cwiseInverse();
}

}  // namespace dyncausal
