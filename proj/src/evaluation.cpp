#include "cisir/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "cisir/common.hpp"

namespace cisir {

namespace {

constexpr std::size_t idx(Metric m) { return static_cast<std::size_t>(m); }

std::string column_name(Metric m)
{
    switch (m) {
    case Metric::mae: return "MAE";
    case Metric::mae_rare: return "MAE_R";
    case Metric::aore: return "AORE";
    case Metric::pcc: return "PCC";
    case Metric::pcc_rare: return "PCC_R";
    case Metric::aorc: return "AORC";
    }
    return "?";
}

std::string fixed(double v, int digits = 3)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

} // namespace

std::string to_string(Metric m)
{
    switch (m) {
    case Metric::mae: return "mae";
    case Metric::mae_rare: return "mae_rare";
    case Metric::aore: return "aore";
    case Metric::pcc: return "pcc";
    case Metric::pcc_rare: return "pcc_rare";
    case Metric::aorc: return "aorc";
    }
    return "?";
}

bool lower_is_better(Metric m)
{
    return m == Metric::mae || m == Metric::mae_rare || m == Metric::aore;
}

void EvalReport::check_invariants() const
{
    const auto expect_aore = average_of(mae(), mae_rare());
    const auto expect_aorc = average_of(pcc(), pcc_rare());
    if (expect_aore.has_value() != aore().has_value() || (expect_aore && *expect_aore != *aore())) {
        throw Error("report: AORE is not the average of MAE and MAE_R");
    }
    if (expect_aorc.has_value() != aorc().has_value() || (expect_aorc && *expect_aorc != *aorc())) {
        throw Error("report: AORC is not the average of PCC and PCC_R");
    }
    for (const auto& s : standard_error) {
        if (s && !(*s >= 0.0)) throw Error("report: negative standard error");
    }
}

double mean_absolute_error(std::span<const double> y, std::span<const double> yhat)
{
    if (y.size() != yhat.size()) throw ConfigError("mean_absolute_error: length mismatch");
    if (y.empty()) throw ConfigError("mean_absolute_error: empty input");
    CompensatedSum s;
    for (std::size_t i = 0; i < y.size(); ++i) s.add(std::abs(y[i] - yhat[i]));
    return s.value() / static_cast<double>(y.size());
}

std::optional<double> pearson(std::span<const double> y, std::span<const double> yhat)
{
    if (y.size() != yhat.size()) throw ConfigError("pearson: length mismatch");
    if (y.size() < 2) return std::nullopt;
    const double n = static_cast<double>(y.size());
    const double my = compensated_sum(y) / n;
    const double mp = compensated_sum(yhat) / n;
    CompensatedSum ab, aa, bb;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = y[i] - my;
        const double b = yhat[i] - mp;
        ab.add(a * b);
        aa.add(a * a);
        bb.add(b * b);
    }
    if (!(aa.value() > 0.0) || !(bb.value() > 0.0)) return std::nullopt;
    return std::clamp(ab.value() / std::sqrt(aa.value() * bb.value()), -1.0, 1.0);
}

std::optional<double> average_of(std::optional<double> overall, std::optional<double> rare)
{
    if (!overall || !rare) return std::nullopt;
    return (*overall + *rare) / 2.0;
}

EvalReport evaluate(std::span<const double> y, std::span<const double> yhat, const std::vector<bool>& rare)
{
    if (y.size() != yhat.size() || y.size() != rare.size()) {
        throw ConfigError("evaluate: y, yhat and rare mask must have equal length");
    }
    EvalReport r;
    r.n = y.size();
    std::vector<double> yr, pr;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (rare[i]) {
            yr.push_back(y[i]);
            pr.push_back(yhat[i]);
        }
    }
    r.n_rare = yr.size();
    if (!y.empty()) r.value[idx(Metric::mae)] = mean_absolute_error(y, yhat);
    r.value[idx(Metric::pcc)] = pearson(y, yhat);
    if (!yr.empty()) r.value[idx(Metric::mae_rare)] = mean_absolute_error(yr, pr);
    r.value[idx(Metric::pcc_rare)] = pearson(yr, pr);
    r.value[idx(Metric::aore)] = average_of(r.mae(), r.mae_rare());
    r.value[idx(Metric::aorc)] = average_of(r.pcc(), r.pcc_rare());
    for (Metric m : kAllMetrics) {
        if (r.get(m)) r.per_run[idx(m)].push_back(*r.get(m));
    }
    return r;
}

namespace {

EvalReport combine(std::span<const EvalReport> reports, bool with_se)
{
    if (reports.empty()) throw ConfigError("aggregate: no reports");
    EvalReport out;
    out.runs = with_se ? reports.size() : 1;
    double n_sum = 0.0, rare_sum = 0.0;
    std::array<std::vector<double>, 6> samples;
    for (const auto& r : reports) {
        n_sum += static_cast<double>(r.n);
        rare_sum += static_cast<double>(r.n_rare);
        for (Metric m : kAllMetrics) {
            if (r.get(m)) samples[idx(m)].push_back(*r.get(m));
        }
    }
    out.n = static_cast<std::size_t>(std::llround(n_sum / static_cast<double>(reports.size())));
    out.n_rare = static_cast<std::size_t>(std::llround(rare_sum / static_cast<double>(reports.size())));
    for (Metric m : kAllMetrics) {
        const auto& s = samples[idx(m)];
        if (s.empty()) continue;
        const double mean = compensated_sum(s) / static_cast<double>(s.size());
        out.value[idx(m)] = mean;
        if (with_se) {
            out.per_run[idx(m)] = s;
            if (s.size() >= 2) {
                CompensatedSum ss;
                for (double v : s) ss.add((v - mean) * (v - mean));
                const double sd = std::sqrt(ss.value() / static_cast<double>(s.size() - 1));
                out.standard_error[idx(m)] = sd / std::sqrt(static_cast<double>(s.size()));
            }
        } else {
            out.per_run[idx(m)] = {mean};
        }
    }
    out.value[idx(Metric::aore)] = average_of(out.mae(), out.mae_rare());
    out.value[idx(Metric::aorc)] = average_of(out.pcc(), out.pcc_rare());
    if (!with_se) {
        for (Metric m : {Metric::aore, Metric::aorc}) {
            out.per_run[idx(m)].clear();
            if (out.get(m)) out.per_run[idx(m)].push_back(*out.get(m));
        }
    }
    return out;
}

} // namespace

EvalReport aggregate(std::span<const EvalReport> reports) { return combine(reports, true); }

EvalReport mean_report(std::span<const EvalReport> reports) { return combine(reports, false); }

bool significantly_different(const EvalReport& a, const EvalReport& b, Metric m)
{
    if (!a.get(m) || !b.get(m)) return false;
    const double sa = a.se(m).value_or(0.0);
    const double sb = b.se(m).value_or(0.0);
    return std::abs(*a.get(m) - *b.get(m)) > sa + sb;
}

nlohmann::json to_json(const EvalReport& report)
{
    nlohmann::json j;
    j["n"] = report.n;
    j["n_rare"] = report.n_rare;
    j["runs"] = report.runs;
    for (Metric m : kAllMetrics) {
        const auto name = to_string(m);
        j[name] = report.get(m) ? nlohmann::json(*report.get(m)) : nlohmann::json(nullptr);
        if (report.se(m)) j[name + "_se"] = *report.se(m);
        if (report.runs > 1) j[name + "_runs"] = report.per_run[idx(m)];
    }
    return j;
}

std::string render_csv(std::span<const NamedReport> rows)
{
    std::ostringstream os;
    os << std::setprecision(17);
    os << "method,runs";
    for (Metric m : kAllMetrics) os << ',' << to_string(m) << ',' << to_string(m) << "_se";
    os << '\n';
    for (const auto& [name, r] : rows) {
        os << name << ',' << r.runs;
        for (Metric m : kAllMetrics) {
            os << ',';
            if (r.get(m)) os << *r.get(m);
            os << ',';
            if (r.se(m)) os << *r.se(m);
        }
        os << '\n';
    }
    return os.str();
}

std::string render_text_table(std::span<const NamedReport> rows)
{
    // Rank each column.
    std::vector<std::array<int, 6>> rank(rows.size());
    for (auto& r : rank) r.fill(0);
    for (Metric m : kAllMetrics) {
        std::vector<std::pair<double, std::size_t>> vals;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (auto v = rows[i].second.get(m)) vals.emplace_back(lower_is_better(m) ? *v : -*v, i);
        }
        std::sort(vals.begin(), vals.end());
        if (!vals.empty()) rank[vals[0].second][idx(m)] = 1;
        if (vals.size() > 1) rank[vals[1].second][idx(m)] = 2;
    }
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{"Method"};
    for (Metric m : kAllMetrics) header.push_back(column_name(m));
    cells.push_back(header);
    std::size_t max_runs = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i].second;
        max_runs = std::max(max_runs, r.runs);
        std::vector<std::string> line{rows[i].first};
        for (Metric m : kAllMetrics) {
            std::string c = "-";
            if (auto v = r.get(m)) {
                c = fixed(*v);
                if (auto s = r.se(m)) c += " ± " + fixed(*s);
                if (rank[i][idx(m)] == 1) c += " (1)";
                if (rank[i][idx(m)] == 2) c += " (2)";
            }
            line.push_back(c);
        }
        cells.push_back(line);
    }
    std::vector<std::size_t> width(header.size(), 0);
    auto display_width = [](const std::string& s) {
        // "±" is two bytes in UTF-8 but one column.
        std::size_t w = 0;
        for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
        return w;
    };
    for (const auto& line : cells) {
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], display_width(line[c]));
    }
    std::ostringstream os;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            const auto& s = cells[r][c];
            const std::size_t pad = width[c] - display_width(s);
            if (c == 0) os << s << std::string(pad, ' ');
            else os << "  " << std::string(pad, ' ') << s;
        }
        os << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t w : width) total += w + 2;
            os << std::string(total - 2, '-') << '\n';
        }
    }
    os << "\nValues are mean ± standard error over " << max_runs
       << " run(s). (1) best, (2) second best per column; lower is better for MAE, MAE_R, AORE, higher for PCC, "
          "PCC_R, AORC.\nTwo methods differ significantly when their mean ± 1 se intervals do not overlap.\n";
    return os.str();
}

} // namespace cisir
