#include "simvar/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "simvar/version.hpp"

namespace simvar::report {

namespace fs = std::filesystem;

std::string sci2(double v) {
    if (v == 0.0) return "0";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1e", v);
    return buf;
}

DomainReport build_table(const std::vector<ResultCell>& results, RestrictionPolicy policy,
                         Tolerance tolerance, const std::vector<double>& expected_levels,
                         std::optional<double> noise_floor_m) {
    if (results.empty()) throw ReportError("no results to tabulate");

    std::map<std::string, std::vector<const ResultCell*>> by_scenario;
    for (const ResultCell& cell : results) by_scenario[cell.scenario_id].push_back(&cell);

    DomainReport report;
    report.policy = policy;
    report.tolerance = tolerance;
    report.noise_floor = noise_floor_m;
    report.toolkit_version = kVersion;

    std::set<std::string> campaigns;

    for (const auto& [scenario_id, cells] : by_scenario) {
        DomainRow row;
        row.scenario_id = scenario_id;

        std::set<double> present;
        std::set<std::string> actor_set;
        for (const ResultCell* cell : cells) {
            present.insert(cell->level_pct);
            row.n = std::max(row.n, cell->audit.n);
            if (!cell->campaign_id.empty()) {
                row.campaign_ids.push_back(cell->campaign_id);
                campaigns.insert(cell->campaign_id);
            }
            for (const DeviationSeries& s : cell->audit.per_actor) actor_set.insert(s.actor_id);
            if (cell->audit.collision_actors && row.collision_type.empty()) {
                row.collision_type =
                    cell->audit.collision_actors->first + "-" + cell->audit.collision_actors->second;
            }
        }
        if (row.collision_type.empty()) row.collision_type = "none";
        {
            std::string actors;
            for (const std::string& a : actor_set) {
                if (!actors.empty()) actors += ",";
                actors += a;
            }
            row.actors = actors;
        }

        bool unrestricted_gap = false;
        bool restricted_gap = false;
        for (double level : expected_levels) {
            if (!present.contains(level)) {
                unrestricted_gap = true;
                if (level <= policy.utilization_cap_pct) restricted_gap = true;
            }
        }

        // Unrestricted: max over all levels, full time range.
        double unrestricted = 0.0;
        bool have_unrestricted = false;
        // Restricted: levels <= cap, pre-collision segment where one exists.
        double restricted = 0.0;
        bool have_restricted = false;
        for (const ResultCell* cell : cells) {
            unrestricted = std::max(unrestricted, cell->audit.max_deviation);
            have_unrestricted = true;
            if (cell->level_pct <= policy.utilization_cap_pct) {
                double value = cell->audit.max_deviation;
                if (policy.pre_collision_only && cell->audit.t_split) {
                    // A collision on the first logged tick leaves no usable
                    // pre-collision samples; treat that side as zero spread.
                    value = cell->audit.pre_collision_max_deviation.value_or(0.0);
                }
                restricted = std::max(restricted, value);
                have_restricted = true;
            }
        }

        if (have_unrestricted && !unrestricted_gap) {
            row.max_deviation_unrestricted = unrestricted;
            row.verdict_unrestricted = gate(unrestricted, tolerance);
        }
        if (have_restricted && !restricted_gap) {
            row.max_deviation_restricted = restricted;
            row.verdict_restricted = gate(restricted, tolerance);
        }
        report.rows.push_back(std::move(row));
    }

    report.campaign_ids.assign(campaigns.begin(), campaigns.end());
    return report;
}

bool all_restricted_permissible(const DomainReport& report) {
    for (const DomainRow& row : report.rows) {
        if (!row.max_deviation_restricted) return false;  // a gap never gates green
        if (row.verdict_restricted != Verdict::permissible) return false;
    }
    return true;
}

std::string render_text(const DomainReport& report) {
    std::ostringstream os;
    os << "# simvar domain report\n";
    os << "toolkit_version=" << report.toolkit_version << '\n';
    os << "defaults=dt_physics:0.05s,log_interval:0.1s,tolerance:0.01m,levels:0-95%\n";
    os << "tolerance_m=" << format_double(report.tolerance.value) << '\n';
    os << "restriction_cap_pct=" << format_double(report.policy.utilization_cap_pct) << '\n';
    os << "restriction_pre_collision_only=" << (report.policy.pre_collision_only ? "true" : "false")
       << '\n';
    if (report.noise_floor) os << "noise_floor_m=" << format_double(*report.noise_floor) << '\n';
    os << "variance_scalarization=" << report.variance_scalarization << '\n';
    os << "split_rule=" << report.split_rule << '\n';
    os << "presence_policy=" << report.presence_policy << '\n';
    {
        std::string joined;
        for (const std::string& id : report.campaign_ids) {
            if (!joined.empty()) joined += ",";
            joined += id;
        }
        os << "campaigns=" << joined << '\n';
    }
    os << '\n';

    auto fmt_cell = [](const std::optional<double>& v) {
        return v ? sci2(*v) : std::string("GAP");
    };
    auto fmt_verdict = [](const std::optional<double>& v, Verdict verdict) {
        if (!v) return std::string("-");
        return verdict == Verdict::permissible ? std::string("ok") : std::string("FAIL");
    };

    os << "scenario    actors                collision         n      maxsigma(unrestr)  "
          "maxsigma(restr)  verdict(unrestr)  verdict(restr)\n";
    for (const DomainRow& row : report.rows) {
        char line[256];
        std::snprintf(line, sizeof(line), "%-11s %-21s %-17s %-6zu %-18s %-16s %-17s %s\n",
                      row.scenario_id.c_str(), row.actors.c_str(), row.collision_type.c_str(),
                      row.n, fmt_cell(row.max_deviation_unrestricted).c_str(),
                      fmt_cell(row.max_deviation_restricted).c_str(),
                      fmt_verdict(row.max_deviation_unrestricted, row.verdict_unrestricted).c_str(),
                      fmt_verdict(row.max_deviation_restricted, row.verdict_restricted).c_str());
        os << line;
    }
    return os.str();
}

std::vector<fs::path> emit_series_csv(const AuditResult& result, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::vector<fs::path> written;

    const fs::path combined_path = out_dir / (result.scenario_id + "-series-combined.csv");
    std::ofstream combined(combined_path);
    if (!combined) throw ReportError("cannot write " + combined_path.string());
    combined << "t,actor_id,deviation_m,presence_count";
    if (result.noise_floor) combined << ",noise_floor_m";
    combined << '\n';

    for (const DeviationSeries& series : result.per_actor) {
        const fs::path path = out_dir / (result.scenario_id + "-series-" + series.actor_id + ".csv");
        std::ofstream f(path);
        if (!f) throw ReportError("cannot write " + path.string());
        write_series_csv(series, f, result.noise_floor);
        written.push_back(path);
        for (const DeviationEntry& e : series.entries) {
            combined << format_double(e.t) << ',' << series.actor_id << ','
                     << format_double(e.deviation) << ',' << e.presence_count;
            if (result.noise_floor) combined << ',' << format_double(*result.noise_floor);
            combined << '\n';
        }
    }
    written.push_back(combined_path);
    return written;
}

void emit_sweep_csv(const orchestrate::SweepResult& sweep, std::ostream& out) {
    if (sweep.rows.empty()) throw ReportError("empty sweep");
    out << "level,scenario_id,max_deviation_m,verdict,tolerance_m\n";
    for (const orchestrate::SweepRow& row : sweep.rows) {
        out << format_double(row.value) << ',' << row.audit.scenario_id << ','
            << format_double(row.audit.max_deviation) << ',' << to_string(row.audit.verdict) << ','
            << format_double(row.audit.tolerance.value) << '\n';
    }
}

void emit_sweep_csv_file(const orchestrate::SweepResult& sweep, const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw ReportError("cannot write " + path.string());
    emit_sweep_csv(sweep, f);
}

}  // namespace simvar::report
