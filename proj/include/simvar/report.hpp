#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "simvar/metrics.hpp"
#include "simvar/orchestrate.hpp"

namespace simvar::report {

class ReportError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Restriction policy for the scenario table: the restricted column keeps
// only levels <= utilization_cap_pct, pre-collision segments only.
struct RestrictionPolicy {
    double utilization_cap_pct = 75.0;
    bool pre_collision_only = true;
};

// One audited (scenario, level) combination feeding the table.
struct ResultCell {
    std::string scenario_id;
    double level_pct = 0.0;
    AuditResult audit;
    std::string campaign_id;
};

struct DomainRow {
    std::string scenario_id;
    std::string actors;          // e.g. "two vehicles"
    std::string collision_type;  // "none", "vehicle-vehicle", ...
    std::size_t n = 0;
    std::optional<double> max_deviation_unrestricted;  // absent marks a data gap
    std::optional<double> max_deviation_restricted;
    Verdict verdict_unrestricted = Verdict::permissible;
    Verdict verdict_restricted = Verdict::permissible;
    std::vector<std::string> campaign_ids;
};

struct DomainReport {
    std::vector<DomainRow> rows;
    RestrictionPolicy policy;
    Tolerance tolerance;
    std::optional<double> noise_floor;
    std::vector<std::string> campaign_ids;
    std::string toolkit_version;
    // Decision log rendered into every report header.
    std::string variance_scalarization = "sum_of_axis_variances";
    std::string split_rule = "earliest_collision";
    std::string presence_policy = "min2_contributing_runs";
};

// Builds the restricted/unrestricted table. Missing (scenario, level)
// combinations referenced by `expected_levels` become explicit gap markers,
// never silent omissions.
DomainReport build_table(const std::vector<ResultCell>& results, RestrictionPolicy policy,
                         Tolerance tolerance,
                         const std::vector<double>& expected_levels,
                         std::optional<double> noise_floor = std::nullopt);

// Human-readable table: key=value header plus fixed-width rows; values in
// scientific notation with 2 significant figures. Byte-stable for equal inputs.
std::string render_text(const DomainReport& report);

// True iff every gated row (those with data) is permissible under the
// restriction policy.
bool all_restricted_permissible(const DomainReport& report);

// One CSV per actor plus a combined file, columns
// t,actor_id,deviation_m,presence_count,noise_floor_m.
std::vector<std::filesystem::path> emit_series_csv(const AuditResult& result,
                                                   const std::filesystem::path& out_dir);

// Rows `level,scenario_id,max_deviation_m,verdict,tolerance_m`.
void emit_sweep_csv(const orchestrate::SweepResult& sweep, std::ostream& out);
void emit_sweep_csv_file(const orchestrate::SweepResult& sweep,
                         const std::filesystem::path& path);

// 2-significant-figure scientific formatting used in the text table.
std::string sci2(double v);

}  // namespace simvar::report
