#pragma once

#include "capstruct/study.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace capstruct {

using Json = nlohmann::json;

/// Rounds to 6 significant digits (the precision of every reported number).
double round_sig6(double value);

/// Sorted keys, 2-space indent, trailing newline.
std::string canonical_dump(const Json& j);

Json to_json(const MergeDiagnostics& d);
Json to_json(const YearMeansTable& t);
Json to_json(const CorrelationTable& t);
Json to_json(const HausmanResult& h);
Json to_json(const WaldResult& w);
Json to_json(const AdjustmentReport& r);
Json to_json(const StudyReport& r);
Json to_json(const DgpConfig& c);

MergeDiagnostics merge_diagnostics_from_json(const Json& j);
YearMeansTable year_means_from_json(const Json& j);
CorrelationTable correlation_table_from_json(const Json& j);
HausmanResult hausman_from_json(const Json& j);
AdjustmentReport adjustment_report_from_json(const Json& j);
StudyReport study_report_from_json(const Json& j);

/// Config documents: JSON objects whose keys mirror the struct fields.
/// Unknown keys and ill-typed values raise ConfigError.
DgpConfig parse_dgp_config(const Json& j);
StudyConfig parse_study_config(const Json& j, const std::filesystem::path& base_dir = {});
Json read_json_file(const std::filesystem::path& path);

// CSV tables (header row first, missing values empty).
std::string diagnostics_csv(const MergeDiagnostics& d);
std::string yearly_means_csv(const YearMeansTable& t);
std::string correlations_csv(const CorrelationTable& t);
std::string hausman_csv(const std::vector<LeverageHausman>& rows);
std::string coefficients_csv(const std::vector<AdjustmentReport>& reports);
std::string speeds_csv(const std::vector<AdjustmentReport>& reports);
std::string tests_csv(const std::vector<AdjustmentReport>& reports);

struct CsvTable {
    std::string name;
    std::string content;
};
std::vector<CsvTable> study_csv_tables(const StudyReport& report);

// Plain-text renderings.
std::string render_text(const MergeDiagnostics& d);
std::string render_text(const YearMeansTable& t);
std::string render_text(const CorrelationTable& t);
std::string render_text(const LeverageHausman& h);
std::string render_text(const AdjustmentReport& r);
std::string render_text(const StudyReport& r);

}  // namespace capstruct
