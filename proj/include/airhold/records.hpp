#pragma once

#include "airhold/error.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace airhold {

// One flight: decoded METAR observation and METAF forecast at the
// destination, route geography, runway activity and the holding labels.
struct FlightRecord {
    std::string origin;
    std::string destination;
    int flight_hour = 0;  // 0-23
    double wind_dir_deg = 0.0;
    double wind_speed_kt = 0.0;
    double visibility_m = 0.0;
    double temperature_c = 0.0;
    int cloud_cover_octas = 0;  // 0-8
    double fc_wind_dir_deg = 0.0;
    double fc_wind_speed_kt = 0.0;
    double fc_visibility_m = 0.0;
    double fc_temperature_c = 0.0;
    double geodesic_km = 0.0;  // derived from the coordinates on parse
    double alt_src_m = 0.0;
    double alt_dst_m = 0.0;
    double lat_src = 0.0;
    double lon_src = 0.0;
    double lat_dst = 0.0;
    double lon_dst = 0.0;
    bool runway_head_change = false;
    bool runway_config_change = false;
    bool holding = false;
    double holding_seconds = 0.0;

    bool operator==(const FlightRecord&) const = default;
};

struct Provenance {
    enum class Source { parsed, synthetic };
    Source source = Source::parsed;
    std::optional<std::uint64_t> seed;
    std::size_t records = 0;
    std::size_t positives = 0;
};

struct Dataset {
    std::vector<FlightRecord> records;
    Provenance provenance;

    std::size_t positives() const;
};

struct RowDiagnostic {
    std::size_t row;  // 1-based data row (the header is row 0)
    std::string field;
    std::string message;
};

// Raised by parse_records when one or more rows are invalid. what() holds the
// first diagnostic; all of them are kept.
class RowError : public Error {
public:
    explicit RowError(std::vector<RowDiagnostic> diags);
    const std::vector<RowDiagnostic>& diagnostics() const noexcept { return diags_; }

private:
    std::vector<RowDiagnostic> diags_;
};

extern const char* const kRecordCsvHeader;

// Validates every row; no imputation. Throws Error("schema") on a header that
// is not exactly kRecordCsvHeader, RowError on invalid rows.
Dataset parse_records(std::string_view csv);
std::string serialize_records(const Dataset& ds);

// Checks one record against the field ranges. Returns the first offending
// field name and message, or nullopt.
std::optional<std::pair<std::string, std::string>> validate_record(const FlightRecord& r);

// Great-circle distance, haversine, mean Earth radius 6371.0088 km.
double geodesic_km(double lat1, double lon1, double lat2, double lon2);
inline constexpr double kEarthRadiusKm = 6371.0088;

struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t n = 42336;
    std::size_t positives = 720;
    std::size_t airports = 20;
};

// Schema-compatible synthetic flights with exactly cfg.positives holdings.
// Holding propensity is a logistic function of low visibility, strong wind,
// runway changes, peak hours and destination congestion.
Dataset synth_generate(const SynthConfig& cfg);

// Stratified by the holding label; each side keeps the original record order.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

}  // namespace airhold
