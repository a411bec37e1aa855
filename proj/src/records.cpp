#include "airhold/records.hpp"

#include "airhold/util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace airhold {

const char* const kRecordCsvHeader =
    "origin,destination,flight_hour,wind_dir_deg,wind_speed_kt,visibility_m,temperature_c,"
    "cloud_cover_octas,fc_wind_dir_deg,fc_wind_speed_kt,fc_visibility_m,fc_temperature_c,lat_src,"
    "lon_src,alt_src_m,lat_dst,lon_dst,alt_dst_m,runway_head_change,runway_config_change,holding,"
    "holding_seconds";

std::size_t Dataset::positives() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const FlightRecord& r) { return r.holding; }));
}

namespace {

std::string describe(const std::vector<RowDiagnostic>& diags) {
    std::ostringstream s;
    s << "row " << diags.front().row << ": field " << diags.front().field << ": " << diags.front().message;
    if (diags.size() > 1) s << " (+" << diags.size() - 1 << " more)";
    return s.str();
}

// Column codec: the parse hook returns an error message or empty string.
struct Column {
    const char* name;
    std::function<std::string(FlightRecord&, std::string_view)> parse;
    std::function<std::string(const FlightRecord&)> format;
};

Column code_col(const char* name, std::string FlightRecord::*m) {
    return {name,
            [m](FlightRecord& r, std::string_view v) -> std::string {
                if (v.empty()) return "missing value";
                r.*m = std::string(v);
                return {};
            },
            [m](const FlightRecord& r) { return r.*m; }};
}

Column real_col(const char* name, double FlightRecord::*m) {
    return {name,
            [m](FlightRecord& r, std::string_view v) -> std::string {
                if (v.empty()) return "missing value";
                if (!parse_double(v, r.*m)) return "not a finite number: '" + std::string(v) + "'";
                return {};
            },
            [m](const FlightRecord& r) { return format_double(r.*m); }};
}

Column int_col(const char* name, int FlightRecord::*m) {
    return {name,
            [m](FlightRecord& r, std::string_view v) -> std::string {
                std::int64_t x = 0;
                if (v.empty()) return "missing value";
                if (!parse_int(v, x) || x < -1000000 || x > 1000000) return "not an integer: '" + std::string(v) + "'";
                r.*m = static_cast<int>(x);
                return {};
            },
            [m](const FlightRecord& r) { return std::to_string(r.*m); }};
}

Column bool_col(const char* name, bool FlightRecord::*m) {
    return {name,
            [m](FlightRecord& r, std::string_view v) -> std::string {
                if (v == "0") r.*m = false;
                else if (v == "1") r.*m = true;
                else return "expected 0 or 1, got '" + std::string(v) + "'";
                return {};
            },
            [m](const FlightRecord& r) { return std::string(r.*m ? "1" : "0"); }};
}

const std::vector<Column>& columns() {
    static const std::vector<Column> cols = {
        code_col("origin", &FlightRecord::origin),
        code_col("destination", &FlightRecord::destination),
        int_col("flight_hour", &FlightRecord::flight_hour),
        real_col("wind_dir_deg", &FlightRecord::wind_dir_deg),
        real_col("wind_speed_kt", &FlightRecord::wind_speed_kt),
        real_col("visibility_m", &FlightRecord::visibility_m),
        real_col("temperature_c", &FlightRecord::temperature_c),
        int_col("cloud_cover_octas", &FlightRecord::cloud_cover_octas),
        real_col("fc_wind_dir_deg", &FlightRecord::fc_wind_dir_deg),
        real_col("fc_wind_speed_kt", &FlightRecord::fc_wind_speed_kt),
        real_col("fc_visibility_m", &FlightRecord::fc_visibility_m),
        real_col("fc_temperature_c", &FlightRecord::fc_temperature_c),
        real_col("lat_src", &FlightRecord::lat_src),
        real_col("lon_src", &FlightRecord::lon_src),
        real_col("alt_src_m", &FlightRecord::alt_src_m),
        real_col("lat_dst", &FlightRecord::lat_dst),
        real_col("lon_dst", &FlightRecord::lon_dst),
        real_col("alt_dst_m", &FlightRecord::alt_dst_m),
        bool_col("runway_head_change", &FlightRecord::runway_head_change),
        bool_col("runway_config_change", &FlightRecord::runway_config_change),
        bool_col("holding", &FlightRecord::holding),
        real_col("holding_seconds", &FlightRecord::holding_seconds),
    };
    return cols;
}

}  // namespace

RowError::RowError(std::vector<RowDiagnostic> diags) : Error("row", describe(diags)), diags_(std::move(diags)) {}

std::optional<std::pair<std::string, std::string>> validate_record(const FlightRecord& r) {
    using Fail = std::pair<std::string, std::string>;
    auto bad_code = [](const std::string& c) {
        return c.empty() || c.find_first_of(",\"\r\n") != std::string::npos;
    };
    if (bad_code(r.origin)) return Fail{"origin", "invalid airport code"};
    if (bad_code(r.destination)) return Fail{"destination", "invalid airport code"};
    if (r.origin == r.destination) return Fail{"destination", "origin and destination are the same airport"};
    if (r.flight_hour < 0 || r.flight_hour > 23) return Fail{"flight_hour", "must be in 0-23"};
    auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!in(r.wind_dir_deg, 0, 360)) return Fail{"wind_dir_deg", "must be in 0-360"};
    if (!nonneg(r.wind_speed_kt)) return Fail{"wind_speed_kt", "must be >= 0"};
    if (!nonneg(r.visibility_m)) return Fail{"visibility_m", "must be >= 0"};
    if (!std::isfinite(r.temperature_c)) return Fail{"temperature_c", "must be finite"};
    if (r.cloud_cover_octas < 0 || r.cloud_cover_octas > 8) return Fail{"cloud_cover_octas", "must be in 0-8"};
    if (!in(r.fc_wind_dir_deg, 0, 360)) return Fail{"fc_wind_dir_deg", "must be in 0-360"};
    if (!nonneg(r.fc_wind_speed_kt)) return Fail{"fc_wind_speed_kt", "must be >= 0"};
    if (!nonneg(r.fc_visibility_m)) return Fail{"fc_visibility_m", "must be >= 0"};
    if (!std::isfinite(r.fc_temperature_c)) return Fail{"fc_temperature_c", "must be finite"};
    if (!in(r.lat_src, -90, 90)) return Fail{"lat_src", "must be in [-90,90]"};
    if (!in(r.lon_src, -180, 180)) return Fail{"lon_src", "must be in [-180,180]"};
    if (!(std::isfinite(r.alt_src_m) && r.alt_src_m >= -430)) return Fail{"alt_src_m", "must be >= -430"};
    if (!in(r.lat_dst, -90, 90)) return Fail{"lat_dst", "must be in [-90,90]"};
    if (!in(r.lon_dst, -180, 180)) return Fail{"lon_dst", "must be in [-180,180]"};
    if (!(std::isfinite(r.alt_dst_m) && r.alt_dst_m >= -430)) return Fail{"alt_dst_m", "must be >= -430"};
    if (!nonneg(r.geodesic_km)) return Fail{"geodesic_km", "must be >= 0"};
    if (!nonneg(r.holding_seconds)) return Fail{"holding_seconds", "must be >= 0"};
    if (!r.holding && r.holding_seconds != 0.0)
        return Fail{"holding_seconds", "must be 0 when holding is 0 (label inconsistency)"};
    return std::nullopt;
}

Dataset parse_records(std::string_view csv) {
    const auto& cols = columns();
    std::size_t pos = 0;
    auto next_line = [&](std::string_view& line) {
        if (pos >= csv.size()) return false;
        auto nl = csv.find('\n', pos);
        if (nl == std::string_view::npos) nl = csv.size();
        line = csv.substr(pos, nl - pos);
        pos = nl + 1;
        return true;
    };

    std::string_view header;
    if (!next_line(header)) throw Error("schema", "empty input: missing header");
    const auto names = split_csv_line(header);
    {
        std::vector<std::string> missing, unexpected;
        std::set<std::string_view> present(names.begin(), names.end());
        std::set<std::string_view> expected;
        for (const auto& c : cols) {
            expected.insert(c.name);
            if (!present.contains(c.name)) missing.push_back(c.name);
        }
        for (auto n : names)
            if (!expected.contains(n)) unexpected.emplace_back(n);
        if (!missing.empty()) throw Error("schema", "missing column '" + missing.front() + "'");
        if (!unexpected.empty()) throw Error("schema", "unexpected column '" + unexpected.front() + "'");
        if (names.size() != cols.size()) throw Error("schema", "duplicate columns in header");
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (names[i] != cols[i].name)
                throw Error("schema", std::string("column ") + std::to_string(i + 1) + " must be '" + cols[i].name + "'");
    }

    Dataset ds;
    std::vector<RowDiagnostic> diags;
    std::string_view line;
    std::size_t row = 0;
    while (next_line(line)) {
        ++row;
        if (line.empty() || line == "\r") {
            if (pos >= csv.size()) break;  // trailing newline
            diags.push_back({row, "*", "empty row"});
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != cols.size()) {
            diags.push_back({row, "*", "expected " + std::to_string(cols.size()) + " fields, got " +
                                           std::to_string(fields.size())});
            continue;
        }
        FlightRecord r;
        bool ok = true;
        for (std::size_t i = 0; i < cols.size() && ok; ++i) {
            auto err = cols[i].parse(r, fields[i]);
            if (!err.empty()) {
                diags.push_back({row, cols[i].name, std::move(err)});
                ok = false;
            }
        }
        if (!ok) continue;
        r.geodesic_km = 0.0;
        if (auto fail = validate_record(r)) {
            diags.push_back({row, fail->first, fail->second});
            continue;
        }
        r.geodesic_km = geodesic_km(r.lat_src, r.lon_src, r.lat_dst, r.lon_dst);
        ds.records.push_back(std::move(r));
    }
    if (!diags.empty()) throw RowError(std::move(diags));
    ds.provenance.source = Provenance::Source::parsed;
    ds.provenance.records = ds.records.size();
    ds.provenance.positives = ds.positives();
    return ds;
}

std::string serialize_records(const Dataset& ds) {
    const auto& cols = columns();
    std::string out = kRecordCsvHeader;
    out += '\n';
    for (const auto& r : ds.records) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (i) out += ',';
            out += cols[i].format(r);
        }
        out += '\n';
    }
    return out;
}

double geodesic_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double rad = M_PI / 180.0;
    const double dlat = (lat2 - lat1) * rad;
    const double dlon = (lon2 - lon1) * rad;
    const double a = std::pow(std::sin(dlat / 2), 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::pow(std::sin(dlon / 2), 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

namespace {

struct AirportSeed {
    const char* code;
    double lat, lon, alt;
};

// Major Brazilian airports; approximate reference coordinates and elevation.
constexpr std::array<AirportSeed, 20> kAirports = {{
    {"SBGR", -23.4356, -46.4731, 750}, {"SBSP", -23.6261, -46.6564, 802}, {"SBRJ", -22.9105, -43.1631, 3},
    {"SBGL", -22.8099, -43.2506, 9},   {"SBBR", -15.8711, -47.9186, 1066}, {"SBCF", -19.6244, -43.9719, 828},
    {"SBKP", -23.0074, -47.1345, 661}, {"SBPA", -29.9939, -51.1714, 3},   {"SBCT", -25.5285, -49.1758, 911},
    {"SBSV", -12.9086, -38.3225, 20},  {"SBRF", -8.1265, -34.9236, 10},   {"SBFZ", -3.7763, -38.5326, 25},
    {"SBBE", -1.3792, -48.4763, 16},   {"SBEG", -3.0386, -60.0497, 80},   {"SBFL", -27.6703, -48.5525, 5},
    {"SBGO", -16.6320, -49.2207, 747}, {"SBVT", -20.2581, -40.2864, 3},   {"SBCY", -15.6529, -56.1167, 188},
    {"SBMO", -9.5108, -35.7917, 118},  {"SBSG", -5.7681, -35.3761, 52},
}};

struct SynthAirport {
    std::string code;
    double lat, lon, alt;
    double traffic;  // relative share, decreasing with rank
};

std::vector<SynthAirport> make_airports(std::size_t count, Rng& rng) {
    std::vector<SynthAirport> out;
    for (std::size_t i = 0; i < count; ++i) {
        SynthAirport a;
        if (i < kAirports.size()) {
            a = {kAirports[i].code, kAirports[i].lat, kAirports[i].lon, kAirports[i].alt, 0};
        } else {
            std::string code = std::to_string(i);
            code = "X" + std::string(code.size() < 3 ? 3 - code.size() : 0, '0') + code;
            a = {code, rng.uniform(-30, 0), rng.uniform(-60, -35), rng.uniform(0, 1100), 0};
        }
        a.traffic = 1.0 / std::pow(static_cast<double>(i + 1), 0.9);
        out.push_back(std::move(a));
    }
    return out;
}

std::size_t pick_weighted(const std::vector<double>& cumulative, double u) {
    const double target = u * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
    if (cfg.n == 0) throw Error("config", "synth: n must be positive");
    if (cfg.positives == 0 || cfg.positives >= cfg.n) throw Error("config", "synth: need 0 < positives < n");
    if (cfg.airports < 2) throw Error("config", "synth: need at least 2 airports");

    Rng rng(cfg.seed);
    const auto airports = make_airports(cfg.airports, rng);
    std::vector<double> cumulative;
    double acc = 0;
    for (const auto& a : airports) cumulative.push_back(acc += a.traffic);
    const double top_traffic = airports.front().traffic;

    Dataset ds;
    ds.records.reserve(cfg.n);
    std::vector<double> propensity(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const std::size_t o = pick_weighted(cumulative, rng.uniform());
        std::size_t d = pick_weighted(cumulative, rng.uniform());
        while (d == o) d = pick_weighted(cumulative, rng.uniform());
        const auto& src = airports[o];
        const auto& dst = airports[d];

        FlightRecord r;
        r.origin = src.code;
        r.destination = dst.code;
        r.lat_src = src.lat;
        r.lon_src = src.lon;
        r.alt_src_m = src.alt;
        r.lat_dst = dst.lat;
        r.lon_dst = dst.lon;
        r.alt_dst_m = dst.alt;
        r.geodesic_km = geodesic_km(src.lat, src.lon, dst.lat, dst.lon);

        // Bimodal departures around the morning and evening banks.
        const double bank = rng.bernoulli(0.5) ? 8.0 : 18.0;
        r.flight_hour = static_cast<int>(std::lround(clamp(bank + 3.0 * rng.normal(), 0, 23)));

        r.wind_dir_deg = std::floor(rng.uniform(0, 36)) * 10.0;
        r.wind_speed_kt = std::round(clamp(std::abs(7.0 + 6.0 * rng.normal()), 0, 60));
        r.visibility_m = rng.bernoulli(0.8) ? 10000.0
                                            : std::round(clamp(std::exp(std::log(3000.0) + 0.9 * rng.normal()), 100, 9999) / 100.0) * 100.0;
        r.temperature_c = std::round((28.0 + 0.35 * dst.lat + 4.0 * rng.normal()) * 10.0) / 10.0;
        r.cloud_cover_octas = static_cast<int>(rng.below(9));
        if (r.visibility_m < 3000) r.cloud_cover_octas = std::max(r.cloud_cover_octas, 6);

        r.fc_wind_dir_deg = std::fmod(r.wind_dir_deg + 360.0 + std::round(20.0 * rng.normal() / 10.0) * 10.0, 360.0);
        r.fc_wind_speed_kt = std::round(clamp(r.wind_speed_kt + 3.0 * rng.normal(), 0, 60));
        r.fc_visibility_m = std::round(clamp(r.visibility_m * std::exp(0.3 * rng.normal()), 100, 10000) / 100.0) * 100.0;
        r.fc_temperature_c = std::round((r.temperature_c + 1.5 * rng.normal()) * 10.0) / 10.0;

        r.runway_head_change = rng.bernoulli(r.wind_speed_kt > 15 ? 0.25 : 0.05);
        r.runway_config_change = rng.bernoulli(0.06);

        const double low_vis = clamp((5000.0 - r.visibility_m) / 5000.0, 0.0, 1.0);
        const double strong_wind = std::max(0.0, r.wind_speed_kt - 12.0) / 10.0;
        const double congestion = dst.traffic / top_traffic;
        const double peak = (r.flight_hour >= 7 && r.flight_hour <= 9) || (r.flight_hour >= 17 && r.flight_hour <= 19)
                                ? 1.0
                                : 0.0;
        propensity[i] = -7.0 + 4.0 * low_vis + 1.5 * strong_wind + 1.8 * r.runway_head_change +
                        1.2 * r.runway_config_change + 2.0 * congestion + 0.6 * peak;
        ds.records.push_back(std::move(r));
    }

    // Exactly cfg.positives holdings, drawn without replacement with
    // probability proportional to the logistic propensity (Efraimidis-Spirakis
    // keys log(u)/p, largest first).
    std::vector<std::pair<double, std::size_t>> keys(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-propensity[i]));
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        keys[i] = {std::log(u) / p, i};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(cfg.positives), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });

    double mean_severity = 0.0;
    for (std::size_t k = 0; k < cfg.positives; ++k) mean_severity += propensity[keys[k].second];
    mean_severity /= static_cast<double>(cfg.positives);
    std::vector<std::size_t> chosen(cfg.positives);
    for (std::size_t k = 0; k < cfg.positives; ++k) chosen[k] = keys[k].second;
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) {
        auto& r = ds.records[i];
        r.holding = true;
        // Log-normal around 600 s, longer for worse conditions.
        const double z = 0.5 * rng.normal() + 0.35 * (propensity[i] - mean_severity);
        r.holding_seconds = std::round(600.0 * std::exp(z));
    }

    ds.provenance.source = Provenance::Source::synthetic;
    ds.provenance.seed = cfg.seed;
    ds.provenance.records = ds.records.size();
    ds.provenance.positives = cfg.positives;
    return ds;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("config", "test_fraction must be in (0,1)");
    Rng rng(seed);
    std::vector<bool> to_test(ds.records.size(), false);
    for (bool label : {false, true}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.records.size(); ++i)
            if (ds.records[i].holding == label) idx.push_back(i);
        const std::size_t c = idx.size();
        const auto k = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(c)));
        if (c >= 2 && (k == 0 || k == c))
            throw Error("split", std::string("test_fraction leaves the ") + (label ? "positive" : "negative") +
                                     " class empty on one side (" + std::to_string(c) + " records)");
        rng.shuffle(idx);
        for (std::size_t j = 0; j < k; ++j) to_test[idx[j]] = true;
    }
    Dataset train, test;
    train.provenance = test.provenance = ds.provenance;
    for (std::size_t i = 0; i < ds.records.size(); ++i) (to_test[i] ? test : train).records.push_back(ds.records[i]);
    for (Dataset* d : {&train, &test}) {
        d->provenance.records = d->records.size();
        d->provenance.positives = d->positives();
    }
    return {std::move(train), std::move(test)};
}

}  // namespace airhold
