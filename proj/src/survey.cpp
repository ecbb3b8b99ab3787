#include "symptomcast/survey.hpp"

#include "symptomcast/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace symptomcast {

namespace {

constexpr std::size_t kCsvColumns = 18;

std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

bool parse_double(std::string_view s, double& value)
{
    if (s.empty()) {
        return false;
    }
    const auto r = std::from_chars(s.data(), s.data() + s.size(), value);
    return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(value);
}

std::string format_double(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string column_name(std::size_t i) { return std::string(split(kCsvHeader, ',')[i]); }

} // namespace

void validate(const SurveyRecord& r, const Bounds2d* bounds)
{
    if (!(r.age >= 0.0 && r.age <= kMaxAge)) {
        throw DataError("age out of range");
    }
    if (!std::isfinite(r.x) || !std::isfinite(r.y)) {
        throw DataError("location is not finite");
    }
    if (bounds && !bounds->contains(r.x, r.y)) {
        throw DataError("location out of bounds");
    }
}

double compute_sra(const SurveyRecord& record)
{
    const auto n = std::count(record.symptoms.begin(), record.symptoms.end(), true);
    return static_cast<double>(n) / kSymptomCount;
}

EncodedRecord encode_record(const SurveyRecord& r)
{
    EncodedRecord v;
    v[0] = r.age / kMaxAge;
    v[1] = r.gender;
    v[2] = r.isolation;
    v[3] = r.smoker;
    v[4] = r.chronic;
    v[5] = r.fever;
    for (int j = 0; j < kSymptomCount; ++j) {
        v[6 + j] = r.symptoms[static_cast<std::size_t>(j)];
    }
    return v;
}

Eigen::MatrixXd encode_records(const std::vector<SurveyRecord>& records)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(records.size()), kEncodedDim);
    for (std::size_t i = 0; i < records.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = encode_record(records[i]).transpose();
    }
    return m;
}

// -- CSV ----------------------------------------------------------------------

std::string format_date(int day, std::chrono::sys_days epoch)
{
    const std::chrono::year_month_day ymd{epoch + std::chrono::days{day}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

bool parse_date(std::string_view text, std::chrono::sys_days epoch, int& day)
{
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        return false;
    }
    int y = 0;
    unsigned m = 0, d = 0;
    auto num = [&text](std::size_t pos, std::size_t len, auto& out) {
        const auto r = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return r.ec == std::errc() && r.ptr == text.data() + pos + len;
    };
    if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) {
        return false;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) {
        return false;
    }
    day = static_cast<int>((std::chrono::sys_days{ymd} - epoch).count());
    return true;
}

ParsedSurvey parse_survey_csv(std::istream& in, const CsvOptions& options)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("survey csv: missing header");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != kCsvHeader) {
        throw DataError("survey csv: header must be '" + std::string(kCsvHeader) + "'");
    }

    ParsedSurvey out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split(line, ',');
        auto fail = [&](std::string reason) { out.errors.push_back({row, std::move(reason)}); };
        if (fields.size() != kCsvColumns) {
            fail("expected " + std::to_string(kCsvColumns) + " fields, got " + std::to_string(fields.size()));
            continue;
        }
        if (auto missing = std::find_if(fields.begin(), fields.end(), [](auto f) { return f.empty(); });
            missing != fields.end()) {
            fail("missing field " + column_name(static_cast<std::size_t>(missing - fields.begin())));
            continue;
        }

        SurveyRecord r;
        if (!parse_date(fields[0], options.epoch, r.date)) {
            fail("invalid date");
            continue;
        }
        if (!parse_double(fields[1], r.x) || !parse_double(fields[2], r.y)) {
            fail("invalid coordinate");
            continue;
        }
        if (!parse_double(fields[3], r.age)) {
            fail("invalid age");
            continue;
        }
        bool flags_ok = true;
        std::array<bool, 5 + kSymptomCount> flags{};
        for (std::size_t i = 0; i < flags.size(); ++i) {
            const auto f = fields[4 + i];
            if (f != "0" && f != "1") {
                fail(column_name(4 + i) + " must be 0 or 1");
                flags_ok = false;
                break;
            }
            flags[i] = f == "1";
        }
        if (!flags_ok) {
            continue;
        }
        r.gender = flags[0];
        r.isolation = flags[1];
        r.smoker = flags[2];
        r.chronic = flags[3];
        r.fever = flags[4];
        std::copy(flags.begin() + 5, flags.end(), r.symptoms.begin());
        try {
            validate(r, options.bounds);
        } catch (const DataError& e) {
            fail(e.what());
            continue;
        }
        out.records.push_back(r);
    }
    return out;
}

void write_survey_csv(std::ostream& out, const std::vector<SurveyRecord>& records, const CsvOptions& options)
{
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
        out << format_date(r.date, options.epoch) << ',' << format_double(r.x) << ',' << format_double(r.y) << ','
            << format_double(r.age) << ',' << r.gender << ',' << r.isolation << ',' << r.smoker << ',' << r.chronic
            << ',' << r.fever;
        for (bool s : r.symptoms) {
            out << ',' << s;
        }
        out << '\n';
    }
}

// -- synthetic generator ------------------------------------------------------

std::vector<ProfileSpec> default_profile_mix()
{
    auto flat = [](double p) {
        std::array<double, kSymptomCount> a{};
        a.fill(p);
        return a;
    };
    return {
        {0.45, flat(0.15), 28.0, 8.0, 0.30, 0.05},
        {0.35, flat(0.45), 48.0, 8.0, 0.20, 0.20},
        {0.20, flat(0.90), 72.0, 7.0, 0.10, 0.60},
    };
}

void validate(const SyntheticConfig& c)
{
    if (c.days < 1) {
        throw ConfigError("days must be >= 1");
    }
    if (c.responses_per_day < 1) {
        throw ConfigError("responses_per_day must be >= 1");
    }
    if (c.n_hotspots < 0) {
        throw ConfigError("n_hotspots must be >= 0");
    }
    if (!c.bounds.valid()) {
        throw ConfigError("grid bounds must satisfy x_min < x_max and y_min < y_max");
    }
    if (!(c.hotspot_width > 0.0) || !(c.hotspot_drift >= 0.0) || !(c.hotspot_amplitude >= 0.0) ||
        !(c.base_intensity >= 0.0)) {
        throw ConfigError("hotspot width must be > 0; drift, amplitude and base intensity >= 0");
    }
    if (!(c.isolation_p >= 0.0 && c.isolation_p <= 1.0)) {
        throw ConfigError("isolation_p must be in [0,1]");
    }
    if (c.profile_mix.empty()) {
        throw ConfigError("profile_mix must list at least one profile");
    }
    double total = 0.0;
    for (const auto& p : c.profile_mix) {
        if (!(p.weight >= 0.0)) {
            throw ConfigError("profile weights must be >= 0");
        }
        for (double q : p.propensity) {
            if (!(q >= 0.0)) {
                throw ConfigError("symptom propensities must be >= 0");
            }
        }
        if (!(p.age_sd >= 0.0) || !(p.smoker_p >= 0.0 && p.smoker_p <= 1.0) ||
            !(p.chronic_p >= 0.0 && p.chronic_p <= 1.0)) {
            throw ConfigError("profile demographics out of range");
        }
        total += p.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ConfigError("profile weights must sum to 1 (got " + format_double(total) + ")");
    }
}

IntensityField::IntensityField(double base, double amplitude, double width, std::vector<Hotspot> hotspots)
    : base_(base), amplitude_(amplitude), width_(width), hotspots_(std::move(hotspots))
{
}

double IntensityField::amplitude_at(std::size_t h, int day) const
{
    const Hotspot& s = hotspots_.at(h);
    return amplitude_ * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * day / s.period + s.phase));
}

double IntensityField::operator()(double x, double y, int day) const
{
    double value = base_;
    for (std::size_t h = 0; h < hotspots_.size(); ++h) {
        const Hotspot& s = hotspots_[h];
        const auto t = static_cast<std::size_t>(std::clamp<int>(day, 0, static_cast<int>(s.cx.size()) - 1));
        const double dx = x - s.cx[t];
        const double dy = y - s.cy[t];
        value += amplitude_at(h, day) * std::exp(-(dx * dx + dy * dy) / (2.0 * width_ * width_));
    }
    return value;
}

namespace {

double reflect(double v, double lo, double hi)
{
    const double span = hi - lo;
    double u = std::fmod(v - lo, 2.0 * span);
    if (u < 0.0) {
        u += 2.0 * span;
    }
    return lo + (u <= span ? u : 2.0 * span - u);
}

} // namespace

SyntheticSurvey generate_synthetic(const SyntheticConfig& c)
{
    validate(c);
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> ux(c.bounds.x_min, c.bounds.x_max);
    std::uniform_real_distribution<double> uy(c.bounds.y_min, c.bounds.y_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Hotspot> hotspots(static_cast<std::size_t>(c.n_hotspots));
    for (auto& h : hotspots) {
        h.period = 20.0 + 20.0 * unit(rng);
        h.phase = 2.0 * std::numbers::pi * unit(rng);
        double x = ux(rng);
        double y = uy(rng);
        for (int t = 0; t < c.days; ++t) {
            h.cx.push_back(x);
            h.cy.push_back(y);
            const double angle = 2.0 * std::numbers::pi * unit(rng);
            x = reflect(x + c.hotspot_drift * std::cos(angle), c.bounds.x_min, c.bounds.x_max);
            y = reflect(y + c.hotspot_drift * std::sin(angle), c.bounds.y_min, c.bounds.y_max);
        }
    }
    SyntheticSurvey out{{}, IntensityField(c.base_intensity, c.hotspot_amplitude, c.hotspot_width, hotspots)};

    std::vector<double> weights;
    for (const auto& p : c.profile_mix) {
        weights.push_back(p.weight);
    }
    std::vector<double> cumulative(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cumulative.begin());

    out.records.reserve(static_cast<std::size_t>(c.days) * static_cast<std::size_t>(c.responses_per_day));
    for (int t = 0; t < c.days; ++t) {
        for (int i = 0; i < c.responses_per_day; ++i) {
            const double pick = unit(rng) * cumulative.back();
            const auto k = static_cast<std::size_t>(
                std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                             cumulative.begin(),
                                         static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
            const ProfileSpec& prof = c.profile_mix[k];

            SurveyRecord r;
            r.date = t;
            r.x = ux(rng);
            r.y = uy(rng);
            std::normal_distribution<double> age(prof.age_mean, prof.age_sd);
            r.age = std::clamp(std::round(age(rng)), 0.0, kMaxAge);
            r.gender = unit(rng) < 0.5;
            r.isolation = unit(rng) < c.isolation_p;
            r.smoker = unit(rng) < prof.smoker_p;
            r.chronic = unit(rng) < prof.chronic_p;

            const double lambda = out.intensity(r.x, r.y, t);
            double mean_prop = 0.0;
            for (int j = 0; j < kSymptomCount; ++j) {
                const double p = std::clamp(prof.propensity[static_cast<std::size_t>(j)] * lambda, 0.0, 1.0);
                r.symptoms[static_cast<std::size_t>(j)] = unit(rng) < p;
                mean_prop += prof.propensity[static_cast<std::size_t>(j)];
            }
            r.fever = unit(rng) < std::clamp(mean_prop / kSymptomCount * lambda, 0.0, 1.0);
            out.records.push_back(r);
        }
    }
    return out;
}

double expected_sra(const SyntheticConfig& c, double intensity)
{
    double total = 0.0;
    for (const auto& p : c.profile_mix) {
        double mean = 0.0;
        for (double q : p.propensity) {
            mean += std::clamp(q * intensity, 0.0, 1.0);
        }
        total += p.weight * mean / kSymptomCount;
    }
    return total;
}

} // namespace symptomcast
