#ifndef SYMPTOMCAST_SURVEY_HPP
#define SYMPTOMCAST_SURVEY_HPP

#include <Eigen/Core>

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace symptomcast {

inline constexpr int kSymptomCount = 9;
inline constexpr int kEncodedDim = 15;

// Fixed symptom order shared by ingestion, encoding and serialization.
enum class Symptom : int {
    cough,
    fatigue,
    myalgia,
    shortness_of_breath,
    rhinorrhea_congestion,
    diarrhea,
    headache,
    chills,
    confusion,
};

inline constexpr std::array<std::string_view, kSymptomCount> kSymptomColumns = {
    "cough", "fatigue", "myalgia", "short_breath", "rhinorrhea", "diarrhea", "headache", "chills", "confusion"};

inline constexpr double kFeverThresholdCelsius = 38.0;
inline constexpr double kMaxAge = 120.0;

struct Bounds2d {
    double x_min = 0.0;
    double x_max = 100.0;
    double y_min = 0.0;
    double y_max = 100.0;

    bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
    bool valid() const { return x_min < x_max && y_min < y_max; }
};

struct SurveyRecord {
    int date = 0; // days since dataset start
    double x = 0.0;
    double y = 0.0;
    double age = 0.0;
    bool gender = false;
    bool isolation = false;
    bool smoker = false;
    bool chronic = false;
    bool fever = false;
    std::array<bool, kSymptomCount> symptoms{};

    bool has(Symptom s) const { return symptoms[static_cast<std::size_t>(s)]; }
    bool operator==(const SurveyRecord&) const = default;
};

// Throws DataError naming the first violated field.
void validate(const SurveyRecord& record, const Bounds2d* bounds = nullptr);

// Symptoms Ratio Average: reported symptoms over the size of the symptom list.
double compute_sra(const SurveyRecord& record);

// Canonical numeric encoding:
// [age/120, gender, isolation, smoker, chronic, fever, 9 symptom flags].
using EncodedRecord = Eigen::Matrix<double, kEncodedDim, 1>;

EncodedRecord encode_record(const SurveyRecord& record);

// N x 15, one encoded record per row.
Eigen::MatrixXd encode_records(const std::vector<SurveyRecord>& records);

// -- CSV ----------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "date,x,y,age,gender,isolation,smoker,chronic,fever,cough,fatigue,myalgia,short_breath,rhinorrhea,diarrhea,"
    "headache,chills,confusion";

struct CsvOptions {
    // Day index 0 in the file's ISO-8601 dates.
    std::chrono::sys_days epoch = std::chrono::sys_days{std::chrono::year{2020} / 1 / 1};
    // When set, rows located outside are reported as row errors.
    const Bounds2d* bounds = nullptr;
};

struct RowError {
    std::size_t row = 0; // 1-based line number; the header is row 1
    std::string reason;
    bool operator==(const RowError&) const = default;
};

struct ParsedSurvey {
    std::vector<SurveyRecord> records;
    std::vector<RowError> errors;
};

// Missing or wrong header throws DataError; bad rows are collected, not dropped silently.
ParsedSurvey parse_survey_csv(std::istream& in, const CsvOptions& options = {});
void write_survey_csv(std::ostream& out, const std::vector<SurveyRecord>& records, const CsvOptions& options = {});

std::string format_date(int day, std::chrono::sys_days epoch);
// Returns false when `text` is not a valid YYYY-MM-DD date.
bool parse_date(std::string_view text, std::chrono::sys_days epoch, int& day);

// -- synthetic generator ------------------------------------------------------

struct ProfileSpec {
    double weight = 1.0;
    std::array<double, kSymptomCount> propensity{};
    double age_mean = 40.0;
    double age_sd = 8.0;
    double smoker_p = 0.2;
    double chronic_p = 0.1;
};

std::vector<ProfileSpec> default_profile_mix();

struct SyntheticConfig {
    int days = 50;
    Bounds2d bounds{};
    int responses_per_day = 300;
    int n_hotspots = 2;
    double hotspot_drift = 8.0;      // step length of the centre random walk, units/day
    double hotspot_width = 12.0;     // Gaussian bump standard deviation, units
    double hotspot_amplitude = 1.0;  // peak bump height added to the base intensity
    double base_intensity = 0.15;    // intensity with no outbreak nearby
    double isolation_p = 0.1;
    std::vector<ProfileSpec> profile_mix = default_profile_mix();
    std::uint64_t seed = 1;
};

// Throws ConfigError with the offending field.
void validate(const SyntheticConfig& config);

struct Hotspot {
    std::vector<double> cx, cy; // centre per day
    double period = 30.0;       // days
    double phase = 0.0;
};

// lambda(x, y, t) = base + sum_h A_h(t) exp(-|p - c_h(t)|^2 / (2 w^2)),
// A_h(t) = amplitude * (0.5 + 0.5 sin(2 pi t / period_h + phase_h)).
class IntensityField {
public:
    IntensityField() = default;
    IntensityField(double base, double amplitude, double width, std::vector<Hotspot> hotspots);

    double operator()(double x, double y, int day) const;
    double amplitude_at(std::size_t hotspot, int day) const;
    const std::vector<Hotspot>& hotspots() const { return hotspots_; }

private:
    double base_ = 1.0;
    double amplitude_ = 0.0;
    double width_ = 1.0;
    std::vector<Hotspot> hotspots_;
};

struct SyntheticSurvey {
    std::vector<SurveyRecord> records;
    IntensityField intensity;
};

// Symptom j of a responder from profile k is reported with probability
// clip(propensity_kj * lambda(x, y, t), 0, 1); fever uses the profile's mean
// propensity. Deterministic under config.seed.
SyntheticSurvey generate_synthetic(const SyntheticConfig& config);

// Expected SRA when lambda is constant: sum_k w_k mean_j clip(p_kj * lambda).
double expected_sra(const SyntheticConfig& config, double intensity);

} // namespace symptomcast

#endif
