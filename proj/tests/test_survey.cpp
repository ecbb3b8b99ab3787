#include "symptomcast/errors.hpp"
#include "symptomcast/survey.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace symptomcast;

namespace {

SurveyRecord with_symptoms(std::initializer_list<Symptom> on)
{
    SurveyRecord r;
    for (Symptom s : on) {
        r.symptoms[static_cast<std::size_t>(s)] = true;
    }
    return r;
}

SurveyRecord random_record(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::bernoulli_distribution b(0.4);
    SurveyRecord r;
    r.date = std::uniform_int_distribution<int>(0, 400)(rng);
    r.x = u(rng);
    r.y = u(rng);
    r.age = std::uniform_int_distribution<int>(0, 120)(rng);
    r.gender = b(rng);
    r.isolation = b(rng);
    r.smoker = b(rng);
    r.chronic = b(rng);
    r.fever = b(rng);
    for (auto& s : r.symptoms) {
        s = b(rng);
    }
    return r;
}

const std::string kHeader(kCsvHeader);

} // namespace

TEST_SUITE("sra")
{
    TEST_CASE("zero, full and partial symptom sets")
    {
        CHECK(compute_sra(SurveyRecord{}) == 0.0);
        SurveyRecord all;
        all.symptoms.fill(true);
        CHECK(compute_sra(all) == 1.0);
        CHECK(compute_sra(with_symptoms({Symptom::cough, Symptom::headache, Symptom::chills})) == 3.0 / 9.0);
    }

    TEST_CASE("invariant under permutations of the flags")
    {
        std::mt19937_64 rng(5);
        for (int i = 0; i < 200; ++i) {
            SurveyRecord r = random_record(rng);
            const double before = compute_sra(r);
            std::shuffle(r.symptoms.begin(), r.symptoms.end(), rng);
            CHECK(compute_sra(r) == before);
        }
    }
}

TEST_SUITE("encoding")
{
    TEST_CASE("zero, ones and single-field layouts")
    {
        CHECK(encode_record(SurveyRecord{}).isZero());

        SurveyRecord full;
        full.age = 120;
        full.gender = full.isolation = full.smoker = full.chronic = full.fever = true;
        full.symptoms.fill(true);
        CHECK(encode_record(full) == EncodedRecord::Ones());

        SurveyRecord r;
        r.age = 60;
        r.fever = true;
        EncodedRecord expected = EncodedRecord::Zero();
        expected[0] = 0.5;
        expected[5] = 1.0;
        CHECK(encode_record(r) == expected);
    }

    TEST_CASE("every component lies in [0,1]")
    {
        std::mt19937_64 rng(6);
        for (int i = 0; i < 500; ++i) {
            const EncodedRecord v = encode_record(random_record(rng));
            CHECK(v.minCoeff() >= 0.0);
            CHECK(v.maxCoeff() <= 1.0);
        }
    }
}

TEST_SUITE("csv")
{
    TEST_CASE("header only")
    {
        std::istringstream in(kHeader + "\n");
        const ParsedSurvey p = parse_survey_csv(in);
        CHECK(p.records.empty());
        CHECK(p.errors.empty());
    }

    TEST_CASE("missing or wrong header is fatal")
    {
        std::istringstream empty("");
        CHECK_THROWS_AS(parse_survey_csv(empty), DataError);
        std::istringstream wrong("date,x,y\n2020-01-01,1,2\n");
        CHECK_THROWS_AS(parse_survey_csv(wrong), DataError);
    }

    TEST_CASE("one well-formed row")
    {
        std::istringstream in(kHeader + "\n2020-01-03,12.5,40.25,33,1,0,1,0,1,1,0,0,1,0,0,1,0,1\n");
        const ParsedSurvey p = parse_survey_csv(in);
        REQUIRE(p.records.size() == 1);
        CHECK(p.errors.empty());
        const SurveyRecord& r = p.records[0];
        CHECK(r.date == 2);
        CHECK(r.x == 12.5);
        CHECK(r.y == 40.25);
        CHECK(r.age == 33.0);
        CHECK(r.gender);
        CHECK_FALSE(r.isolation);
        CHECK(r.smoker);
        CHECK_FALSE(r.chronic);
        CHECK(r.fever);
        const std::array<bool, 9> symptoms{true, false, false, true, false, false, true, false, true};
        CHECK(r.symptoms == symptoms);
    }

    TEST_CASE("row errors carry row number and reason")
    {
        std::istringstream in(kHeader + "\n2020-01-01,1,1,200,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
        const ParsedSurvey p = parse_survey_csv(in);
        CHECK(p.records.empty());
        REQUIRE(p.errors.size() == 1);
        CHECK(p.errors[0] == RowError{2, "age out of range"});

        std::istringstream more(kHeader +
                                "\n2020-01-01,1,1,20,0,0,0,0,0,0,0,0,0,0,0,0,0,0"
                                "\n2020-01-01,1,1,20,0,0,2,0,0,0,0,0,0,0,0,0,0,0"
                                "\n2020-13-01,1,1,20,0,0,0,0,0,0,0,0,0,0,0,0,0,0"
                                "\n2020-01-01,1,,20,0,0,0,0,0,0,0,0,0,0,0,0,0,0"
                                "\n2020-01-01,1,1"
                                "\n2020-01-01,500,1,20,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
        const Bounds2d bounds{};
        const ParsedSurvey q = parse_survey_csv(more, {.bounds = &bounds});
        CHECK(q.records.size() == 1);
        REQUIRE(q.errors.size() == 5);
        CHECK(q.errors[0] == RowError{3, "smoker must be 0 or 1"});
        CHECK(q.errors[1] == RowError{4, "invalid date"});
        CHECK(q.errors[2] == RowError{5, "missing field y"});
        CHECK(q.errors[3].row == 6);
        CHECK(q.errors[4] == RowError{7, "location out of bounds"});
    }

    TEST_CASE("serialize then parse round-trips random records exactly")
    {
        std::mt19937_64 rng(8);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<SurveyRecord> records;
            for (int i = 0; i < 50; ++i) {
                records.push_back(random_record(rng));
            }
            std::stringstream buf;
            write_survey_csv(buf, records);
            const ParsedSurvey p = parse_survey_csv(buf);
            CHECK(p.errors.empty());
            CHECK(p.records == records);
        }
    }
}

TEST_SUITE("synthetic")
{
    TEST_CASE("without hotspots the mean SRA matches the analytic Bernoulli mean")
    {
        SyntheticConfig c;
        c.n_hotspots = 0;
        c.days = 100;
        c.responses_per_day = 1000;
        c.seed = 42;
        const SyntheticSurvey s = generate_synthetic(c);
        REQUIRE(s.records.size() == 100000);
        double sum = 0.0, sq = 0.0;
        for (const auto& r : s.records) {
            const double v = compute_sra(r);
            sum += v;
            sq += v * v;
        }
        const double n = static_cast<double>(s.records.size());
        const double mean = sum / n;
        const double se = std::sqrt((sq / n - mean * mean) / (n - 1.0));
        const double analytic = expected_sra(c, c.base_intensity);
        CHECK(std::abs(mean - analytic) < 3.0 * se);
        CHECK(s.intensity(10.0, 90.0, 7) == c.base_intensity);
    }

    TEST_CASE("same seed gives byte-identical streams")
    {
        SyntheticConfig c;
        c.days = 10;
        auto dump = [&] {
            std::ostringstream os;
            write_survey_csv(os, generate_synthetic(c).records);
            return os.str();
        };
        CHECK(dump() == dump());
        const std::string first = dump();
        c.seed = 2;
        CHECK(dump() != first);
    }

    TEST_CASE("record count and date range")
    {
        SyntheticConfig c;
        c.days = 50;
        c.responses_per_day = 100;
        const SyntheticSurvey s = generate_synthetic(c);
        REQUIRE(s.records.size() == 5000);
        for (int d = 0; d < 50; ++d) {
            CHECK(std::count_if(s.records.begin(), s.records.end(), [d](auto& r) { return r.date == d; }) == 100);
        }
        const Bounds2d b = c.bounds;
        CHECK(std::all_of(s.records.begin(), s.records.end(), [&](auto& r) { return b.contains(r.x, r.y); }));
    }

    TEST_CASE("per-cell mean SRA correlates positively with the intensity")
    {
        SyntheticConfig c;
        c.days = 30;
        c.seed = 3;
        const SyntheticSurvey s = generate_synthetic(c);
        constexpr int n = 10;
        std::vector<double> sra_sum(n * n * 30, 0.0), count(n * n * 30, 0.0);
        for (const auto& r : s.records) {
            const int col = std::min(n - 1, static_cast<int>(r.x / 100.0 * n));
            const int row = std::min(n - 1, static_cast<int>(r.y / 100.0 * n));
            const auto idx = static_cast<std::size_t>((r.date * n + row) * n + col);
            sra_sum[idx] += compute_sra(r);
            count[idx] += 1.0;
        }
        std::vector<double> a, b;
        for (int t = 0; t < 30; ++t) {
            for (int row = 0; row < n; ++row) {
                for (int col = 0; col < n; ++col) {
                    const auto idx = static_cast<std::size_t>((t * n + row) * n + col);
                    if (count[idx] > 0) {
                        a.push_back(sra_sum[idx] / count[idx]);
                        b.push_back(s.intensity((col + 0.5) * 10.0, (row + 0.5) * 10.0, t));
                    }
                }
            }
        }
        const Eigen::Map<Eigen::ArrayXd> x(a.data(), static_cast<Eigen::Index>(a.size()));
        const Eigen::Map<Eigen::ArrayXd> y(b.data(), static_cast<Eigen::Index>(b.size()));
        const double cov = ((x - x.mean()) * (y - y.mean())).mean();
        const double corr = cov / std::sqrt((x - x.mean()).square().mean() * (y - y.mean()).square().mean());
        MESSAGE("cell SRA vs intensity correlation " << corr);
        CHECK(corr > 0.3);
    }

    TEST_CASE("invalid configurations are rejected")
    {
        SyntheticConfig c;
        c.days = 0;
        CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
        c = SyntheticConfig{};
        c.profile_mix[0].weight += 0.1;
        CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
        c = SyntheticConfig{};
        c.bounds.x_max = c.bounds.x_min;
        CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
    }
}
