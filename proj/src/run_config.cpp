#include "symptomcast/run_config.hpp"

#include "symptomcast/config.hpp"
#include "symptomcast/errors.hpp"

#include <fstream>
#include <sstream>

namespace symptomcast {

namespace {

constexpr int kDefaultEpochs = 5;

std::vector<std::string> split(const std::string& text, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, sep)) {
        out.push_back(item);
    }
    if (!text.empty() && text.back() == sep) {
        out.emplace_back();
    }
    return out;
}

// Reuses the KeyValue converters so errors carry the line number.
KeyValue sub(const KeyValue& kv, std::string value) { return {kv.key, std::move(value), kv.line}; }

std::string join_seeds(const std::vector<std::uint64_t>& seeds)
{
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        out += (i ? "," : "") + std::to_string(seeds[i]);
    }
    return out;
}

[[noreturn]] void bad(const KeyValue& kv, const std::string& what)
{
    throw ConfigError("line " + std::to_string(kv.line) + ": " + kv.key + ": " + what);
}

void apply(RunConfig& rc, const KeyValue& kv)
{
    SyntheticConfig& s = rc.synthetic;
    ExperimentConfig& e = rc.experiment;
    const std::string& k = kv.key;
    auto as_int = [&] { return static_cast<int>(to_int(kv)); };

    if (k == "days") {
        s.days = as_int();
    } else if (k == "responses_per_day") {
        s.responses_per_day = as_int();
    } else if (k == "n_hotspots") {
        s.n_hotspots = as_int();
    } else if (k == "hotspot_drift") {
        s.hotspot_drift = to_double(kv);
    } else if (k == "hotspot_width") {
        s.hotspot_width = to_double(kv);
    } else if (k == "hotspot_amplitude") {
        s.hotspot_amplitude = to_double(kv);
    } else if (k == "base_intensity") {
        s.base_intensity = to_double(kv);
    } else if (k == "isolation_p") {
        s.isolation_p = to_double(kv);
    } else if (k == "profile_mix") {
        try {
            s.profile_mix = parse_profile_mix(kv.value);
        } catch (const ConfigError& err) {
            bad(kv, err.what());
        }
    } else if (k == "synthetic_seed") {
        s.seed = to_uint64(kv);
    } else if (k == "x_min") {
        s.bounds.x_min = to_double(kv);
    } else if (k == "x_max") {
        s.bounds.x_max = to_double(kv);
    } else if (k == "y_min") {
        s.bounds.y_min = to_double(kv);
    } else if (k == "y_max") {
        s.bounds.y_max = to_double(kv);
    } else if (k == "grid_rows") {
        e.grid_rows = to_int(kv);
    } else if (k == "grid_cols") {
        e.grid_cols = to_int(kv);
    } else if (k == "interpolation") {
        if (kv.value == "nearest") {
            e.interpolation = Interpolation::nearest;
        } else if (kv.value == "inverse_distance") {
            e.interpolation = Interpolation::inverse_distance;
        } else {
            bad(kv, "expected nearest or inverse_distance");
        }
    } else if (k == "clusters") {
        e.clusters = as_int();
    } else if (k == "profile_seed") {
        e.profile_seed = to_uint64(kv);
    } else if (k == "gmm_max_iters") {
        e.gmm_max_iters = as_int();
    } else if (k == "gmm_tol") {
        e.gmm_tol = to_double(kv);
    } else if (k == "test_days") {
        e.test_days = as_int();
    } else if (k == "folds") {
        e.folds = as_int();
    } else if (k == "seeds") {
        e.seeds.clear();
        for (const auto& item : split(kv.value, ',')) {
            e.seeds.push_back(to_uint64(sub(kv, item)));
        }
    } else if (k == "evaluate_test") {
        e.evaluate_test = to_bool(kv);
    } else if (k == "include_null") {
        e.include_null = to_bool(kv);
    } else if (k == "null_seed") {
        e.null_seed = to_uint64(kv);
    } else if (k == "input_channels") {
        bad(kv, "derived from mode and clusters, not settable");
    } else if (!e.model.apply(kv)) {
        bad(kv, "unknown key");
    }
}

} // namespace

std::string format_profile_mix(const std::vector<ProfileSpec>& mix)
{
    std::string out;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const ProfileSpec& p = mix[i];
        if (i) {
            out += ';';
        }
        out += format_double(p.weight) + ':';
        for (std::size_t j = 0; j < p.propensity.size(); ++j) {
            out += (j ? "," : "") + format_double(p.propensity[j]);
        }
        out += ':' + format_double(p.age_mean) + ':' + format_double(p.age_sd) + ':' + format_double(p.smoker_p) +
               ':' + format_double(p.chronic_p);
    }
    return out;
}

// weight:propensities:age_mean:age_sd:smoker_p:chronic_p, profiles separated
// by ';'. A single propensity applies to all symptoms.
std::vector<ProfileSpec> parse_profile_mix(const std::string& text)
{
    std::vector<ProfileSpec> mix;
    for (const auto& entry : split(text, ';')) {
        const auto f = split(entry, ':');
        if (f.size() != 6) {
            throw ConfigError("profile entry '" + entry + "' needs 6 ':'-separated fields");
        }
        const KeyValue kv{"profile_mix", "", 0};
        ProfileSpec p;
        p.weight = to_double(sub(kv, f[0]));
        const auto probs = split(f[1], ',');
        if (probs.size() == 1) {
            p.propensity.fill(to_double(sub(kv, probs[0])));
        } else if (probs.size() == p.propensity.size()) {
            for (std::size_t j = 0; j < probs.size(); ++j) {
                p.propensity[j] = to_double(sub(kv, probs[j]));
            }
        } else {
            throw ConfigError("profile entry '" + entry + "' needs 1 or 9 propensities");
        }
        p.age_mean = to_double(sub(kv, f[2]));
        p.age_sd = to_double(sub(kv, f[3]));
        p.smoker_p = to_double(sub(kv, f[4]));
        p.chronic_p = to_double(sub(kv, f[5]));
        mix.push_back(p);
    }
    if (mix.empty()) {
        throw ConfigError("profile_mix is empty");
    }
    return mix;
}

RunConfig::RunConfig()
{
    experiment.patch = PatchConfig{10, 10, 2};
    experiment.model.patch = experiment.patch;
    experiment.model.epochs = kDefaultEpochs;
}

void RunConfig::finalize()
{
    ExperimentConfig& e = experiment;
    ModelConfig& m = e.model;
    e.bounds = synthetic.bounds;
    m.grid_rows = e.grid_rows;
    m.grid_cols = e.grid_cols;
    m.input_channels = m.mode == ModelMode::raw_features ? kSlotSize : static_cast<Index>(e.clusters) * kSlotSize;
    if (m.patch) {
        e.patch = *m.patch;
    }

    validate(synthetic);
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError(what);
        }
    };
    require(e.grid_rows >= 1 && e.grid_cols >= 1, "grid must be at least 1x1");
    require(e.clusters >= 1, "clusters must be >= 1");
    require(e.gmm_max_iters >= 1, "gmm_max_iters must be >= 1");
    require(e.gmm_tol >= 0.0, "gmm_tol must be >= 0");
    require(e.test_days >= 1, "test_days must be >= 1");
    require(e.folds >= 1, "folds must be >= 1");
    require(!e.seeds.empty(), "seeds must list at least one seed");
    require(e.patch.rows >= 1 && e.patch.cols >= 1 && e.patch.stride >= 1, "patch sizes must be positive");
    m.validate();
}

void RunConfig::write(std::ostream& os) const
{
    const SyntheticConfig& s = synthetic;
    const ExperimentConfig& e = experiment;
    os << "days=" << s.days << '\n'
       << "responses_per_day=" << s.responses_per_day << '\n'
       << "n_hotspots=" << s.n_hotspots << '\n'
       << "hotspot_drift=" << format_double(s.hotspot_drift) << '\n'
       << "hotspot_width=" << format_double(s.hotspot_width) << '\n'
       << "hotspot_amplitude=" << format_double(s.hotspot_amplitude) << '\n'
       << "base_intensity=" << format_double(s.base_intensity) << '\n'
       << "isolation_p=" << format_double(s.isolation_p) << '\n'
       << "profile_mix=" << format_profile_mix(s.profile_mix) << '\n'
       << "synthetic_seed=" << s.seed << '\n'
       << "x_min=" << format_double(s.bounds.x_min) << '\n'
       << "x_max=" << format_double(s.bounds.x_max) << '\n'
       << "y_min=" << format_double(s.bounds.y_min) << '\n'
       << "y_max=" << format_double(s.bounds.y_max) << '\n'
       << "grid_rows=" << e.grid_rows << '\n'
       << "grid_cols=" << e.grid_cols << '\n'
       << "interpolation=" << (e.interpolation == Interpolation::nearest ? "nearest" : "inverse_distance") << '\n'
       << "clusters=" << e.clusters << '\n'
       << "profile_seed=" << e.profile_seed << '\n'
       << "gmm_max_iters=" << e.gmm_max_iters << '\n'
       << "gmm_tol=" << format_double(e.gmm_tol) << '\n'
       << "test_days=" << e.test_days << '\n'
       << "folds=" << e.folds << '\n'
       << "seeds=" << join_seeds(e.seeds) << '\n'
       << "evaluate_test=" << (e.evaluate_test ? "true" : "false") << '\n'
       << "include_null=" << (e.include_null ? "true" : "false") << '\n'
       << "null_seed=" << e.null_seed << '\n';
    // model keys, minus the ones shared with the run config above
    std::ostringstream model;
    e.model.write(model);
    std::istringstream lines(model.str());
    for (std::string line; std::getline(lines, line);) {
        const std::string key = line.substr(0, line.find('='));
        if (key != "input_channels" && key != "grid_rows" && key != "grid_cols") {
            os << line << '\n';
        }
    }
}

std::string RunConfig::echo() const
{
    std::ostringstream os;
    write(os);
    return os.str();
}

RunConfig parse_run_config(std::istream& is)
{
    RunConfig rc;
    for (const KeyValue& kv : parse_key_values(is)) {
        apply(rc, kv);
    }
    rc.finalize();
    return rc;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    return parse_run_config(in);
}

} // namespace symptomcast
