#ifndef SYMPTOMCAST_RUN_CONFIG_HPP
#define SYMPTOMCAST_RUN_CONFIG_HPP

#include "symptomcast/harness.hpp"
#include "symptomcast/survey.hpp"

#include <iosfwd>
#include <string>

namespace symptomcast {

// Everything a CLI run can be configured with, read from key=value text.
// Grid, bounds and channel counts are shared: the model's input channels
// follow from the mode and the cluster count.
struct RunConfig {
    SyntheticConfig synthetic;
    ExperimentConfig experiment;

    // Library defaults, except training: overlapping 10x10 patches (stride 2)
    // and a short schedule.
    RunConfig();

    ModelConfig& model() { return experiment.model; }
    const ModelConfig& model() const { return experiment.model; }

    // Propagates shared fields and validates everything; throws ConfigError.
    void finalize();

    // Canonical key=value echo; parse() of it gives back the same config.
    void write(std::ostream& os) const;
    std::string echo() const;
};

// Unknown keys, bad values and inconsistent settings throw ConfigError.
RunConfig parse_run_config(std::istream& is);
RunConfig load_run_config(const std::string& path);

std::string format_profile_mix(const std::vector<ProfileSpec>& mix);
std::vector<ProfileSpec> parse_profile_mix(const std::string& text);

} // namespace symptomcast

#endif
