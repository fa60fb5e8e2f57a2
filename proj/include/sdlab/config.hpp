#pragma once

#include <string>

#include <json.hpp>

#include "sdlab/denoiser.hpp"
#include "sdlab/optimizer.hpp"

namespace sdlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json load_json_file(const std::string& path);

/// Builds a full experiment from a config document (sections: schedule, prior,
/// views, guidance, run, metrics). Throws ConfigError naming the offending
/// field. Loads the denoiser checkpoint when prior.kind == "learned".
Experiment experiment_from_json(const nlohmann::json& cfg);

/// Overrides applied by sweep / CLI flags before building.
void set_variant(nlohmann::json& cfg, const std::string& variant);
void set_seed(nlohmann::json& cfg, uint64_t seed);

struct TrainPriorJob {
    NoiseSchedule sched;
    GmmPrior prior;
    PretrainConfig pretrain;
    int width = 128;
    int adapter_hidden = 32;
    std::string checkpoint_out;
    std::string loss_curve_out;
};

TrainPriorJob train_job_from_json(const nlohmann::json& cfg);

}  // namespace sdlab
