#pragma once

// Flat "key = value" run configuration shared by every subcommand.

#include <cstdint>
#include <string>
#include <vector>

#include "ssa/data.hpp"
#include "ssa/trainer.hpp"

namespace ssa {

struct SensorSpec {
    int bands = 0;      // C
    int msi_bands = 0;  // c
};

struct DataConfig {
    std::vector<SensorSpec> sensors = {{5, 2}, {9, 3}, {31, 3}};
    int scale = 2;
    int patch = 32;
    int stride = 32;
    int images = 4;
    int image_size = 128;
    double smoothness = kDefaultSmoothness;
};

struct RunConfig {
    DataConfig data;
    TrainConfig train;  // "seed" maps to train.seed; train.model holds the model.* keys

    /// Cross-field checks (c <= C, C + c <= c_max, divisibility, train/model ranges).
    void validate() const;
};

/// Parses "key = value" lines; '#' starts a comment. Unknown keys, duplicate
/// keys and malformed values throw ConfigError naming the source and line.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

/// Applies one "key=value" override.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its resolved value, one per line, in a fixed order.
std::string to_text(const RunConfig& cfg);

/// All recognised keys in to_text order.
std::vector<std::string> run_config_keys();

/// Bucket recipes for the configured sensors; ids look like "c5_m2".
std::vector<BucketSpec> bucket_specs(const RunConfig& cfg);

std::string bucket_id(int bands, int msi_bands);

}  // namespace ssa
