#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "firerisk/discovery.hpp"
#include "firerisk/features.hpp"
#include "firerisk/linkage.hpp"
#include "firerisk/model.hpp"
#include "firerisk/pipeline.hpp"
#include "firerisk/risk.hpp"
#include "firerisk/synth.hpp"
#include "json.hpp"

namespace firerisk::cli {

/// Invalid or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    nlohmann::json effective;  // the config document after flag overrides

    std::filesystem::path dataDir;
    std::filesystem::path outDir;
    std::uint64_t seed = 1;

    synth::SynthConfig synth;
    std::optional<double> fireRate;  // recalibrates the synthetic bias when set

    linkage::LinkConfig link;
    features::FeatureSchema schema;
    std::optional<std::filesystem::path> schemaPath;

    std::vector<pipeline::Window> windows;  // evaluate: every window; train: the last
    bool perYear = false;
    std::size_t folds = 10;
    model::GridSpec grid;
    bool evalForest = true;
    bool evalLogistic = true;
    bool shuffleLabels = false;
    std::size_t topWeights = 10;
    model::Algorithm scoreModel = model::Algorithm::RandomForest;

    Date scoreDate = make_date(2015, 7, 1);
    risk::Mapping mapping = risk::Mapping::Affine;

    discovery::DiscoveryConfig discovery;
    bool potentialShortList = false;

    std::optional<std::filesystem::path> cityBoundary;
    std::vector<std::filesystem::path> overlays;

    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path staticDir;

    /// FNV-1a of the effective config serialized with sorted keys.
    std::string digest() const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> outDir;
    std::optional<int> port;
};

/// Unknown keys are rejected. Relative cityBoundary and overlay paths resolve
/// against dataDir; other paths against the working directory.
PipelineConfig parse_config(nlohmann::json doc, const Overrides& overrides = {});
PipelineConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

}  // namespace firerisk::cli
