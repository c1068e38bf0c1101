#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "firerisk/features.hpp"
#include "firerisk/ingest.hpp"
#include "firerisk/linkage.hpp"
#include "firerisk/model.hpp"

namespace firerisk::pipeline {

enum class Errc { Leakage, MissingData };
using Error = CodedError<Errc>;

using Records = std::map<ingest::Dataset, std::vector<ingest::SourceRecord>>;

/// Model set plus the events linked to it.
struct ModelData {
    std::vector<linkage::PropertyRecord> properties;
    std::vector<features::LinkedEvent> incidents;
    features::Histories inspections;
    std::size_t unmatchedIncidents = 0;
    std::size_t unmatchedInspections = 0;
};

/// Links PARCEL and COSTAR into the model set, then attaches incidents and
/// permits many-to-one (no name required for geo matches).
ModelData prepare(const Records& records, const linkage::LinkConfig& cfg);
/// The event half of prepare, for a model set built earlier.
ModelData attach_events(std::vector<linkage::PropertyRecord> properties, const Records& records,
                        const linkage::LinkConfig& cfg);

struct Window {
    TimeWindow train;
    TimeWindow test;
};

/// Throws Leakage unless each train window ends by its test start and test
/// windows are chronological and disjoint.
void check_windows(std::span<const Window> windows);

struct Rows {
    features::RawTable raw;
    std::vector<int> labels;
};

/// Non-expanded: one row per property, features as of window.start, label from
/// the window. Expanded: one row per property and year of the window.
Rows labelled_rows(const ModelData& data, const features::FeatureSchema& schema, const TimeWindow& window,
                   bool perYear);

struct Split {
    features::Encoder encoder;
    features::FeatureMatrix train;
    std::vector<int> trainLabels;
    features::FeatureMatrix test;
    std::vector<int> testLabels;
};

/// Encoder fitted on the train rows only.
Split train_test(const ModelData& data, const features::FeatureSchema& schema, const Window& window, bool perYear);

struct BacktestOptions {
    features::FeatureSchema schema = features::default_schema();
    model::GridSpec grid;
    std::size_t folds = 10;
    std::uint64_t seed = 1;
    bool perYear = false;
    bool forest = true;
    bool logistic = true;
    bool shuffleLabels = false;  // control run: training labels permuted
    std::size_t topWeights = 10;
};

/// Grid search on the train side, refit of the best cell, evaluation on the test
/// side. Model parameters that carry a seed get options.seed.
model::EvalReport evaluate_window(const Split& split, const Window& window, const std::vector<model::ModelParams>& cells,
                                  const BacktestOptions& opt, model::Model* fitted = nullptr);

/// One report per (window, model), forest first.
std::vector<model::EvalReport> yearly_backtest(const ModelData& data, std::span<const Window> windows,
                                               const BacktestOptions& opt);

/// Windows with 1..maxYears of training ending at testStart, each tested on [testStart, testStart + 1y).
std::vector<Window> growing_windows(const Date& testStart, int maxYears);

}  // namespace firerisk::pipeline
