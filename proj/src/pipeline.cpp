#include "firerisk/pipeline.hpp"

#include <algorithm>

namespace firerisk::pipeline {

using ingest::Dataset;

namespace {

const std::vector<ingest::SourceRecord>& records_of(const Records& records, Dataset d) {
    static const std::vector<ingest::SourceRecord> none;
    auto it = records.find(d);
    return it == records.end() ? none : it->second;
}

std::vector<model::ModelParams> with_seed(std::vector<model::ModelParams> cells, std::uint64_t seed) {
    for (auto& c : cells)
        if (auto f = std::get_if<model::ForestParams>(&c)) f->seed = seed;
    return cells;
}

}  // namespace

ModelData prepare(const Records& records, const linkage::LinkConfig& cfg) {
    const auto& parcels = records_of(records, Dataset::Parcel);
    const auto& costar = records_of(records, Dataset::Costar);
    if (costar.empty()) throw Error(Errc::MissingData, "no COSTAR records: the model set is empty");
    return attach_events(features::model_properties(parcels, costar, cfg), records, cfg);
}

ModelData attach_events(std::vector<linkage::PropertyRecord> properties, const Records& records,
                        const linkage::LinkConfig& cfg) {
    ModelData d;
    d.properties = std::move(properties);
    auto eventCfg = cfg;
    eventCfg.requireNameWithGeo = false;
    auto inc = features::link_events(records_of(records, Dataset::FireIncidents), d.properties, eventCfg);
    d.incidents = std::move(inc.linked);
    d.unmatchedIncidents = inc.unmatched.size();
    auto insp = features::link_events(records_of(records, Dataset::FirePermits), d.properties, eventCfg);
    d.inspections = features::histories(insp.linked);
    d.unmatchedInspections = insp.unmatched.size();
    return d;
}

void check_windows(std::span<const Window> windows) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        if (!w.train.valid() || !w.test.valid()) throw Error(Errc::Leakage, "empty train or test window");
        if (w.test.start < w.train.end)
            throw Error(Errc::Leakage, "train window " + format_date(w.train.start) + ".." + format_date(w.train.end) +
                                           " reaches into test window starting " + format_date(w.test.start));
        if (i > 0 && w.test.start < windows[i - 1].test.end)
            throw Error(Errc::Leakage, "test windows overlap or are out of order");
    }
}

Rows labelled_rows(const ModelData& data, const features::FeatureSchema& schema, const TimeWindow& window,
                   bool perYear) {
    if (perYear) {
        auto years = features::yearly_windows(window);
        auto ex = features::per_year_expansion(data.properties, schema, data.incidents, data.inspections, years);
        return {std::move(ex.raw), std::move(ex.labels)};
    }
    Rows r;
    r.raw = features::extract(data.properties, schema, window.start, data.inspections);
    r.labels = features::build_labels(data.incidents, r.raw.propertyIds, window);
    return r;
}

Split train_test(const ModelData& data, const features::FeatureSchema& schema, const Window& window, bool perYear) {
    check_windows(std::span(&window, 1));
    auto tr = labelled_rows(data, schema, window.train, perYear);
    auto te = labelled_rows(data, schema, window.test, false);
    Split s;
    s.encoder = features::fit_encoder(schema, tr.raw);
    s.train = features::encode(s.encoder, tr.raw);
    s.trainLabels = std::move(tr.labels);
    s.test = features::encode(s.encoder, te.raw);
    s.testLabels = std::move(te.labels);
    return s;
}

model::EvalReport evaluate_window(const Split& split, const Window& window, const std::vector<model::ModelParams>& cells,
                                  const BacktestOptions& opt, model::Model* fitted) {
    auto seeded = with_seed(cells, opt.seed);
    auto y = split.trainLabels;
    if (opt.shuffleLabels) {
        Rng rng(opt.seed ^ 0x5f1eULL);
        for (std::size_t i = y.size(); i > 1; --i) std::swap(y[i - 1], y[static_cast<std::size_t>(rng.index(i))]);
    }
    auto grid = model::grid_search_cv(split.train.values, y, seeded, opt.folds, opt.seed);
    auto m = model::fit(grid.best, split.train.values, y, split.train.columnNames);
    auto scores = model::predict_proba(m, split.test.values, split.test.columnNames);
    auto report = model::evaluate_scores(scores, split.testLabels);
    report.model = std::string(model::to_string(m.algorithm()));
    report.trainWindow = window.train;
    report.testWindow = window.test;
    report.nTrain = y.size();
    report.trainPositives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    report.params = model::params_json(grid.best);
    report.cellAuc = grid.cellAuc;
    if (auto f = std::get_if<model::RandomForestModel>(&m.m)) {
        report.importances = model::feature_importance(*f);
    } else {
        auto w = model::logistic_weight_report(std::get<model::LogisticModel>(m.m), opt.topWeights);
        report.importances = w.positive;
        report.importances.insert(report.importances.end(), w.negative.begin(), w.negative.end());
    }
    if (fitted) *fitted = std::move(m);
    return report;
}

std::vector<model::EvalReport> yearly_backtest(const ModelData& data, std::span<const Window> windows,
                                               const BacktestOptions& opt) {
    check_windows(windows);
    std::vector<model::EvalReport> out;
    for (const auto& w : windows) {
        auto split = train_test(data, opt.schema, w, opt.perYear);
        if (opt.forest) out.push_back(evaluate_window(split, w, opt.grid.forest_cells(), opt));
        if (opt.logistic) out.push_back(evaluate_window(split, w, opt.grid.logistic_cells(), opt));
    }
    return out;
}

std::vector<Window> growing_windows(const Date& testStart, int maxYears) {
    std::vector<Window> out;
    for (int y = 1; y <= maxYears; ++y)
        out.push_back({{add_years(testStart, -y), testStart}, {testStart, add_years(testStart, 1)}});
    return out;
}

}  // namespace firerisk::pipeline
