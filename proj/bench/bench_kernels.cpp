#include <benchmark/benchmark.h>

#include "firerisk/linkage.hpp"
#include "firerisk/model.hpp"
#include "firerisk/synth.hpp"

using namespace firerisk;

namespace {

struct ForestData {
    Matrix X;
    std::vector<int> y;
};

const ForestData& forest_data() {
    static const ForestData d = [] {
        ForestData f;
        const std::size_t n = 3000, cols = 40;
        f.X = Matrix(n, cols);
        Rng rng(7);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < cols; ++j) f.X(i, j) = rng.normal();
            double z = 1.5 * f.X(i, 0) - f.X(i, 1) + 0.5 * rng.normal();
            f.y.push_back(z > 1.0 ? 1 : 0);
        }
        return f;
    }();
    return d;
}

struct LinkData {
    std::vector<ingest::SourceRecord> left, right;
    std::vector<linkage::Linkable> lv, rv;
    std::vector<linkage::CandidatePair> pairs;
};

const LinkData& link_data() {
    static const LinkData d = [] {
        LinkData l;
        synth::SynthConfig cfg;
        cfg.seed = 3;
        cfg.nProperties = 3000;
        cfg.corruption = {0.1, 0.3, 25.0};
        auto out = synth::synth_generate(cfg);
        l.left = out.records.at(ingest::Dataset::Parcel);
        l.right = out.records.at(ingest::Dataset::BusinessLicense);
        l.lv = linkage::views(l.left);
        l.rv = linkage::views(l.right);
        l.pairs = linkage::block_candidates(l.lv, l.rv, {});
        return l;
    }();
    return d;
}

model::ForestParams forest_params() {
    model::ForestParams p;
    p.nTrees = 32;
    p.maxDepth = 10;
    return p;
}

void BM_ForestSerial(benchmark::State& state) {
    const auto& d = forest_data();
    for (auto _ : state) benchmark::DoNotOptimize(model::train_forest_serial(d.X, d.y, forest_params()));
}

void BM_ForestParallel(benchmark::State& state) {
    const auto& d = forest_data();
    for (auto _ : state) benchmark::DoNotOptimize(model::train_forest(d.X, d.y, forest_params()));
}

void BM_ScoreCandidatesSerial(benchmark::State& state) {
    const auto& d = link_data();
    for (auto _ : state) benchmark::DoNotOptimize(linkage::score_candidates_serial(d.lv, d.rv, d.pairs, {}));
    state.counters["pairs"] = static_cast<double>(d.pairs.size());
}

void BM_ScoreCandidatesParallel(benchmark::State& state) {
    const auto& d = link_data();
    for (auto _ : state) benchmark::DoNotOptimize(linkage::score_candidates(d.lv, d.rv, d.pairs, {}));
    state.counters["pairs"] = static_cast<double>(d.pairs.size());
}

}  // namespace

BENCHMARK(BM_ForestSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForestParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ScoreCandidatesSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreCandidatesParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
