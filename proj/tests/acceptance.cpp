// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <omp.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "firerisk/pipeline.hpp"
#include "firerisk/risk.hpp"
#include "firerisk/service.hpp"
#include "firerisk/synth.hpp"
#include "fixtures.hpp"
#include "httplib.h"
#include "link_quality.hpp"
#include "oracles.hpp"

using namespace firerisk;
using ingest::Dataset;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int gFailures = 0;

void criterion(const std::string& name, double maxSeconds, const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool timely = maxSeconds <= 0 || secs < maxSeconds;
    bool pass = o.pass && timely;
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << timing;
    if (maxSeconds > 0) std::cout << " / limit " << maxSeconds << "s";
    std::cout << "]" << std::endl;
    if (!pass) ++gFailures;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------

Outcome auc_oracle() {
    Rng rng(101);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        std::size_t n = 2 + rng.index(199);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = std::round(rng.uniform() * 20) / 20;  // coarse grid forces ties
            y[k] = rng.bernoulli(0.3);
        }
        y[0] = 1;
        y[1] = 0;
        double got = model::roc_and_auc(s, y).auc;
        worst = std::max(worst, std::abs(got - oracles::concordance_auc(s, y)));
    }
    return {worst <= 1e-9, "100 instances, n <= 200, max |AUC - concordance| = " + std::to_string(worst)};
}

// Every 1-D dataset of at most 6 points up to monotone relabelling of x and row
// order: k distinct values with multiplicities c_j and p_j positives each.
Outcome tree_oracle() {
    std::size_t checked = 0, mismatches = 0;
    Rng rng(0), shuffle(5);
    std::function<void(std::vector<int>&, int)> compositions;
    std::vector<std::vector<int>> all;
    for (int n = 1; n <= 6; ++n) {
        std::vector<int> parts;
        std::function<void(int)> rec = [&](int left) {
            if (left == 0) {
                all.push_back(parts);
                return;
            }
            for (int c = 1; c <= left; ++c) {
                parts.push_back(c);
                rec(left - c);
                parts.pop_back();
            }
        };
        rec(n);
    }
    for (const auto& counts : all) {
        std::vector<int> pos(counts.size(), 0);
        for (;;) {
            std::vector<double> xs;
            std::vector<int> y;
            for (std::size_t j = 0; j < counts.size(); ++j)
                for (int r = 0; r < counts[j]; ++r) {
                    xs.push_back(0.37 * double(j * j) - 1.5);
                    y.push_back(r < pos[j] ? 1 : 0);
                }
            for (std::size_t i = xs.size(); i > 1; --i) {
                auto k = shuffle.index(i);
                std::swap(xs[i - 1], xs[k]);
                std::swap(y[i - 1], y[k]);
            }
            Matrix X(xs.size(), 1);
            for (std::size_t i = 0; i < xs.size(); ++i) X(i, 0) = xs[i];
            auto expected = oracles::best_gini_threshold(xs, y);
            auto t = model::train_tree(X, y, {}, rng);
            bool ok = expected ? (!t.nodes[0].is_leaf() && t.nodes[0].threshold == *expected) : t.nodes[0].is_leaf();
            mismatches += !ok;
            ++checked;
            std::size_t j = 0;
            while (j < counts.size() && pos[j] == counts[j]) pos[j++] = 0;
            if (j == counts.size()) break;
            ++pos[j];
        }
    }
    return {mismatches == 0 && checked > 0,
            std::to_string(checked) + " datasets, " + std::to_string(mismatches) + " root mismatches"};
}

Outcome logistic_gradient() {
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(1000 + seed);
        std::size_t n = 3 + rng.index(10), d = 1 + rng.index(8);
        Matrix X(n, d);
        for (auto& v : X.data) v = rng.uniform(-2, 2);
        std::vector<int> y(n);
        for (auto& v : y) v = rng.bernoulli(0.5);
        std::vector<double> w(d);
        for (auto& v : w) v = rng.uniform(-1, 1);
        double b = rng.uniform(-1, 1), l2 = rng.uniform(0, 0.5);
        unsigned pw = 1 + unsigned(seed % 3);
        auto g = model::logistic_gradient(X, y, w, b, l2, pw);
        auto fd = oracles::finite_difference_gradient(
            [&](std::span<const double> ww, double bb) { return model::logistic_loss(X, y, ww, bb, l2, pw); }, w, b);
        worst = std::max(worst, oracles::max_relative_error(g.w, g.b, fd.first, fd.second));
    }
    return {worst < 1e-5, "20 instances, max relative error " + std::to_string(worst)};
}

Outcome feature_expansion() {
    using namespace features;
    FeatureSchema s;
    s.variables.push_back({"zip", Kind::Categorical, false, false, std::string(kZipSource)});
    s.variables.push_back({"ptype", Kind::Categorical});
    for (int i = 0; i < 20; ++i) s.variables.push_back({"n" + std::to_string(i), Kind::Numeric, true, true});
    for (int i = 0; i < 5; ++i) s.variables.push_back({"b" + std::to_string(i), Kind::Binary});

    std::vector<linkage::PropertyRecord> props;
    for (int i = 0; i < 120; ++i) {
        linkage::PropertyRecord p;
        p.propertyId = "P" + std::to_string(1000 + i);
        p.canonicalAddress = address::normalize_address("1 Main St " + std::to_string(30301 + i % 37));
        p.attributes["ptype"] = "TYPE-" + std::to_string(i % 8);
        if (i % 3) p.attributes["n0"] = double(i);
        props.push_back(std::move(p));
    }
    auto enc = fit_encoder(s, extract(props, s, make_date(2015, 1, 1)));
    bool widthOk = enc.width() == 37 + 8 + 40 + 5 && enc.categories[0].size() == 37;

    linkage::PropertyRecord noZip;
    noZip.propertyId = "NOZIP";
    noZip.canonicalAddress = address::normalize_address("5 Elm St");
    linkage::PropertyRecord unseen = noZip;
    unseen.propertyId = "UNSEEN";
    unseen.canonicalAddress = address::normalize_address("5 Elm St 39999");
    std::vector<linkage::PropertyRecord> probe{props[0], noZip, unseen};
    auto m = encode(enc, extract(probe, s, make_date(2015, 1, 1)));
    auto zipSum = [&](std::size_t r) {
        double t = 0;
        for (std::size_t c = 0; c < 37; ++c) t += m.values(r, c);
        return t;
    };
    bool zipOk = zipSum(0) == 1.0 && m.values(0, 0) == 1.0 && zipSum(1) == 0.0 && zipSum(2) == 0.0;
    return {widthOk && zipOk, "width " + std::to_string(enc.width()) + " (expected 90); zip columns " +
                                  std::to_string(enc.categories[0].size()) + "; missing/unseen zip rows all zero: " +
                                  (zipSum(1) == 0.0 && zipSum(2) == 0.0 ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// Planted-signal corpora shared by the recovery and trend criteria.

struct SeedRun {
    pipeline::ModelData data;
    double auc = 0, tpr = 0, shuffledAuc = 0;
};

std::vector<SeedRun> gRuns;

synth::SynthConfig planted_config(std::uint64_t seed) {
    synth::SynthConfig sc;
    sc.seed = seed;
    sc.nProperties = 5000;
    sc.signal.weights = {{"floor_size", 1.2}, {"num_units", 0.6}};
    sc.signal.bias = synth::calibrate_bias(sc, 0.06);
    return sc;
}

std::vector<model::ModelParams> forest_cell(std::uint64_t seed) {
    model::ForestParams p;
    p.nTrees = 100;
    p.maxDepth = 10;
    p.seed = seed;
    return {p};
}

model::EvalReport run_window(const pipeline::ModelData& data, const pipeline::Window& w, std::uint64_t seed,
                             bool shuffle) {
    pipeline::BacktestOptions opt;
    opt.seed = seed;
    opt.logistic = false;
    opt.shuffleLabels = shuffle;
    auto split = pipeline::train_test(data, opt.schema, w, false);
    return pipeline::evaluate_window(split, w, forest_cell(seed), opt);
}

const pipeline::Window kThreeYear{{make_date(2011, 7, 1), make_date(2014, 7, 1)},
                                  {make_date(2014, 7, 1), make_date(2015, 7, 1)}};

Outcome synthetic_recovery() {
    std::vector<double> aucs, tprs, shuffled;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto out = synth::synth_generate(planted_config(seed));
        SeedRun r;
        r.data = pipeline::prepare(out.records, {});
        auto rep = run_window(r.data, kThreeYear, seed, false);
        r.auc = rep.auc;
        r.tpr = rep.tprAtFpr.at(0.2);
        r.shuffledAuc = run_window(r.data, kThreeYear, seed, true).auc;
        aucs.push_back(r.auc);
        tprs.push_back(r.tpr);
        shuffled.push_back(r.shuffledAuc);
        gRuns.push_back(std::move(r));
    }
    double mAuc = median(aucs), mTpr = median(tprs);
    bool controlOk = std::all_of(shuffled.begin(), shuffled.end(), [](double a) { return a >= 0.4 && a <= 0.6; });
    std::string controls;
    for (double a : shuffled) controls += (controls.empty() ? "" : ",") + fmt(a);
    return {mAuc >= 0.80 && mTpr >= 0.55 && controlOk,
            "5 seeds x 5000 properties; median RF AUC " + fmt(mAuc) + " (>= 0.80), median TPR@FPR=0.2 " + fmt(mTpr) +
                " (>= 0.55); shuffled-label AUCs [" + controls + "] within [0.4, 0.6]"};
}

Outcome backtest_trend() {
    if (gRuns.size() != 5) return {false, "planted-signal corpora unavailable"};
    auto windows = pipeline::growing_windows(make_date(2014, 7, 1), 3);
    std::vector<std::vector<double>> perYears(3);
    for (std::size_t s = 0; s < gRuns.size(); ++s) {
        for (std::size_t k = 0; k < 2; ++k)
            perYears[k].push_back(run_window(gRuns[s].data, windows[k], s + 1, false).auc);
        perYears[2].push_back(gRuns[s].auc);
    }
    std::vector<double> med;
    for (const auto& v : perYears) med.push_back(median(v));
    bool ok = med[0] <= med[1] && med[1] <= med[2];
    return {ok, "median test AUC for 1/2/3 training years: " + fmt(med[0]) + " / " + fmt(med[1]) + " / " + fmt(med[2])};
}

Outcome linkage_quality() {
    const std::vector<Dataset> three{Dataset::Parcel, Dataset::Costar, Dataset::BusinessLicense};
    synth::SynthConfig sc;
    sc.seed = 1;
    sc.nProperties = 1000;
    auto clean = testsupport::link_quality(synth::synth_generate(sc), three, {});
    sc.corruption = {0.1, 0.3, 25.0};
    auto noisy = testsupport::link_quality(synth::synth_generate(sc), three, {});
    bool ok = clean.precision() == 1.0 && clean.recall() == 1.0 && noisy.precision() >= 0.99 && noisy.recall() >= 0.95;
    return {ok, "corrupted: precision " + fmt(noisy.precision()) + " (>= 0.99), recall " + fmt(noisy.recall()) +
                    " (>= 0.95); clean: precision " + fmt(clean.precision()) + ", recall " + fmt(clean.recall()) +
                    " (both exactly 1)"};
}

Outcome discovery_semantics() {
    auto fx = fixtures::motor_vehicle_fixture();
    discovery::DiscoveryConfig cfg;
    auto r = discovery::discover_properties(fx.cityWide, fx.inspections, discovery::default_criteria(fx.inspections, cfg),
                                            cfg);
    std::size_t motor = std::count_if(r.longList.begin(), r.longList.end(), [](const auto& p) {
        return p.usageType && address::fold(*p.usageType) == "MOTOR VEHICLE REPAIR";
    });
    std::set<std::string> longIds;
    for (const auto& p : r.longList) longIds.insert(p.propertyId);
    bool subset = std::all_of(r.shortList.begin(), r.shortList.end(),
                              [&](const auto& p) { return longIds.count(p.propertyId) > 0; });

    synth::SynthConfig sc;
    sc.seed = 44;
    sc.nProperties = 1000;
    auto out = synth::synth_generate(sc);
    auto city = linkage::fuse_each(out.records.at(Dataset::BusinessLicense));
    auto current = linkage::fuse_each(out.records.at(Dataset::FirePermits));
    auto criteria = discovery::default_criteria(current, cfg);
    auto syn = discovery::discover_properties(city, current, criteria, cfg);
    std::set<std::string> truthIds;
    std::size_t inspectedListed = 0;
    std::map<std::string, bool> inspected;
    for (const auto& t : out.properties) inspected[t.id] = t.inspected;
    std::size_t planted = 0;
    for (const auto& t : out.properties) planted += !t.inspected && criteria.count(address::fold(t.usageType));
    for (const auto& p : syn.longList) {
        const auto& id = out.truthOf.at(p.provenance[0].second);
        truthIds.insert(id);
        inspectedListed += inspected.at(id);
    }
    bool dedup = truthIds.size() == syn.longList.size() && inspectedListed == 0 && syn.longList.size() == planted;
    return {motor == 321 && subset && dedup,
            "long list holds " + std::to_string(motor) + " motor-vehicle-repair properties (expected 321); short list "
                "within long list: " + (subset ? "yes" : "no") + "; clean synthetic long list " +
                std::to_string(syn.longList.size()) + " of " + std::to_string(planted) +
                " uninspected, no duplicates or inspected entries: " + (dedup ? "yes" : "no")};
}

Outcome risk_binning() {
    std::size_t bad = 0;
    for (int i = 0; i <= 20; ++i) {
        int expected = std::max(1, (i + 1) / 2);
        auto cat = expected == 1 ? risk::Category::Low : expected <= 5 ? risk::Category::Medium : risk::Category::High;
        int s = risk::to_score(i * 0.05);
        bad += s != expected || risk::categorize(s) != cat;
    }
    Rng rng(9);
    std::size_t nonMonotone = 0;
    for (int i = 0; i < 10000; ++i) {
        double a = rng.uniform(), b = rng.uniform();
        if (a > b) std::swap(a, b);
        auto sa = risk::to_score(a), sb = risk::to_score(b);
        nonMonotone += sa > sb || int(risk::categorize(sa)) > int(risk::categorize(sb));
    }
    return {bad == 0 && nonMonotone == 0, "sweep of 21 probabilities: " + std::to_string(bad) +
                                              " mismatches; 10000 random pairs: " + std::to_string(nonMonotone) +
                                              " monotonicity violations"};
}

int run_cli(const fs::path& out, const char* command) {
    std::string cmd = std::string(FIRERISK_CLI) + " --config " + FIRERISK_CONFIG_DIR + "/small.json --out " +
                      out.string() + " " + command + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
    auto base = fs::temp_directory_path() / "firerisk_acceptance_cli";
    fs::remove_all(base);
    for (const char* dir : {"run1", "run2"})
        for (const char* cmd : {"synth", "ingest", "link", "discover", "train", "evaluate", "score", "export-geojson"})
            if (int rc = run_cli(base / dir, cmd); rc != 0)
                return {false, std::string(cmd) + " exited with " + std::to_string(rc)};
    bool snap = slurp(base / "run1" / "snapshot.geojson") == slurp(base / "run2" / "snapshot.geojson");
    bool eval = slurp(base / "run1" / "eval_report.json") == slurp(base / "run2" / "eval_report.json");
    auto bytes = fs::file_size(base / "run1" / "snapshot.geojson");
    fs::remove_all(base);
    return {snap && eval && bytes > 0, std::string("two seeded runs of the full chain: snapshot.geojson ") +
                                           (snap ? "identical" : "differs") + " (" + std::to_string(bytes) +
                                           " bytes), eval_report.json " + (eval ? "identical" : "differs")};
}

Outcome service_correctness() {
    Rng rng(2024);
    auto s = fixtures::random_snapshot(rng, 50);
    std::size_t queries = 0, mismatches = 0;
    while (queries < 20) {
        auto q = fixtures::random_query(rng);
        if (q.empty_range()) continue;
        ++queries;
        auto query = service::parse_query(q.params);
        for (const auto& overlay : s.overlays) {
            auto expected = fixtures::recount(s, q, geo::bounding_box(overlay));
            std::set<std::string> got;
            auto body = service::filter_properties(s, query);
            for (const auto& jf : body["features"])
                got.insert(jf["properties"]["propertyId"].get<std::string>());
            mismatches += got != expected.ids;
            auto stats = service::overlay_stats(s, "NPU", overlay.id, query);
            for (auto l : service::kLayers) {
                auto [in, total] = expected.perLayer.at(l);
                const auto& st = stats.at(l);
                mismatches += st.count != in || st.total != total ||
                              st.percentage != (total ? 100.0 * double(in) / double(total) : 0.0);
            }
        }
    }

    service::SnapshotStore store;
    store.publish(std::make_shared<const service::Snapshot>(s));
    service::Server server(store, {"127.0.0.1", 0, {}});
    int port = server.bind();
    if (port <= 0) return {false, "cannot bind a local port"};
    std::thread t([&] { server.listen_after_bind(); });
    httplib::Client cli("127.0.0.1", port);
    int bad = 0, ok = 0;
    if (auto r = cli.Get("/api/properties?from=2014-02-30")) bad = r->status;
    if (auto r = cli.Get("/api/properties?layer=FIRE")) ok = r->status;
    server.stop();
    t.join();
    return {mismatches == 0 && bad == 400 && ok == 200,
            "20 random queries x 4 overlays on 50 features: " + std::to_string(mismatches) +
                " mismatches against brute force; malformed date -> HTTP " + std::to_string(bad)};
}

}  // namespace

int main() {
    omp_set_num_threads(1);
    criterion("auc-oracle", 5, auc_oracle);
    criterion("tree-oracle", 1, tree_oracle);
    criterion("logistic-gradient", 0, logistic_gradient);
    criterion("feature-expansion", 0, feature_expansion);
    criterion("synthetic-signal-recovery", 60, synthetic_recovery);
    criterion("backtest-trend", 0, backtest_trend);
    criterion("linkage-quality", 30, linkage_quality);
    criterion("discovery-semantics", 0, discovery_semantics);
    criterion("risk-binning", 0, risk_binning);
    criterion("cli-end-to-end-determinism", 0, cli_determinism);
    criterion("service-correctness", 0, service_correctness);
    std::cout << (gFailures == 0 ? "ALL PASS" : std::to_string(gFailures) + " FAILED") << std::endl;
    return gFailures;
}
