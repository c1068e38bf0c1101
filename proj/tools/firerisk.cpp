#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "config.hpp"
#include "firerisk/csv.hpp"
#include "firerisk/service.hpp"

using namespace firerisk;
using cli::ConfigError;
using cli::PipelineConfig;
using ingest::Dataset;
using linkage::PropertyRecord;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Run logs

std::string file_digest(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(fnv1a64(ss.str()));
}

class RunLog {
public:
    RunLog(std::string command, const PipelineConfig& cfg) : command_(std::move(command)), cfg_(cfg) {}

    void input(const fs::path& p) { inputs_[p.generic_string()] = file_digest(p); }
    void output(const fs::path& p) { outputs_[p.generic_string()] = file_digest(p); }
    json& counts() { return counts_; }

    void write() const {
        json j{{"version", 1},
               {"command", command_},
               {"seed", cfg_.seed},
               {"configDigest", cfg_.digest()},
               {"config", cfg_.effective},
               {"inputs", inputs_},
               {"outputs", outputs_},
               {"counts", counts_}};
        fs::create_directories(cfg_.outDir);
        std::ofstream out(cfg_.outDir / ("run_log_" + command_ + ".json"), std::ios::binary);
        out << j.dump(2) << '\n';
    }

private:
    std::string command_;
    const PipelineConfig& cfg_;
    std::map<std::string, std::string> inputs_, outputs_;
    json counts_ = json::object();
};

void write_json(const fs::path& p, const json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Artifact locations

fs::path ingested_dir(const PipelineConfig& c) { return c.outDir / "ingested"; }
fs::path ingested_path(const PipelineConfig& c, Dataset d) { return ingested_dir(c) / ingest::file_name(d); }
fs::path model_set_path(const PipelineConfig& c) { return c.outDir / "model_set.json"; }
fs::path potential_path(const PipelineConfig& c) { return c.outDir / "discovery" / "potential.json"; }

void require(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p)) throw std::runtime_error(p.string() + " not found; run '" + producer + "' first");
}

std::vector<ingest::SourceRecord> load_ingested(const PipelineConfig& c, Dataset d, RunLog& log) {
    auto p = ingested_path(c, d);
    require(p, "ingest");
    log.input(p);
    auto r = ingest::read_dataset(p, ingest::ingested_schema(d));
    if (!r.rejects.empty())
        throw std::runtime_error(p.string() + ": " + std::to_string(r.rejects.size()) + " rows no longer parse");
    return std::move(r.records);
}

std::vector<PropertyRecord> load_properties(const fs::path& p, const std::string& producer, RunLog& log) {
    require(p, producer);
    log.input(p);
    return linkage::read_properties(p);
}

pipeline::ModelData load_model_data(const PipelineConfig& c, RunLog& log) {
    auto props = load_properties(model_set_path(c), "link", log);
    pipeline::Records recs;
    recs[Dataset::FireIncidents] = load_ingested(c, Dataset::FireIncidents, log);
    recs[Dataset::FirePermits] = load_ingested(c, Dataset::FirePermits, log);
    auto data = pipeline::attach_events(std::move(props), recs, c.link);
    log.counts()["properties"] = data.properties.size();
    log.counts()["linkedIncidents"] = data.incidents.size();
    log.counts()["unmatchedIncidents"] = data.unmatchedIncidents;
    log.counts()["unmatchedInspections"] = data.unmatchedInspections;
    return data;
}

pipeline::BacktestOptions backtest_options(const PipelineConfig& c) {
    pipeline::BacktestOptions o;
    o.schema = c.schema;
    o.grid = c.grid;
    o.folds = c.folds;
    o.seed = c.seed;
    o.perYear = c.perYear;
    o.forest = c.evalForest;
    o.logistic = c.evalLogistic;
    o.shuffleLabels = c.shuffleLabels;
    o.topWeights = c.topWeights;
    return o;
}

std::string address_text(const PropertyRecord& p) {
    return p.canonicalAddress ? address::format(*p.canonicalAddress) : std::string();
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const PipelineConfig& c) {
    RunLog log("synth", c);
    auto sc = c.synth;
    if (c.fireRate) sc.signal.bias = synth::calibrate_bias(sc, *c.fireRate);
    auto out = synth::synth_generate(sc);
    synth::write_corpus(c.dataDir, out);
    auto overlays = synth::synth_overlays(sc.box);
    write_json(c.dataDir / "city.geojson", geo::polygons_to_geojson(std::span(overlays.data(), 1)));
    write_json(c.dataDir / "overlays.geojson", geo::polygons_to_geojson(std::span(overlays).subspan(1)));
    for (const auto& [d, recs] : out.records) {
        log.output(c.dataDir / ingest::file_name(d));
        log.counts()[std::string(ingest::to_string(d))] = recs.size();
    }
    for (const char* f : {"ground_truth_links.csv", "ground_truth_fires.csv", "city.geojson", "overlays.geojson"})
        log.output(c.dataDir / f);
    log.counts()["groundTruthFires"] = out.groundTruthFires.size();
    log.counts()["bias"] = out.bias;
    log.write();
    std::cout << "synth: " << sc.nProperties << " properties, " << out.groundTruthFires.size() << " fires -> "
              << c.dataDir.string() << '\n';
}

void cmd_ingest(const PipelineConfig& c) {
    RunLog log("ingest", c);
    std::optional<geo::Polygon> city;
    if (c.cityBoundary) {
        log.input(*c.cityBoundary);
        auto polys = geo::load_polygons(*c.cityBoundary);
        if (polys.empty()) throw ConfigError(c.cityBoundary->string() + " holds no polygon");
        city = polys.front();
    }
    auto geocoder = ingest::make_geocoder(city ? geo::bounding_box(*city) : ingest::default_city_box());
    fs::create_directories(ingested_dir(c));
    std::size_t datasets = 0, totalRejects = 0;
    std::ostringstream rejectSummary;
    for (std::size_t i = 0; i < ingest::kDatasetCount; ++i) {
        auto d = static_cast<Dataset>(i);
        auto src = c.dataDir / ingest::file_name(d);
        if (!fs::exists(src)) continue;
        ++datasets;
        log.input(src);
        auto r = ingest::read_dataset(src, ingest::default_schema(d));
        auto geo = ingest::geocode_missing(r.records, *geocoder);
        std::size_t outside = 0;
        if (city) {
            auto f = ingest::city_filter(std::move(r.records), *city);
            outside = f.removed.size();
            r.records = std::move(f.kept);
        }
        auto dst = ingested_path(c, d);
        ingest::write_dataset(dst, r.records, ingest::ingested_schema(d));
        log.output(dst);
        auto rejectsPath = ingested_dir(c) / ("rejects_" + ingest::file_name(d));
        if (!r.rejects.empty()) {
            ingest::write_rejects(rejectsPath, d, r.rejects);
            log.output(rejectsPath);
            totalRejects += r.rejects.size();
            rejectSummary << ' ' << ingest::to_string(d) << '=' << r.rejects.size();
        } else {
            fs::remove(rejectsPath);
        }
        log.counts()[std::string(ingest::to_string(d))] = {{"kept", r.records.size()},
                                                           {"rejects", r.rejects.size()},
                                                           {"geocoded", geo.geocoded},
                                                           {"notGeocoded", geo.notFound},
                                                           {"outsideCity", outside}};
    }
    if (datasets == 0) throw std::runtime_error("no dataset files in " + c.dataDir.string());
    log.write();
    std::cout << "ingest: " << datasets << " datasets -> " << ingested_dir(c).string() << '\n';
    if (totalRejects > 0) std::cerr << "ingest: " << totalRejects << " rows rejected:" << rejectSummary.str() << '\n';
}

void cmd_link(const PipelineConfig& c) {
    RunLog log("link", c);
    auto parcels = load_ingested(c, Dataset::Parcel, log);
    auto costar = load_ingested(c, Dataset::Costar, log);
    if (costar.empty()) throw std::runtime_error("no COSTAR records: the model set is empty");
    auto links = features::model_links(parcels, costar, c.link);
    auto props = features::model_properties(parcels, costar, links);
    linkage::write_links(c.outDir / "links.csv", links);
    linkage::write_properties(model_set_path(c), props);
    log.output(c.outDir / "links.csv");
    log.output(model_set_path(c));
    std::map<std::string, std::size_t> tiers;
    for (const auto& l : links) ++tiers[std::string(linkage::to_string(l.decision.tier))];
    log.counts()["links"] = tiers;
    log.counts()["modelProperties"] = props.size();
    log.write();
    std::cout << "link: " << links.size() << " links, " << props.size() << " model properties\n";
}

void cmd_discover(const PipelineConfig& c) {
    RunLog log("discover", c);
    auto cityWide = linkage::fuse_each(load_ingested(c, Dataset::BusinessLicense, log));
    auto current = linkage::fuse_each(load_ingested(c, Dataset::FirePermits, log));
    auto criteria = discovery::default_criteria(current, c.discovery);
    auto r = discovery::discover_properties(cityWide, current, criteria, c.discovery);
    auto dir = c.outDir / "discovery";
    fs::create_directories(dir);
    discovery::write_list_csv(dir / "long_list.csv", r.longList);
    discovery::write_list_csv(dir / "short_list.csv", r.shortList);
    discovery::write_stats_csv(dir / "usage_stats.csv", r.stats);
    write_json(dir / "short_list.geojson", discovery::list_geojson(r.shortList));
    linkage::write_properties(potential_path(c), c.potentialShortList ? r.shortList : r.longList);
    for (const char* f : {"long_list.csv", "short_list.csv", "usage_stats.csv", "short_list.geojson", "potential.json"})
        log.output(dir / f);
    log.counts()["cityWide"] = cityWide.size();
    log.counts()["currentInspections"] = current.size();
    log.counts()["criteriaTypes"] = criteria.size();
    log.counts()["longList"] = r.longList.size();
    log.counts()["shortList"] = r.shortList.size();
    log.write();
    std::cout << "discover: long list " << r.longList.size() << ", short list " << r.shortList.size() << '\n';
}

void cmd_train(const PipelineConfig& c) {
    const auto& window = c.windows.back();
    try {
        pipeline::check_windows(std::span(&window, 1));
    } catch (const pipeline::Error& e) {
        throw ConfigError(e.what());
    }
    RunLog log("train", c);
    auto data = load_model_data(c, log);
    auto split = pipeline::train_test(data, c.schema, window, c.perYear);
    auto opt = backtest_options(c);
    opt.forest = c.scoreModel == model::Algorithm::RandomForest;
    opt.logistic = !opt.forest;
    auto cells = opt.forest ? c.grid.forest_cells() : c.grid.logistic_cells();
    model::Model fitted;
    auto report = pipeline::evaluate_window(split, window, cells, opt, &fitted);
    fitted.save(c.outDir / "model.json");
    write_json(c.outDir / "encoder.json", split.encoder.to_json());
    write_json(c.outDir / "train_report.json", report.to_json());
    for (const char* f : {"model.json", "encoder.json", "train_report.json"}) log.output(c.outDir / f);
    log.counts()["trainRows"] = report.nTrain;
    log.counts()["trainPositives"] = report.trainPositives;
    log.counts()["testRows"] = report.nTest;
    log.counts()["columns"] = split.encoder.width();
    log.write();
    std::cout << "train: " << model::to_string(fitted.algorithm()) << " on " << report.nTrain << " rows, holdout AUC "
              << format_double(report.auc) << '\n';
}

void cmd_evaluate(const PipelineConfig& c) {
    try {
        pipeline::check_windows(c.windows);
    } catch (const pipeline::Error& e) {
        throw ConfigError(e.what());
    }
    RunLog log("evaluate", c);
    auto data = load_model_data(c, log);
    auto reports = pipeline::yearly_backtest(data, c.windows, backtest_options(c));
    write_json(c.outDir / "eval_report.json", model::reports_json(reports));
    model::write_reports_csv(c.outDir / "eval_report.csv", reports);
    log.output(c.outDir / "eval_report.json");
    log.output(c.outDir / "eval_report.csv");
    log.counts()["reports"] = reports.size();
    log.write();
    for (const auto& r : reports)
        std::cout << "evaluate: " << r.model << ' ' << format_date(r.testWindow.start) << ".."
                  << format_date(r.testWindow.end) << " AUC " << format_double(r.auc) << " TPR@0.2 "
                  << format_double(r.tprAtFpr.at(0.2)) << '\n';
}

void cmd_score(const PipelineConfig& c) {
    RunLog log("score", c);
    auto data = load_model_data(c, log);
    require(c.outDir / "model.json", "train");
    log.input(c.outDir / "model.json");
    log.input(c.outDir / "encoder.json");
    auto m = model::Model::load(c.outDir / "model.json");
    std::ifstream encIn(c.outDir / "encoder.json", std::ios::binary);
    auto enc = features::Encoder::from_json(json::parse(encIn));
    auto raw = features::extract(data.properties, enc.schema, c.scoreDate, data.inspections);
    auto fm = features::encode(enc, raw);
    auto probs = model::predict_proba(m, fm.values, fm.columnNames);
    auto scores = risk::make_scores(fm.propertyIds, probs, c.mapping);
    risk::write_scores_csv(c.outDir / "scores.csv", scores);
    log.output(c.outDir / "scores.csv");

    auto current = linkage::fuse_each(load_ingested(c, Dataset::FirePermits, log));
    auto potential = load_properties(potential_path(c), "discover", log);
    std::vector<csv::Row> rows{{"layer", "inspectionId", "propertyId", "probability", "score", "category", "tier",
                                "reason"}};
    auto emit = [&](service::Layer layer, std::span<const PropertyRecord> list) {
        auto a = risk::assign_scores(scores, data.properties, list, c.link);
        std::map<std::string, std::size_t> byCategory{{"LOW", 0}, {"MEDIUM", 0}, {"HIGH", 0}};
        for (const auto& x : a.annotated) {
            csv::Row r{std::string(service::to_string(layer)), x.property.propertyId};
            if (x.risk) {
                ++byCategory[std::string(risk::to_string(x.risk->category))];
                r.insert(r.end(), {x.risk->propertyId, format_double(x.risk->probability), std::to_string(x.risk->score),
                                   std::string(risk::to_string(x.risk->category)), std::string(linkage::to_string(*x.tier)),
                                   ""});
            } else {
                r.insert(r.end(), {"", "", "", "", "", x.reason});
            }
            rows.push_back(std::move(r));
        }
        log.counts()[std::string(service::to_string(layer))] = {
            {"listed", list.size()}, {"matched", a.matched}, {"categories", byCategory}};
    };
    emit(service::Layer::CurrentInspection, current);
    emit(service::Layer::PotentialInspection, potential);
    csv::write_file(c.outDir / "assignments.csv", rows);
    log.output(c.outDir / "assignments.csv");
    log.counts()["scored"] = scores.size();
    log.write();
    std::cout << "score: " << scores.size() << " model properties scored as of " << format_date(c.scoreDate) << '\n';
}

struct Assigned {
    double probability;
    int score;
    risk::Category category;
};

std::map<std::pair<std::string, std::string>, Assigned> read_assignments(const fs::path& p) {
    auto rows = csv::read_file(p);
    std::map<std::pair<std::string, std::string>, Assigned> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 8) throw std::runtime_error(p.string() + ": bad row " + std::to_string(i + 1));
        if (r[2].empty()) continue;
        auto prob = parse_double(r[3]);
        auto score = parse_double(r[4]);
        if (!prob || !score) throw std::runtime_error(p.string() + ": bad row " + std::to_string(i + 1));
        out[{r[0], r[1]}] = {*prob, static_cast<int>(*score), risk::parse_category(r[5])};
    }
    return out;
}

void cmd_export(const PipelineConfig& c) {
    RunLog log("export-geojson", c);
    auto props = load_properties(model_set_path(c), "link", log);
    std::map<std::string, const PropertyRecord*, std::less<>> byId;
    for (const auto& p : props) byId[p.propertyId] = &p;
    require(c.outDir / "assignments.csv", "score");
    log.input(c.outDir / "assignments.csv");
    auto assigned = read_assignments(c.outDir / "assignments.csv");

    service::Snapshot snap;
    snap.buildStamp = format_date(c.scoreDate) + "T00:00:00Z";
    std::size_t skipped = 0;
    auto add = [&](service::Layer layer, const PropertyRecord& p, std::optional<Date> date,
                   const PropertyRecord* fallback) {
        if (!p.point) {
            ++skipped;
            return;
        }
        service::Feature f;
        f.propertyId = p.propertyId;
        f.layer = layer;
        f.point = *p.point;
        f.businessName = p.businessName.value_or(fallback ? fallback->businessName.value_or("") : "");
        f.address = !address_text(p).empty() ? address_text(p) : fallback ? address_text(*fallback) : "";
        f.usageType = p.usageType.value_or(fallback ? fallback->usageType.value_or("") : "");
        f.date = date;
        if (auto it = assigned.find({std::string(service::to_string(layer)), p.propertyId}); it != assigned.end()) {
            f.probability = it->second.probability;
            f.riskScore = it->second.score;
            f.riskCategory = it->second.category;
        }
        snap.features.push_back(std::move(f));
    };

    auto incidents = load_ingested(c, Dataset::FireIncidents, log);
    auto eventCfg = c.link;
    eventCfg.requireNameWithGeo = false;
    std::map<std::string, std::string> ownerOf;
    for (const auto& e : features::link_events(incidents, props, eventCfg).linked) ownerOf[e.sourceId] = e.propertyId;
    for (const auto& r : incidents) {
        if (!r.eventDate) continue;
        auto it = ownerOf.find(r.sourceId);
        add(service::Layer::Fire, linkage::fuse_each(std::span(&r, 1)).front(), r.eventDate,
            it == ownerOf.end() ? nullptr : byId.at(it->second));
    }
    auto permits = load_ingested(c, Dataset::FirePermits, log);
    for (const auto& r : permits) add(service::Layer::CurrentInspection, linkage::fuse_each(std::span(&r, 1)).front(), r.eventDate, nullptr);
    for (const auto& p : load_properties(potential_path(c), "discover", log))
        add(service::Layer::PotentialInspection, p, std::nullopt, nullptr);

    if (c.cityBoundary) {
        log.input(*c.cityBoundary);
        auto city = geo::load_polygons(*c.cityBoundary);
        snap.overlays.insert(snap.overlays.end(), city.begin(), city.end());
    }
    for (const auto& o : c.overlays) {
        log.input(o);
        auto polys = geo::load_polygons(o);
        snap.overlays.insert(snap.overlays.end(), polys.begin(), polys.end());
    }
    snap.finalize();
    snap.save(c.outDir / "snapshot.geojson");
    log.output(c.outDir / "snapshot.geojson");
    for (const auto& [l, n] : snap.counts()) log.counts()[std::string(service::to_string(l))] = n;
    log.counts()["overlays"] = snap.overlays.size();
    log.counts()["skippedWithoutPoint"] = skipped;
    log.write();
    std::cout << "export-geojson: " << snap.features.size() << " features, " << snap.overlays.size() << " overlays -> "
              << (c.outDir / "snapshot.geojson").string() << '\n';
}

std::atomic<bool> gStop{false};

void cmd_serve(const PipelineConfig& c, const std::optional<fs::path>& snapshotFlag) {
    auto path = snapshotFlag ? *snapshotFlag : c.outDir / "snapshot.geojson";
    require(path, "export-geojson");
    service::SnapshotStore store;
    store.publish_file(path);
    service::Server server(store, {c.host, c.port, c.staticDir});
    int port = server.bind();
    if (port < 0) throw std::runtime_error("cannot bind " + c.host + ":" + std::to_string(c.port));
    std::signal(SIGINT, [](int) { gStop = true; });
    std::signal(SIGTERM, [](int) { gStop = true; });
    std::thread watcher([&] {
        auto stamp = fs::last_write_time(path);
        while (!gStop) {
            std::this_thread::sleep_for(std::chrono::milliseconds(200));
            std::error_code ec;
            auto now = fs::last_write_time(path, ec);
            if (ec || now == stamp) continue;
            stamp = now;
            try {
                store.publish_file(path);
                std::cout << "serve: reloaded " << path.string() << std::endl;
            } catch (const std::exception& e) {
                std::cerr << "serve: keeping previous snapshot: " << e.what() << std::endl;
            }
        }
        server.stop();
    });
    std::cout << "serve: http://" << c.host << ':' << port << "/ (snapshot " << path.string() << ")" << std::endl;
    server.listen_after_bind();
    gStop = true;
    watcher.join();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fire risk pipeline: synth, ingest, link, discover, train, evaluate, score, export-geojson, serve"};
    app.require_subcommand(1);
    std::string configPath = "config/default.json";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> port;
    std::optional<std::string> snapshot;
    app.add_option("--config", configPath, "Pipeline config (JSON)");
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--out", out, "Override the output directory");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"synth", "Generate a synthetic corpus into dataDir"},
        {"ingest", "Read, geocode and city-filter the source datasets"},
        {"link", "Link PARCEL and COSTAR records into the model set"},
        {"discover", "Find potentially inspectable properties"},
        {"train", "Fit the scoring model on the last configured window"},
        {"evaluate", "Time-partitioned backtest over the configured windows"},
        {"score", "Score the model set and attach scores to the inspection lists"},
        {"export-geojson", "Build the service snapshot"},
        {"serve", "Serve the snapshot over HTTP"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (name == "serve") {
            sub->add_option("--port", port, "Listening port (0 picks a free one)");
            sub->add_option("--snapshot", snapshot, "Snapshot file");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        cli::Overrides o;
        o.seed = seed;
        if (out) o.outDir = *out;
        o.port = port;
        auto cfg = cli::load_config(configPath, o);
        if (command == "synth") cmd_synth(cfg);
        else if (command == "ingest") cmd_ingest(cfg);
        else if (command == "link") cmd_link(cfg);
        else if (command == "discover") cmd_discover(cfg);
        else if (command == "train") cmd_train(cfg);
        else if (command == "evaluate") cmd_evaluate(cfg);
        else if (command == "score") cmd_score(cfg);
        else if (command == "export-geojson") cmd_export(cfg);
        else if (command == "serve") cmd_serve(cfg, snapshot ? std::optional<fs::path>(*snapshot) : std::nullopt);
    } catch (const ConfigError& e) {
        std::cerr << "firerisk " << command << ": config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "firerisk " << command << ": error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
