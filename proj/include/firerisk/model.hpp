#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "firerisk/common.hpp"
#include "firerisk/matrix.hpp"
#include "json.hpp"

namespace firerisk::model {

enum class Errc { EmptyData, ColumnMismatch, Divergence, TooFewRows, DegenerateLabels, InvalidConfig, BadModel, Io };
using Error = CodedError<Errc>;

// ---------------------------------------------------------------------------
// Trees

struct TreeParams {
    int maxDepth = 10;
    std::size_t minSamplesSplit = 2;
    std::size_t featuresPerSplit = 0;  // 0 = all features
    /// Positive rows count this many times in impurities and leaf fractions.
    unsigned positiveWeight = 1;

    void validate() const;
};

/// Internal when featureIndex >= 0 (rows with x <= threshold go left), leaf otherwise.
struct TreeNode {
    int featureIndex = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double positiveFraction = 0.0;
    std::size_t nTrain = 0;

    bool is_leaf() const { return featureIndex < 0; }
};

/// Nodes in preorder; nodes[0] is the root.
struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> row) const;
    int depth() const;
};

struct Split {
    std::size_t featureIndex = 0;
    double threshold = 0.0;
};

/// Best Gini split of `rows` over `features` (ascending). Gains are compared as
/// exact fractions; ties go to the lower feature, then the lower threshold.
/// nullopt when every listed feature is constant on `rows`.
std::optional<Split> best_split(const Matrix& X, std::span<const int> y, std::span<const std::size_t> rows,
                                std::span<const std::size_t> features, unsigned positiveWeight = 1);

/// Greedy CART on `rows` (all rows when empty; duplicates allowed).
Tree train_tree(const Matrix& X, std::span<const int> y, const TreeParams& params, Rng& rng,
                std::span<const std::size_t> rows = {});

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
    std::size_t nTrees = 200;
    int maxDepth = 10;
    std::size_t minSamplesSplit = 2;
    std::size_t featuresPerSplit = 0;  // 0 = ceil(sqrt(d))
    bool bootstrap = true;
    unsigned positiveWeight = 1;
    std::uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static ForestParams from_json(const nlohmann::json& j);
};

struct RandomForestModel {
    ForestParams params;
    std::size_t featuresPerSplit = 0;  // resolved value
    std::vector<Tree> trees;
    std::vector<std::string> columnNames;
};

/// Tree t trains on its own stream Rng(seed ^ t): n bootstrap draws, then the tree.
RandomForestModel train_forest(const Matrix& X, std::span<const int> y, const ForestParams& params,
                               std::vector<std::string> columnNames = {});
RandomForestModel train_forest_serial(const Matrix& X, std::span<const int> y, const ForestParams& params,
                                      std::vector<std::string> columnNames = {});

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticParams {
    double l2 = 0.1;
    std::size_t iterations = 500;
    double learningRate = 0.5;
    unsigned positiveWeight = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static LogisticParams from_json(const nlohmann::json& j);
};

struct LogisticModel {
    LogisticParams params;
    std::vector<double> weights;  // aligned to columnNames, raw feature scale
    double bias = 0.0;
    std::vector<std::string> columnNames;
};

double sigmoid(double z);

/// Weighted mean log-loss plus (l2 / 2) * |w|^2.
double logistic_loss(const Matrix& X, std::span<const int> y, std::span<const double> w, double b, double l2,
                     unsigned positiveWeight = 1);

struct Gradient {
    std::vector<double> w;
    double b = 0.0;
};
Gradient logistic_gradient(const Matrix& X, std::span<const int> y, std::span<const double> w, double b, double l2,
                           unsigned positiveWeight = 1);

/// Full-batch gradient descent from zero on standardized columns; weights are
/// mapped back to the raw scale. Throws Divergence after 10 consecutive loss increases.
LogisticModel train_logistic(const Matrix& X, std::span<const int> y, const LogisticParams& params,
                             std::vector<std::string> columnNames = {});

// ---------------------------------------------------------------------------
// Models

enum class Algorithm { RandomForest, Logistic };
std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

using ModelParams = std::variant<ForestParams, LogisticParams>;
Algorithm algorithm_of(const ModelParams& p);
nlohmann::json params_json(const ModelParams& p);

struct Model {
    std::variant<RandomForestModel, LogisticModel> m;

    Algorithm algorithm() const;
    const std::vector<std::string>& column_names() const;
    nlohmann::json to_json() const;
    static Model from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);
};

Model fit(const ModelParams& params, const Matrix& X, std::span<const int> y, std::vector<std::string> columnNames = {});

/// Throws ColumnMismatch when X has the wrong width.
std::vector<double> predict_proba(const RandomForestModel& model, const Matrix& X);
std::vector<double> predict_proba(const LogisticModel& model, const Matrix& X);
std::vector<double> predict_proba(const Model& model, const Matrix& X);
/// Also checks column names against the model's.
std::vector<double> predict_proba(const Model& model, const Matrix& X, std::span<const std::string> columnNames);

// ---------------------------------------------------------------------------
// Evaluation

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;  // rows with score >= threshold are predicted positive
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) to (1,1)
    double auc = 0.0;
};

/// Throws DegenerateLabels unless both classes are present.
RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> labels);

double tpr_at_fpr(const RocCurve& curve, double fpr);

using Ranked = std::vector<std::pair<std::string, double>>;

/// Share of training rows routed through splits on each feature, averaged over
/// trees and normalized to sum 1. Descending, ties alphabetical.
Ranked feature_importance(const RandomForestModel& model);

struct WeightReport {
    double bias = 0.0;
    Ranked positive;  // descending weight
    Ranked negative;  // ascending weight
};
WeightReport logistic_weight_report(const LogisticModel& model, std::size_t topK);

/// Validation index sets. Positives are dealt round-robin after a seeded
/// shuffle, negatives continue the rotation. Throws TooFewRows if k < 2 or k > n.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed);

struct GridSpec {
    ForestParams forestBase;
    std::vector<int> maxDepth{5, 10, 15};
    std::vector<std::size_t> nTrees{100, 200};
    LogisticParams logisticBase;
    std::vector<double> l2{0.01, 0.1, 1.0};

    std::vector<ModelParams> forest_cells() const;
    std::vector<ModelParams> logistic_cells() const;
    nlohmann::json to_json() const;
    static GridSpec from_json(const nlohmann::json& j);
};

struct GridResult {
    std::size_t bestIndex = 0;
    ModelParams best;
    std::vector<std::optional<double>> cellAuc;  // empty entries when CV was skipped
};

/// Mean validation AUC per cell over k stratified folds (folds whose validation
/// side lacks a class are skipped); first best cell wins. One cell skips CV.
GridResult grid_search_cv(const Matrix& X, std::span<const int> y, std::span<const ModelParams> cells, std::size_t k,
                          std::uint64_t seed);

struct EvalReport {
    std::string model;
    TimeWindow trainWindow;
    TimeWindow testWindow;
    std::size_t nTrain = 0, nTest = 0, trainPositives = 0, testPositives = 0;
    nlohmann::json params;
    std::vector<std::optional<double>> cellAuc;
    double auc = 0.0;
    std::map<double, double> tprAtFpr;
    Ranked importances;
    RocCurve roc;

    nlohmann::json to_json() const;
};

inline const std::vector<double> kReportFprs{0.05, 0.1, 0.2, 0.3};

/// AUC and TPR@FPR for `scores`; the caller fills the rest.
EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           std::span<const double> fprs = kReportFprs);

nlohmann::json reports_json(std::span<const EvalReport> reports);
/// model,trainStart,trainEnd,testStart,testEnd,nTrain,nTest,trainPositives,testPositives,auc,tpr@<f>...
void write_reports_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);

}  // namespace firerisk::model
