#include "firerisk/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "firerisk/csv.hpp"

namespace firerisk::model {

using nlohmann::json;

namespace {

using i128 = __int128;

void check_labels(const Matrix& X, std::span<const int> y) {
    if (X.rows == 0 || X.cols == 0) throw Error(Errc::EmptyData, "empty training matrix");
    if (y.size() != X.rows) throw Error(Errc::EmptyData, "label count does not match matrix rows");
    for (int v : y)
        if (v != 0 && v != 1) throw Error(Errc::EmptyData, "labels must be 0 or 1");
}

// Rows sharing one feature value, in ascending value order.
struct Group {
    double value;
    std::int64_t pos;
    std::int64_t neg;
};

struct Candidate {
    i128 num = 0;  // pL*qL*nR + pR*qR*nL
    i128 den = 1;  // nL*nR
    std::size_t feature = 0;
    double threshold = 0.0;
    bool found = false;
};

// Scans one feature's groups; keeps the first strictly lowest weighted child impurity.
void scan_groups(std::span<const Group> groups, std::int64_t P, std::int64_t Q, std::size_t feature,
                 unsigned weight, Candidate& best) {
    std::int64_t pl = 0, ql = 0;
    for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
        pl += groups[g].pos * weight;
        ql += groups[g].neg;
        std::int64_t pr = P - pl, qr = Q - ql;
        i128 nl = pl + ql, nr = pr + qr;
        i128 num = i128(pl) * ql * nr + i128(pr) * qr * nl;
        i128 den = nl * nr;
        if (!best.found || num * best.den < best.num * den) {
            double a = groups[g].value, b = groups[g + 1].value;
            double t = std::midpoint(a, b);
            if (!(t < b)) t = a;
            best = {num, den, feature, t, true};
        }
    }
}

void group_sorted(std::vector<std::pair<double, int>>& vals, std::vector<Group>& out) {
    std::sort(vals.begin(), vals.end());
    out.clear();
    for (const auto& [v, label] : vals) {
        if (out.empty() || out.back().value != v) out.push_back({v, 0, 0});
        (label ? out.back().pos : out.back().neg) += 1;
    }
}

// Per-feature dense ranks of every row's value.
struct Ranks {
    std::vector<std::vector<double>> distinct;
    std::vector<std::vector<std::uint32_t>> rank;

    explicit Ranks(const Matrix& X) : distinct(X.cols), rank(X.cols) {
        for (std::size_t f = 0; f < X.cols; ++f) {
            auto& d = distinct[f];
            d.resize(X.rows);
            for (std::size_t r = 0; r < X.rows; ++r) d[r] = X(r, f);
            std::sort(d.begin(), d.end());
            d.erase(std::unique(d.begin(), d.end()), d.end());
            auto& rk = rank[f];
            rk.resize(X.rows);
            for (std::size_t r = 0; r < X.rows; ++r)
                rk[r] = static_cast<std::uint32_t>(std::lower_bound(d.begin(), d.end(), X(r, f)) - d.begin());
        }
    }
};

class Grower {
public:
    Grower(const Matrix& X, std::span<const int> y, const TreeParams& p, Rng& rng, const Ranks& ranks)
        : X_(X), y_(y), p_(p), rng_(rng), ranks_(ranks) {
        std::size_t maxK = 0;
        for (const auto& d : ranks.distinct) maxK = std::max(maxK, d.size());
        hpos_.assign(maxK, 0);
        hneg_.assign(maxK, 0);
        mtry_ = p.featuresPerSplit == 0 ? X.cols : std::min(p.featuresPerSplit, X.cols);
    }

    Tree grow(std::vector<std::size_t> rows) {
        Tree t;
        nodes_ = &t.nodes;
        node(rows, 0);
        return t;
    }

private:
    int node(std::vector<std::size_t>& rows, int depth) {
        int idx = static_cast<int>(nodes_->size());
        nodes_->emplace_back();
        std::int64_t npos = 0;
        for (auto r : rows) npos += y_[r];
        std::int64_t nneg = static_cast<std::int64_t>(rows.size()) - npos;
        std::int64_t P = npos * p_.positiveWeight, Q = nneg;
        TreeNode n;
        n.nTrain = rows.size();
        n.positiveFraction = static_cast<double>(P) / static_cast<double>(P + Q);
        (*nodes_)[idx] = n;
        if (depth >= p_.maxDepth || npos == 0 || nneg == 0 || rows.size() < p_.minSamplesSplit) return idx;

        auto features = sample_features();
        Candidate best;
        for (auto f : features) {
            build_groups(rows, f);
            scan_groups(groups_, P, Q, f, p_.positiveWeight, best);
        }
        if (!best.found) return idx;

        std::vector<std::size_t> left, right;
        for (auto r : rows) (X_(r, best.feature) <= best.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        (*nodes_)[idx].featureIndex = static_cast<int>(best.feature);
        (*nodes_)[idx].threshold = best.threshold;
        int l = node(left, depth + 1);
        (*nodes_)[idx].left = l;
        int r = node(right, depth + 1);
        (*nodes_)[idx].right = r;
        return idx;
    }

    std::vector<std::size_t> sample_features() {
        std::vector<std::size_t> all(X_.cols);
        std::iota(all.begin(), all.end(), 0);
        if (mtry_ >= all.size()) return all;
        for (std::size_t i = 0; i < mtry_; ++i) {
            auto j = i + static_cast<std::size_t>(rng_.index(all.size() - i));
            std::swap(all[i], all[j]);
        }
        all.resize(mtry_);
        std::sort(all.begin(), all.end());
        return all;
    }

    void build_groups(const std::vector<std::size_t>& rows, std::size_t f) {
        const auto& rk = ranks_.rank[f];
        const auto& dv = ranks_.distinct[f];
        groups_.clear();
        if (dv.size() <= 2 * rows.size() + 64) {
            touched_.clear();
            for (auto r : rows) {
                auto k = rk[r];
                if (hpos_[k] == 0 && hneg_[k] == 0) touched_.push_back(k);
                (y_[r] ? hpos_[k] : hneg_[k]) += 1;
            }
            std::sort(touched_.begin(), touched_.end());
            for (auto k : touched_) {
                groups_.push_back({dv[k], hpos_[k], hneg_[k]});
                hpos_[k] = hneg_[k] = 0;
            }
        } else {
            keyed_.clear();
            for (auto r : rows) keyed_.push_back((std::uint64_t(rk[r]) << 1) | std::uint64_t(y_[r]));
            std::sort(keyed_.begin(), keyed_.end());
            for (auto key : keyed_) {
                double v = dv[key >> 1];
                if (groups_.empty() || groups_.back().value != v) groups_.push_back({v, 0, 0});
                ((key & 1) ? groups_.back().pos : groups_.back().neg) += 1;
            }
        }
    }

    const Matrix& X_;
    std::span<const int> y_;
    const TreeParams& p_;
    Rng& rng_;
    const Ranks& ranks_;
    std::size_t mtry_ = 0;
    std::vector<TreeNode>* nodes_ = nullptr;
    std::vector<std::int64_t> hpos_, hneg_;
    std::vector<std::uint32_t> touched_;
    std::vector<std::uint64_t> keyed_;
    std::vector<Group> groups_;
};

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

TreeParams tree_params(const ForestParams& p, std::size_t mtry) {
    return {p.maxDepth, p.minSamplesSplit, mtry, p.positiveWeight};
}

std::size_t resolve_mtry(const ForestParams& p, std::size_t d) {
    if (p.featuresPerSplit != 0) return std::min(p.featuresPerSplit, d);
    return std::min(d, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)))));
}

Tree forest_tree(const Matrix& X, std::span<const int> y, const ForestParams& p, std::size_t mtry, const Ranks& ranks,
                 std::size_t t) {
    Rng rng(p.seed ^ static_cast<std::uint64_t>(t));
    std::vector<std::size_t> rows;
    if (p.bootstrap) {
        rows.resize(X.rows);
        for (auto& r : rows) r = static_cast<std::size_t>(rng.index(X.rows));
    } else {
        rows = all_rows(X.rows);
    }
    auto tp = tree_params(p, mtry);
    return Grower(X, y, tp, rng, ranks).grow(std::move(rows));
}

RandomForestModel forest_shell(const Matrix& X, std::span<const int> y, const ForestParams& p,
                               std::vector<std::string>& columnNames) {
    p.validate();
    check_labels(X, y);
    if (!columnNames.empty() && columnNames.size() != X.cols)
        throw Error(Errc::ColumnMismatch, "column names do not match matrix width");
    RandomForestModel m;
    m.params = p;
    m.featuresPerSplit = resolve_mtry(p, X.cols);
    m.columnNames = std::move(columnNames);
    if (m.columnNames.empty())
        for (std::size_t i = 0; i < X.cols; ++i) m.columnNames.push_back("x" + std::to_string(i));
    m.trees.resize(p.nTrees);
    return m;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Loss and gradient in one pass.
double loss_and_gradient(const Matrix& X, std::span<const int> y, std::span<const double> w, double b, double l2,
                         unsigned weight, Gradient* g) {
    if (w.size() != X.cols || y.size() != X.rows) throw Error(Errc::ColumnMismatch, "logistic dimensions disagree");
    double total = 0.0, wsum = 0.0;
    if (g) {
        g->w.assign(X.cols, 0.0);
        g->b = 0.0;
    }
    for (std::size_t r = 0; r < X.rows; ++r) {
        auto row = X.row(r);
        double z = b;
        for (std::size_t c = 0; c < X.cols; ++c) z += w[c] * row[c];
        double c_i = y[r] ? static_cast<double>(weight) : 1.0;
        wsum += c_i;
        total += c_i * (softplus(z) - y[r] * z);
        if (g) {
            double d = c_i * (sigmoid(z) - y[r]);
            for (std::size_t c = 0; c < X.cols; ++c) g->w[c] += d * row[c];
            g->b += d;
        }
    }
    double reg = 0.0;
    for (double v : w) reg += v * v;
    if (g) {
        for (std::size_t c = 0; c < X.cols; ++c) g->w[c] = g->w[c] / wsum + l2 * w[c];
        g->b /= wsum;
    }
    return total / wsum + 0.5 * l2 * reg;
}

void check_width(std::size_t have, std::size_t want) {
    if (have != want)
        throw Error(Errc::ColumnMismatch,
                    "matrix has " + std::to_string(have) + " columns, model expects " + std::to_string(want));
}

Ranked rank_desc(Ranked v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return v;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

json tree_json(const Tree& t) {
    json f = json::array(), th = json::array(), l = json::array(), r = json::array(), v = json::array(),
         n = json::array();
    for (const auto& nd : t.nodes) {
        f.push_back(nd.featureIndex);
        th.push_back(nd.threshold);
        l.push_back(nd.left);
        r.push_back(nd.right);
        v.push_back(nd.positiveFraction);
        n.push_back(nd.nTrain);
    }
    return {{"featureIndex", f}, {"threshold", th}, {"left", l}, {"right", r}, {"positiveFraction", v}, {"nTrain", n}};
}

Tree tree_from_json(const json& j, std::size_t ncols) {
    auto f = j.at("featureIndex").get<std::vector<int>>();
    auto th = j.at("threshold").get<std::vector<double>>();
    auto l = j.at("left").get<std::vector<int>>();
    auto r = j.at("right").get<std::vector<int>>();
    auto v = j.at("positiveFraction").get<std::vector<double>>();
    auto n = j.at("nTrain").get<std::vector<std::size_t>>();
    std::size_t sz = f.size();
    if (sz == 0 || th.size() != sz || l.size() != sz || r.size() != sz || v.size() != sz || n.size() != sz)
        throw Error(Errc::BadModel, "tree arrays differ in length");
    Tree t;
    for (std::size_t i = 0; i < sz; ++i) {
        TreeNode nd{f[i], th[i], l[i], r[i], v[i], n[i]};
        if (!nd.is_leaf()) {
            auto in_range = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(sz); };
            if (static_cast<std::size_t>(nd.featureIndex) >= ncols || !in_range(nd.left) || !in_range(nd.right))
                throw Error(Errc::BadModel, "tree node " + std::to_string(i) + " is malformed");
        }
        if (!(nd.positiveFraction >= 0.0 && nd.positiveFraction <= 1.0))
            throw Error(Errc::BadModel, "leaf fraction outside [0,1]");
        t.nodes.push_back(nd);
    }
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------

void TreeParams::validate() const {
    if (maxDepth < 0) throw Error(Errc::InvalidConfig, "maxDepth must be >= 0");
    if (minSamplesSplit < 2) throw Error(Errc::InvalidConfig, "minSamplesSplit must be >= 2");
    if (positiveWeight < 1) throw Error(Errc::InvalidConfig, "positiveWeight must be >= 1");
}

double Tree::predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf())
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(nodes[i].featureIndex)] <= nodes[i].threshold
                                         ? nodes[i].left
                                         : nodes[i].right);
    return nodes[i].positiveFraction;
}

int Tree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return best;
}

std::optional<Split> best_split(const Matrix& X, std::span<const int> y, std::span<const std::size_t> rows,
                                std::span<const std::size_t> features, unsigned positiveWeight) {
    std::int64_t npos = 0;
    for (auto r : rows) npos += y[r];
    std::int64_t P = npos * positiveWeight, Q = static_cast<std::int64_t>(rows.size()) - npos;
    Candidate best;
    std::vector<std::pair<double, int>> vals;
    std::vector<Group> groups;
    for (auto f : features) {
        if (f >= X.cols) throw Error(Errc::ColumnMismatch, "feature index out of range");
        vals.clear();
        for (auto r : rows) vals.emplace_back(X(r, f), y[r]);
        group_sorted(vals, groups);
        scan_groups(groups, P, Q, f, positiveWeight, best);
    }
    if (!best.found) return std::nullopt;
    return Split{best.feature, best.threshold};
}

Tree train_tree(const Matrix& X, std::span<const int> y, const TreeParams& params, Rng& rng,
                std::span<const std::size_t> rows) {
    params.validate();
    check_labels(X, y);
    for (auto r : rows)
        if (r >= X.rows) throw Error(Errc::EmptyData, "row index out of range");
    Ranks ranks(X);
    std::vector<std::size_t> r(rows.begin(), rows.end());
    if (r.empty()) r = all_rows(X.rows);
    return Grower(X, y, params, rng, ranks).grow(std::move(r));
}

// ---------------------------------------------------------------------------

void ForestParams::validate() const {
    if (nTrees == 0) throw Error(Errc::InvalidConfig, "nTrees must be >= 1");
    tree_params(*this, featuresPerSplit).validate();
}

json ForestParams::to_json() const {
    return {{"nTrees", nTrees},       {"maxDepth", maxDepth},   {"minSamplesSplit", minSamplesSplit},
            {"featuresPerSplit", featuresPerSplit}, {"bootstrap", bootstrap}, {"positiveWeight", positiveWeight},
            {"seed", seed}};
}

ForestParams ForestParams::from_json(const json& j) {
    ForestParams p;
    try {
        p.nTrees = get_or(j, "nTrees", p.nTrees);
        p.maxDepth = get_or(j, "maxDepth", p.maxDepth);
        p.minSamplesSplit = get_or(j, "minSamplesSplit", p.minSamplesSplit);
        p.featuresPerSplit = get_or(j, "featuresPerSplit", p.featuresPerSplit);
        p.bootstrap = get_or(j, "bootstrap", p.bootstrap);
        p.positiveWeight = get_or(j, "positiveWeight", p.positiveWeight);
        p.seed = get_or(j, "seed", p.seed);
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("forest params: ") + e.what());
    }
    p.validate();
    return p;
}

RandomForestModel train_forest(const Matrix& X, std::span<const int> y, const ForestParams& params,
                               std::vector<std::string> columnNames) {
    auto m = forest_shell(X, y, params, columnNames);
    Ranks ranks(X);
    const auto n = static_cast<std::ptrdiff_t>(m.trees.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t t = 0; t < n; ++t)
        m.trees[static_cast<std::size_t>(t)] = forest_tree(X, y, params, m.featuresPerSplit, ranks, static_cast<std::size_t>(t));
    return m;
}

RandomForestModel train_forest_serial(const Matrix& X, std::span<const int> y, const ForestParams& params,
                                      std::vector<std::string> columnNames) {
    auto m = forest_shell(X, y, params, columnNames);
    Ranks ranks(X);
    for (std::size_t t = 0; t < m.trees.size(); ++t) m.trees[t] = forest_tree(X, y, params, m.featuresPerSplit, ranks, t);
    return m;
}

// ---------------------------------------------------------------------------

void LogisticParams::validate() const {
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw Error(Errc::InvalidConfig, "l2 must be >= 0");
    if (!(learningRate > 0.0) || !std::isfinite(learningRate)) throw Error(Errc::InvalidConfig, "learningRate must be > 0");
    if (positiveWeight < 1) throw Error(Errc::InvalidConfig, "positiveWeight must be >= 1");
}

json LogisticParams::to_json() const {
    return {{"l2", l2}, {"iterations", iterations}, {"learningRate", learningRate}, {"positiveWeight", positiveWeight}};
}

LogisticParams LogisticParams::from_json(const json& j) {
    LogisticParams p;
    try {
        p.l2 = get_or(j, "l2", p.l2);
        p.iterations = get_or(j, "iterations", p.iterations);
        p.learningRate = get_or(j, "learningRate", p.learningRate);
        p.positiveWeight = get_or(j, "positiveWeight", p.positiveWeight);
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("logistic params: ") + e.what());
    }
    p.validate();
    return p;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_loss(const Matrix& X, std::span<const int> y, std::span<const double> w, double b, double l2,
                     unsigned positiveWeight) {
    return loss_and_gradient(X, y, w, b, l2, positiveWeight, nullptr);
}

Gradient logistic_gradient(const Matrix& X, std::span<const int> y, std::span<const double> w, double b, double l2,
                           unsigned positiveWeight) {
    Gradient g;
    loss_and_gradient(X, y, w, b, l2, positiveWeight, &g);
    return g;
}

LogisticModel train_logistic(const Matrix& X, std::span<const int> y, const LogisticParams& params,
                             std::vector<std::string> columnNames) {
    params.validate();
    check_labels(X, y);
    if (!columnNames.empty() && columnNames.size() != X.cols)
        throw Error(Errc::ColumnMismatch, "column names do not match matrix width");
    const std::size_t d = X.cols;
    std::vector<double> mean(d, 0.0), scale(d, 1.0);
    for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < X.rows; ++r) s += X(r, c);
        mean[c] = s / static_cast<double>(X.rows);
        double v = 0.0;
        for (std::size_t r = 0; r < X.rows; ++r) v += (X(r, c) - mean[c]) * (X(r, c) - mean[c]);
        double sd = std::sqrt(v / static_cast<double>(X.rows));
        if (sd > 0.0) scale[c] = sd;
    }
    Matrix Z(X.rows, d);
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t c = 0; c < d; ++c) Z(r, c) = (X(r, c) - mean[c]) / scale[c];

    std::vector<double> w(d, 0.0);
    double b = 0.0, prev = std::numeric_limits<double>::infinity();
    int increases = 0;
    Gradient g;
    for (std::size_t it = 0; it < params.iterations; ++it) {
        double loss = loss_and_gradient(Z, y, w, b, params.l2, params.positiveWeight, &g);
        if (!std::isfinite(loss)) throw Error(Errc::Divergence, "logistic loss is not finite");
        increases = loss > prev ? increases + 1 : 0;
        if (increases >= 10) throw Error(Errc::Divergence, "logistic loss increased for 10 consecutive iterations");
        prev = loss;
        for (std::size_t c = 0; c < d; ++c) w[c] -= params.learningRate * g.w[c];
        b -= params.learningRate * g.b;
    }

    LogisticModel m;
    m.params = params;
    m.weights.resize(d);
    m.bias = b;
    for (std::size_t c = 0; c < d; ++c) {
        m.weights[c] = w[c] / scale[c];
        m.bias -= w[c] * mean[c] / scale[c];
    }
    m.columnNames = std::move(columnNames);
    if (m.columnNames.empty())
        for (std::size_t i = 0; i < d; ++i) m.columnNames.push_back("x" + std::to_string(i));
    return m;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Algorithm a) { return a == Algorithm::RandomForest ? "RANDOM_FOREST" : "LOGISTIC"; }

Algorithm parse_algorithm(std::string_view s) {
    if (s == "RANDOM_FOREST") return Algorithm::RandomForest;
    if (s == "LOGISTIC") return Algorithm::Logistic;
    throw Error(Errc::InvalidConfig, "unknown algorithm '" + std::string(s) + "'");
}

Algorithm algorithm_of(const ModelParams& p) {
    return std::holds_alternative<ForestParams>(p) ? Algorithm::RandomForest : Algorithm::Logistic;
}

json params_json(const ModelParams& p) {
    json j = std::visit([](const auto& v) { return v.to_json(); }, p);
    j["algorithm"] = std::string(to_string(algorithm_of(p)));
    return j;
}

Algorithm Model::algorithm() const {
    return std::holds_alternative<RandomForestModel>(m) ? Algorithm::RandomForest : Algorithm::Logistic;
}

const std::vector<std::string>& Model::column_names() const {
    return std::visit([](const auto& v) -> const std::vector<std::string>& { return v.columnNames; }, m);
}

json Model::to_json() const {
    json j{{"version", 1}, {"algorithm", std::string(model::to_string(algorithm()))}, {"columnNames", column_names()}};
    if (auto f = std::get_if<RandomForestModel>(&m)) {
        j["params"] = f->params.to_json();
        j["featuresPerSplit"] = f->featuresPerSplit;
        json trees = json::array();
        for (const auto& t : f->trees) trees.push_back(tree_json(t));
        j["trees"] = std::move(trees);
    } else {
        const auto& l = std::get<LogisticModel>(m);
        j["params"] = l.params.to_json();
        j["weights"] = l.weights;
        j["bias"] = l.bias;
    }
    return j;
}

Model Model::from_json(const json& j) {
    try {
        if (j.at("version").get<int>() != 1) throw Error(Errc::BadModel, "unsupported model version");
        auto names = j.at("columnNames").get<std::vector<std::string>>();
        if (parse_algorithm(j.at("algorithm").get<std::string>()) == Algorithm::RandomForest) {
            RandomForestModel f;
            f.params = ForestParams::from_json(j.at("params"));
            f.featuresPerSplit = j.at("featuresPerSplit").get<std::size_t>();
            for (const auto& t : j.at("trees")) f.trees.push_back(tree_from_json(t, names.size()));
            if (f.trees.size() != f.params.nTrees) throw Error(Errc::BadModel, "tree count differs from nTrees");
            f.columnNames = std::move(names);
            return {std::move(f)};
        }
        LogisticModel l;
        l.params = LogisticParams::from_json(j.at("params"));
        l.weights = j.at("weights").get<std::vector<double>>();
        l.bias = j.at("bias").get<double>();
        if (l.weights.size() != names.size()) throw Error(Errc::BadModel, "weight count differs from columns");
        l.columnNames = std::move(names);
        return {std::move(l)};
    } catch (const json::exception& e) {
        throw Error(Errc::BadModel, std::string("model: ") + e.what());
    }
}

void Model::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << to_json().dump() << '\n';
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(Errc::BadModel, path.string() + ": " + e.what());
    }
}

Model fit(const ModelParams& params, const Matrix& X, std::span<const int> y, std::vector<std::string> columnNames) {
    if (auto f = std::get_if<ForestParams>(&params)) return {train_forest(X, y, *f, std::move(columnNames))};
    return {train_logistic(X, y, std::get<LogisticParams>(params), std::move(columnNames))};
}

std::vector<double> predict_proba(const RandomForestModel& model, const Matrix& X) {
    check_width(X.cols, model.columnNames.size());
    std::vector<double> out(X.rows, 0.0);
    if (model.trees.empty()) return out;
    for (std::size_t r = 0; r < X.rows; ++r) {
        double s = 0.0;
        for (const auto& t : model.trees) s += t.predict(X.row(r));
        out[r] = std::clamp(s / static_cast<double>(model.trees.size()), 0.0, 1.0);
    }
    return out;
}

std::vector<double> predict_proba(const LogisticModel& model, const Matrix& X) {
    check_width(X.cols, model.weights.size());
    std::vector<double> out(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) {
        auto row = X.row(r);
        double z = model.bias;
        for (std::size_t c = 0; c < X.cols; ++c) z += model.weights[c] * row[c];
        out[r] = sigmoid(z);
    }
    return out;
}

std::vector<double> predict_proba(const Model& model, const Matrix& X) {
    return std::visit([&](const auto& v) { return predict_proba(v, X); }, model.m);
}

std::vector<double> predict_proba(const Model& model, const Matrix& X, std::span<const std::string> columnNames) {
    const auto& want = model.column_names();
    if (!std::equal(want.begin(), want.end(), columnNames.begin(), columnNames.end()))
        throw Error(Errc::ColumnMismatch, "feature columns differ from the model's");
    return predict_proba(model, X);
}

// ---------------------------------------------------------------------------

RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(Errc::DegenerateLabels, "score and label counts differ");
    std::int64_t P = 0, N = 0;
    for (int v : labels) (v ? P : N) += 1;
    if (P == 0 || N == 0) throw Error(Errc::DegenerateLabels, "ROC needs both positive and negative labels");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve c;
    c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::int64_t tp = 0, fp = 0, area2 = 0;
    for (std::size_t i = 0; i < order.size();) {
        double s = scores[order[i]];
        std::int64_t dtp = 0, dfp = 0;
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? dtp : dfp) += 1;
        area2 += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        c.points.push_back({static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P), s});
    }
    c.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
    return c;
}

double tpr_at_fpr(const RocCurve& curve, double fpr) {
    if (!(fpr >= 0.0 && fpr <= 1.0)) throw Error(Errc::InvalidConfig, "fpr must lie in [0,1]");
    const auto& p = curve.points;
    if (p.empty()) throw Error(Errc::DegenerateLabels, "empty ROC curve");
    std::size_t i = 0;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (p[k].fpr <= fpr) i = k;
    if (p[i].fpr == fpr || i + 1 == p.size()) return p[i].tpr;
    const auto& a = p[i];
    const auto& b = p[i + 1];
    return a.tpr + (fpr - a.fpr) * (b.tpr - a.tpr) / (b.fpr - a.fpr);
}

Ranked feature_importance(const RandomForestModel& model) {
    const std::size_t d = model.columnNames.size();
    std::vector<double> total(d, 0.0);
    for (const auto& t : model.trees) {
        if (t.nodes.empty() || t.nodes[0].nTrain == 0) continue;
        std::vector<double> s(d, 0.0);
        for (const auto& n : t.nodes)
            if (!n.is_leaf()) s[static_cast<std::size_t>(n.featureIndex)] += static_cast<double>(n.nTrain);
        for (std::size_t f = 0; f < d; ++f) total[f] += s[f] / static_cast<double>(t.nodes[0].nTrain);
    }
    double sum = std::accumulate(total.begin(), total.end(), 0.0);
    Ranked out;
    for (std::size_t f = 0; f < d; ++f) out.emplace_back(model.columnNames[f], sum > 0.0 ? total[f] / sum : 0.0);
    return rank_desc(std::move(out));
}

WeightReport logistic_weight_report(const LogisticModel& model, std::size_t topK) {
    WeightReport r;
    r.bias = model.bias;
    Ranked pos, neg;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        if (model.weights[i] > 0.0) pos.emplace_back(model.columnNames[i], model.weights[i]);
        if (model.weights[i] < 0.0) neg.emplace_back(model.columnNames[i], -model.weights[i]);
    }
    r.positive = rank_desc(std::move(pos));
    r.negative = rank_desc(std::move(neg));
    if (r.positive.size() > topK) r.positive.resize(topK);
    if (r.negative.size() > topK) r.negative.resize(topK);
    for (auto& e : r.negative) e.second = -e.second;
    return r;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed) {
    if (k < 2 || k > y.size())
        throw Error(Errc::TooFewRows, "need 2 <= k <= rows (k = " + std::to_string(k) + ", rows = " + std::to_string(y.size()) + ")");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(i);
    Rng rng(seed);
    auto shuffle = [&](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.index(i))]);
    };
    shuffle(pos);
    shuffle(neg);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t slot = 0;
    for (auto i : pos) folds[slot++ % k].push_back(i);
    for (auto i : neg) folds[slot++ % k].push_back(i);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::vector<ModelParams> GridSpec::forest_cells() const {
    std::vector<ModelParams> out;
    for (int depth : maxDepth)
        for (auto n : nTrees) {
            auto p = forestBase;
            p.maxDepth = depth;
            p.nTrees = n;
            p.validate();
            out.emplace_back(p);
        }
    return out;
}

std::vector<ModelParams> GridSpec::logistic_cells() const {
    std::vector<ModelParams> out;
    for (double v : l2) {
        auto p = logisticBase;
        p.l2 = v;
        p.validate();
        out.emplace_back(p);
    }
    return out;
}

json GridSpec::to_json() const {
    json f = forestBase.to_json();
    f["maxDepth"] = maxDepth;
    f["nTrees"] = nTrees;
    json l = logisticBase.to_json();
    l["l2"] = l2;
    return {{"forest", f}, {"logistic", l}};
}

GridSpec GridSpec::from_json(const json& j) {
    GridSpec g;
    try {
        if (j.contains("forest")) {
            json base = j.at("forest");
            if (base.contains("maxDepth")) g.maxDepth = base.at("maxDepth").get<std::vector<int>>();
            if (base.contains("nTrees")) g.nTrees = base.at("nTrees").get<std::vector<std::size_t>>();
            base.erase("maxDepth");
            base.erase("nTrees");
            g.forestBase = ForestParams::from_json(base);
        }
        if (j.contains("logistic")) {
            json base = j.at("logistic");
            if (base.contains("l2")) g.l2 = base.at("l2").get<std::vector<double>>();
            base.erase("l2");
            g.logisticBase = LogisticParams::from_json(base);
        }
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("model grid: ") + e.what());
    }
    if (g.maxDepth.empty() || g.nTrees.empty() || g.l2.empty()) throw Error(Errc::InvalidConfig, "empty grid axis");
    g.forest_cells();
    g.logistic_cells();
    return g;
}

GridResult grid_search_cv(const Matrix& X, std::span<const int> y, std::span<const ModelParams> cells, std::size_t k,
                          std::uint64_t seed) {
    if (cells.empty()) throw Error(Errc::InvalidConfig, "empty grid");
    check_labels(X, y);
    GridResult res{0, cells[0], {}};
    if (cells.size() == 1) {
        res.cellAuc.emplace_back();
        return res;
    }
    auto folds = stratified_folds(y, k, seed);
    std::vector<char> inFold(X.rows);
    std::optional<double> bestAuc;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto& fold : folds) {
            std::fill(inFold.begin(), inFold.end(), 0);
            for (auto i : fold) inFold[i] = 1;
            std::vector<std::size_t> trainIdx;
            for (std::size_t i = 0; i < X.rows; ++i)
                if (!inFold[i]) trainIdx.push_back(i);
            std::vector<int> yTrain, yVal;
            for (auto i : trainIdx) yTrain.push_back(y[i]);
            for (auto i : fold) yVal.push_back(y[i]);
            bool valBoth = std::count(yVal.begin(), yVal.end(), 1) > 0 && std::count(yVal.begin(), yVal.end(), 0) > 0;
            if (!valBoth) continue;
            auto model = fit(cells[c], X.select_rows(trainIdx), yTrain);
            sum += roc_and_auc(predict_proba(model, X.select_rows(fold)), yVal).auc;
            ++used;
        }
        if (used == 0) throw Error(Errc::DegenerateLabels, "no validation fold contains both classes");
        double auc = sum / static_cast<double>(used);
        res.cellAuc.emplace_back(auc);
        if (!bestAuc || auc > *bestAuc) {
            bestAuc = auc;
            res.bestIndex = c;
            res.best = cells[c];
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, std::span<const double> fprs) {
    EvalReport r;
    r.roc = roc_and_auc(scores, labels);
    r.auc = r.roc.auc;
    for (double f : fprs) r.tprAtFpr[f] = tpr_at_fpr(r.roc, f);
    r.nTest = labels.size();
    r.testPositives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    return r;
}

json EvalReport::to_json() const {
    auto window = [](const TimeWindow& w) { return json{{"start", format_date(w.start)}, {"end", format_date(w.end)}}; };
    json cells = json::array();
    for (const auto& c : cellAuc) cells.push_back(c ? json(*c) : json(nullptr));
    json tpr = json::object();
    for (const auto& [f, t] : tprAtFpr) tpr[format_double(f)] = t;
    json imp = json::array();
    for (const auto& [name, w] : importances) imp.push_back({name, w});
    json roc = json::array();
    for (const auto& p : this->roc.points) roc.push_back({p.fpr, p.tpr});
    return {{"model", model},
            {"trainWindow", window(trainWindow)},
            {"testWindow", window(testWindow)},
            {"nTrain", nTrain},
            {"nTest", nTest},
            {"trainPositives", trainPositives},
            {"testPositives", testPositives},
            {"params", params},
            {"cellAuc", cells},
            {"auc", auc},
            {"tprAtFpr", tpr},
            {"importances", imp},
            {"roc", roc}};
}

json reports_json(std::span<const EvalReport> reports) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(r.to_json());
    return {{"version", 1}, {"reports", arr}};
}

void write_reports_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
    std::vector<csv::Row> rows;
    csv::Row header{"model", "trainStart", "trainEnd", "testStart", "testEnd", "nTrain", "nTest", "trainPositives",
                    "testPositives", "auc"};
    std::vector<double> fprs;
    if (!reports.empty())
        for (const auto& [f, t] : reports.front().tprAtFpr) fprs.push_back(f);
    for (double f : fprs) header.push_back("tpr@" + format_double(f));
    rows.push_back(header);
    for (const auto& r : reports) {
        csv::Row row{r.model,
                     format_date(r.trainWindow.start),
                     format_date(r.trainWindow.end),
                     format_date(r.testWindow.start),
                     format_date(r.testWindow.end),
                     std::to_string(r.nTrain),
                     std::to_string(r.nTest),
                     std::to_string(r.trainPositives),
                     std::to_string(r.testPositives),
                     format_double(r.auc)};
        for (double f : fprs) {
            auto it = r.tprAtFpr.find(f);
            row.push_back(it == r.tprAtFpr.end() ? "" : format_double(it->second));
        }
        rows.push_back(std::move(row));
    }
    csv::write_file(path, rows);
}

}  // namespace firerisk::model
