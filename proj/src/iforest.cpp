#include "iotad/iforest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "iotad/binary_io.hpp"
#include "iotad/errors.hpp"

namespace iotad::iforest {

namespace {

constexpr double kEulerMascheroni = 0.5772156649;
constexpr std::string_view kMagic = "IFv1";

void check_dimension(std::size_t got, std::size_t want) {
    if (got != want) {
        throw DataError("dimension mismatch: point has " + std::to_string(got) + " features, model expects " +
                        std::to_string(want));
    }
}

class TreeBuilder {
public:
    TreeBuilder(const Matrix& data, std::size_t height_limit, Rng& rng)
        : data_(data), height_limit_(height_limit), rng_(rng) {}

    IsolationTree build(std::vector<std::size_t> rows) {
        grow(rows, 0, rows.size(), 0);
        return std::move(tree_);
    }

private:
    void grow(std::vector<std::size_t>& rows, std::size_t begin, std::size_t end, std::size_t depth) {
        const std::size_t count = end - begin;
        const auto leaf = [&] { tree_.nodes.push_back(IsolationTree::leaf(static_cast<std::uint32_t>(count)).nodes.front()); };
        if (depth >= height_limit_ || count <= 1) return leaf();

        // Columns with a non-degenerate range among this node's rows.
        candidates_.clear();
        const std::size_t d = data_.cols();
        lo_.assign(d, std::numeric_limits<double>::infinity());
        hi_.assign(d, -std::numeric_limits<double>::infinity());
        for (std::size_t i = begin; i < end; ++i) {
            auto row = data_.row(rows[i]);
            for (std::size_t j = 0; j < d; ++j) {
                lo_[j] = std::min(lo_[j], row[j]);
                hi_[j] = std::max(hi_[j], row[j]);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            if (lo_[j] < hi_[j]) candidates_.push_back(j);
        }
        if (candidates_.empty()) return leaf();

        const std::size_t feature = candidates_[rng_.uniform_index(candidates_.size())];
        const double lo = lo_[feature];
        const double hi = hi_[feature];
        double split = rng_.uniform(lo, hi);
        // Redraw until strictly inside; adjacent doubles leave nothing between,
        // in which case hi still separates the two values.
        for (int tries = 0; !(split > lo && split < hi) && tries < 64; ++tries) split = rng_.uniform(lo, hi);
        if (!(split > lo && split < hi)) split = hi;

        const auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                        rows.begin() + static_cast<std::ptrdiff_t>(end),
                                        [&](std::size_t r) { return data_(r, feature) < split; });
        const auto mid_index = static_cast<std::size_t>(mid - rows.begin());

        const std::size_t self = tree_.nodes.size();
        Node node;
        node.feature = static_cast<std::uint32_t>(feature);
        node.value = split;
        tree_.nodes.push_back(node);
        grow(rows, begin, mid_index, depth + 1);
        tree_.nodes[self].right = static_cast<std::uint32_t>(tree_.nodes.size());
        grow(rows, mid_index, end, depth + 1);
    }

    const Matrix& data_;
    std::size_t height_limit_;
    Rng& rng_;
    IsolationTree tree_;
    std::vector<std::size_t> candidates_;
    std::vector<double> lo_, hi_;
};

std::size_t subtree_height(const IsolationTree& tree, std::size_t index) {
    const Node& n = tree.nodes[index];
    if (n.is_leaf()) return 0;
    return 1 + std::max(subtree_height(tree, index + 1), subtree_height(tree, n.right));
}

void write_subtree(ByteWriter& out, const IsolationTree& tree, std::size_t index) {
    const Node& n = tree.nodes[index];
    if (n.is_leaf()) {
        out.put_u8(0);
        out.put_u32(n.size);
        return;
    }
    out.put_u8(1);
    out.put_u32(n.feature);
    out.put_f64(n.value);
    write_subtree(out, tree, index + 1);
    write_subtree(out, tree, n.right);
}

void read_subtree(ByteReader& in, IsolationTree& tree, std::uint32_t dimension, std::size_t depth) {
    if (depth > 64) throw DataError("malformed isolation tree: nesting too deep");
    const std::uint8_t tag = in.get_u8();
    if (tag == 0) {
        tree.nodes.push_back(IsolationTree::leaf(in.get_u32()).nodes.front());
        return;
    }
    if (tag != 1) throw DataError("malformed isolation tree: bad node tag " + std::to_string(tag));
    Node n;
    n.feature = in.get_u32();
    if (n.feature >= dimension) throw DataError("malformed isolation tree: split feature out of range");
    n.value = in.get_f64();
    const std::size_t self = tree.nodes.size();
    tree.nodes.push_back(n);
    read_subtree(in, tree, dimension, depth + 1);
    tree.nodes[self].right = static_cast<std::uint32_t>(tree.nodes.size());
    read_subtree(in, tree, dimension, depth + 1);
}

}  // namespace

double expected_path_c(std::uint64_t n) {
    if (n <= 1) return 0.0;
    const double m = static_cast<double>(n);
    return 2.0 * (std::log(m - 1.0) + kEulerMascheroni) - 2.0 * (m - 1.0) / m;
}

IsolationTree IsolationTree::leaf(std::uint32_t size) {
    IsolationTree t;
    Node n;
    n.size = size;
    n.value = expected_path_c(size);
    t.nodes.push_back(n);
    return t;
}

IsolationTree IsolationTree::join(std::uint32_t feature, double value, const IsolationTree& left,
                                  const IsolationTree& right) {
    IsolationTree t;
    Node root;
    root.feature = feature;
    root.value = value;
    root.right = static_cast<std::uint32_t>(1 + left.nodes.size());
    t.nodes.push_back(root);
    for (Node n : left.nodes) {
        if (!n.is_leaf()) n.right += 1;
        t.nodes.push_back(n);
    }
    for (Node n : right.nodes) {
        if (!n.is_leaf()) n.right += root.right;
        t.nodes.push_back(n);
    }
    return t;
}

std::size_t IsolationTree::height() const { return nodes.empty() ? 0 : subtree_height(*this, 0); }

std::size_t IsolationTree::leaf_size_sum() const {
    std::size_t sum = 0;
    for (const Node& n : nodes) {
        if (n.is_leaf()) sum += n.size;
    }
    return sum;
}

void IForestParams::validate() const {
    if (tree_count == 0) throw ConfigError("iforest tree_count must be positive");
    if (subsample_size < 2) throw ConfigError("iforest subsample_size must be at least 2");
    if (!(contamination >= 0.0 && contamination <= 0.5)) {
        throw ConfigError("iforest contamination must lie in [0, 0.5]");
    }
}

std::uint32_t IsolationForestModel::height_limit() const {
    return static_cast<std::uint32_t>(std::ceil(std::log2(static_cast<double>(subsample_size))));
}

IsolationTree build_tree(const Matrix& data, std::span<const std::size_t> sample, std::size_t height_limit,
                         Rng& rng) {
    if (sample.empty()) throw DataError("cannot build an isolation tree from an empty sample");
    return TreeBuilder(data, height_limit, rng).build({sample.begin(), sample.end()});
}

IsolationTree build_tree(const Matrix& sample, std::size_t height_limit, Rng& rng) {
    std::vector<std::size_t> rows(sample.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return build_tree(sample, rows, height_limit, rng);
}

double path_length(const IsolationTree& tree, std::span<const double> point) {
    const Node* nodes = tree.nodes.data();
    std::uint32_t index = 0;
    std::uint32_t edges = 0;
    while (!nodes[index].is_leaf()) {
        const Node& n = nodes[index];
        index = point[n.feature] < n.value ? index + 1 : n.right;
        ++edges;
    }
    return static_cast<double>(edges) + nodes[index].value;
}

double score_from_mean_path(double mean_path, std::uint32_t psi) {
    return std::exp2(-mean_path / expected_path_c(psi));
}

namespace {

void check_compiled(const IsolationForestModel& model) {
    if (model.compiled.size() != model.trees.size()) throw RuntimeError("isolation forest model is not compiled");
}

}  // namespace

double score(const IsolationForestModel& model, std::span<const double> point) {
    check_dimension(point.size(), model.dimension);
    check_compiled(model);
    double total = 0.0;
    for (const auto& tree : model.compiled) total += tree.path_length(point);
    return score_from_mean_path(total / static_cast<double>(model.trees.size()), model.subsample_size);
}

std::vector<double> score(const IsolationForestModel& model, const Matrix& points) {
    check_dimension(points.cols(), model.dimension);
    check_compiled(model);
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    const double* data = points.values().data();
    std::vector<double> total(n, 0.0);

    // Tree-major so each tree stays hot in cache; rows walk in interleaved
    // blocks so the independent lookups overlap.
    constexpr std::size_t kBlock = 16;
    for (const auto& tree : model.compiled) {
        const CompiledTree::Step* steps = tree.steps.data();
        std::size_t r = 0;
        for (; r + kBlock <= n; r += kBlock) {
            std::uint32_t at[kBlock] = {};
            for (std::uint32_t k = 0; k < tree.height; ++k) {
                for (std::size_t b = 0; b < kBlock; ++b) {
                    const auto& s = steps[at[b]];
                    at[b] = s.child[!(data[(r + b) * d + s.feature] < s.value)];
                }
            }
            for (std::size_t b = 0; b < kBlock; ++b) total[r + b] += steps[at[b]].value;
        }
        for (; r < n; ++r) total[r] += tree.path_length(points.row(r));
    }

    std::vector<double> out(n);
    const double trees = static_cast<double>(model.trees.size());
    for (std::size_t i = 0; i < n; ++i) out[i] = score_from_mean_path(total[i] / trees, model.subsample_size);
    return out;
}

CompiledTree CompiledTree::compile(const IsolationTree& tree) {
    CompiledTree out;
    out.steps.resize(tree.nodes.size());
    // Pre-order guarantees parents precede children, so depth flows forward.
    std::vector<std::uint32_t> depth(tree.nodes.size(), 0);
    for (std::uint32_t i = 0; i < tree.nodes.size(); ++i) {
        const Node& n = tree.nodes[i];
        Step& s = out.steps[i];
        if (n.is_leaf()) {
            s = {0, {i, i}, static_cast<double>(depth[i]) + n.value};
            out.height = std::max(out.height, depth[i]);
        } else {
            s = {n.feature, {i + 1, n.right}, n.value};
            depth[i + 1] = depth[i] + 1;
            depth[n.right] = depth[i] + 1;
        }
    }
    return out;
}

double CompiledTree::path_length(std::span<const double> point) const {
    std::uint32_t at = 0;
    for (std::uint32_t k = 0; k < height; ++k) {
        const Step& s = steps[at];
        at = s.child[!(point[s.feature] < s.value)];
    }
    return steps[at].value;
}

void IsolationForestModel::compile() {
    compiled.clear();
    compiled.reserve(trees.size());
    for (const auto& tree : trees) compiled.push_back(CompiledTree::compile(tree));
}

IsolationForestModel fit_iforest(const Matrix& train, const IForestParams& params) {
    params.validate();
    const std::size_t n = train.rows();
    if (n < 2) throw DataError("isolation forest needs at least 2 training rows, got " + std::to_string(n));
    for (double v : train.values()) {
        if (!std::isfinite(v)) throw DataError("non-finite training value");
    }

    IsolationForestModel model;
    model.params = params;
    model.subsample_size = static_cast<std::uint32_t>(std::min<std::size_t>(params.subsample_size, n));
    model.dimension = static_cast<std::uint32_t>(train.cols());
    const std::size_t limit = model.height_limit();

    std::vector<std::size_t> pool(n);
    model.trees.reserve(params.tree_count);
    for (std::uint32_t t = 0; t < params.tree_count; ++t) {
        Rng rng(derive_seed(params.seed, t));
        // Partial Fisher-Yates: the first psi entries are a uniform sample without replacement.
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < model.subsample_size; ++i) {
            std::swap(pool[i], pool[i + rng.uniform_index(n - i)]);
        }
        model.trees.push_back(
            build_tree(train, std::span<const std::size_t>(pool).first(model.subsample_size), limit, rng));
    }

    model.compile();
    const auto train_scores = score(model, train);
    model.threshold = calibrate_threshold(train_scores, params.contamination);
    return model;
}

double calibrate_threshold(std::span<const double> train_scores, double contamination) {
    if (train_scores.empty()) throw DataError("cannot calibrate a threshold from no scores");
    if (!(contamination >= 0.0 && contamination <= 0.5)) {
        throw ConfigError("contamination must lie in [0, 0.5]");
    }
    std::vector<double> sorted(train_scores.begin(), train_scores.end());
    std::sort(sorted.begin(), sorted.end());
    if (contamination == 0.0) return std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());

    const double pos = (1.0 - contamination) * static_cast<double>(sorted.size() - 1);
    const auto lower = static_cast<std::size_t>(std::floor(pos));
    const std::size_t upper = std::min(lower + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lower);
    return sorted[lower] + frac * (sorted[upper] - sorted[lower]);
}

Labels classify(const IsolationForestModel& model, const Matrix& points) {
    const auto scores = score(model, points);
    Labels out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > model.threshold ? 1 : 0;
    return out;
}

// Layout: "IFv1" | u32 tree_count | u32 requested psi | f64 contamination |
// u64 seed | u32 psi | u32 dimension | f64 threshold | trees (pre-order;
// u8 0 + u32 size for leaves, u8 1 + u32 feature + f64 split for internals).
std::vector<std::uint8_t> serialize(const IsolationForestModel& model) {
    ByteWriter out;
    out.put_tag(kMagic);
    out.put_u32(model.params.tree_count);
    out.put_u32(model.params.subsample_size);
    out.put_f64(model.params.contamination);
    out.put_u64(model.params.seed);
    out.put_u32(model.subsample_size);
    out.put_u32(model.dimension);
    out.put_f64(model.threshold);
    for (const auto& tree : model.trees) write_subtree(out, tree, 0);
    return std::move(out).bytes();
}

IsolationForestModel deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_tag(kMagic);
    IsolationForestModel model;
    model.params.tree_count = in.get_u32();
    model.params.subsample_size = in.get_u32();
    model.params.contamination = in.get_f64();
    model.params.seed = in.get_u64();
    model.subsample_size = in.get_u32();
    model.dimension = in.get_u32();
    model.threshold = in.get_f64();
    if (model.params.tree_count == 0 || model.subsample_size < 2 || model.dimension == 0) {
        throw DataError("malformed isolation forest header");
    }
    // Smallest tree is one 5-byte leaf.
    if (model.params.tree_count > in.remaining() / 5) throw DataError("truncated model bytes: too few trees");
    model.trees.resize(model.params.tree_count);
    for (auto& tree : model.trees) read_subtree(in, tree, model.dimension, 0);
    in.expect_end();
    model.compile();
    return model;
}

}  // namespace iotad::iforest
