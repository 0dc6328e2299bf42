#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iotad/dataset.hpp"
#include "iotad/matrix.hpp"
#include "iotad/rng.hpp"

namespace iotad::iforest {

// Average path length of an unsuccessful BST search over n points; the
// normaliser for path lengths. c(0) = c(1) = 0.
double expected_path_c(std::uint64_t n);

// One node of a flattened isolation tree, stored in pre-order: an internal
// node's left child is the next node, its right child sits at `right`.
struct Node {
    static constexpr std::uint32_t kLeaf = 0xFFFFFFFFu;

    std::uint32_t feature = kLeaf;  // split column, or kLeaf for external nodes
    std::uint32_t right = 0;        // index of right child (internal only)
    std::uint32_t size = 0;         // training points reaching the leaf (external only)
    // Internal: split threshold, x < value goes left. External: c(size).
    double value = 0.0;

    bool is_leaf() const noexcept { return feature == kLeaf; }
    bool operator==(const Node&) const = default;
};

struct IsolationTree {
    std::vector<Node> nodes;  // nodes[0] is the root

    static IsolationTree leaf(std::uint32_t size);
    // Joins two subtrees under a new root splitting on (feature, value).
    static IsolationTree join(std::uint32_t feature, double value, const IsolationTree& left,
                              const IsolationTree& right);

    // Longest root-to-leaf edge count.
    std::size_t height() const;
    std::size_t leaf_size_sum() const;

    bool operator==(const IsolationTree&) const = default;
};

struct IForestParams {
    std::uint32_t tree_count = 100;
    std::uint32_t subsample_size = 256;
    double contamination = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Inference layout of one tree: leaves point to themselves and hold their
// full path length, so every lookup is a fixed number of branch-free steps.
struct CompiledTree {
    struct Step {
        std::uint32_t feature = 0;
        std::uint32_t child[2] = {0, 0};  // [0] taken when x < value
        double value = 0.0;               // split threshold, or depth + c(size) at a leaf
    };
    std::vector<Step> steps;
    std::uint32_t height = 0;

    static CompiledTree compile(const IsolationTree& tree);
    double path_length(std::span<const double> point) const;
};

// Fitted forest. Immutable after fit; concurrent scoring is safe.
struct IsolationForestModel {
    IForestParams params;
    std::uint32_t subsample_size = 0;  // psi after capping at the training size
    std::uint32_t dimension = 0;
    double threshold = 0.0;
    std::vector<IsolationTree> trees;
    std::vector<CompiledTree> compiled;  // rebuilt from `trees` by compile()

    std::uint32_t height_limit() const;
    // Must be called after `trees` is assigned by hand; fit and deserialize do it.
    void compile();
};

// Samples are row indices into `data`. Stops at height_limit, at <= 1 row, or
// when no column has min < max among the rows.
IsolationTree build_tree(const Matrix& data, std::span<const std::size_t> sample,
                         std::size_t height_limit, Rng& rng);
IsolationTree build_tree(const Matrix& sample, std::size_t height_limit, Rng& rng);

// Edges to the reached leaf plus c(leaf size).
double path_length(const IsolationTree& tree, std::span<const double> point);

double score(const IsolationForestModel& model, std::span<const double> point);
std::vector<double> score(const IsolationForestModel& model, const Matrix& points);

// s = 2^(-mean_path / c(psi)).
double score_from_mean_path(double mean_path, std::uint32_t psi);

IsolationForestModel fit_iforest(const Matrix& train, const IForestParams& params);

// (1 - contamination) quantile of the scores with linear interpolation.
// contamination == 0 yields a value strictly above every score.
double calibrate_threshold(std::span<const double> train_scores, double contamination);

// 1 iff score > threshold.
Labels classify(const IsolationForestModel& model, const Matrix& points);

std::vector<std::uint8_t> serialize(const IsolationForestModel& model);
IsolationForestModel deserialize(std::span<const std::uint8_t> bytes);

}  // namespace iotad::iforest
