#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "margeff/errors.hpp"
#include "margeff/rng.hpp"

namespace margeff {

// Bagged regression trees with axis-aligned variance-reduction splits and
// ceil(sqrt(p)) feature subsampling. min_node bounds the size of each
// child a split may produce.
class RandomForest {
 public:
  struct Options {
    int n_trees = 500;
    int min_node = 5;
    std::uint64_t seed = 1;
  };

  RandomForest() = default;

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Options& opt) {
    if (x.rows() != y.size() || x.rows() == 0) {
      throw Error(ErrorCode::dimension_mismatch, "forest: feature/target size mismatch");
    }
    if (opt.min_node < 1 || opt.n_trees < 1) {
      throw Error(ErrorCode::bad_hyperparameter, "forest: min_node and trees must be >= 1");
    }
    opt_ = opt;
    n_features_ = x.cols();
    mtry_ = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
    trees_.assign(static_cast<std::size_t>(opt.n_trees), {});
    for (int t = 0; t < opt.n_trees; ++t) {
      Rng rng(derive_stream(opt.seed, {0x74726565ULL, static_cast<std::uint64_t>(t)}));
      build_tree(trees_[static_cast<std::size_t>(t)], x, y, rng);
    }
  }

  double predict_row(const Eigen::VectorXd& row) const {
    double acc = 0.0;
    for (const auto& tree : trees_) {
      int node = 0;
      while (tree[static_cast<std::size_t>(node)].feature >= 0) {
        const Node& nd = tree[static_cast<std::size_t>(node)];
        node = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
      }
      acc += tree[static_cast<std::size_t>(node)].value;
    }
    return acc / static_cast<double>(trees_.size());
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    if (x.cols() != n_features_) {
      throw Error(ErrorCode::dimension_mismatch, "forest: feature count mismatch");
    }
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_row(x.row(i));
    return out;
  }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  void build_tree(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  Rng& rng) {
    const std::size_t n = static_cast<std::size_t>(x.rows());
    std::vector<int> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
      samples[i] = static_cast<int>(rng.uniform01() * static_cast<double>(n));
      if (samples[i] >= static_cast<int>(n)) samples[i] = static_cast<int>(n) - 1;
    }
    tree.clear();
    grow(tree, x, y, std::move(samples), rng);
  }

  int grow(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           std::vector<int> samples, Rng& rng) {
    const int id = static_cast<int>(tree.size());
    tree.push_back({});

    double sum = 0.0;
    for (int s : samples) sum += y[s];
    const double mean = sum / static_cast<double>(samples.size());

    int best_feature = -1;
    double best_threshold = 0.0, best_score = 0.0;
    if (static_cast<int>(samples.size()) >= 2 * opt_.min_node) {
      find_best_split(x, y, samples, rng, best_feature, best_threshold, best_score);
    }

    if (best_feature < 0) {
      tree[static_cast<std::size_t>(id)].value = mean;
      return id;
    }

    std::vector<int> left, right;
    left.reserve(samples.size());
    right.reserve(samples.size());
    for (int s : samples) {
      (x(s, best_feature) <= best_threshold ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();

    const int left_id = grow(tree, x, y, std::move(left), rng);
    const int right_id = grow(tree, x, y, std::move(right), rng);
    Node& node = tree[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left_id;
    node.right = right_id;
    return id;
  }

  void find_best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<int>& samples, Rng& rng, int& best_feature,
                       double& best_threshold, double& best_score) const {
    const int p = static_cast<int>(n_features_);
    std::vector<int> features(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    for (int k = 0; k < mtry_ && k < p; ++k) {
      int j = k + static_cast<int>(rng.uniform01() * static_cast<double>(p - k));
      if (j >= p) j = p - 1;
      std::swap(features[static_cast<std::size_t>(k)], features[static_cast<std::size_t>(j)]);
    }

    const std::size_t m = samples.size();
    std::vector<int> order;
    for (int f = 0; f < mtry_ && f < p; ++f) {
      const int feature = features[static_cast<std::size_t>(f)];
      order = samples;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return x(a, feature) < x(b, feature);
      });

      // Scan split points, tracking the left-side sum; maximizing
      // S_l^2/n_l + S_r^2/n_r minimizes the pooled within-child SSE.
      double total = 0.0;
      for (int s : order) total += y[s];
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < m; ++k) {
        left_sum += y[order[k]];
        const std::size_t n_left = k + 1;
        const std::size_t n_right = m - n_left;
        if (n_left < static_cast<std::size_t>(opt_.min_node)) continue;
        if (n_right < static_cast<std::size_t>(opt_.min_node)) break;
        double v_lo = x(order[k], feature);
        double v_hi = x(order[k + 1], feature);
        if (v_lo >= v_hi) continue;
        double right_sum = total - left_sum;
        double score = left_sum * left_sum / static_cast<double>(n_left) +
                       right_sum * right_sum / static_cast<double>(n_right);
        if (score > best_score || best_feature < 0) {
          double base = total * total / static_cast<double>(m);
          if (score <= base + 1e-12 * std::abs(base)) continue;  // no real gain
          best_score = score;
          best_feature = feature;
          best_threshold = 0.5 * (v_lo + v_hi);
        }
      }
    }
  }

  std::vector<Tree> trees_;
  Eigen::Index n_features_ = 0;
  int mtry_ = 1;
  Options opt_;
};

}  // namespace margeff
