#pragma once

// Distributed-level quadtree matrix.
//
// An n x n matrix is padded with implicit zeros to n_padded = task_size * 2^k
// (smallest k >= 0 with n_padded >= n). Internal nodes split into four
// quadrants until side task_size, where a LeafMatrix takes over. All-zero
// subtrees are null handles and every node caches its squared Frobenius norm.
// Matrices are immutable; subtrees are shared freely between matrices.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "spamm/dense.hpp"
#include "spamm/leaf_matrix.hpp"

namespace spamm {

struct Geometry {
  std::size_t task_size = 0;
  std::size_t bs = 0;

  // Throws ConfigError unless both are powers of two and bs <= task_size.
  void validate() const;
  friend bool operator==(const Geometry&, const Geometry&) = default;
};

class HierNode {
 public:
  using Ptr = std::shared_ptr<const HierNode>;

  explicit HierNode(LeafMatrix leaf);
  explicit HierNode(std::array<Ptr, 4> children);

  bool is_leaf() const noexcept { return is_leaf_; }
  const LeafMatrix& leaf() const noexcept { return leaf_; }
  const Ptr& child(int q) const noexcept { return children_[static_cast<std::size_t>(q)]; }
  const std::array<Ptr, 4>& children() const noexcept { return children_; }
  double norm_sq() const noexcept { return norm_sq_; }

  // Null for empty leaves / all-null children.
  static Ptr make_leaf(LeafMatrix leaf);
  static Ptr make_internal(std::array<Ptr, 4> children);

 private:
  std::array<Ptr, 4> children_{};
  LeafMatrix leaf_;
  bool is_leaf_ = false;
  double norm_sq_ = 0.0;
};

class HierMatrix {
 public:
  using ValueFn = std::function<double(std::size_t, std::size_t)>;
  using RegionFn = std::function<bool(std::size_t, std::size_t, std::size_t)>;
  // Leaves with equal keys are built once and shared (e.g. Toeplitz structure).
  using ShareKeyFn = std::function<std::optional<std::int64_t>(std::size_t, std::size_t)>;

  struct ElementSource {
    ValueFn value;              // element (i, j), only queried for i, j < n
    RegionFn may_be_nonzero;    // optional pruning in global coordinates
    ShareKeyFn share_key;       // optional, by leaf row / leaf column
  };

  struct PlacedLeaf {
    std::size_t leaf_row;
    std::size_t leaf_col;
    LeafMatrix leaf;
  };

  HierMatrix() = default;
  HierMatrix(std::size_t n, Geometry geometry, HierNode::Ptr root = nullptr);

  static HierMatrix build_from_dense(const DenseMatrix& values, std::size_t task_size,
                                     std::size_t bs);
  static HierMatrix build_from_source(std::size_t n, Geometry geometry,
                                      const ElementSource& source);
  static HierMatrix from_leaves(std::size_t n, Geometry geometry, std::vector<PlacedLeaf> leaves);

  std::size_t n_logical() const noexcept { return n_; }
  std::size_t n_padded() const noexcept { return n_padded_; }
  std::size_t task_size() const noexcept { return geometry_.task_size; }
  std::size_t bs() const noexcept { return geometry_.bs; }
  const Geometry& geometry() const noexcept { return geometry_; }
  const HierNode::Ptr& root() const noexcept { return root_; }
  bool empty() const noexcept { return root_ == nullptr; }
  std::size_t leaves_per_side() const noexcept { return n_padded_ / geometry_.task_size; }
  // Number of quadtree levels above the leaves.
  std::size_t depth() const noexcept;

  double norm_sq() const noexcept { return root_ ? root_->norm_sq() : 0.0; }
  double get_element(std::size_t i, std::size_t j) const;
  // Leaf at a leaf-grid position, nullptr if that block is empty.
  const LeafMatrix* leaf_at(std::size_t leaf_row, std::size_t leaf_col) const;

  // Element (i, j) becomes 0 when |a_ij| < tau (strict). Returns a new matrix.
  HierMatrix truncate(double tau) const;
  // Sum of a_ij^2 over all (i, j) with |a_ij| <= eps.
  double insignificant_sum_sq(double eps) const;

  std::size_t nonzero_count() const;
  std::size_t block_count() const;
  DenseMatrix to_dense() const;

  // Visits non-empty leaves in quadtree order.
  void for_each_leaf(
      const std::function<void(std::size_t, std::size_t, const LeafMatrix&)>& visit) const;

  bool same_shape(const HierMatrix& other) const noexcept {
    return n_ == other.n_ && geometry_ == other.geometry_;
  }

 private:
  std::size_t n_ = 0;
  std::size_t n_padded_ = 0;
  Geometry geometry_{};
  HierNode::Ptr root_;
};

// Smallest task_size * 2^k >= n.
std::size_t padded_size(std::size_t n, std::size_t task_size);

}  // namespace spamm
