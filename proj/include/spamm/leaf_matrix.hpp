#pragma once

// Hierarchical block-sparse matrix used inside one task-size block.
//
// A LeafMatrix of side s is a quadtree whose bottom level holds dense bs x bs
// blocks. A block is stored only if it has at least one nonzero element, and
// an all-zero quadrant is a null child at the highest level possible. Nodes
// are immutable and may be shared between matrices.

#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace spamm {

// Counts base-block multiplies ("gemm" calls). Safe to share between threads.
class GemmCounter {
 public:
  GemmCounter() = default;
  GemmCounter(const GemmCounter&) = delete;
  GemmCounter& operator=(const GemmCounter&) = delete;

  void add_gemm(std::uint64_t n = 1) noexcept { n_gemm_.fetch_add(n, std::memory_order_relaxed); }
  void add_predictor_call() noexcept { predictor_calls_.fetch_add(1, std::memory_order_relaxed); }

  std::uint64_t n_gemm() const noexcept { return n_gemm_.load(std::memory_order_relaxed); }
  std::uint64_t predictor_calls() const noexcept {
    return predictor_calls_.load(std::memory_order_relaxed);
  }

  static double flops(std::size_t bs, std::uint64_t n_gemm) noexcept {
    const double b = static_cast<double>(bs);
    return 2.0 * b * b * b * static_cast<double>(n_gemm);
  }

 private:
  std::atomic<std::uint64_t> n_gemm_{0};
  std::atomic<std::uint64_t> predictor_calls_{0};
};

// One skipped sub-product, as seen by the gate.
struct GateRejection {
  std::size_t side = 0;  // side of the operand blocks
  double norm_a = 0.0;
  double norm_b = 0.0;
  double tau = 0.0;
};

// Optional log of every SpAMM gate rejection. Thread safe.
class SpammAudit {
 public:
  void record(const GateRejection& r) {
    std::lock_guard lock(mutex_);
    rejections_.push_back(r);
  }
  std::vector<GateRejection> rejections() const {
    std::lock_guard lock(mutex_);
    return rejections_;
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return rejections_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<GateRejection> rejections_;
};

// The SpAMM acceptance test on a pair of squared norms: ||A||_F ||B||_F >= tau.
inline bool gate_passes(double norm_sq_a, double norm_sq_b, double tau) {
  return std::sqrt(norm_sq_a) * std::sqrt(norm_sq_b) >= tau;
}

// Sum of squares in storage order. Every norm in the library goes through here.
inline double block_norm_sq(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

class LeafMatrix {
 public:
  class Node;
  using NodePtr = std::shared_ptr<const Node>;

  class Node {
   public:
    // Dense base block (row-major, bs*bs values).
    explicit Node(std::vector<double> block);
    // Internal node; children in (0,0),(0,1),(1,0),(1,1) order, at least one non-null.
    explicit Node(std::array<NodePtr, 4> children);

    bool is_block() const noexcept { return !block_.empty(); }
    std::span<const double> block() const noexcept { return block_; }
    const NodePtr& child(int q) const noexcept { return children_[static_cast<std::size_t>(q)]; }
    const std::array<NodePtr, 4>& children() const noexcept { return children_; }
    double norm_sq() const noexcept { return norm_sq_; }
    // Number of dense blocks in this subtree.
    std::size_t block_count() const noexcept { return blocks_; }
    std::size_t node_count() const noexcept { return nodes_; }

   private:
    std::array<NodePtr, 4> children_{};
    std::vector<double> block_;
    double norm_sq_ = 0.0;
    std::size_t blocks_ = 0;
    std::size_t nodes_ = 1;
  };

  using ValueFn = std::function<double(std::size_t, std::size_t)>;
  // (row0, col0, side) -> false if that square region is known to be all zero.
  using RegionFn = std::function<bool(std::size_t, std::size_t, std::size_t)>;

  LeafMatrix() = default;
  // side and bs must be powers of two with bs <= side.
  LeafMatrix(std::size_t side, std::size_t bs, NodePtr root = nullptr);

  static LeafMatrix from_function(std::size_t side, std::size_t bs, const ValueFn& value,
                                  const RegionFn& may_be_nonzero = {});
  // Reads a side x side window of a row-major array with leading dimension ld.
  static LeafMatrix from_dense(std::span<const double> values, std::size_t ld, std::size_t side,
                               std::size_t bs);
  // Places the given blocks (block row, block col, bs*bs values); positions must be distinct.
  struct PlacedBlock {
    std::size_t block_row;
    std::size_t block_col;
    std::vector<double> values;
  };
  static LeafMatrix from_blocks(std::size_t side, std::size_t bs, std::vector<PlacedBlock> blocks);

  std::size_t side() const noexcept { return side_; }
  std::size_t bs() const noexcept { return bs_; }
  const NodePtr& root() const noexcept { return root_; }
  bool empty() const noexcept { return root_ == nullptr; }
  double norm_sq() const noexcept { return root_ ? root_->norm_sq() : 0.0; }
  // Number of quadtree splits between the root and the base blocks.
  std::size_t depth() const noexcept;

  double get_element(std::size_t i, std::size_t j) const;
  std::size_t block_count() const noexcept { return root_ ? root_->block_count() : 0; }
  // Payload size used for data-movement accounting.
  std::size_t byte_size() const noexcept;
  // Writes all side*side values (zeros included) into out with leading dimension ld.
  void to_dense(std::span<double> out, std::size_t ld) const;

  // Zeroes every element with |a| < tau. Unchanged subtrees are shared with *this.
  LeafMatrix truncate(double tau) const;
  // Sum of a^2 over stored elements with |a| <= eps.
  double insignificant_sum_sq(double eps) const;

 private:
  std::size_t side_ = 0;
  std::size_t bs_ = 0;
  NodePtr root_;
};

// Exact product. Base-block jobs are collected by a recursive descent, grouped
// by output block and executed in output-key-then-insertion order, then the
// output quadtree is populated bottom-up.
LeafMatrix leaf_multiply(const LeafMatrix& a, const LeafMatrix& b, GemmCounter& counter);

// SpAMM inside the leaf: child pairs with ||A_c|| ||B_c|| < tau are skipped at
// every level down to the base blocks. With tau == 0 the result is bitwise
// identical to leaf_multiply.
LeafMatrix leaf_spamm(const LeafMatrix& a, const LeafMatrix& b, double tau, GemmCounter& counter,
                      SpammAudit* audit = nullptr);

// a + b; null subtrees are shared, never copied.
LeafMatrix leaf_add(const LeafMatrix& a, const LeafMatrix& b);

// Structural test: true iff at least one base-block multiply would run.
bool predict_product_nonzero(const LeafMatrix& a, const LeafMatrix& b);
// Same, but a child pair is viable only if it also passes the SpAMM gate.
bool predict_spamm_nonzero(const LeafMatrix& a, const LeafMatrix& b, double tau);

}  // namespace spamm
