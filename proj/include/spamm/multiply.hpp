#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spamm/engine/engine.hpp"
#include "spamm/hier_matrix.hpp"
#include "spamm/leaf_matrix.hpp"

namespace spamm {

enum class Method { kExact, kTruncmul, kSpamm, kHybrid };
inline constexpr std::array<Method, 4> kAllMethods{Method::kExact, Method::kTruncmul,
                                                   Method::kSpamm, Method::kHybrid};

std::string_view to_string(Method m);
// Accepts exact, truncmul, spamm, hybrid (case-insensitive). Throws InputError.
Method parse_method(std::string_view name);

struct MultiplyStats {
  std::size_t bs = 0;
  std::array<std::uint64_t, 4> n_gemm_by_method{};
  std::uint64_t predictor_calls = 0;
  std::uint64_t tasks_registered = 0;
  std::uint64_t tasks_executed = 0;
  std::uint64_t steals = 0;
  std::vector<std::uint64_t> bytes_sent;  // per worker
  double makespan_s = 0.0;
  double wall_ms = 0.0;

  std::uint64_t n_gemm() const noexcept;
  std::uint64_t n_gemm(Method m) const noexcept {
    return n_gemm_by_method[static_cast<std::size_t>(m)];
  }
  // 2 * bs^3 * n_gemm
  double flops() const noexcept;
  std::uint64_t bytes_sent_total() const noexcept;
  std::uint64_t bytes_sent_max() const noexcept;

  MultiplyStats& operator+=(const MultiplyStats& other);
};

struct MultiplyRequest {
  Method method = Method::kExact;
  double tau = 0.0;
  HierMatrix a;
  HierMatrix b;
};

// Worker count from SPAMM_WORKERS, 1 if unset.
std::size_t default_workers();

struct RunOptions {
  std::size_t workers = default_workers();
  engine::Mode mode = engine::Mode::kSimulated;
  std::uint64_t seed = 1;
  std::string trace_path;
  SpammAudit* audit = nullptr;  // records every gate rejection when set
};

struct RunResult {
  HierMatrix product;
  MultiplyStats stats;
};

// Runs the method's task tree on the engine. Inputs are truncated before the run
// for TRUNCMUL and HYBRID; that step is not part of the reported time.
RunResult run(const MultiplyRequest& request, const RunOptions& options = {});

// Convenience wrappers; stats are accumulated into the given object.
HierMatrix multiply_exact(const HierMatrix& a, const HierMatrix& b, MultiplyStats& stats,
                          const RunOptions& options = {});
HierMatrix spamm(const HierMatrix& a, const HierMatrix& b, double tau, MultiplyStats& stats,
                 const RunOptions& options = {});
HierMatrix truncmul(const HierMatrix& a, const HierMatrix& b, double tau, MultiplyStats& stats,
                    const RunOptions& options = {});
HierMatrix hybrid(const HierMatrix& a, const HierMatrix& b, double tau, MultiplyStats& stats,
                  const RunOptions& options = {});

// Chunk payload for one quadtree node: a leaf matrix, or four child chunk ids
// with their squared norms.
class MatrixChunk : public engine::ChunkPayload {
 public:
  static constexpr std::size_t kHeaderBytes = 80;

  MatrixChunk(std::size_t side, LeafMatrix leaf);
  MatrixChunk(std::size_t side, std::array<engine::ChunkId, 4> children,
              std::array<double, 4> child_norm_sq);

  bool is_leaf() const noexcept { return is_leaf_; }
  std::size_t side() const noexcept { return side_; }
  const LeafMatrix& leaf() const noexcept { return leaf_; }
  engine::ChunkId child(int q) const noexcept { return children_[static_cast<std::size_t>(q)]; }
  double child_norm_sq(int q) const noexcept {
    return child_norm_sq_[static_cast<std::size_t>(q)];
  }
  double norm_sq() const noexcept { return norm_sq_; }

  std::size_t byte_size() const override;
  std::size_t header_size() const override { return kHeaderBytes; }
  void for_each_child(const std::function<void(engine::ChunkId)>& f) const override;

 private:
  std::size_t side_;
  bool is_leaf_;
  LeafMatrix leaf_;
  std::array<engine::ChunkId, 4> children_{};
  std::array<double, 4> child_norm_sq_{};
  double norm_sq_ = 0.0;
};

// Registers the quadtree of m as chunks; leaves are spread over the workers
// along a Morton curve, internal nodes live with their first child.
engine::ChunkId import_matrix(engine::Engine& engine, const HierMatrix& m);
// Rebuilds a HierMatrix from a chunk tree (leaves are shared, not copied).
HierMatrix export_matrix(const engine::Engine& engine, engine::ChunkId root, std::size_t n,
                         Geometry geometry);

}  // namespace spamm
