#include "spamm/leaf_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spamm/detail/bits.hpp"
#include "spamm/error.hpp"
#include "spamm/gemm_kernel.hpp"

namespace spamm {

using NodePtr = LeafMatrix::NodePtr;
using Node = LeafMatrix::Node;

LeafMatrix::Node::Node(std::vector<double> block)
    : block_(std::move(block)), norm_sq_(block_norm_sq(block_)), blocks_(1) {}

LeafMatrix::Node::Node(std::array<NodePtr, 4> children) : children_(std::move(children)) {
  blocks_ = 0;
  for (const auto& c : children_) {
    if (!c) continue;
    norm_sq_ += c->norm_sq();
    blocks_ += c->block_count();
    nodes_ += c->node_count();
  }
}

namespace {

NodePtr make_internal(std::array<NodePtr, 4> children) {
  if (std::none_of(children.begin(), children.end(), [](const NodePtr& c) { return c != nullptr; }))
    return nullptr;
  return std::make_shared<const Node>(std::move(children));
}

void check_geometry(std::size_t side, std::size_t bs) {
  if (!detail::is_pow2(side) || !detail::is_pow2(bs))
    throw ConfigError("leaf side and block size must be powers of two");
  if (bs > side) throw ConfigError("block size exceeds leaf side");
}

void check_compatible(const LeafMatrix& a, const LeafMatrix& b) {
  if (a.side() != b.side() || a.bs() != b.bs())
    throw InputError("leaf operands differ in side or block size");
}

bool all_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

NodePtr build_from_function(std::size_t r0, std::size_t c0, std::size_t side, std::size_t bs,
                            const LeafMatrix::ValueFn& value,
                            const LeafMatrix::RegionFn& may_be_nonzero) {
  if (may_be_nonzero && !may_be_nonzero(r0, c0, side)) return nullptr;
  if (side == bs) {
    std::vector<double> block(bs * bs);
    for (std::size_t i = 0; i < bs; ++i)
      for (std::size_t j = 0; j < bs; ++j) {
        const double v = value(r0 + i, c0 + j);
        if (!std::isfinite(v)) throw InputError("non-finite matrix element");
        block[i * bs + j] = v;
      }
    if (all_zero(block)) return nullptr;
    return std::make_shared<const Node>(std::move(block));
  }
  const std::size_t h = side / 2;
  return make_internal({build_from_function(r0, c0, h, bs, value, may_be_nonzero),
                        build_from_function(r0, c0 + h, h, bs, value, may_be_nonzero),
                        build_from_function(r0 + h, c0, h, bs, value, may_be_nonzero),
                        build_from_function(r0 + h, c0 + h, h, bs, value, may_be_nonzero)});
}

void write_dense(const Node* node, std::size_t r0, std::size_t c0, std::size_t side,
                 std::size_t bs, std::span<double> out, std::size_t ld) {
  if (!node) return;
  if (node->is_block()) {
    auto blk = node->block();
    for (std::size_t i = 0; i < bs; ++i)
      std::copy_n(blk.begin() + static_cast<std::ptrdiff_t>(i * bs), bs,
                  out.begin() + static_cast<std::ptrdiff_t>((r0 + i) * ld + c0));
    return;
  }
  const std::size_t h = side / 2;
  write_dense(node->child(0).get(), r0, c0, h, bs, out, ld);
  write_dense(node->child(1).get(), r0, c0 + h, h, bs, out, ld);
  write_dense(node->child(2).get(), r0 + h, c0, h, bs, out, ld);
  write_dense(node->child(3).get(), r0 + h, c0 + h, h, bs, out, ld);
}

NodePtr truncate_node(const NodePtr& node, double tau) {
  if (!node) return nullptr;
  if (node->is_block()) {
    auto blk = node->block();
    const bool changes = std::any_of(blk.begin(), blk.end(), [tau](double v) {
      return v != 0.0 && std::abs(v) < tau;
    });
    if (!changes) return node;
    std::vector<double> out(blk.begin(), blk.end());
    for (double& v : out)
      if (std::abs(v) < tau) v = 0.0;
    if (all_zero(out)) return nullptr;
    return std::make_shared<const Node>(std::move(out));
  }
  std::array<NodePtr, 4> kids;
  bool same = true;
  for (int q = 0; q < 4; ++q) {
    kids[static_cast<std::size_t>(q)] = truncate_node(node->child(q), tau);
    same = same && kids[static_cast<std::size_t>(q)] == node->child(q);
  }
  if (same) return node;
  return make_internal(std::move(kids));
}

double insignificant_node(const Node* node, double eps) {
  if (!node) return 0.0;
  if (node->is_block()) {
    double s = 0.0;
    for (double v : node->block())
      if (std::abs(v) <= eps) s += v * v;
    return s;
  }
  double s = 0.0;
  for (const auto& c : node->children()) s += insignificant_node(c.get(), eps);
  return s;
}

// ---- multiplication ----

struct Job {
  std::uint64_t key;  // output block position, two bits per level, root digit first
  const Node* a;
  const Node* b;
};

struct Gate {
  double tau;
  SpammAudit* audit;
};

// Appends the base-block jobs of a*b. Loop order (i, j, k) makes the jobs of
// one output key appear with k increasing, i.e. T0 before T1 at every level.
void collect_jobs(const Node* a, const Node* b, std::uint64_t key, std::size_t side,
                  const Gate* gate, std::vector<Job>& jobs) {
  if (a->is_block()) {
    jobs.push_back({key, a, b});
    return;
  }
  const std::size_t h = side / 2;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        const Node* ac = a->child(2 * i + k).get();
        const Node* bc = b->child(2 * k + j).get();
        if (!ac || !bc) continue;
        if (gate && !gate_passes(ac->norm_sq(), bc->norm_sq(), gate->tau)) {
          if (gate->audit)
            gate->audit->record(
                {h, std::sqrt(ac->norm_sq()), std::sqrt(bc->norm_sq()), gate->tau});
          continue;
        }
        collect_jobs(ac, bc, key * 4 + static_cast<std::uint64_t>(2 * i + j), h, gate, jobs);
      }
}

using Keyed = std::pair<std::uint64_t, NodePtr>;

// Builds the subtree for the sorted items in [lo, hi) whose keys share the
// first `level` digits.
NodePtr assemble(const std::vector<Keyed>& items, std::size_t lo, std::size_t hi,
                 std::size_t level, std::size_t depth) {
  if (lo == hi) return nullptr;
  if (level == depth) return items[lo].second;
  const std::size_t shift = 2 * (depth - level - 1);
  std::array<NodePtr, 4> kids;
  std::size_t start = lo;
  for (std::uint64_t q = 0; q < 4; ++q) {
    std::size_t end = start;
    while (end < hi && ((items[end].first >> shift) & 3U) == q) ++end;
    kids[q] = assemble(items, start, end, level + 1, depth);
    start = end;
  }
  return make_internal(std::move(kids));
}

LeafMatrix execute_jobs(std::vector<Job>& jobs, const LeafMatrix& shape, GemmCounter& counter) {
  const std::size_t bs = shape.bs();
  std::stable_sort(jobs.begin(), jobs.end(),
                   [](const Job& x, const Job& y) { return x.key < y.key; });
  std::vector<Keyed> blocks;
  for (std::size_t first = 0; first < jobs.size();) {
    std::size_t last = first;
    while (last < jobs.size() && jobs[last].key == jobs[first].key) ++last;
    std::vector<double> acc(bs * bs);
    for (std::size_t t = first; t < last; ++t)
      kernel::gemm(jobs[t].a->block(), jobs[t].b->block(), acc, bs, t == first);
    counter.add_gemm(last - first);
    blocks.emplace_back(jobs[first].key, std::make_shared<const Node>(std::move(acc)));
    first = last;
  }
  return LeafMatrix(shape.side(), bs, assemble(blocks, 0, blocks.size(), 0, shape.depth()));
}

bool predict_node(const Node* a, const Node* b, const Gate* gate) {
  if (a->is_block()) return true;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        const Node* ac = a->child(2 * i + k).get();
        const Node* bc = b->child(2 * k + j).get();
        if (!ac || !bc) continue;
        if (gate && !gate_passes(ac->norm_sq(), bc->norm_sq(), gate->tau)) continue;
        if (predict_node(ac, bc, gate)) return true;
      }
  return false;
}

NodePtr add_nodes(const NodePtr& x, const NodePtr& y) {
  if (!x) return y;
  if (!y) return x;
  if (x->is_block()) {
    auto xb = x->block();
    auto yb = y->block();
    std::vector<double> out(xb.size());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = xb[t] + yb[t];
    return std::make_shared<const Node>(std::move(out));
  }
  std::array<NodePtr, 4> kids;
  for (int q = 0; q < 4; ++q)
    kids[static_cast<std::size_t>(q)] = add_nodes(x->child(q), y->child(q));
  return make_internal(std::move(kids));
}

}  // namespace

LeafMatrix::LeafMatrix(std::size_t side, std::size_t bs, NodePtr root)
    : side_(side), bs_(bs), root_(std::move(root)) {
  check_geometry(side, bs);
}

LeafMatrix LeafMatrix::from_function(std::size_t side, std::size_t bs, const ValueFn& value,
                                     const RegionFn& may_be_nonzero) {
  check_geometry(side, bs);
  return LeafMatrix(side, bs, build_from_function(0, 0, side, bs, value, may_be_nonzero));
}

LeafMatrix LeafMatrix::from_dense(std::span<const double> values, std::size_t ld,
                                  std::size_t side, std::size_t bs) {
  if (ld < side || values.size() < (side - 1) * ld + side)
    throw InputError("dense window smaller than leaf side");
  return from_function(side, bs, [&](std::size_t i, std::size_t j) { return values[i * ld + j]; });
}

LeafMatrix LeafMatrix::from_blocks(std::size_t side, std::size_t bs,
                                   std::vector<PlacedBlock> blocks) {
  check_geometry(side, bs);
  const std::size_t nb = side / bs;
  const std::size_t depth = detail::log2_exact(nb);
  std::vector<Keyed> items;
  items.reserve(blocks.size());
  for (auto& pb : blocks) {
    if (pb.block_row >= nb || pb.block_col >= nb) throw InputError("block position out of range");
    if (pb.values.size() != bs * bs) throw InputError("block has wrong size");
    for (double v : pb.values)
      if (!std::isfinite(v)) throw InputError("non-finite matrix element");
    if (all_zero(pb.values)) continue;
    std::uint64_t key = 0;
    for (std::size_t l = depth; l-- > 0;) {
      key = key * 4 + (((pb.block_row >> l) & 1U) << 1) + ((pb.block_col >> l) & 1U);
    }
    items.emplace_back(key, std::make_shared<const Node>(std::move(pb.values)));
  }
  std::sort(items.begin(), items.end(),
            [](const Keyed& x, const Keyed& y) { return x.first < y.first; });
  for (std::size_t t = 1; t < items.size(); ++t)
    if (items[t].first == items[t - 1].first) throw InputError("duplicate block position");
  return LeafMatrix(side, bs, assemble(items, 0, items.size(), 0, depth));
}

std::size_t LeafMatrix::depth() const noexcept {
  return bs_ == 0 ? 0 : detail::log2_exact(side_ / bs_);
}

double LeafMatrix::get_element(std::size_t i, std::size_t j) const {
  if (i >= side_ || j >= side_) throw InputError("leaf element index out of range");
  const Node* node = root_.get();
  std::size_t side = side_;
  while (node && !node->is_block()) {
    side /= 2;
    const int q = (i >= side ? 2 : 0) + (j >= side ? 1 : 0);
    if (i >= side) i -= side;
    if (j >= side) j -= side;
    node = node->child(q).get();
  }
  return node ? node->block()[i * bs_ + j] : 0.0;
}

std::size_t LeafMatrix::byte_size() const noexcept {
  if (!root_) return 0;
  return root_->block_count() * bs_ * bs_ * sizeof(double) + root_->node_count() * sizeof(Node);
}

void LeafMatrix::to_dense(std::span<double> out, std::size_t ld) const {
  for (std::size_t i = 0; i < side_; ++i)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * ld), side_, 0.0);
  write_dense(root_.get(), 0, 0, side_, bs_, out, ld);
}

LeafMatrix LeafMatrix::truncate(double tau) const {
  if (!(tau >= 0.0)) throw InputError("truncation threshold must be nonnegative");
  return LeafMatrix(side_, bs_, truncate_node(root_, tau));
}

double LeafMatrix::insignificant_sum_sq(double eps) const {
  if (!(eps > 0.0)) throw InputError("eps must be positive");
  return insignificant_node(root_.get(), eps);
}

LeafMatrix leaf_multiply(const LeafMatrix& a, const LeafMatrix& b, GemmCounter& counter) {
  check_compatible(a, b);
  counter.add_predictor_call();
  if (!predict_product_nonzero(a, b)) return LeafMatrix(a.side(), a.bs());
  std::vector<Job> jobs;
  collect_jobs(a.root().get(), b.root().get(), 0, a.side(), nullptr, jobs);
  return execute_jobs(jobs, a, counter);
}

LeafMatrix leaf_spamm(const LeafMatrix& a, const LeafMatrix& b, double tau, GemmCounter& counter,
                      SpammAudit* audit) {
  check_compatible(a, b);
  if (!(tau >= 0.0)) throw InputError("SpAMM threshold must be nonnegative");
  counter.add_predictor_call();
  if (!predict_spamm_nonzero(a, b, tau)) {
    // Replay the rejected pairs for the audit log; they are all below tau.
    if (audit && !a.empty() && !b.empty()) {
      std::vector<Job> none;
      const Gate gate{tau, audit};
      collect_jobs(a.root().get(), b.root().get(), 0, a.side(), &gate, none);
    }
    return LeafMatrix(a.side(), a.bs());
  }
  std::vector<Job> jobs;
  const Gate gate{tau, audit};
  collect_jobs(a.root().get(), b.root().get(), 0, a.side(), &gate, jobs);
  return execute_jobs(jobs, a, counter);
}

LeafMatrix leaf_add(const LeafMatrix& a, const LeafMatrix& b) {
  check_compatible(a, b);
  return LeafMatrix(a.side(), a.bs(), add_nodes(a.root(), b.root()));
}

bool predict_product_nonzero(const LeafMatrix& a, const LeafMatrix& b) {
  check_compatible(a, b);
  if (a.empty() || b.empty()) return false;
  return predict_node(a.root().get(), b.root().get(), nullptr);
}

bool predict_spamm_nonzero(const LeafMatrix& a, const LeafMatrix& b, double tau) {
  check_compatible(a, b);
  if (!(tau >= 0.0)) throw InputError("SpAMM threshold must be nonnegative");
  if (a.empty() || b.empty()) return false;
  const Gate gate{tau, nullptr};
  return predict_node(a.root().get(), b.root().get(), &gate);
}

}  // namespace spamm
