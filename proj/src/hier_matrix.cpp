#include "spamm/hier_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "spamm/detail/bits.hpp"
#include "spamm/error.hpp"

namespace spamm {

void Geometry::validate() const {
  if (!detail::is_pow2(task_size)) throw ConfigError("task_size must be a power of two");
  if (!detail::is_pow2(bs)) throw ConfigError("bs must be a power of two");
  if (bs > task_size) throw ConfigError("bs must not exceed task_size");
}

std::size_t padded_size(std::size_t n, std::size_t task_size) {
  std::size_t p = task_size;
  while (p < n) p *= 2;
  return p;
}

HierNode::HierNode(LeafMatrix leaf) : leaf_(std::move(leaf)), is_leaf_(true) {
  norm_sq_ = leaf_.norm_sq();
}

HierNode::HierNode(std::array<Ptr, 4> children) : children_(std::move(children)) {
  for (const auto& c : children_)
    if (c) norm_sq_ += c->norm_sq();
}

HierNode::Ptr HierNode::make_leaf(LeafMatrix leaf) {
  if (leaf.empty()) return nullptr;
  return std::make_shared<const HierNode>(std::move(leaf));
}

HierNode::Ptr HierNode::make_internal(std::array<Ptr, 4> children) {
  if (std::none_of(children.begin(), children.end(), [](const Ptr& c) { return c != nullptr; }))
    return nullptr;
  return std::make_shared<const HierNode>(std::move(children));
}

HierMatrix::HierMatrix(std::size_t n, Geometry geometry, HierNode::Ptr root)
    : n_(n), geometry_(geometry), root_(std::move(root)) {
  if (n == 0) throw InputError("matrix dimension must be at least 1");
  geometry_.validate();
  n_padded_ = padded_size(n, geometry_.task_size);
}

std::size_t HierMatrix::depth() const noexcept {
  return detail::log2_exact(n_padded_ / geometry_.task_size);
}

namespace {

struct SourceBuilder {
  std::size_t n;
  Geometry g;
  const HierMatrix::ElementSource& src;
  std::map<std::int64_t, LeafMatrix> shared;

  LeafMatrix make_leaf(std::size_t r0, std::size_t c0) {
    const std::size_t t = g.task_size;
    auto value = [&](std::size_t i, std::size_t j) {
      const std::size_t gi = r0 + i;
      const std::size_t gj = c0 + j;
      return (gi < n && gj < n) ? src.value(gi, gj) : 0.0;
    };
    LeafMatrix::RegionFn region = [&](std::size_t lr, std::size_t lc, std::size_t side) {
      if (r0 + lr >= n || c0 + lc >= n) return false;
      return !src.may_be_nonzero || src.may_be_nonzero(r0 + lr, c0 + lc, side);
    };
    return LeafMatrix::from_function(t, g.bs, value, region);
  }

  HierNode::Ptr build(std::size_t r0, std::size_t c0, std::size_t side) {
    if (r0 >= n || c0 >= n) return nullptr;
    if (src.may_be_nonzero && !src.may_be_nonzero(r0, c0, side)) return nullptr;
    if (side == g.task_size) {
      const std::size_t lr = r0 / side;
      const std::size_t lc = c0 / side;
      if (src.share_key) {
        if (auto key = src.share_key(lr, lc)) {
          auto it = shared.find(*key);
          if (it == shared.end()) it = shared.emplace(*key, make_leaf(r0, c0)).first;
          return HierNode::make_leaf(it->second);
        }
      }
      return HierNode::make_leaf(make_leaf(r0, c0));
    }
    const std::size_t h = side / 2;
    return HierNode::make_internal(
        {build(r0, c0, h), build(r0, c0 + h, h), build(r0 + h, c0, h), build(r0 + h, c0 + h, h)});
  }
};

void visit_leaves(const HierNode* node, std::size_t lr, std::size_t lc, std::size_t span,
                  const std::function<void(std::size_t, std::size_t, const LeafMatrix&)>& f) {
  if (!node) return;
  if (node->is_leaf()) {
    f(lr, lc, node->leaf());
    return;
  }
  const std::size_t h = span / 2;
  visit_leaves(node->child(0).get(), lr, lc, h, f);
  visit_leaves(node->child(1).get(), lr, lc + h, h, f);
  visit_leaves(node->child(2).get(), lr + h, lc, h, f);
  visit_leaves(node->child(3).get(), lr + h, lc + h, h, f);
}

using LeafMemo = std::unordered_map<const LeafMatrix::Node*, HierNode::Ptr>;

HierNode::Ptr truncate_node(const HierNode::Ptr& node, double tau, LeafMemo& memo) {
  if (!node) return nullptr;
  if (node->is_leaf()) {
    auto [it, inserted] = memo.try_emplace(node->leaf().root().get());
    if (inserted) {
      LeafMatrix t = node->leaf().truncate(tau);
      it->second = t.root() == node->leaf().root() ? node : HierNode::make_leaf(std::move(t));
    }
    return it->second;
  }
  std::array<HierNode::Ptr, 4> kids;
  bool same = true;
  for (int q = 0; q < 4; ++q) {
    kids[static_cast<std::size_t>(q)] = truncate_node(node->child(q), tau, memo);
    same = same && kids[static_cast<std::size_t>(q)] == node->child(q);
  }
  if (same) return node;
  return HierNode::make_internal(std::move(kids));
}

}  // namespace

HierMatrix HierMatrix::build_from_source(std::size_t n, Geometry geometry,
                                         const ElementSource& source) {
  HierMatrix shape(n, geometry);
  SourceBuilder b{n, geometry, source, {}};
  shape.root_ = b.build(0, 0, shape.n_padded_);
  return shape;
}

HierMatrix HierMatrix::build_from_dense(const DenseMatrix& values, std::size_t task_size,
                                        std::size_t bs) {
  ElementSource src;
  src.value = [&](std::size_t i, std::size_t j) { return values(i, j); };
  return build_from_source(values.size(), Geometry{task_size, bs}, src);
}

HierMatrix HierMatrix::from_leaves(std::size_t n, Geometry geometry,
                                   std::vector<PlacedLeaf> leaves) {
  HierMatrix m(n, geometry);
  const std::size_t per_side = m.leaves_per_side();
  std::map<std::pair<std::size_t, std::size_t>, LeafMatrix> at;
  for (auto& pl : leaves) {
    if (pl.leaf_row >= per_side || pl.leaf_col >= per_side)
      throw InputError("leaf position out of range");
    if (pl.leaf.side() != geometry.task_size || pl.leaf.bs() != geometry.bs)
      throw InputError("leaf geometry does not match matrix geometry");
    if (!at.emplace(std::pair{pl.leaf_row, pl.leaf_col}, std::move(pl.leaf)).second)
      throw InputError("duplicate leaf position");
  }
  std::function<HierNode::Ptr(std::size_t, std::size_t, std::size_t)> build =
      [&](std::size_t lr, std::size_t lc, std::size_t span) -> HierNode::Ptr {
    if (span == 1) {
      auto it = at.find({lr, lc});
      return it == at.end() ? nullptr : HierNode::make_leaf(it->second);
    }
    const std::size_t h = span / 2;
    return HierNode::make_internal(
        {build(lr, lc, h), build(lr, lc + h, h), build(lr + h, lc, h), build(lr + h, lc + h, h)});
  };
  m.root_ = build(0, 0, per_side);
  return m;
}

double HierMatrix::get_element(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) throw InputError("element index out of range");
  const HierNode* node = root_.get();
  std::size_t side = n_padded_;
  while (node && !node->is_leaf()) {
    side /= 2;
    const int q = (i >= side ? 2 : 0) + (j >= side ? 1 : 0);
    if (i >= side) i -= side;
    if (j >= side) j -= side;
    node = node->child(q).get();
  }
  return node ? node->leaf().get_element(i, j) : 0.0;
}

const LeafMatrix* HierMatrix::leaf_at(std::size_t leaf_row, std::size_t leaf_col) const {
  std::size_t span = leaves_per_side();
  if (leaf_row >= span || leaf_col >= span) throw InputError("leaf position out of range");
  const HierNode* node = root_.get();
  while (node && !node->is_leaf()) {
    span /= 2;
    const int q = (leaf_row >= span ? 2 : 0) + (leaf_col >= span ? 1 : 0);
    if (leaf_row >= span) leaf_row -= span;
    if (leaf_col >= span) leaf_col -= span;
    node = node->child(q).get();
  }
  return node ? &node->leaf() : nullptr;
}

HierMatrix HierMatrix::truncate(double tau) const {
  if (!(tau >= 0.0)) throw InputError("truncation threshold must be nonnegative");
  LeafMemo memo;
  return HierMatrix(n_, geometry_, truncate_node(root_, tau, memo));
}

double HierMatrix::insignificant_sum_sq(double eps) const {
  if (!(eps > 0.0)) throw InputError("eps must be positive");
  std::unordered_map<const LeafMatrix::Node*, double> memo;
  double s = 0.0;
  for_each_leaf([&](std::size_t, std::size_t, const LeafMatrix& leaf) {
    auto [it, inserted] = memo.try_emplace(leaf.root().get(), 0.0);
    if (inserted) it->second = leaf.insignificant_sum_sq(eps);
    s += it->second;
  });
  return s;
}

std::size_t HierMatrix::nonzero_count() const {
  std::size_t count = 0;
  for_each_leaf([&](std::size_t, std::size_t, const LeafMatrix& leaf) {
    std::function<void(const LeafMatrix::Node*)> walk = [&](const LeafMatrix::Node* node) {
      if (!node) return;
      if (node->is_block()) {
        for (double v : node->block()) count += (v != 0.0);
        return;
      }
      for (const auto& c : node->children()) walk(c.get());
    };
    walk(leaf.root().get());
  });
  return count;
}

std::size_t HierMatrix::block_count() const {
  std::size_t count = 0;
  for_each_leaf(
      [&](std::size_t, std::size_t, const LeafMatrix& leaf) { count += leaf.block_count(); });
  return count;
}

DenseMatrix HierMatrix::to_dense() const {
  DenseMatrix out(n_);
  const std::size_t t = geometry_.task_size;
  std::vector<double> buf(t * t);
  for_each_leaf([&](std::size_t lr, std::size_t lc, const LeafMatrix& leaf) {
    leaf.to_dense(buf, t);
    const std::size_t r0 = lr * t;
    const std::size_t c0 = lc * t;
    for (std::size_t i = 0; i < t && r0 + i < n_; ++i)
      for (std::size_t j = 0; j < t && c0 + j < n_; ++j) out(r0 + i, c0 + j) = buf[i * t + j];
  });
  return out;
}

void HierMatrix::for_each_leaf(
    const std::function<void(std::size_t, std::size_t, const LeafMatrix&)>& visit) const {
  visit_leaves(root_.get(), 0, 0, leaves_per_side(), visit);
}

}  // namespace spamm
