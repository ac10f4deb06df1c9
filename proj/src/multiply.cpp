#include "spamm/multiply.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numeric>

#include "spamm/error.hpp"

namespace spamm {

using engine::ChunkId;
using engine::kNullChunk;
using engine::TaskContext;
using engine::TaskId;
using engine::TaskInput;
using engine::TaskResult;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kExact:
      return "exact";
    case Method::kTruncmul:
      return "truncmul";
    case Method::kSpamm:
      return "spamm";
    case Method::kHybrid:
      return "hybrid";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  for (Method m : kAllMethods)
    if (s == to_string(m)) return m;
  throw InputError("unknown method '" + std::string(name) + "'");
}

std::uint64_t MultiplyStats::n_gemm() const noexcept {
  return std::accumulate(n_gemm_by_method.begin(), n_gemm_by_method.end(), std::uint64_t{0});
}

double MultiplyStats::flops() const noexcept { return GemmCounter::flops(bs, n_gemm()); }

std::uint64_t MultiplyStats::bytes_sent_total() const noexcept {
  return std::accumulate(bytes_sent.begin(), bytes_sent.end(), std::uint64_t{0});
}

std::uint64_t MultiplyStats::bytes_sent_max() const noexcept {
  return bytes_sent.empty() ? 0 : *std::max_element(bytes_sent.begin(), bytes_sent.end());
}

MultiplyStats& MultiplyStats::operator+=(const MultiplyStats& o) {
  if (bs == 0) bs = o.bs;
  if (o.bs != 0 && o.bs != bs) throw InputError("cannot merge statistics with different bs");
  for (std::size_t m = 0; m < n_gemm_by_method.size(); ++m)
    n_gemm_by_method[m] += o.n_gemm_by_method[m];
  predictor_calls += o.predictor_calls;
  tasks_registered += o.tasks_registered;
  tasks_executed += o.tasks_executed;
  steals += o.steals;
  if (bytes_sent.size() < o.bytes_sent.size()) bytes_sent.resize(o.bytes_sent.size(), 0);
  for (std::size_t w = 0; w < o.bytes_sent.size(); ++w) bytes_sent[w] += o.bytes_sent[w];
  makespan_s += o.makespan_s;
  wall_ms += o.wall_ms;
  return *this;
}

std::size_t default_workers() {
  const char* env = std::getenv("SPAMM_WORKERS");
  if (!env || !*env) return 1;
  std::size_t w = 0;
  const char* end = env + std::char_traits<char>::length(env);
  const auto [ptr, ec] = std::from_chars(env, end, w);
  if (ec != std::errc() || ptr != end) throw ConfigError("SPAMM_WORKERS is not a count");
  return w;
}

// ---- chunk payload ----

MatrixChunk::MatrixChunk(std::size_t side, LeafMatrix leaf)
    : side_(side), is_leaf_(true), leaf_(std::move(leaf)), norm_sq_(leaf_.norm_sq()) {}

MatrixChunk::MatrixChunk(std::size_t side, std::array<ChunkId, 4> children,
                         std::array<double, 4> child_norm_sq)
    : side_(side), is_leaf_(false), children_(children), child_norm_sq_(child_norm_sq) {
  for (int q = 0; q < 4; ++q)
    if (!engine::is_null(children_[static_cast<std::size_t>(q)]))
      norm_sq_ += child_norm_sq_[static_cast<std::size_t>(q)];
}

std::size_t MatrixChunk::byte_size() const {
  return is_leaf_ ? leaf_.byte_size() + kHeaderBytes : kHeaderBytes;
}

void MatrixChunk::for_each_child(const std::function<void(ChunkId)>& f) const {
  for (ChunkId c : children_)
    if (!engine::is_null(c)) f(c);
}

// ---- import / export ----

namespace {

std::uint64_t morton(std::size_t r, std::size_t c) {
  std::uint64_t key = 0;
  for (int bit = 31; bit >= 0; --bit)
    key = key * 4 + (((r >> bit) & 1U) << 1) + ((c >> bit) & 1U);
  return key;
}

struct Importer {
  engine::Engine& eng;
  std::size_t task_size;
  std::size_t per_side;

  // Returns the chunk and its owner. The returned chunk carries one external pin.
  std::pair<ChunkId, std::size_t> import(const HierNode* node, std::size_t lr, std::size_t lc,
                                         std::size_t span) {
    if (!node) return {kNullChunk, 0};
    const std::size_t workers = eng.options().workers;
    if (node->is_leaf()) {
      const std::size_t cells = per_side * per_side;
      const auto owner = static_cast<std::size_t>(
          static_cast<unsigned __int128>(morton(lr, lc)) * workers / cells);
      return {eng.register_chunk(std::make_shared<MatrixChunk>(task_size, node->leaf()), owner),
              owner};
    }
    const std::size_t h = span / 2;
    std::array<ChunkId, 4> ids{};
    std::array<double, 4> norms{};
    std::size_t owner = workers;
    const std::size_t rows[4] = {lr, lr, lr + h, lr + h};
    const std::size_t cols[4] = {lc, lc + h, lc, lc + h};
    for (int q = 0; q < 4; ++q) {
      const auto& child = node->child(q);
      auto [id, o] = import(child.get(), rows[q], cols[q], h);
      ids[static_cast<std::size_t>(q)] = id;
      if (child) {
        norms[static_cast<std::size_t>(q)] = child->norm_sq();
        if (owner == workers) owner = o;
      }
    }
    const ChunkId id =
        eng.register_chunk(std::make_shared<MatrixChunk>(span * task_size, ids, norms), owner);
    for (ChunkId c : ids) eng.release(c);
    return {id, owner};
  }
};

HierNode::Ptr export_node(const engine::Engine& eng, ChunkId id) {
  if (engine::is_null(id)) return nullptr;
  auto chunk = eng.peek_as<MatrixChunk>(id);
  if (!chunk) throw StateError("chunk is not a matrix node");
  if (chunk->is_leaf()) return HierNode::make_leaf(chunk->leaf());
  return HierNode::make_internal({export_node(eng, chunk->child(0)), export_node(eng, chunk->child(1)),
                                  export_node(eng, chunk->child(2)),
                                  export_node(eng, chunk->child(3))});
}

// ---- task bodies ----

struct Plan {
  std::size_t task_size;
  bool gated;
  double tau;
  SpammAudit* audit;
};

TaskResult assemble_body(TaskContext& ctx, std::size_t side) {
  std::array<ChunkId, 4> ids{};
  std::array<double, 4> norms{};
  bool any = false;
  for (std::size_t q = 0; q < 4; ++q) {
    ids[q] = ctx.input_id(q);
    if (engine::is_null(ids[q])) continue;
    any = true;
    norms[q] = ctx.header<MatrixChunk>(q)->norm_sq();
  }
  if (!any) return kNullChunk;
  return ctx.register_chunk(std::make_shared<MatrixChunk>(side, ids, norms));
}

TaskResult add_body(TaskContext& ctx, std::size_t side, std::size_t task_size) {
  const ChunkId x = ctx.input_id(0);
  const ChunkId y = ctx.input_id(1);
  if (engine::is_null(x)) return y;
  if (engine::is_null(y)) return x;
  if (side == task_size) {
    auto cx = ctx.input<MatrixChunk>(0);
    auto cy = ctx.input<MatrixChunk>(1);
    LeafMatrix sum = leaf_add(cx->leaf(), cy->leaf());
    ctx.add_work(static_cast<double>(sum.block_count() * sum.bs() * sum.bs()));
    return ctx.register_chunk(std::make_shared<MatrixChunk>(side, std::move(sum)));
  }
  auto hx = ctx.header<MatrixChunk>(0);
  auto hy = ctx.header<MatrixChunk>(1);
  const std::size_t h = side / 2;
  std::vector<TaskInput> parts;
  for (int q = 0; q < 4; ++q) {
    const TaskId t = ctx.register_task(
        "add", {TaskInput::chunk(hx->child(q)), TaskInput::chunk(hy->child(q))},
        [h, task_size](TaskContext& c) { return add_body(c, h, task_size); });
    parts.push_back(TaskInput::output_of(t));
  }
  return ctx.register_task("assemble", std::move(parts),
                           [side](TaskContext& c) { return assemble_body(c, side); });
}

TaskResult multiply_body(TaskContext& ctx, std::size_t side, const Plan& plan) {
  if (engine::is_null(ctx.input_id(0)) || engine::is_null(ctx.input_id(1))) return kNullChunk;
  if (side == plan.task_size) {
    auto a = ctx.input<MatrixChunk>(0);
    auto b = ctx.input<MatrixChunk>(1);
    GemmCounter local;
    LeafMatrix c = plan.gated ? leaf_spamm(a->leaf(), b->leaf(), plan.tau, local, plan.audit)
                              : leaf_multiply(a->leaf(), b->leaf(), local);
    ctx.gemm_counter().add_gemm(local.n_gemm());
    for (std::uint64_t p = 0; p < local.predictor_calls(); ++p)
      ctx.gemm_counter().add_predictor_call();
    ctx.add_work(GemmCounter::flops(a->leaf().bs(), local.n_gemm()));
    if (c.empty()) return kNullChunk;
    return ctx.register_chunk(std::make_shared<MatrixChunk>(side, std::move(c)));
  }
  auto ha = ctx.header<MatrixChunk>(0);
  auto hb = ctx.header<MatrixChunk>(1);
  const std::size_t h = side / 2;
  auto child_body = [h, plan](TaskContext& c) { return multiply_body(c, h, plan); };
  std::vector<TaskInput> parts;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      std::array<TaskInput, 2> terms{TaskInput::chunk(kNullChunk), TaskInput::chunk(kNullChunk)};
      for (int k = 0; k < 2; ++k) {
        const int qa = 2 * i + k;
        const int qb = 2 * k + j;
        if (plan.gated && !gate_passes(ha->child_norm_sq(qa), hb->child_norm_sq(qb), plan.tau)) {
          if (plan.audit && !engine::is_null(ha->child(qa)) && !engine::is_null(hb->child(qb)))
            plan.audit->record({h, std::sqrt(ha->child_norm_sq(qa)),
                                std::sqrt(hb->child_norm_sq(qb)), plan.tau});
          continue;
        }
        const TaskId t = ctx.register_task(
            "multiply", {TaskInput::chunk(ha->child(qa)), TaskInput::chunk(hb->child(qb))},
            child_body);
        terms[static_cast<std::size_t>(k)] = TaskInput::output_of(t);
      }
      const std::size_t ts = plan.task_size;
      const TaskId sum = ctx.register_task(
          "add", {terms[0], terms[1]}, [h, ts](TaskContext& c) { return add_body(c, h, ts); });
      parts.push_back(TaskInput::output_of(sum));
    }
  }
  return ctx.register_task("assemble", std::move(parts),
                           [side](TaskContext& c) { return assemble_body(c, side); });
}

}  // namespace

engine::ChunkId import_matrix(engine::Engine& eng, const HierMatrix& m) {
  Importer imp{eng, m.task_size(), m.leaves_per_side()};
  return imp.import(m.root().get(), 0, 0, m.leaves_per_side()).first;
}

HierMatrix export_matrix(const engine::Engine& eng, ChunkId root, std::size_t n,
                         Geometry geometry) {
  return HierMatrix(n, geometry, export_node(eng, root));
}

RunResult run(const MultiplyRequest& request, const RunOptions& options) {
  const HierMatrix& a0 = request.a;
  const HierMatrix& b0 = request.b;
  if (a0.n_logical() == 0 || !a0.same_shape(b0))
    throw InputError("operands must have equal dimension, task size and block size");
  const Method method = request.method;
  const double tau = method == Method::kExact ? 0.0 : request.tau;
  if (method != Method::kExact && !(tau >= 0.0)) throw InputError("tau must be nonnegative");

  HierMatrix a = a0;
  HierMatrix b = b0;
  if (method == Method::kTruncmul || method == Method::kHybrid) {
    a = a0.truncate(tau);
    b = (b0.root() == a0.root()) ? a : b0.truncate(tau);
  }

  engine::EngineOptions eo;
  eo.workers = options.workers;
  eo.mode = options.mode;
  eo.seed = options.seed;
  eo.trace_path = options.trace_path;
  engine::Engine eng(eo);

  const ChunkId ra = import_matrix(eng, a);
  const ChunkId rb = (b.root() == a.root()) ? ra : import_matrix(eng, b);
  const Plan plan{a.task_size(),
                  method == Method::kSpamm || method == Method::kHybrid, tau, options.audit};
  const std::size_t side = a.n_padded();
  const TaskId root = eng.submit(
      "multiply", {TaskInput::chunk(ra), TaskInput::chunk(rb)},
      [side, plan](TaskContext& c) { return multiply_body(c, side, plan); });
  eng.release(ra);
  if (rb != ra) eng.release(rb);
  eng.run();

  const ChunkId out = eng.output(root);
  RunResult result;
  result.product = export_matrix(eng, out, a.n_logical(), a.geometry());
  eng.release(out);

  const engine::EngineStats es = eng.drain_stats();
  MultiplyStats& s = result.stats;
  s.bs = a.bs();
  s.n_gemm_by_method[static_cast<std::size_t>(method)] = es.n_gemm;
  s.predictor_calls = es.predictor_calls;
  s.tasks_registered = es.tasks_registered;
  s.tasks_executed = es.tasks_executed;
  s.steals = es.steals;
  s.bytes_sent = es.bytes_sent;
  s.makespan_s = es.makespan_s;
  s.wall_ms = es.wall_ms;
  return result;
}

namespace {

HierMatrix run_into(Method m, const HierMatrix& a, const HierMatrix& b, double tau,
                    MultiplyStats& stats, const RunOptions& options) {
  RunResult r = run(MultiplyRequest{m, tau, a, b}, options);
  stats += r.stats;
  return std::move(r.product);
}

}  // namespace

HierMatrix multiply_exact(const HierMatrix& a, const HierMatrix& b, MultiplyStats& stats,
                          const RunOptions& options) {
  return run_into(Method::kExact, a, b, 0.0, stats, options);
}

HierMatrix spamm(const HierMatrix& a, const HierMatrix& b, double tau, MultiplyStats& stats,
                 const RunOptions& options) {
  return run_into(Method::kSpamm, a, b, tau, stats, options);
}

HierMatrix truncmul(const HierMatrix& a, const HierMatrix& b, double tau, MultiplyStats& stats,
                    const RunOptions& options) {
  return run_into(Method::kTruncmul, a, b, tau, stats, options);
}

HierMatrix hybrid(const HierMatrix& a, const HierMatrix& b, double tau, MultiplyStats& stats,
                  const RunOptions& options) {
  return run_into(Method::kHybrid, a, b, tau, stats, options);
}

}  // namespace spamm
