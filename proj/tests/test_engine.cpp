#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "spamm/engine/engine.hpp"
#include "spamm/error.hpp"
#include "spamm/multiply.hpp"
#include "support.hpp"

using namespace spamm;
using namespace spamm::engine;

namespace {

class Number : public ChunkPayload {
 public:
  explicit Number(double v, std::size_t bytes = 8) : value(v), bytes_(bytes) {}
  std::size_t byte_size() const override { return bytes_; }
  double value;

 private:
  std::size_t bytes_;
};

// Sums [lo, hi) by binary splitting into tasks.
TaskResult range_sum(TaskContext& ctx, std::uint64_t lo, std::uint64_t hi) {
  if (hi - lo == 1) return ctx.register_chunk(std::make_shared<Number>(static_cast<double>(lo)));
  const std::uint64_t mid = lo + (hi - lo) / 2;
  const TaskId l = ctx.register_task("sum", {}, [lo, mid](TaskContext& c) { return range_sum(c, lo, mid); });
  const TaskId r = ctx.register_task("sum", {}, [mid, hi](TaskContext& c) { return range_sum(c, mid, hi); });
  return ctx.register_task("plus", {TaskInput::output_of(l), TaskInput::output_of(r)},
                           [](TaskContext& c) {
                             const double v = c.input<Number>(0)->value + c.input<Number>(1)->value;
                             return TaskResult{c.register_chunk(std::make_shared<Number>(v))};
                           });
}

double run_range_sum(Engine& eng, std::uint64_t n) {
  const TaskId root = eng.submit("sum", {}, [n](TaskContext& c) { return range_sum(c, 0, n); });
  eng.run();
  const ChunkId out = eng.output(root);
  const double v = eng.peek_as<Number>(out)->value;
  eng.release(out);
  return v;
}

HierMatrix dense_model(std::size_t n, std::size_t task_size, std::size_t bs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return HierMatrix::build_from_dense(spamm::testing::random_dense(n, bs, 1.0, 0.0, rng), task_size, bs);
}

}  // namespace

TEST(Engine, TaskTreeComputesSumAndForwardsOutputs) {
  Engine eng({4, Mode::kSimulated, 7});
  EXPECT_EQ(run_range_sum(eng, 1000), 999.0 * 1000.0 / 2.0);
  const EngineStats s = eng.drain_stats();
  EXPECT_EQ(s.tasks_registered, s.tasks_executed);
  // 1000 leaves, 999 splitting tasks, 999 plus tasks.
  EXPECT_EQ(s.tasks_executed, 2998U);
  EXPECT_EQ(eng.live_chunks(), 0U);
}

TEST(Engine, SimulatedScheduleIsDeterministic) {
  EngineStats first;
  for (int rep = 0; rep < 2; ++rep) {
    Engine eng({8, Mode::kSimulated, 3});
    run_range_sum(eng, 512);
    const EngineStats s = eng.drain_stats();
    if (rep == 0) {
      first = s;
      EXPECT_GT(s.steals, 0U);
    } else {
      EXPECT_EQ(s.steals, first.steals);
      EXPECT_EQ(s.bytes_sent, first.bytes_sent);
      EXPECT_EQ(s.makespan_s, first.makespan_s);
    }
  }
}

TEST(Engine, ThreadedModeComputesSameResult) {
  for (std::size_t w : {1U, 2U, 4U}) {
    Engine eng({w, Mode::kThreaded, 5});
    EXPECT_EQ(run_range_sum(eng, 2048), 2047.0 * 2048.0 / 2.0);
    EXPECT_EQ(eng.drain_stats().tasks_executed, 3U * 2048U - 2U);
    EXPECT_EQ(eng.live_chunks(), 0U);
  }
}

TEST(Engine, RemoteReadIsChargedToReader) {
  Engine eng({2, Mode::kSimulated, 1});
  const ChunkId x = eng.register_chunk(std::make_shared<Number>(2.0, 1000), 1);
  EXPECT_EQ(eng.owner(x), 1U);
  std::size_t reader = 99;
  const TaskId t = eng.submit("read", {TaskInput::chunk(x)}, [&](TaskContext& c) {
    reader = c.worker();
    return TaskResult{c.register_chunk(std::make_shared<Number>(c.input<Number>(0)->value))};
  });
  eng.run();
  const EngineStats s = eng.drain_stats();
  ASSERT_EQ(s.bytes_sent.size(), 2U);
  const std::uint64_t expect_remote = reader == 1 ? 0 : 1000;
  EXPECT_EQ(s.bytes_sent[reader], expect_remote);
  EXPECT_EQ(s.bytes_sent[1 - reader], 0U);
  eng.release(eng.output(t));
  eng.release(x);
  EXPECT_EQ(eng.live_chunks(), 0U);
}

TEST(Engine, HeaderReadChargesHeaderSize) {
  class Big : public ChunkPayload {
   public:
    std::size_t byte_size() const override { return 5000; }
    std::size_t header_size() const override { return 40; }
  };
  Engine eng({2, Mode::kSimulated, 1});
  const ChunkId x = eng.register_chunk(std::make_shared<Big>(), 1);
  std::size_t reader = 0;
  eng.submit("hdr", {TaskInput::chunk(x)}, [&](TaskContext& c) {
    reader = c.worker();
    c.header<Big>(0);
    return TaskResult{kNullChunk};
  });
  eng.run();
  const EngineStats s = eng.drain_stats();
  EXPECT_EQ(std::accumulate(s.bytes_sent.begin(), s.bytes_sent.end(), std::uint64_t{0}),
            reader == 1 ? 0U : 40U);
  eng.release(x);
}

TEST(Engine, SingleWorkerMovesNoBytes) {
  MultiplyStats stats;
  RunOptions o;
  o.workers = 1;
  const HierMatrix a = dense_model(64, 16, 4, 1);
  multiply_exact(a, a, stats, o);
  EXPECT_EQ(stats.bytes_sent_total(), 0U);
  EXPECT_EQ(stats.steals, 0U);
}

TEST(Engine, SeveralWorkersMoveBytes) {
  MultiplyStats stats;
  RunOptions o;
  o.workers = 4;
  const HierMatrix a = dense_model(64, 16, 4, 1);
  multiply_exact(a, a, stats, o);
  EXPECT_GT(stats.bytes_sent_total(), 0U);
  EXPECT_LE(stats.bytes_sent_max(), stats.bytes_sent_total());
}

TEST(Engine, OneLevelExpansionRegistersThirteenTasks) {
  MultiplyStats stats;
  RunOptions o;
  o.workers = 2;
  const HierMatrix a = dense_model(32, 16, 4, 2);
  multiply_exact(a, a, stats, o);
  // root + 8 multiplies + 4 adds + 1 assemble
  EXPECT_EQ(stats.tasks_registered, 14U);
  EXPECT_EQ(stats.tasks_executed, 14U);
  EXPECT_EQ(stats.n_gemm(), 8U * 64U);
}

TEST(Engine, EmptyOperandRunsOnlyTheRootTask) {
  MultiplyStats stats;
  const HierMatrix zero(64, {16, 4});
  const HierMatrix a = dense_model(64, 16, 4, 3);
  const HierMatrix c = multiply_exact(zero, a, stats);
  EXPECT_TRUE(c.empty());
  EXPECT_EQ(stats.tasks_executed, 1U);
  EXPECT_EQ(stats.n_gemm(), 0U);
}

TEST(Engine, StatsDuringRunThrow) {
  Engine eng;
  bool threw = false;
  eng.submit("probe", {}, [&](TaskContext&) {
    try {
      eng.drain_stats();
    } catch (const StateError&) {
      threw = true;
    }
    return TaskResult{kNullChunk};
  });
  eng.run();
  EXPECT_TRUE(threw);
  EXPECT_NO_THROW(eng.drain_stats());
}

TEST(Engine, BodyExceptionPropagatesFromRun) {
  Engine eng({2, Mode::kSimulated, 1});
  eng.submit("bad", {}, [](TaskContext&) -> TaskResult { throw InputError("boom"); });
  EXPECT_THROW(eng.run(), InputError);
}

TEST(Engine, ChunkConservationAfterRelease) {
  Engine eng({3, Mode::kSimulated, 9});
  const HierMatrix a = dense_model(128, 16, 4, 4);
  const ChunkId ra = import_matrix(eng, a);
  const std::size_t imported = eng.live_chunks();
  EXPECT_GT(imported, 0U);
  const HierMatrix back = export_matrix(eng, ra, 128, a.geometry());
  EXPECT_TRUE(spamm::testing::same_values(back.to_dense(), a.to_dense()));
  eng.release(ra);
  EXPECT_EQ(eng.live_chunks(), 0U);
}

TEST(Engine, ImportSpreadsLeavesOverWorkers) {
  Engine eng({4, Mode::kSimulated, 1});
  const HierMatrix a = dense_model(64, 16, 4, 5);
  const ChunkId ra = import_matrix(eng, a);
  std::set<std::size_t> owners;
  std::function<void(ChunkId)> walk = [&](ChunkId id) {
    if (is_null(id)) return;
    auto m = eng.peek_as<MatrixChunk>(id);
    if (m->is_leaf()) {
      owners.insert(eng.owner(id));
      return;
    }
    for (int q = 0; q < 4; ++q) walk(m->child(q));
  };
  walk(ra);
  EXPECT_EQ(owners.size(), 4U);
  eng.release(ra);
}

TEST(Engine, TraceFileHasOneRowPerTask) {
  const std::string path = ::testing::TempDir() + "spamm_trace.csv";
  {
    Engine eng({2, Mode::kSimulated, 1, path});
    run_range_sum(eng, 16);
  }
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "task_id,kind,worker,start_ms,duration_ms,bytes_remote");
  std::size_t rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  EXPECT_EQ(rows, 3U * 16U - 2U);
}

TEST(Engine, RejectsZeroWorkers) {
  EXPECT_THROW(Engine({0, Mode::kSimulated, 1}), ConfigError);
}
