#pragma once

// In-process chunks-and-tasks engine.
//
// Chunks are immutable payloads addressed by ChunkId and owned by the worker
// that registered them. A task names its inputs (chunks, or the output of
// another task) and produces exactly one output chunk; its body may register
// new chunks and child tasks, and may hand its output over to a child task.
// Workers keep a deque each: own work is popped from the back, idle workers
// steal from the front of a random victim. A worker that reads a chunk owned
// by another worker is charged that chunk's payload size.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "spamm/leaf_matrix.hpp"

namespace spamm::engine {

enum class ChunkId : std::uint64_t {};
enum class TaskId : std::uint64_t {};
inline constexpr ChunkId kNullChunk{0};

inline bool is_null(ChunkId id) noexcept { return id == kNullChunk; }

class ChunkPayload {
 public:
  virtual ~ChunkPayload() = default;
  // Bytes charged for a full read of this chunk.
  virtual std::size_t byte_size() const = 0;
  // Bytes charged for reading only the header (metadata such as norms).
  virtual std::size_t header_size() const { return byte_size(); }
  // Chunks referenced by this one; kept alive as long as this chunk is.
  virtual void for_each_child(const std::function<void(ChunkId)>&) const {}
};

struct TaskInput {
  static TaskInput chunk(ChunkId id) { return {false, static_cast<std::uint64_t>(id)}; }
  static TaskInput output_of(TaskId id) { return {true, static_cast<std::uint64_t>(id)}; }

  bool is_task = false;
  std::uint64_t id = 0;
};

class TaskContext;
// A body returns its output chunk, or a task whose output becomes its own.
using TaskResult = std::variant<ChunkId, TaskId>;
using TaskBody = std::function<TaskResult(TaskContext&)>;

enum class Mode {
  kSimulated,  // deterministic discrete-event schedule of logical workers
  kThreaded,   // one OS thread per worker
};

struct EngineOptions {
  std::size_t workers = 1;
  Mode mode = Mode::kSimulated;
  std::uint64_t seed = 1;
  std::string trace_path;  // empty: no trace
  // Virtual cost model used by the simulated mode.
  double task_overhead_s = 5e-6;
  double flop_rate = 5e9;
  double bandwidth = 1e9;
};

struct EngineStats {
  std::uint64_t tasks_registered = 0;
  std::uint64_t tasks_executed = 0;
  std::uint64_t steals = 0;
  std::uint64_t chunks_registered = 0;
  std::uint64_t n_gemm = 0;
  std::uint64_t predictor_calls = 0;
  std::vector<std::uint64_t> bytes_sent;  // per worker, remote reads
  double makespan_s = 0.0;                // simulated mode: virtual time
  double wall_ms = 0.0;
};

class Engine;

class TaskContext {
 public:
  std::size_t worker() const noexcept { return worker_; }
  std::size_t input_count() const noexcept { return inputs_.size(); }
  ChunkId input_id(std::size_t i) const { return inputs_.at(i); }

  // Full read of input i (charged if remote). Null input gives nullptr.
  template <class T>
  std::shared_ptr<const T> input(std::size_t i) {
    return std::dynamic_pointer_cast<const T>(read(input_id(i), false));
  }
  // Header-only read of input i.
  template <class T>
  std::shared_ptr<const T> header(std::size_t i) {
    return std::dynamic_pointer_cast<const T>(read(input_id(i), true));
  }
  // Full read of any live chunk, e.g. a child named in an input's header.
  template <class T>
  std::shared_ptr<const T> chunk(ChunkId id, bool header_only = false) {
    return std::dynamic_pointer_cast<const T>(read(id, header_only));
  }

  ChunkId register_chunk(std::shared_ptr<const ChunkPayload> payload);
  TaskId register_task(std::string kind, std::vector<TaskInput> inputs, TaskBody body);

  // Floating point work done by this task; feeds the simulated cost model.
  void add_work(double flops) noexcept { flops_ += flops; }
  GemmCounter& gemm_counter() noexcept;

 private:
  friend class Engine;
  TaskContext(Engine& engine, std::uint64_t task, std::size_t worker, std::vector<ChunkId> inputs)
      : engine_(engine), task_(task), worker_(worker), inputs_(std::move(inputs)) {}

  std::shared_ptr<const ChunkPayload> read(ChunkId id, bool header_only);

  Engine& engine_;
  std::uint64_t task_;
  std::size_t worker_;
  std::vector<ChunkId> inputs_;
  std::vector<ChunkId> created_chunks_;
  std::vector<std::uint64_t> created_tasks_;
  std::uint64_t bytes_remote_ = 0;
  double flops_ = 0.0;
};

class Engine {
 public:
  explicit Engine(EngineOptions options = {});
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineOptions& options() const noexcept { return options_; }

  // Registers a chunk from outside any task. It stays pinned until release().
  ChunkId register_chunk(std::shared_ptr<const ChunkPayload> payload, std::size_t owner = 0);
  void release(ChunkId id);

  // Root task, queued on the given worker. Its output stays pinned until release().
  TaskId submit(std::string kind, std::vector<TaskInput> inputs, TaskBody body,
                std::size_t worker = 0);
  // Runs until every registered task has completed; rethrows the first body exception.
  void run();
  // Output chunk of a completed task.
  ChunkId output(TaskId task) const;

  // Payload of a live chunk, without accounting.
  std::shared_ptr<const ChunkPayload> peek(ChunkId id) const;
  template <class T>
  std::shared_ptr<const T> peek_as(ChunkId id) const {
    return std::dynamic_pointer_cast<const T>(peek(id));
  }
  std::size_t owner(ChunkId id) const;
  std::size_t live_chunks() const;

  // Aggregated counters of everything run so far. Throws StateError while running.
  EngineStats drain_stats() const;
  GemmCounter& gemm_counter() noexcept;

 private:
  friend class TaskContext;
  struct Impl;
  EngineOptions options_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace spamm::engine
