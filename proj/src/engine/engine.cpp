#include "spamm/engine/engine.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <queue>
#include <random>
#include <thread>
#include <unordered_map>

#include "spamm/error.hpp"

namespace spamm::engine {

namespace {

enum class State { kWaiting, kRunning, kDone, kForwarded };

struct ChunkRec {
  std::shared_ptr<const ChunkPayload> payload;
  std::size_t bytes = 0;
  std::size_t header = 0;
  std::size_t owner = 0;
  std::uint64_t refs = 0;
};

struct TaskRec {
  std::string kind;
  TaskBody body;
  std::vector<ChunkId> resolved;
  std::size_t pending = 0;
  State state = State::kWaiting;
  bool released = false;  // creator finished (or submitted from outside)
  ChunkId out = kNullChunk;
  std::uint64_t forward = 0;
  std::vector<std::pair<std::uint64_t, std::size_t>> waiters;
  std::uint64_t holds = 0;
};

struct TraceRow {
  std::uint64_t task;
  std::string kind;
  std::size_t worker;
  double start_ms;
  double duration_ms;
  std::uint64_t bytes_remote;
};

std::uint64_t raw(ChunkId id) { return static_cast<std::uint64_t>(id); }

}  // namespace

struct Engine::Impl {
  explicit Impl(const EngineOptions& o) : opts(o), queues(o.workers), rng(o.seed) {
    stats.bytes_sent.assign(o.workers, 0);
    tasks.emplace_back();  // id 0 unused
  }

  EngineOptions opts;
  mutable std::mutex mutex;
  std::condition_variable cv;
  std::unordered_map<std::uint64_t, ChunkRec> chunks;
  std::deque<TaskRec> tasks;
  std::uint64_t next_chunk = 1;
  std::vector<std::deque<std::uint64_t>> queues;
  std::mt19937_64 rng;
  std::uint64_t outstanding = 0;
  std::size_t running_bodies = 0;
  bool running = false;
  std::exception_ptr error;
  EngineStats stats;
  GemmCounter counter;
  std::vector<TraceRow> trace;

  // ---- all members below expect the mutex to be held ----

  ChunkRec& chunk_rec(ChunkId id) {
    auto it = chunks.find(raw(id));
    if (it == chunks.end()) throw StateError("chunk " + std::to_string(raw(id)) + " is not live");
    return it->second;
  }

  void incref(ChunkId id, std::uint64_t n = 1) {
    if (is_null(id) || n == 0) return;
    chunk_rec(id).refs += n;
  }

  void decref(ChunkId id) {
    std::vector<ChunkId> stack{id};
    while (!stack.empty()) {
      const ChunkId c = stack.back();
      stack.pop_back();
      if (is_null(c)) continue;
      ChunkRec& rec = chunk_rec(c);
      if (--rec.refs > 0) continue;
      rec.payload->for_each_child([&](ChunkId child) { stack.push_back(child); });
      chunks.erase(raw(c));
    }
  }

  ChunkId add_chunk(std::shared_ptr<const ChunkPayload> payload, std::size_t owner) {
    if (!payload) throw InputError("null chunk payload");
    const ChunkId id{next_chunk++};
    ChunkRec rec;
    rec.bytes = payload->byte_size();
    rec.header = payload->header_size();
    rec.owner = owner;
    rec.refs = 1;
    payload->for_each_child([&](ChunkId child) { incref(child); });
    rec.payload = std::move(payload);
    chunks.emplace(raw(id), std::move(rec));
    ++stats.chunks_registered;
    return id;
  }

  std::uint64_t follow(std::uint64_t t) const {
    while (tasks[t].state == State::kForwarded) t = tasks[t].forward;
    return t;
  }

  std::uint64_t add_task(std::string kind, std::vector<TaskInput> inputs, TaskBody body) {
    const std::uint64_t id = tasks.size();
    tasks.emplace_back();
    TaskRec& rec = tasks.back();
    rec.kind = std::move(kind);
    rec.body = std::move(body);
    rec.holds = 1;
    rec.resolved.assign(inputs.size(), kNullChunk);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const TaskInput& in = inputs[i];
      if (!in.is_task) {
        rec.resolved[i] = ChunkId{in.id};
        incref(rec.resolved[i]);
        continue;
      }
      if (in.id == 0 || in.id >= id) throw InputError("task input names an unknown task");
      const std::uint64_t src = follow(in.id);
      if (tasks[src].state == State::kDone) {
        rec.resolved[i] = tasks[src].out;
        incref(rec.resolved[i]);
      } else {
        tasks[src].waiters.emplace_back(id, i);
        ++rec.pending;
      }
    }
    ++stats.tasks_registered;
    ++outstanding;
    return id;
  }

  void make_ready_if_possible(std::uint64_t t, std::size_t worker) {
    TaskRec& rec = tasks[t];
    if (rec.state == State::kWaiting && rec.released && rec.pending == 0) {
      rec.state = State::kRunning;  // queued; no longer waiting
      queues[worker].push_back(t);
    }
  }

  void finalize(std::uint64_t t, ChunkId out, std::size_t worker) {
    TaskRec& rec = tasks[t];
    rec.state = State::kDone;
    rec.out = out;
    incref(out, rec.waiters.size() + rec.holds);
    auto waiters = std::move(rec.waiters);
    rec.waiters.clear();
    for (auto [w, idx] : waiters) {
      tasks[w].resolved[idx] = out;
      --tasks[w].pending;
      make_ready_if_possible(w, worker);
    }
  }

  void release_hold(std::uint64_t t) {
    const std::uint64_t f = follow(t);
    if (tasks[f].state == State::kDone) {
      decref(tasks[f].out);
    } else {
      --tasks[f].holds;
    }
  }

  void complete(std::uint64_t t, const TaskResult& result, TaskContext& ctx) {
    const std::size_t worker = ctx.worker_;
    if (std::holds_alternative<ChunkId>(result)) {
      const ChunkId out = std::get<ChunkId>(result);
      if (!is_null(out)) chunk_rec(out);
      finalize(t, out, worker);
    } else {
      const auto target = static_cast<std::uint64_t>(std::get<TaskId>(result));
      if (target == 0 || target >= tasks.size()) throw StateError("forward to unknown task");
      const std::uint64_t f = follow(target);
      if (f == t) throw StateError("task forwards to itself");
      if (tasks[f].state == State::kDone) {
        finalize(t, tasks[f].out, worker);
      } else {
        TaskRec& rec = tasks[t];
        rec.state = State::kForwarded;
        rec.forward = f;
        for (auto& w : rec.waiters) tasks[f].waiters.push_back(w);
        rec.waiters.clear();
        tasks[f].holds += rec.holds;
      }
    }
    for (std::uint64_t child : ctx.created_tasks_) {
      tasks[child].released = true;
      release_hold(child);
      make_ready_if_possible(child, worker);
    }
    for (ChunkId c : ctx.created_chunks_) decref(c);
    TaskRec& rec = tasks[t];
    for (ChunkId in : rec.resolved) decref(in);
    rec.resolved.clear();
    rec.resolved.shrink_to_fit();
    rec.body = nullptr;
    ++stats.tasks_executed;
    --outstanding;
  }

  // Own deque from the back, otherwise steal from the front of a random victim.
  std::uint64_t acquire(std::size_t w) {
    if (!queues[w].empty()) {
      const std::uint64_t t = queues[w].back();
      queues[w].pop_back();
      return t;
    }
    const std::size_t n = queues.size();
    if (n < 2) return 0;
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
    for (std::size_t s = 0; s < n - 1; ++s) {
      std::size_t v = (start + s) % (n - 1);
      if (v >= w) ++v;
      if (!queues[v].empty()) {
        const std::uint64_t t = queues[v].front();
        queues[v].pop_front();
        ++stats.steals;
        return t;
      }
    }
    return 0;
  }

  double cost(const TaskContext& ctx) const {
    return opts.task_overhead_s + ctx.flops_ / opts.flop_rate +
           static_cast<double>(ctx.bytes_remote_) / opts.bandwidth;
  }
};

// ---- TaskContext ----

std::shared_ptr<const ChunkPayload> TaskContext::read(ChunkId id, bool header_only) {
  if (is_null(id)) return nullptr;
  auto& impl = *engine_.impl_;
  std::lock_guard lock(impl.mutex);
  ChunkRec& rec = impl.chunk_rec(id);
  if (rec.owner != worker_) {
    const std::size_t bytes = header_only ? rec.header : rec.bytes;
    impl.stats.bytes_sent[worker_] += bytes;
    bytes_remote_ += bytes;
  }
  return rec.payload;
}

ChunkId TaskContext::register_chunk(std::shared_ptr<const ChunkPayload> payload) {
  auto& impl = *engine_.impl_;
  std::lock_guard lock(impl.mutex);
  const ChunkId id = impl.add_chunk(std::move(payload), worker_);
  created_chunks_.push_back(id);
  return id;
}

TaskId TaskContext::register_task(std::string kind, std::vector<TaskInput> inputs, TaskBody body) {
  auto& impl = *engine_.impl_;
  std::lock_guard lock(impl.mutex);
  const std::uint64_t id = impl.add_task(std::move(kind), std::move(inputs), std::move(body));
  created_tasks_.push_back(id);
  return TaskId{id};
}

GemmCounter& TaskContext::gemm_counter() noexcept { return engine_.impl_->counter; }

// ---- Engine ----

Engine::Engine(EngineOptions options) : options_(std::move(options)) {
  if (options_.workers == 0) throw ConfigError("worker count must be at least 1");
  if (!(options_.flop_rate > 0.0) || !(options_.bandwidth > 0.0) ||
      !(options_.task_overhead_s >= 0.0))
    throw ConfigError("cost model parameters must be positive");
  impl_ = std::make_unique<Impl>(options_);
}

Engine::~Engine() = default;

ChunkId Engine::register_chunk(std::shared_ptr<const ChunkPayload> payload, std::size_t owner) {
  if (owner >= options_.workers) throw InputError("owner is not a worker");
  std::lock_guard lock(impl_->mutex);
  return impl_->add_chunk(std::move(payload), owner);
}

void Engine::release(ChunkId id) {
  std::lock_guard lock(impl_->mutex);
  impl_->decref(id);
}

TaskId Engine::submit(std::string kind, std::vector<TaskInput> inputs, TaskBody body,
                      std::size_t worker) {
  if (worker >= options_.workers) throw InputError("worker index out of range");
  std::lock_guard lock(impl_->mutex);
  if (impl_->running) throw StateError("submit during run");
  const std::uint64_t id = impl_->add_task(std::move(kind), std::move(inputs), std::move(body));
  impl_->tasks[id].released = true;
  impl_->make_ready_if_possible(id, worker);
  return TaskId{id};
}

void Engine::run() {
  Impl& im = *impl_;
  {
    std::lock_guard lock(im.mutex);
    if (im.running) throw StateError("engine is already running");
    im.running = true;
    im.error = nullptr;
  }
  const auto wall0 = std::chrono::steady_clock::now();
  const std::size_t trace_base = im.trace.size();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall0)
        .count();
  };

  if (options_.mode == Mode::kSimulated) {
    struct Event {
      double time;
      std::uint64_t seq;
      std::uint64_t task;
      double start;
      std::unique_ptr<TaskContext> ctx;
      TaskResult result;
    };
    auto later = [](const std::unique_ptr<Event>& a, const std::unique_ptr<Event>& b) {
      return a->time != b->time ? a->time > b->time : a->seq > b->seq;
    };
    std::priority_queue<std::unique_ptr<Event>, std::vector<std::unique_ptr<Event>>,
                        decltype(later)>
        events(later);
    std::vector<bool> idle(options_.workers, true);
    double now = 0.0;
    std::uint64_t seq = 0;
    try {
      while (true) {
        for (std::size_t w = 0; w < options_.workers; ++w) {
          if (!idle[w]) continue;
          std::uint64_t t;
          std::vector<ChunkId> inputs;
          {
            std::lock_guard lock(im.mutex);
            t = im.acquire(w);
            if (t == 0) continue;
            inputs = im.tasks[t].resolved;
          }
          auto ev = std::make_unique<Event>();
          ev->ctx.reset(new TaskContext(*this, t, w, std::move(inputs)));
          ev->result = im.tasks[t].body(*ev->ctx);
          ev->task = t;
          ev->start = now;
          ev->time = now + im.cost(*ev->ctx);
          ev->seq = seq++;
          events.push(std::move(ev));
          idle[w] = false;
        }
        if (events.empty()) break;
        auto ev = std::move(const_cast<std::unique_ptr<Event>&>(events.top()));
        events.pop();
        now = ev->time;
        std::lock_guard lock(im.mutex);
        im.complete(ev->task, ev->result, *ev->ctx);
        if (!options_.trace_path.empty())
          im.trace.push_back({ev->task, im.tasks[ev->task].kind, ev->ctx->worker(),
                              ev->start * 1e3, (ev->time - ev->start) * 1e3,
                              ev->ctx->bytes_remote_});
        idle[ev->ctx->worker()] = true;
      }
    } catch (...) {
      std::lock_guard lock(im.mutex);
      im.error = std::current_exception();
    }
    std::lock_guard lock(im.mutex);
    im.stats.makespan_s += now;
  } else {
    auto worker_loop = [&](std::size_t w) {
      std::unique_lock lock(im.mutex);
      while (true) {
        if (im.error || im.outstanding == 0) break;
        const std::uint64_t t = im.acquire(w);
        if (t == 0) {
          if (im.running_bodies == 0) {
            im.error = std::make_exception_ptr(StateError("task graph stalled"));
            im.cv.notify_all();
            break;
          }
          im.cv.wait(lock);
          continue;
        }
        ++im.running_bodies;
        TaskContext ctx(*this, t, w, im.tasks[t].resolved);
        TaskBody& body = im.tasks[t].body;
        const double start = elapsed_ms();
        lock.unlock();
        TaskResult result;
        std::exception_ptr err;
        try {
          result = body(ctx);
        } catch (...) {
          err = std::current_exception();
        }
        const double stop = elapsed_ms();
        lock.lock();
        --im.running_bodies;
        if (err) {
          if (!im.error) im.error = err;
        } else {
          try {
            im.complete(t, result, ctx);
          } catch (...) {
            if (!im.error) im.error = std::current_exception();
          }
          if (!options_.trace_path.empty())
            im.trace.push_back({t, im.tasks[t].kind, w, start, stop - start, ctx.bytes_remote_});
        }
        im.cv.notify_all();
      }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < options_.workers; ++w) threads.emplace_back(worker_loop, w);
    for (auto& th : threads) th.join();
  }

  std::exception_ptr err;
  {
    std::lock_guard lock(im.mutex);
    im.stats.wall_ms += elapsed_ms();
    im.running = false;
    err = im.error;
    if (!err && im.outstanding != 0)
      err = std::make_exception_ptr(StateError("task graph did not complete"));
  }
  if (!options_.trace_path.empty() && im.trace.size() >= trace_base) {
    std::ofstream out(options_.trace_path);
    if (!out) throw InputError("cannot open trace file " + options_.trace_path);
    out << "task_id,kind,worker,start_ms,duration_ms,bytes_remote\n";
    char buf[256];
    for (const TraceRow& r : im.trace) {
      std::snprintf(buf, sizeof buf, "%llu,%s,%zu,%.6f,%.6f,%llu\n",
                    static_cast<unsigned long long>(r.task), r.kind.c_str(), r.worker, r.start_ms,
                    r.duration_ms, static_cast<unsigned long long>(r.bytes_remote));
      out << buf;
    }
  }
  if (err) std::rethrow_exception(err);
}

ChunkId Engine::output(TaskId task) const {
  std::lock_guard lock(impl_->mutex);
  const auto t = static_cast<std::uint64_t>(task);
  if (t == 0 || t >= impl_->tasks.size()) throw InputError("unknown task");
  const std::uint64_t f = impl_->follow(t);
  if (impl_->tasks[f].state != State::kDone) throw StateError("task has not completed");
  return impl_->tasks[f].out;
}

std::shared_ptr<const ChunkPayload> Engine::peek(ChunkId id) const {
  if (is_null(id)) return nullptr;
  std::lock_guard lock(impl_->mutex);
  return impl_->chunk_rec(id).payload;
}

std::size_t Engine::owner(ChunkId id) const {
  std::lock_guard lock(impl_->mutex);
  return impl_->chunk_rec(id).owner;
}

std::size_t Engine::live_chunks() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->chunks.size();
}

EngineStats Engine::drain_stats() const {
  std::lock_guard lock(impl_->mutex);
  if (impl_->running) throw StateError("statistics requested while the engine is running");
  EngineStats s = impl_->stats;
  s.n_gemm = impl_->counter.n_gemm();
  s.predictor_calls = impl_->counter.predictor_calls();
  return s;
}

GemmCounter& Engine::gemm_counter() noexcept { return impl_->counter; }

}  // namespace spamm::engine
