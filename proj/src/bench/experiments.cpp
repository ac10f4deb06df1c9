#include "spamm/bench/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "spamm/error.hpp"
#include "spamm/generators.hpp"
#include "spamm/matrix_market.hpp"

namespace spamm::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::optional<SlopeFit> fit_or_none(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) return std::nullopt;
  for (const auto& [x, y] : pts)
    if (!(x > 0.0) || !(y > 0.0)) return std::nullopt;
  return fit_loglog_slope(pts);
}

}  // namespace

void ExperimentConfig::validate() const {
  geometry().validate();
  if (workers == 0) throw ConfigError("worker count must be at least 1");
  if (methods.empty()) throw InputError("no methods selected");
  if (!(sigma > 0.0)) throw InputError("target accuracy sigma must be positive");
  if (!(tau >= 0.0)) throw InputError("tau must be nonnegative");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (!(taus[i] < taus[i - 1])) throw InputError("tau list must be strictly decreasing");
  for (double t : taus)
    if (!(t >= 0.0)) throw InputError("tau values must be nonnegative");
  model.validate();
}

Problem make_problem(const ExperimentConfig& config, std::size_t n) {
  Problem p;
  if (!config.input_path.empty()) {
    p.a = read_matrix_market(config.input_path, config.geometry());
  } else {
    BandedOptions opts;
    opts.randomize = config.randomize;
    opts.seed = config.seed;
    p.a = gen_banded_decay(n, config.model, config.geometry(), opts);
  }
  if (config.input_path.empty() && !config.randomize &&
      config.model.distance.kind() == Distance::Kind::kBand) {
    auto ref = std::make_shared<BandedSquare>(config.model, n);
    p.reference = [ref](std::size_t i, std::size_t j) { return (*ref)(i, j); };
  } else {
    auto dense = std::make_shared<DenseMatrix>(dense_reference_product(p.a, p.a));
    p.reference = [dense](std::size_t i, std::size_t j) { return (*dense)(i, j); };
  }
  return p;
}

ErrorRow evaluate(const Problem& problem, Method method, double tau,
                  const ExperimentConfig& config) {
  RunOptions opts;
  opts.workers = config.workers;
  opts.mode = config.mode;
  opts.seed = config.seed;
  opts.trace_path = config.trace_path;
  const RunResult r = run(MultiplyRequest{method, tau, problem.a, problem.a}, opts);
  const ErrorMeasure e = measure_error(r.product, problem.reference);
  ErrorRow row;
  row.method = method;
  row.n = problem.a.n_logical();
  row.task_size = problem.a.task_size();
  row.bs = problem.a.bs();
  row.tau = tau;
  row.frob_error = e.frobenius;
  row.max_elem_error = e.max_element;
  row.n_gemm = r.stats.n_gemm();
  row.flops = r.stats.flops();
  row.bytes_sent_total = r.stats.bytes_sent_total();
  row.bytes_sent_max = r.stats.bytes_sent_max();
  row.wall_ms = r.stats.wall_ms;
  row.seed = config.seed;
  return row;
}

ErrorReport run_error_vs_n(const ExperimentConfig& config) {
  config.validate();
  if (config.n_list.empty()) throw InputError("n list is empty");
  ErrorReport report;
  std::map<Method, std::vector<std::pair<double, double>>> pts;
  for (std::size_t n : config.n_list) {
    const Problem p = make_problem(config, n);
    for (Method m : config.methods) {
      report.rows.push_back(evaluate(p, m, config.tau, config));
      pts[m].emplace_back(static_cast<double>(n), report.rows.back().frob_error);
    }
  }
  for (Method m : config.methods)
    report.slopes[m] = m == Method::kExact ? std::nullopt : fit_or_none(pts[m]);
  return report;
}

ErrorReport run_error_vs_tau(const ExperimentConfig& config) {
  config.validate();
  if (config.taus.size() < 2) throw InputError("tau list needs at least two values");
  for (double t : config.taus)
    if (!(t > 0.0)) throw InputError("tau values must be positive on a log scale");
  if (std::log10(config.taus.front() / config.taus.back()) < 4.0 - 1e-9)
    throw InputError("tau list must span at least four decades");
  ErrorReport report;
  std::map<Method, std::vector<std::pair<double, double>>> pts;
  const Problem p = make_problem(config, config.n);
  for (double tau : config.taus) {
    for (Method m : config.methods) {
      report.rows.push_back(evaluate(p, m, tau, config));
      pts[m].emplace_back(tau, report.rows.back().frob_error);
    }
  }
  for (Method m : config.methods)
    report.slopes[m] = m == Method::kExact ? std::nullopt : fit_or_none(pts[m]);
  return report;
}

const MatchedSelection* MatchedReport::find(Method m) const {
  for (const auto& s : selected)
    if (s.method == m) return &s;
  return nullptr;
}

MatchedReport run_matched_accuracy(const ExperimentConfig& config) {
  config.validate();
  if (config.taus.empty()) throw InputError("tau sweep is empty");
  MatchedReport report;
  const Problem p = make_problem(config, config.n);
  for (Method m : config.methods) {
    MatchedSelection sel;
    sel.method = m;
    const std::size_t tries = m == Method::kExact ? 1 : config.taus.size();
    for (std::size_t t = 0; t < tries; ++t) {
      report.rows.push_back(evaluate(p, m, config.taus[t], config));
      sel.row = report.rows.back();
      if (sel.row.frob_error <= config.sigma) {
        sel.met = true;
        break;
      }
    }
    report.selected.push_back(sel);
  }
  if (const MatchedSelection* base = report.find(Method::kTruncmul); base && base->row.n_gemm > 0) {
    for (auto& s : report.selected)
      s.gemm_ratio_vs_truncmul =
          static_cast<double>(s.row.n_gemm) / static_cast<double>(base->row.n_gemm);
  }
  return report;
}

std::vector<LeafBenchRow> run_leaf_bench(std::size_t n, const std::vector<std::size_t>& bs_list,
                                         const std::vector<double>& fill_list, std::uint64_t seed,
                                         std::size_t repeats) {
  if (repeats == 0) throw InputError("repeats must be positive");
  std::vector<LeafBenchRow> rows;
  for (std::size_t bs : bs_list) {
    for (double fill : fill_list) {
      const LeafMatrix a = gen_random_blocksparse(n, bs, fill, seed);
      const LeafMatrix b = gen_random_blocksparse(n, bs, fill, seed + 1);
      LeafBenchRow row;
      row.n = n;
      row.bs = bs;
      row.fill = fill;
      row.multiply_s = 1e300;
      for (std::size_t r = 0; r < repeats; ++r) {
        GemmCounter counter;
        const auto t0 = Clock::now();
        const LeafMatrix c = leaf_multiply(a, b, counter);
        row.multiply_s = std::min(row.multiply_s, seconds_since(t0));
        row.n_gemm = counter.n_gemm();
      }
      std::size_t reps = 0;
      [[maybe_unused]] volatile bool sink = false;
      const auto t0 = Clock::now();
      double elapsed = 0.0;
      do {
        sink = predict_product_nonzero(a, b);
        ++reps;
        elapsed = seconds_since(t0);
      } while (elapsed < 0.02 && reps < 1000000);
      row.predict_s = elapsed / static_cast<double>(reps);
      row.flops = GemmCounter::flops(bs, row.n_gemm);
      row.gflops = row.multiply_s > 0.0 ? row.flops / row.multiply_s / 1e9 : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_leaf_bench_csv(std::ostream& out, const std::vector<LeafBenchRow>& rows) {
  out << "n,bs,fill,n_gemm,flops,multiply_s,predict_s,gflops\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g,%llu,%.17g,%.6e,%.6e,%.4f\n", r.n, r.bs, r.fill,
                  static_cast<unsigned long long>(r.n_gemm), r.flops, r.multiply_s, r.predict_s,
                  r.gflops);
    out << buf;
  }
}

Lemma1Report lemma1_probe(const DecayModel& model, Geometry geometry,
                          const std::vector<std::size_t>& n_list, double eps_for_n,
                          std::size_t n_for_eps, const std::vector<double>& eps_list) {
  Lemma1Report report;
  std::vector<std::pair<double, double>> by_n, by_eps;
  for (std::size_t n : n_list) {
    const HierMatrix a = gen_banded_decay(n, model, geometry);
    const double s = a.insignificant_sum_sq(eps_for_n);
    report.rows.push_back({n, eps_for_n, s});
    by_n.emplace_back(static_cast<double>(n), s);
  }
  if (!eps_list.empty()) {
    const HierMatrix a = gen_banded_decay(n_for_eps, model, geometry);
    for (double eps : eps_list) {
      const double s = a.insignificant_sum_sq(eps);
      report.rows.push_back({n_for_eps, eps, s});
      by_eps.emplace_back(eps, s);
    }
  }
  report.vs_n = fit_or_none(by_n);
  report.vs_eps = fit_or_none(by_eps);
  return report;
}

void write_lemma1_csv(std::ostream& out, const Lemma1Report& report) {
  out << "n,eps,insignificant_sum_sq\n";
  char buf[128];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.n, r.eps, r.sum_sq);
    out << buf;
  }
}

}  // namespace spamm::bench
