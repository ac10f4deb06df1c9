#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spamm/bench/csv.hpp"
#include "spamm/bench/slope.hpp"
#include "spamm/decay_model.hpp"
#include "spamm/engine/engine.hpp"
#include "spamm/hier_matrix.hpp"
#include "spamm/multiply.hpp"
#include "spamm/reference.hpp"

namespace spamm::bench {

struct ExperimentConfig {
  std::size_t n = 4096;
  std::vector<std::size_t> n_list;
  std::size_t task_size = 1024;
  std::size_t bs = 64;
  std::vector<Method> methods{Method::kTruncmul, Method::kSpamm, Method::kHybrid};
  double tau = 1e-6;
  std::vector<double> taus;  // strictly decreasing
  double sigma = 1e-6;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  engine::Mode mode = engine::Mode::kSimulated;
  DecayModel model;
  bool randomize = false;
  std::string input_path;  // Matrix Market file instead of the generated model matrix
  std::string trace_path;

  Geometry geometry() const { return {task_size, bs}; }
  // Throws ConfigError / InputError on inconsistent settings.
  void validate() const;
};

// A matrix A together with element access to the exact A*A.
struct Problem {
  HierMatrix a;
  ReferenceFn reference;
};

// Model matrix (or the configured input file) of order n. The reference is the
// closed-form series for the deterministic band model and a dense product otherwise.
Problem make_problem(const ExperimentConfig& config, std::size_t n);

// Runs one method on A*A and measures the error against the reference.
ErrorRow evaluate(const Problem& problem, Method method, double tau,
                  const ExperimentConfig& config);

struct ErrorReport {
  std::vector<ErrorRow> rows;
  // Per method; empty when undefined (exact method, or a zero error in the sweep).
  std::map<Method, std::optional<SlopeFit>> slopes;
};

ErrorReport run_error_vs_n(const ExperimentConfig& config);
ErrorReport run_error_vs_tau(const ExperimentConfig& config);

struct MatchedSelection {
  Method method = Method::kExact;
  bool met = false;
  ErrorRow row;  // selected tau, or the smallest tau tried when unmet
  std::optional<double> gemm_ratio_vs_truncmul;
};

struct MatchedReport {
  std::vector<ErrorRow> rows;  // every evaluated (method, tau)
  std::vector<MatchedSelection> selected;
  const MatchedSelection* find(Method m) const;
};

// Per method: the largest tau of the descending sweep with frob_error <= sigma.
MatchedReport run_matched_accuracy(const ExperimentConfig& config);

struct LeafBenchRow {
  std::size_t n = 0;
  std::size_t bs = 0;
  double fill = 0.0;
  std::uint64_t n_gemm = 0;
  double flops = 0.0;
  double multiply_s = 0.0;
  double predict_s = 0.0;
  double gflops = 0.0;
};

std::vector<LeafBenchRow> run_leaf_bench(std::size_t n, const std::vector<std::size_t>& bs_list,
                                         const std::vector<double>& fill_list, std::uint64_t seed,
                                         std::size_t repeats = 1);
void write_leaf_bench_csv(std::ostream& out, const std::vector<LeafBenchRow>& rows);

struct Lemma1Row {
  std::size_t n = 0;
  double eps = 0.0;
  double sum_sq = 0.0;
};

struct Lemma1Report {
  std::vector<Lemma1Row> rows;
  std::optional<SlopeFit> vs_n;
  std::optional<SlopeFit> vs_eps;
};

// Insignificant-element sums of the model matrix: over n_list at eps_for_n, and
// over eps_list at n_for_eps.
Lemma1Report lemma1_probe(const DecayModel& model, Geometry geometry,
                          const std::vector<std::size_t>& n_list, double eps_for_n,
                          std::size_t n_for_eps, const std::vector<double>& eps_list);
void write_lemma1_csv(std::ostream& out, const Lemma1Report& report);

}  // namespace spamm::bench
