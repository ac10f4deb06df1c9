#include "oracle/oracle.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "spamm/gemm_kernel.hpp"

namespace spamm::oracle {

DenseMatrix scalar_product(const DenseMatrix& a, const DenseMatrix& b) {
  const std::size_t n = a.size();
  DenseMatrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

DenseMatrix scalar_truncate(const DenseMatrix& a, double tau) {
  DenseMatrix out = a;
  for (double& v : out.values())
    if (std::abs(v) < tau) v = 0.0;
  return out;
}

double scalar_insignificant_sum_sq(const DenseMatrix& a, double eps) {
  double s = 0.0;
  for (double v : a.values())
    if (std::abs(v) <= eps) s += v * v;
  return s;
}

std::size_t scalar_nonzero_count(const DenseMatrix& a) {
  std::size_t count = 0;
  for (double v : a.values()) count += (v != 0.0);
  return count;
}

namespace {

// Squared norms and nonzero flags of every aligned square region, from bs up.
class Pyramid {
 public:
  Pyramid(const DenseMatrix& m, std::size_t bs) : n_(m.size()), bs_(bs) {
    std::size_t nb = n_ / bs;
    std::vector<double> norms(nb * nb, 0.0);
    std::vector<char> nz(nb * nb, 0);
    for (std::size_t bi = 0; bi < nb; ++bi)
      for (std::size_t bj = 0; bj < nb; ++bj) {
        double s = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < bs; ++i)
          for (std::size_t j = 0; j < bs; ++j) {
            const double v = m(bi * bs + i, bj * bs + j);
            s += v * v;
            any = any || v != 0.0;
          }
        norms[bi * nb + bj] = s;
        nz[bi * nb + bj] = any;
      }
    norms_.push_back(std::move(norms));
    nonzero_.push_back(std::move(nz));
    while (nb > 1) {
      const std::size_t up = nb / 2;
      const auto& lo_n = norms_.back();
      const auto& lo_z = nonzero_.back();
      std::vector<double> un(up * up, 0.0);
      std::vector<char> uz(up * up, 0);
      for (std::size_t bi = 0; bi < up; ++bi)
        for (std::size_t bj = 0; bj < up; ++bj) {
          double s = 0.0;
          bool any = false;
          for (std::size_t q = 0; q < 4; ++q) {
            const std::size_t ci = 2 * bi + q / 2;
            const std::size_t cj = 2 * bj + q % 2;
            s += lo_n[ci * nb + cj];
            any = any || lo_z[ci * nb + cj];
          }
          un[bi * up + bj] = s;
          uz[bi * up + bj] = any;
        }
      norms_.push_back(std::move(un));
      nonzero_.push_back(std::move(uz));
      nb = up;
    }
  }

  double norm_sq(std::size_t r0, std::size_t c0, std::size_t side) const {
    const auto [lvl, nb] = level(side);
    return norms_[lvl][(r0 / side) * nb + c0 / side];
  }
  bool nonzero(std::size_t r0, std::size_t c0, std::size_t side) const {
    const auto [lvl, nb] = level(side);
    return nonzero_[lvl][(r0 / side) * nb + c0 / side] != 0;
  }

 private:
  std::pair<std::size_t, std::size_t> level(std::size_t side) const {
    std::size_t lvl = 0;
    for (std::size_t s = bs_; s < side; s *= 2) ++lvl;
    return {lvl, n_ / side};
  }

  std::size_t n_;
  std::size_t bs_;
  std::vector<std::vector<double>> norms_;
  std::vector<std::vector<char>> nonzero_;
};

DenseMatrix pad(const DenseMatrix& m, std::size_t n) {
  DenseMatrix out(n);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out(i, j) = m(i, j);
  return out;
}

struct Region {
  std::size_t r;
  std::size_t c;
};

using Block = std::vector<double>;
// Sparse side x side result: bs-block positions (relative) to values.
using Partial = std::map<std::pair<std::size_t, std::size_t>, Block>;

struct Recursion {
  const DenseMatrix& a;
  const DenseMatrix& b;
  const Pyramid& pa;
  const Pyramid& pb;
  std::size_t task_size;
  std::size_t bs;
  double tau;
  bool gated;

  bool gate(Region ra, Region rb, std::size_t side) const {
    if (!gated) return true;
    return std::sqrt(pa.norm_sq(ra.r, ra.c, side)) * std::sqrt(pb.norm_sq(rb.r, rb.c, side)) >= tau;
  }

  Block extract(const DenseMatrix& m, Region r) const {
    Block out(bs * bs);
    for (std::size_t i = 0; i < bs; ++i)
      for (std::size_t j = 0; j < bs; ++j) out[i * bs + j] = m(r.r + i, r.c + j);
    return out;
  }

  using Job = std::pair<Region, Region>;

  void collect(Region ra, Region rb, std::size_t side, std::size_t out_r, std::size_t out_c,
               std::map<std::pair<std::size_t, std::size_t>, std::vector<Job>>& jobs) const {
    if (side == bs) {
      jobs[{out_r, out_c}].push_back({ra, rb});
      return;
    }
    const std::size_t h = side / 2;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) {
          const Region ca{ra.r + i * h, ra.c + k * h};
          const Region cb{rb.r + k * h, rb.c + j * h};
          if (!pa.nonzero(ca.r, ca.c, h) || !pb.nonzero(cb.r, cb.c, h)) continue;
          if (!gate(ca, cb, h)) continue;
          collect(ca, cb, h, out_r + i * h, out_c + j * h, jobs);
        }
  }

  std::optional<Partial> leaf(Region ra, Region rb) const {
    std::map<std::pair<std::size_t, std::size_t>, std::vector<Job>> jobs;
    collect(ra, rb, task_size, 0, 0, jobs);
    if (jobs.empty()) return std::nullopt;
    Partial out;
    for (auto& [pos, list] : jobs) {
      Block acc(bs * bs, 0.0);
      bool first = true;
      for (auto& [ja, jb] : list) {
        const Block x = extract(a, ja);
        const Block y = extract(b, jb);
        kernel::gemm(x, y, acc, bs, first);
        first = false;
      }
      out.emplace(pos, std::move(acc));
    }
    return out;
  }

  static std::optional<Partial> add(std::optional<Partial> x, std::optional<Partial> y) {
    if (!x) return y;
    if (!y) return x;
    for (auto& [pos, blk] : *y) {
      auto it = x->find(pos);
      if (it == x->end()) {
        x->emplace(pos, blk);
      } else {
        for (std::size_t t = 0; t < blk.size(); ++t) it->second[t] = it->second[t] + blk[t];
      }
    }
    return x;
  }

  std::optional<Partial> run(Region ra, Region rb, std::size_t side) const {
    if (side == task_size) return leaf(ra, rb);
    const std::size_t h = side / 2;
    std::optional<Partial> result;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        std::optional<Partial> t[2];
        for (std::size_t k = 0; k < 2; ++k) {
          const Region ca{ra.r + i * h, ra.c + k * h};
          const Region cb{rb.r + k * h, rb.c + j * h};
          if (!gate(ca, cb, h)) continue;
          if (!pa.nonzero(ca.r, ca.c, h) || !pb.nonzero(cb.r, cb.c, h)) continue;
          t[k] = run(ca, cb, h);
        }
        std::optional<Partial> cij = add(std::move(t[0]), std::move(t[1]));
        if (!cij) continue;
        if (!result) result.emplace();
        for (auto& [pos, blk] : *cij)
          result->emplace(std::pair{pos.first + i * h, pos.second + j * h}, std::move(blk));
      }
    return result;
  }
};

}  // namespace

DenseMatrix scalar_spamm(const DenseMatrix& a, const DenseMatrix& b, std::size_t task_size,
                         std::size_t bs, double tau, bool gated) {
  const std::size_t n = a.size();
  std::size_t np = task_size;
  while (np < n) np *= 2;
  const DenseMatrix ap = pad(a, np);
  const DenseMatrix bp = pad(b, np);
  const Pyramid pa(ap, bs);
  const Pyramid pb(bp, bs);
  const Recursion rec{ap, bp, pa, pb, task_size, bs, tau, gated};
  DenseMatrix c(n);
  if (!pa.nonzero(0, 0, np) || !pb.nonzero(0, 0, np)) return c;
  const auto result = rec.run({0, 0}, {0, 0}, np);
  if (!result) return c;
  for (const auto& [pos, blk] : *result)
    for (std::size_t i = 0; i < bs; ++i)
      for (std::size_t j = 0; j < bs; ++j) {
        const std::size_t gi = pos.first + i;
        const std::size_t gj = pos.second + j;
        if (gi < n && gj < n) c(gi, gj) = blk[i * bs + j];
      }
  return c;
}

DenseMatrix scalar_exact(const DenseMatrix& a, const DenseMatrix& b, std::size_t task_size,
                         std::size_t bs) {
  return scalar_spamm(a, b, task_size, bs, 0.0, false);
}

DenseMatrix scalar_truncmul(const DenseMatrix& a, const DenseMatrix& b, std::size_t task_size,
                            std::size_t bs, double tau) {
  return scalar_exact(scalar_truncate(a, tau), scalar_truncate(b, tau), task_size, bs);
}

DenseMatrix scalar_hybrid(const DenseMatrix& a, const DenseMatrix& b, std::size_t task_size,
                          std::size_t bs, double tau) {
  return scalar_spamm(scalar_truncate(a, tau), scalar_truncate(b, tau), task_size, bs, tau);
}

}  // namespace spamm::oracle
