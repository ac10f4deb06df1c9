#include "spamm/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spamm/error.hpp"

namespace spamm {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); });
}

struct Entry {
  std::size_t i;
  std::size_t j;
  double v;
};

}  // namespace

HierMatrix read_matrix_market(std::istream& in, Geometry geometry) {
  geometry.validate();
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  ++lineno;
  std::istringstream head(line);
  std::string banner, object, format, field, symmetry;
  head >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") throw ParseError("missing %%MatrixMarket banner", lineno);
  object = lower(object);
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix") throw ParseError("object must be 'matrix'", lineno);
  if (format == "array") throw UnsupportedFormatError("array format is not supported");
  if (format != "coordinate") throw ParseError("unknown format '" + format + "'", lineno);
  if (field == "pattern") throw UnsupportedFormatError("pattern matrices carry no values");
  if (field == "complex") throw UnsupportedFormatError("complex matrices are not supported");
  if (field != "real" && field != "integer" && field != "double")
    throw ParseError("unknown field '" + field + "'", lineno);
  bool symmetric = false;
  if (symmetry == "symmetric") {
    symmetric = true;
  } else if (symmetry == "skew-symmetric" || symmetry == "hermitian") {
    throw UnsupportedFormatError(symmetry + " storage is not supported");
  } else if (symmetry != "general") {
    throw ParseError("unknown symmetry '" + symmetry + "'", lineno);
  }

  std::size_t rows = 0, cols = 0, nnz = 0;
  bool have_size = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%' || blank(line)) continue;
    std::istringstream ss(line);
    if (!(ss >> rows >> cols >> nnz)) throw ParseError("malformed size line", lineno);
    have_size = true;
    break;
  }
  if (!have_size) throw ParseError("missing size line", lineno + 1);
  if (rows != cols) throw ParseError("only square matrices are supported", lineno);
  if (rows == 0) throw ParseError("matrix dimension must be at least 1", lineno);

  const std::size_t n = rows;
  const std::size_t t = geometry.task_size;
  const std::size_t bs = geometry.bs;
  // Entries grouped by leaf so no dense n x n array is ever formed.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<Entry>> by_leaf;
  auto add = [&](std::size_t i, std::size_t j, double v) {
    by_leaf[{i / t, j / t}].push_back({i % t, j % t, v});
  };

  std::size_t seen = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%' || blank(line)) continue;
    std::istringstream ss(line);
    long long i1 = 0, j1 = 0;
    std::string vs;
    if (!(ss >> i1 >> j1 >> vs)) throw ParseError("malformed entry", lineno);
    std::string extra;
    if (ss >> extra) throw ParseError("trailing data after entry", lineno);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(vs.data(), vs.data() + vs.size(), v);
    if (ec != std::errc() || ptr != vs.data() + vs.size() || !std::isfinite(v))
      throw ParseError("bad value '" + vs + "'", lineno);
    if (i1 < 1 || j1 < 1 || static_cast<std::size_t>(i1) > n || static_cast<std::size_t>(j1) > n)
      throw ParseError("index out of range", lineno);
    const auto i = static_cast<std::size_t>(i1 - 1);
    const auto j = static_cast<std::size_t>(j1 - 1);
    add(i, j, v);
    if (symmetric && i != j) add(j, i, v);
    ++seen;
  }
  if (seen != nnz)
    throw ParseError("expected " + std::to_string(nnz) + " entries, found " + std::to_string(seen),
                     lineno);

  std::vector<HierMatrix::PlacedLeaf> leaves;
  for (auto& [pos, entries] : by_leaf) {
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> blocks;
    for (const Entry& e : entries) {
      auto& blk = blocks[{e.i / bs, e.j / bs}];
      if (blk.empty()) blk.assign(bs * bs, 0.0);
      blk[(e.i % bs) * bs + e.j % bs] += e.v;
    }
    std::vector<LeafMatrix::PlacedBlock> placed;
    for (auto& [bpos, values] : blocks) placed.push_back({bpos.first, bpos.second, std::move(values)});
    LeafMatrix leaf = LeafMatrix::from_blocks(t, bs, std::move(placed));
    if (!leaf.empty()) leaves.push_back({pos.first, pos.second, std::move(leaf)});
  }
  return HierMatrix::from_leaves(n, geometry, std::move(leaves));
}

HierMatrix read_matrix_market(const std::filesystem::path& path, Geometry geometry) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_matrix_market(in, geometry);
}

void write_matrix_market(std::ostream& out, const HierMatrix& matrix) {
  const std::size_t t = matrix.task_size();
  const std::size_t n = matrix.n_logical();
  std::vector<double> buf(t * t);
  std::vector<Entry> entries;
  matrix.for_each_leaf([&](std::size_t lr, std::size_t lc, const LeafMatrix& leaf) {
    leaf.to_dense(buf, t);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j)
        if (buf[i * t + j] != 0.0) entries.push_back({lr * t + i, lc * t + j, buf[i * t + j]});
  });
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.j != b.j ? a.j < b.j : a.i < b.i;
  });
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << n << ' ' << n << ' ' << entries.size() << '\n';
  char buffer[64];
  for (const Entry& e : entries) {
    std::snprintf(buffer, sizeof buffer, "%zu %zu %.17g\n", e.i + 1, e.j + 1, e.v);
    out << buffer;
  }
}

void write_matrix_market(const std::filesystem::path& path, const HierMatrix& matrix) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_matrix_market(out, matrix);
  if (!out) throw InputError("write failed: " + path.string());
}

}  // namespace spamm
