#include "desync/matrixio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "desync/model.hpp"

namespace desync {

void SparseMatrix::validate() const {
  if (n_rows < 0 || n_cols < 0) throw MatrixError("DimensionMismatch: negative dimensions");
  if ((std::int64_t)row_ptr.size() != n_rows + 1)
    throw MatrixError("DimensionMismatch: row_ptr length must be n_rows + 1");
  for (std::int64_t r = 0; r < n_rows; ++r)
    if (row_ptr[r + 1] < row_ptr[r])
      throw MatrixError("DimensionMismatch: row_ptr must be non-decreasing");
  if ((std::int64_t)col_idx.size() != n_nz())
    throw MatrixError("DimensionMismatch: col_idx length disagrees with row_ptr");
  for (auto c : col_idx)
    if (c < 0 || c >= n_cols) throw MatrixError("DimensionMismatch: column index out of range");
  if (!values.empty() && (std::int64_t)values.size() != n_nz())
    throw MatrixError("DimensionMismatch: values length disagrees with row_ptr");
}

MatrixStats stats(const SparseMatrix& m) {
  MatrixStats s;
  s.n_r = m.n_rows;
  s.n_nz = m.n_nz();
  s.n_nzr = m.n_rows > 0 ? (double)s.n_nz / (double)m.n_rows : 0.0;
  for (std::int64_t r = 0; r < m.n_rows; ++r)
    for (std::int64_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
      s.bandwidth = std::max(s.bandwidth, std::abs((std::int64_t)m.col_idx[k] - r));
  s.size_bytes = 12 * s.n_nz + 4 * s.n_r;
  return s;
}

void CommMatrix::validate() const {
  if (n_ranks <= 0) throw MatrixError("InconsistentCommMatrix: n_ranks must be > 0");
  if ((std::int64_t)volumes.size() != (std::int64_t)n_ranks * n_ranks)
    throw MatrixError("InconsistentCommMatrix: volume matrix size mismatch");
  for (int i = 0; i < n_ranks; ++i) {
    if (volume(i, i) != 0) throw MatrixError("InconsistentCommMatrix: nonzero self-volume");
    for (int j = 0; j < n_ranks; ++j) {
      std::int64_t v = volume(i, j);
      if (v < 0) throw MatrixError("InconsistentCommMatrix: negative volume");
      if (element_bytes > 0 && v % element_bytes != 0)
        throw MatrixError("InconsistentCommMatrix: volume not a multiple of element size");
    }
  }
}

void CommMatrix::write(std::ostream& os) const {
  os << n_ranks << ' ' << element_bytes << '\n';
  for (int i = 0; i < n_ranks; ++i)
    for (int j = 0; j < n_ranks; ++j)
      if (volume(i, j) > 0) os << j << ' ' << i << ' ' << volume(i, j) << '\n';
}

CommMatrix CommMatrix::read(std::istream& is) {
  CommMatrix cm;
  if (!(is >> cm.n_ranks >> cm.element_bytes))
    throw MatrixError("ParseError: bad CommMatrix header");
  if (cm.n_ranks <= 0) throw MatrixError("InconsistentCommMatrix: n_ranks must be > 0");
  cm.volumes.assign((std::size_t)cm.n_ranks * cm.n_ranks, 0);
  int src, dst;
  std::int64_t bytes;
  while (is >> src >> dst >> bytes) {
    if (src < 0 || src >= cm.n_ranks || dst < 0 || dst >= cm.n_ranks)
      throw MatrixError("InconsistentCommMatrix: rank out of range");
    cm.volume(dst, src) = bytes;
  }
  cm.validate();
  return cm;
}

namespace {

struct Triplet {
  std::int64_t row, col;
  double val;
};

SparseMatrix from_triplets(std::int64_t n_rows, std::int64_t n_cols,
                           std::vector<Triplet>& trips, bool with_values) {
  std::sort(trips.begin(), trips.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  // collapse duplicates
  std::size_t out = 0;
  for (std::size_t i = 0; i < trips.size(); ++i) {
    if (out > 0 && trips[out - 1].row == trips[i].row && trips[out - 1].col == trips[i].col) {
      trips[out - 1].val += trips[i].val;
    } else {
      trips[out++] = trips[i];
    }
  }
  trips.resize(out);
  SparseMatrix m;
  m.n_rows = n_rows;
  m.n_cols = n_cols;
  m.row_ptr.assign(n_rows + 1, 0);
  for (const auto& t : trips) m.row_ptr[t.row + 1]++;
  for (std::int64_t r = 0; r < n_rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  m.col_idx.reserve(trips.size());
  if (with_values) m.values.reserve(trips.size());
  for (const auto& t : trips) {
    m.col_idx.push_back((std::int32_t)t.col);
    if (with_values) m.values.push_back(t.val);
  }
  m.validate();
  return m;
}

}  // namespace

SparseMatrix read_matrix_market(std::istream& is) {
  std::string line;
  int lineno = 0;
  if (!std::getline(is, line)) throw MatrixError("ParseError: empty file (line 1)");
  ++lineno;
  std::istringstream banner(line);
  std::string mm, object, format, field, symmetry;
  banner >> mm >> object >> format >> field >> symmetry;
  for (auto* s : {&object, &format, &field, &symmetry})
    std::transform(s->begin(), s->end(), s->begin(), [](unsigned char c) { return std::tolower(c); });
  if (mm != "%%MatrixMarket" || object != "matrix")
    throw MatrixError("ParseError: not a MatrixMarket matrix file (line 1)");
  if (format != "coordinate")
    throw MatrixError("ParseError: only coordinate format is supported (line 1)");
  bool pattern = field == "pattern";
  bool sym = symmetry == "symmetric";
  if (!sym && symmetry != "general")
    throw MatrixError("ParseError: unsupported symmetry '" + symmetry + "' (line 1)");

  std::int64_t n_rows = -1, n_cols = -1, n_entries = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream hs(line);
    if (!(hs >> n_rows >> n_cols >> n_entries))
      throw MatrixError("ParseError: bad size line (line " + std::to_string(lineno) + ")");
    break;
  }
  if (n_rows < 0)
    throw MatrixError("ParseError: missing size line (line " + std::to_string(lineno) + ")");

  std::vector<Triplet> trips;
  trips.reserve(sym ? 2 * n_entries : n_entries);
  std::int64_t seen = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ls(line);
    std::int64_t r, c;
    double v = 1.0;
    if (!(ls >> r >> c))
      throw MatrixError("ParseError: bad entry (line " + std::to_string(lineno) + ")");
    if (!pattern && !(ls >> v))
      throw MatrixError("ParseError: missing value (line " + std::to_string(lineno) + ")");
    if (r < 1 || r > n_rows || c < 1 || c > n_cols)
      throw MatrixError("DimensionMismatch: entry out of bounds (line " + std::to_string(lineno) +
                        ")");
    trips.push_back({r - 1, c - 1, v});
    if (sym && r != c) trips.push_back({c - 1, r - 1, v});
    ++seen;
  }
  if (seen != n_entries)
    throw MatrixError("DimensionMismatch: expected " + std::to_string(n_entries) +
                      " entries, found " + std::to_string(seen));
  SparseMatrix m = from_triplets(n_rows, n_cols, trips, !pattern);
  m.symmetric = sym;
  return m;
}

SparseMatrix load_matrix_market(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MatrixError("ParseError: cannot open '" + path + "'");
  return read_matrix_market(f);
}

void write_matrix_market(const SparseMatrix& m, std::ostream& os) {
  bool pattern = m.values.empty();
  os << "%%MatrixMarket matrix coordinate " << (pattern ? "pattern" : "real") << " general\n";
  os << m.n_rows << ' ' << m.n_cols << ' ' << m.n_nz() << '\n';
  for (std::int64_t r = 0; r < m.n_rows; ++r)
    for (std::int64_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
      os << r + 1 << ' ' << m.col_idx[k] + 1;
      if (!pattern) {
        char buf[40];
        std::snprintf(buf, sizeof buf, " %.17g", m.values[k]);
        os << buf;
      }
      os << '\n';
    }
}

namespace {

// Shared construction: a symmetric set of diagonal offsets applied to
// every row, truncated at matrix edges.
SparseMatrix diagonal_pattern(std::int64_t n, const std::vector<std::int64_t>& offsets) {
  SparseMatrix m;
  m.n_rows = m.n_cols = n;
  m.symmetric = true;
  m.row_ptr.assign(n + 1, 0);
  for (std::int64_t r = 0; r < n; ++r)
    for (auto o : offsets)
      if (r + o >= 0 && r + o < n) m.row_ptr[r + 1]++;
  for (std::int64_t r = 0; r < n; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  m.col_idx.reserve(m.row_ptr[n]);
  for (std::int64_t r = 0; r < n; ++r)
    for (auto o : offsets)
      if (r + o >= 0 && r + o < n) m.col_idx.push_back((std::int32_t)(r + o));
  m.validate();
  return m;
}

std::vector<std::int64_t> pick_offsets(int nzr, std::int64_t max_offset, std::uint64_t seed) {
  // 0 is included for odd nzr; the remaining offsets come in +/- pairs.
  bool with_diag = nzr % 2 == 1;
  int n_pairs = nzr / 2;
  if (n_pairs > max_offset)
    throw MatrixError("InfeasibleDensity: nzr=" + std::to_string(nzr) +
                      " does not fit within offset range " + std::to_string(max_offset));
  std::set<std::int64_t> chosen;
  std::uint64_t state = mix_seed(seed, /*stream=*/2, 0);
  while ((int)chosen.size() < n_pairs) {
    std::int64_t o = 1 + (std::int64_t)(splitmix64(state) % (std::uint64_t)max_offset);
    chosen.insert(o);
  }
  std::vector<std::int64_t> offsets;
  if (with_diag) offsets.push_back(0);
  for (auto o : chosen) {
    offsets.push_back(o);
    offsets.push_back(-o);
  }
  std::sort(offsets.begin(), offsets.end());
  return offsets;
}

}  // namespace

SparseMatrix gen_banded(std::int64_t n, std::int64_t half_bandwidth, int nzr,
                        std::uint64_t seed) {
  if (n <= 0 || half_bandwidth < 0 || nzr <= 0)
    throw MatrixError("InfeasibleDensity: need n > 0, half_bandwidth >= 0, nzr > 0");
  if (nzr > 2 * half_bandwidth + 1)
    throw MatrixError("InfeasibleDensity: nzr exceeds 2*half_bandwidth + 1");
  if (half_bandwidth == 0) return diagonal_pattern(n, {0});
  return diagonal_pattern(n, pick_offsets(nzr, half_bandwidth, seed));
}

SparseMatrix gen_scattered(std::int64_t n, int nzr, std::int64_t spread, std::uint64_t seed) {
  if (n <= 0 || nzr <= 0) throw MatrixError("InfeasibleDensity: need n > 0, nzr > 0");
  if (spread > n) throw MatrixError("InfeasibleDensity: spread exceeds matrix size");
  if (nzr > 2 * (spread - 1) + 1)
    throw MatrixError("InfeasibleDensity: nzr exceeds 2*(spread-1) + 1");
  return diagonal_pattern(n, pick_offsets(nzr, spread - 1, seed));
}

std::vector<std::pair<std::int64_t, std::int64_t>> partition_rows(const SparseMatrix& m,
                                                                  int n_ranks) {
  if (n_ranks <= 0) throw MatrixError("TooManyRanks: n_ranks must be > 0");
  if ((std::int64_t)n_ranks > m.n_rows)
    throw MatrixError("TooManyRanks: n_ranks=" + std::to_string(n_ranks) + " > n_rows=" +
                      std::to_string(m.n_rows));
  const std::int64_t n = m.n_rows;
  auto row_nnz = [&](std::int64_t r) { return m.row_ptr[r + 1] - m.row_ptr[r]; };

  // Can the rows be split into <= n_ranks contiguous non-empty pieces with
  // every piece's nonzero count <= cap?
  auto feasible = [&](std::int64_t cap) {
    int pieces = 1;
    std::int64_t load = 0;
    for (std::int64_t r = 0; r < n; ++r) {
      std::int64_t w = row_nnz(r);
      if (w > cap) return false;
      if (load + w > cap) {
        ++pieces;
        load = w;
      } else {
        load += w;
      }
    }
    return pieces <= n_ranks;
  };

  std::int64_t lo = 0, hi = m.n_nz();
  for (std::int64_t r = 0; r < n; ++r) lo = std::max(lo, row_nnz(r));
  while (lo < hi) {
    std::int64_t mid = lo + (hi - lo) / 2;
    if (feasible(mid))
      hi = mid;
    else
      lo = mid + 1;
  }
  const std::int64_t cap = lo;

  // Greedy packing at the optimal cap, holding back enough rows so that
  // every remaining rank gets at least one.
  std::vector<std::pair<std::int64_t, std::int64_t>> parts;
  std::int64_t row = 0;
  for (int p = 0; p < n_ranks; ++p) {
    std::int64_t start = row;
    std::int64_t load = 0;
    std::int64_t ranks_left = n_ranks - p - 1;
    while (row < n - ranks_left && (row == start || load + row_nnz(row) <= cap)) {
      load += row_nnz(row);
      ++row;
    }
    parts.emplace_back(start, row);
  }
  return parts;
}

CommMatrix build_comm_matrix(const SparseMatrix& m,
                             const std::vector<std::pair<std::int64_t, std::int64_t>>& partition,
                             int element_bytes) {
  const int n_ranks = (int)partition.size();
  if (n_ranks == 0) throw MatrixError("InconsistentCommMatrix: empty partition");
  if (m.n_rows != m.n_cols)
    throw MatrixError("DimensionMismatch: comm matrix derivation needs a square matrix");
  std::vector<int> owner(m.n_rows, -1);
  for (int p = 0; p < n_ranks; ++p) {
    auto [lo, hi] = partition[p];
    if (lo < 0 || hi > m.n_rows || lo > hi)
      throw MatrixError("InconsistentCommMatrix: bad partition range");
    for (std::int64_t r = lo; r < hi; ++r) {
      if (owner[r] != -1) throw MatrixError("InconsistentCommMatrix: overlapping partition");
      owner[r] = p;
    }
  }
  for (std::int64_t r = 0; r < m.n_rows; ++r)
    if (owner[r] == -1) throw MatrixError("InconsistentCommMatrix: partition does not cover rows");

  CommMatrix cm;
  cm.n_ranks = n_ranks;
  cm.element_bytes = element_bytes;
  cm.volumes.assign((std::size_t)n_ranks * n_ranks, 0);
  for (int p = 0; p < n_ranks; ++p) {
    auto [lo, hi] = partition[p];
    std::map<int, std::set<std::int32_t>> remote;  // src rank -> distinct columns
    for (std::int64_t r = lo; r < hi; ++r)
      for (std::int64_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
        int o = owner[m.col_idx[k]];
        if (o != p) remote[o].insert(m.col_idx[k]);
      }
    for (const auto& [src, cols] : remote)
      cm.volume(p, src) = (std::int64_t)cols.size() * element_bytes;
  }
  cm.partition = partition;
  return cm;
}

}  // namespace desync
