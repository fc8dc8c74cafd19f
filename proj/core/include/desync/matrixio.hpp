#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace desync {

struct MatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sparse matrix in compressed row storage; values optional (empty means
/// pattern-only).
struct SparseMatrix {
  std::int64_t n_rows = 0;
  std::int64_t n_cols = 0;
  std::vector<std::int64_t> row_ptr;  // length n_rows + 1
  std::vector<std::int32_t> col_idx;  // sorted within each row
  std::vector<double> values;         // empty or n_nz entries
  bool symmetric = false;

  std::int64_t n_nz() const { return row_ptr.empty() ? 0 : row_ptr.back(); }
  void validate() const;
};

struct MatrixStats {
  std::int64_t n_r = 0;
  std::int64_t n_nz = 0;
  double n_nzr = 0;           // n_nz / n_r
  std::int64_t bandwidth = 0; // max |col - row|
  std::int64_t size_bytes = 0;  // 12 n_nz + 4 n_r (8 B values, 4 B indices)
};

MatrixStats stats(const SparseMatrix& m);

/// Per-process right-hand-side traffic of a row-partitioned SpMVM.
/// volume(i, j) is the number of bytes rank j must send to rank i.
struct CommMatrix {
  int n_ranks = 0;
  int element_bytes = 8;
  std::vector<std::int64_t> volumes;  // n_ranks * n_ranks, row-major (dst, src)
  std::vector<std::pair<std::int64_t, std::int64_t>> partition;  // row ranges

  std::int64_t volume(int dst, int src) const { return volumes[(std::size_t)dst * n_ranks + src]; }
  std::int64_t& volume(int dst, int src) { return volumes[(std::size_t)dst * n_ranks + src]; }
  void validate() const;

  // Header "n_ranks element_bytes", then one "src dst bytes" triplet per line.
  void write(std::ostream& os) const;
  static CommMatrix read(std::istream& is);
};

// Matrix Market coordinate format, real/integer/pattern, general or
// symmetric (symmetric input is expanded). Column indices come out sorted.
SparseMatrix load_matrix_market(const std::string& path);
SparseMatrix read_matrix_market(std::istream& is);
void write_matrix_market(const SparseMatrix& m, std::ostream& os);

// Symmetric banded pattern: nzr nonzeros per row placed on randomly chosen
// diagonals within |col - row| <= half_bandwidth. Boundary rows lose the
// diagonals that fall outside the matrix.
SparseMatrix gen_banded(std::int64_t n, std::int64_t half_bandwidth, int nzr,
                        std::uint64_t seed);

// Same construction with diagonals drawn uniformly within |col - row| < spread.
SparseMatrix gen_scattered(std::int64_t n, int nzr, std::int64_t spread,
                           std::uint64_t seed);

// Contiguous row ranges minimizing the maximum per-rank nonzero count
// (exact over all contiguous splits; every rank gets at least one row).
std::vector<std::pair<std::int64_t, std::int64_t>> partition_rows(const SparseMatrix& m,
                                                                  int n_ranks);

// volume(i <- j) = element_bytes * |distinct columns owned by j that rows
// of i reference|; each remote element is gathered once per SpMVM.
CommMatrix build_comm_matrix(const SparseMatrix& m,
                             const std::vector<std::pair<std::int64_t, std::int64_t>>& partition,
                             int element_bytes);

}  // namespace desync
