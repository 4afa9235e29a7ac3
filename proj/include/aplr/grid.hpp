#pragma once

// Periodic staggered grids in one and two space dimensions.
//
// All locations live on a half-index lattice (a, b): x = x_lo + a*dx/2 and
// y = y_lo + b*dy/2.  Odd a is a cell center, even a a cell interface.  The
// density rho sits where a + b is even (cell centers and cell corners), the
// microscopic variable g where a + b is odd (x-face and y-face midpoints).
//
// One-dimensional grids reuse the same layout with a second axis of extent 2
// and no derivative along it.  This yields two interleaved staggered lattices
// (rho at centers / g at interfaces, and rho at interfaces / g at centers),
// so N_rho = N_g = 2 N_x.  This 1D layout is a convention mirroring the 2D
// picture, not something dictated by the scheme itself.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aplr {

using Index = Eigen::Index;

enum class Lattice { rho, g };
enum class Side { plus, minus };

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

struct HalfIndex {
  Index a = 0;
  Index b = 0;
  friend bool operator==(const HalfIndex&, const HalfIndex&) = default;
};

// One-sided difference: out[k] = (in[hi[k]] - in[lo[k]]) * inv_h.
struct Stencil {
  std::vector<Index> hi;
  std::vector<Index> lo;
  double inv_h = 0.0;
  Index source_size = 0;
};

class StaggeredGrid {
 public:
  StaggeredGrid() = default;

  static StaggeredGrid build(int dim, std::span<const Interval> bounds, std::span<const int> cells) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
    if (static_cast<int>(bounds.size()) != dim || static_cast<int>(cells.size()) != dim)
      throw std::invalid_argument("grid needs one interval and one cell count per axis");
    StaggeredGrid grid;
    grid.dim_ = dim;
    for (int j = 0; j < dim; ++j) {
      if (cells[j] < 2) throw std::invalid_argument("need at least 2 cells per axis, got " + std::to_string(cells[j]));
      if (!(bounds[j].hi > bounds[j].lo) || !std::isfinite(bounds[j].length()))
        throw std::invalid_argument("degenerate domain on axis " + std::to_string(j));
      grid.bounds_[j] = bounds[j];
      grid.cells_[j] = cells[j];
      grid.spacing_[j] = bounds[j].length() / cells[j];
    }
    if (dim == 1) {
      grid.cells_[1] = 1;
      grid.bounds_[1] = {0.0, 0.0};
      grid.spacing_[1] = 0.0;
    }
    grid.extent_ = {2 * static_cast<Index>(grid.cells_[0]), 2 * static_cast<Index>(grid.cells_[1])};
    grid.block_size_ = static_cast<Index>(grid.cells_[0]) * grid.cells_[1];
    grid.build_stencils();
    return grid;
  }

  static StaggeredGrid line(Interval x, int nx) {
    const std::array<Interval, 1> b{x};
    const std::array<int, 1> n{nx};
    return build(1, b, n);
  }

  static StaggeredGrid rectangle(Interval x, Interval y, int nx, int ny) {
    const std::array<Interval, 2> b{x, y};
    const std::array<int, 2> n{nx, ny};
    return build(2, b, n);
  }

  int dim() const { return dim_; }
  int cells(int axis) const { return cells_.at(axis); }
  double spacing(int axis) const { return spacing_.at(axis); }
  const Interval& bounds(int axis) const { return bounds_.at(axis); }
  Index rho_count() const { return 2 * block_size_; }
  Index g_count() const { return 2 * block_size_; }
  Index count(Lattice l) const { return l == Lattice::rho ? rho_count() : g_count(); }
  double min_spacing() const { return dim_ == 1 ? spacing_[0] : std::min(spacing_[0], spacing_[1]); }

  // Product of the mesh widths; the weight of the discrete inner products.
  double cell_volume() const { return dim_ == 1 ? spacing_[0] : spacing_[0] * spacing_[1]; }

  // Each lattice holds two points per cell, so every point carries half a cell.
  double point_volume() const { return 0.5 * cell_volume(); }

  // Linear index -> half-index location (the inverse index maps B_rho^-1, B_g^-1).
  HalfIndex location(Lattice l, Index k) const {
    if (k < 0 || k >= count(l)) throw std::out_of_range("grid index out of range");
    const Index block = k / block_size_;
    const Index r = k % block_size_;
    const Index i = r % cells_[0];
    const Index j = r / cells_[0];
    const auto [pa, pb] = block_parity(l, block);
    return {2 * i + pa, 2 * j + pb};
  }

  // Half-index location -> linear index (B_rho, B_g).  Throws if the location
  // is not on the requested lattice.
  Index index(Lattice l, HalfIndex h) const {
    const Index a = wrap(h.a, extent_[0]);
    const Index b = wrap(h.b, extent_[1]);
    const bool even = ((a + b) % 2) == 0;
    if (even != (l == Lattice::rho)) throw std::invalid_argument("location is not on the requested lattice");
    for (Index block = 0; block < 2; ++block) {
      const auto [pa, pb] = block_parity(l, block);
      if (a % 2 == pa && b % 2 == pb) return block * block_size_ + (b / 2) * cells_[0] + a / 2;
    }
    throw std::logic_error("unreachable lattice block");
  }

  bool on_lattice(Lattice l, HalfIndex h) const {
    const Index a = wrap(h.a, extent_[0]);
    const Index b = wrap(h.b, extent_[1]);
    return (((a + b) % 2) == 0) == (l == Lattice::rho);
  }

  // Physical coordinates of a lattice point.  In 1D the second entry is 0.
  std::array<double, 2> position(Lattice l, Index k) const {
    const HalfIndex h = location(l, k);
    std::array<double, 2> p{bounds_[0].lo + 0.5 * spacing_[0] * static_cast<double>(h.a), 0.0};
    if (dim_ == 2) p[1] = bounds_[1].lo + 0.5 * spacing_[1] * static_cast<double>(h.b);
    return p;
  }

  std::vector<std::array<double, 2>> positions(Lattice l) const {
    std::vector<std::array<double, 2>> out(static_cast<std::size_t>(count(l)));
    for (Index k = 0; k < count(l); ++k) out[static_cast<std::size_t>(k)] = position(l, k);
    return out;
  }

  // Difference operator from one lattice to another along an axis.
  //   rho -> g, plus : D^{(j),+} (half-cell difference)
  //   g -> rho, minus: D^{(j),-} (half-cell difference, the negated transpose of the above)
  //   g -> g, plus / minus: one-cell forward / backward differences used by the advection term
  const Stencil& stencil(int axis, Side side, Lattice from, Lattice to) const {
    check_axis(axis);
    if (from == Lattice::rho && to == Lattice::g) {
      if (side != Side::plus) throw std::invalid_argument("rho -> g difference is the plus operator");
      return rho_to_g_[axis];
    }
    if (from == Lattice::g && to == Lattice::rho) {
      if (side != Side::minus) throw std::invalid_argument("g -> rho difference is the minus operator");
      return g_to_rho_[axis];
    }
    if (from == Lattice::g && to == Lattice::g) return side == Side::plus ? g_plus_[axis] : g_minus_[axis];
    return side == Side::plus ? rho_plus_[axis] : rho_minus_[axis];
  }

 private:
  static Index wrap(Index v, Index n) { return ((v % n) + n) % n; }

  void check_axis(int axis) const {
    if (axis < 0 || axis >= dim_) throw std::out_of_range("axis out of range for grid dimension");
  }

  // (a-parity, b-parity) of each storage block.
  // rho: block 0 = cell centers (odd, odd), block 1 = corners (even, even).
  // g  : block 0 = x-faces (even, odd),     block 1 = y-faces (odd, even).
  // In 1D the b-parity only separates the two interleaved lattices.
  static std::array<Index, 2> block_parity(Lattice l, Index block) {
    if (l == Lattice::rho) return block == 0 ? std::array<Index, 2>{1, 1} : std::array<Index, 2>{0, 0};
    return block == 0 ? std::array<Index, 2>{0, 1} : std::array<Index, 2>{1, 0};
  }

  HalfIndex shifted(HalfIndex h, int axis, Index offset) const {
    if (axis == 0) h.a += offset;
    else h.b += offset;
    return h;
  }

  Stencil make_stencil(int axis, Lattice from, Lattice to, Index hi_off, Index lo_off) const {
    Stencil s;
    const Index n = count(to);
    s.hi.resize(static_cast<std::size_t>(n));
    s.lo.resize(static_cast<std::size_t>(n));
    s.inv_h = 1.0 / spacing_[axis];
    s.source_size = count(from);
    for (Index k = 0; k < n; ++k) {
      const HalfIndex h = location(to, k);
      s.hi[static_cast<std::size_t>(k)] = index(from, shifted(h, axis, hi_off));
      s.lo[static_cast<std::size_t>(k)] = index(from, shifted(h, axis, lo_off));
    }
    return s;
  }

  void build_stencils() {
    for (int j = 0; j < dim_; ++j) {
      rho_to_g_[j] = make_stencil(j, Lattice::rho, Lattice::g, +1, -1);
      g_to_rho_[j] = make_stencil(j, Lattice::g, Lattice::rho, +1, -1);
      g_plus_[j] = make_stencil(j, Lattice::g, Lattice::g, +2, 0);
      g_minus_[j] = make_stencil(j, Lattice::g, Lattice::g, 0, -2);
      rho_plus_[j] = make_stencil(j, Lattice::rho, Lattice::rho, +2, 0);
      rho_minus_[j] = make_stencil(j, Lattice::rho, Lattice::rho, 0, -2);
    }
  }

  int dim_ = 0;
  std::array<Interval, 2> bounds_{};
  std::array<int, 2> cells_{};
  std::array<double, 2> spacing_{};
  std::array<Index, 2> extent_{};
  Index block_size_ = 0;
  std::array<Stencil, 2> rho_to_g_, g_to_rho_, g_plus_, g_minus_, rho_plus_, rho_minus_;
};

// Applies a stencil to every column of `in`, writing (or adding, scaled) into `out`.
template <typename In, typename Out>
void apply_stencil(const Stencil& s, const Eigen::MatrixBase<In>& in, Eigen::MatrixBase<Out>& out, double scale = 1.0,
                   bool accumulate = false) {
  const Index n = static_cast<Index>(s.hi.size());
  if (in.rows() != s.source_size || out.rows() != n || out.cols() != in.cols())
    throw std::invalid_argument("difference operator: field shape mismatch");
  const double c = scale * s.inv_h;
  for (Index col = 0; col < in.cols(); ++col) {
    for (Index k = 0; k < n; ++k) {
      const double v = c * (in(s.hi[static_cast<std::size_t>(k)], col) - in(s.lo[static_cast<std::size_t>(k)], col));
      if (accumulate) out(k, col) += v;
      else out(k, col) = v;
    }
  }
}

// Difference of a field (vector or column block) on `from` producing values on `to`.
inline Eigen::MatrixXd diff(const StaggeredGrid& grid, int axis, Side side, Lattice from, Lattice to,
                            const Eigen::Ref<const Eigen::MatrixXd>& field) {
  const Stencil& s = grid.stencil(axis, side, from, to);
  if (field.rows() != grid.count(from)) throw std::invalid_argument("difference operator: field length mismatch");
  Eigen::MatrixXd out(grid.count(to), field.cols());
  apply_stencil(s, field, out);
  return out;
}

// D^{(j),+}: rho-lattice -> g-lattice.
inline Eigen::VectorXd diff_plus(const StaggeredGrid& grid, int axis, const Eigen::Ref<const Eigen::VectorXd>& rho) {
  return diff(grid, axis, Side::plus, Lattice::rho, Lattice::g, rho);
}

// D^{(j),-}: g-lattice -> rho-lattice.
inline Eigen::VectorXd diff_minus(const StaggeredGrid& grid, int axis, const Eigen::Ref<const Eigen::VectorXd>& g) {
  return diff(grid, axis, Side::minus, Lattice::g, Lattice::rho, g);
}

// Samples a function of position on a lattice.
template <typename F>
Eigen::VectorXd sample(const StaggeredGrid& grid, Lattice l, F&& f) {
  Eigen::VectorXd v(grid.count(l));
  for (Index k = 0; k < v.size(); ++k) {
    const auto p = grid.position(l, k);
    v(k) = f(p[0], p[1]);
  }
  return v;
}

}  // namespace aplr
