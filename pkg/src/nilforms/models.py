"""Computational models of the compact Heisenberg nilmanifold.

Two models of the (2m+1)-dimensional Heisenberg nilmanifold are provided.

* `InvariantModel`: the exact finite-dimensional algebra of left-invariant
  forms.  Frame derivatives of invariant coefficients vanish, so every
  assembled operator is a small dense-ish matrix and all complex identities
  hold to machine precision.

* `ModeGrid`: the Fourier sector of Reeb frequency n.  A form is a section
  over the 2m-torus of A-coordinates, with a magnetic twist in each (x_i, y_i)
  pair: crossing the x_i-boundary multiplies by exp(-2*pi*i*n*y_i) (phase on
  the last face only, Landau-style gauge), and the Reeb derivative acts as
  multiplication by 2*pi*i*n.  Horizontal derivatives are central differences
  with exact boundary phases, so they are skew-Hermitian exactly and satisfy
  the bracket relation [D_i, D_{m+i}] = 2*pi*i*n up to O(h^2) on smooth
  sections.

Both models expose the same small surface (point count, quadrature weight,
sparse frame-derivative matrices) so the operator assembly is model-agnostic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

from .exterior import BiDegree, fiber_basis, fiber_dim, xi_label

TAU = 2.0 * np.pi


@dataclass(frozen=True)
class FrameSpec:
    """The invariant Heisenberg frame e_1..e_{2m}, v with [e_i, e_{m+i}] = v."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be a positive integer")

    @property
    def dim(self) -> int:
        return 2 * self.m + 1

    def bracket_v(self, a: int, b: int) -> float:
        """Reeb component of [e_a, e_b] for 0-based A-labels a, b."""
        if a < self.m and b == a + self.m:
            return 1.0
        if b < self.m and a == b + self.m:
            return -1.0
        return 0.0

    def j_partner(self, a: int) -> tuple[int, int]:
        """(index, sign) with J e_a = sign * e_index."""
        if a < self.m:
            return a + self.m, 1
        return a - self.m, -1

    def dxi_value(self, a: int, b: int) -> float:
        """d(xi)(e_a, e_b) from the Cartan formula: -xi([e_a, e_b])."""
        return -self.bracket_v(a, b)


def degree_layout(m: int, k: int) -> list[tuple[BiDegree, int]]:
    """Bigrade blocks of Omega^k with their fiber row offsets, q = 0 first."""
    layout = []
    off = 0
    for q in (0, 1):
        p = k - q
        if fiber_dim(m, p, q) > 0:
            layout.append((BiDegree(p, q), off))
            off += fiber_dim(m, p, q)
    return layout


def total_fiber_dim(m: int, k: int) -> int:
    return sum(fiber_dim(m, bd.p, bd.q) for bd, _ in degree_layout(m, k))


class InvariantModel:
    """Left-invariant forms: one 'point', zero frame derivatives, weight 1."""

    kind = "invariant"

    def __init__(self, m: int):
        self.frame = FrameSpec(m)
        self.m = m
        self.npoints = 1
        self.weight = 1.0
        self.mode_n = 0
        zero = sp.csr_matrix((1, 1), dtype=complex)
        self.d_mats = tuple(zero for _ in range(2 * m))
        self.dv_mat = zero
        self.dv_scalar = 0.0

    def __repr__(self):
        return f"InvariantModel(m={self.m})"

    @property
    def label(self) -> str:
        return f"invariant-m{self.m}"

    def degree_dims(self) -> list[int]:
        return [total_fiber_dim(self.m, k) for k in range(2 * self.m + 2)]


def build_invariant_model(m: int) -> InvariantModel:
    return InvariantModel(m)


def _pair_ops(N: int, n: int):
    """Central-difference x/y derivatives on one twisted N x N pair.

    Both directions are covariant shifts with exact link phases: the x-step
    carries the transition phase exp(-2 pi i n y) on the last face only, the
    y-step carries the Peierls phase exp(2 pi i n x h) of the connection on
    every edge.  The plaquette flux is then exactly 2 pi n h^2 on every
    plaquette including the seam column, which keeps the bracket defect at a
    uniform O(h^2) on smooth sections.
    """
    h = 1.0 / N
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    dst = (ii * N + jj).ravel()

    src_x = (((ii + 1) % N) * N + jj).ravel()
    phase_x = np.where(ii == N - 1, np.exp(-1j * TAU * n * jj * h), 1.0).ravel()
    sx = sp.csr_matrix((phase_x, (dst, src_x)), shape=(N * N, N * N))

    src_y = (ii * N + (jj + 1) % N).ravel()
    phase_y = np.exp(1j * TAU * n * (ii * h) * h).ravel()
    wy = sp.csr_matrix((phase_y, (dst, src_y)), shape=(N * N, N * N))

    dx = (sx - sx.getH()) / (2.0 * h)
    dy = (wy - wy.getH()) / (2.0 * h)
    return dx.tocsr(), dy.tocsr(), sx, wy


class ModeGrid:
    """Reeb-frequency-n sector discretized on an N^{2m} grid.

    The twist is applied per (x_i, y_i) pair; n = 0 gives the plain periodic
    torus sector (where all harmonic representatives live).  `gauge_seed`
    conjugates every operator by a deterministic random diagonal unitary,
    i.e. a lattice gauge transformation; the spectrum is exactly unchanged.
    """

    kind = "mode"

    def __init__(self, m: int, n: int, N: int, gauge_seed: int | None = None):
        if int(n) != n:
            raise ValueError(f"flux quantization failure: Reeb mode n={n} is not an integer")
        if N < 4 or N % 2:
            raise ValueError(f"grid size N must be even and >= 4, got {N}")
        self.frame = FrameSpec(m)
        self.m = m
        self.n = int(n)
        self.N = int(N)
        self.h = 1.0 / N
        self.npoints = N ** (2 * m)
        self.weight = self.h ** (2 * m)
        self.mode_n = self.n
        self.gauge_seed = gauge_seed

        dx, dy, self._sx, self._sy = _pair_ops(N, self.n)
        P2 = N * N
        mats = []
        for direction in range(2 * m):
            pair, op = (direction, dx) if direction < m else (direction - m, dy)
            left = sp.identity(P2 ** pair, dtype=complex, format="csr")
            right = sp.identity(P2 ** (m - 1 - pair), dtype=complex, format="csr")
            mats.append(sp.kron(sp.kron(left, op), right).tocsr())
        self.dv_scalar = 1j * TAU * self.n
        dv = self.dv_scalar * sp.identity(self.npoints, dtype=complex, format="csr")

        if gauge_seed is not None:
            rng = np.random.default_rng(gauge_seed)
            u = sp.diags(np.exp(1j * TAU * rng.random(self.npoints)))
            uh = u.getH()
            mats = [(u @ A @ uh).tocsr() for A in mats]
            dv = (u @ dv @ uh).tocsr()
            self._gauge = u
        else:
            self._gauge = None
        self.d_mats = tuple(mats)
        self.dv_mat = dv.tocsr()

    def __repr__(self):
        return f"ModeGrid(m={self.m}, n={self.n}, N={self.N})"

    @property
    def label(self) -> str:
        return f"mode-m{self.m}-n{self.n}-N{self.N}"

    # -- geometry helpers ---------------------------------------------------

    def point_coords(self) -> np.ndarray:
        """(npoints, 2m) array of coordinates ordered (x_1, y_1, ..., x_m, y_m)."""
        axes = [np.arange(self.N) * self.h] * (2 * self.m)
        grids = np.meshgrid(*axes, indexing="ij")
        # grid axes are interleaved pairwise: axis 2t is x_t, axis 2t+1 is y_t
        cols = []
        for t in range(self.m):
            cols.append(grids[2 * t].ravel())
        for t in range(self.m):
            cols.append(grids[2 * t + 1].ravel())
        return np.stack(cols, axis=1)

    def plane_wave(self, kappa) -> np.ndarray:
        """Values of exp(2 pi i kappa . x); a periodic multiplier on any sector."""
        kappa = np.asarray(kappa)
        if kappa.shape != (2 * self.m,):
            raise ValueError(f"kappa must have length {2 * self.m}")
        coords = self.point_coords()
        return np.exp(1j * TAU * coords @ kappa)

    def smooth_section(self, rng: np.random.Generator, sharpness: float = 1.0) -> np.ndarray:
        """A random smooth section of the mode-n line bundle, sampled on the grid.

        For n != 0 this is a product over the twisted pairs of short theta
        series sum_r exp(2 pi i n r y) g(x + r) with Gaussian bumps g, which
        satisfies the boundary twist exactly (up to the ~1e-14 series tail).
        For n = 0 a band-limited Fourier polynomial is drawn instead.  The
        continuum object is N-independent, so refinement studies converge.
        """
        coords = self.point_coords()
        out = np.ones(self.npoints, dtype=complex)
        for t in range(self.m):
            x = coords[:, t]
            y = coords[:, self.m + t]
            if self.n == 0:
                vals = np.zeros(self.npoints, dtype=complex)
                for kx in range(-2, 3):
                    for ky in range(-2, 3):
                        c = rng.standard_normal() + 1j * rng.standard_normal()
                        c /= 1.0 + kx * kx + ky * ky
                        vals += c * np.exp(1j * TAU * (kx * x + ky * y))
            else:
                vals = np.zeros(self.npoints, dtype=complex)
                for _ in range(3):
                    w = rng.standard_normal() + 1j * rng.standard_normal()
                    c0 = rng.random()
                    for r in range(-5, 6):
                        arg = x + r - c0
                        vals += w * np.exp(1j * TAU * self.n * r * y) * np.exp(
                            -np.pi * sharpness * arg * arg
                        )
            out = out * vals
        if self._gauge is not None:
            out = self._gauge @ out
        nrm = np.linalg.norm(out)
        if nrm > 0:
            out = out / nrm
        return out

    def nyquist_waves(self) -> list[np.ndarray]:
        """Plane waves at the central-difference null frequencies (n = 0 only).

        Central differences annihilate the Nyquist frequency N/2, so on the
        untwisted sector every nonzero 0/Nyquist frequency pattern aliases the
        invariant block and produces spurious exact kernel vectors.
        """
        if self.n != 0:
            raise ValueError("Nyquist aliasing only concerns the n = 0 sector")
        half = self.N // 2
        waves = []
        for pattern in range(1, 2 ** (2 * self.m)):
            kappa = [(half if pattern >> d & 1 else 0) for d in range(2 * self.m)]
            waves.append(self.plane_wave(kappa) * np.sqrt(self.weight))
        return waves

    # -- flux bookkeeping ---------------------------------------------------

    def boundary_translations(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """The two magnetic period translations of the first twisted pair.

        Computed as N-fold products of the elementary magnetic steps, so a
        vanishing commutator checks that every link phase in the construction
        is consistent (integer flux through the torus).
        """
        N = self.N
        step_x = self._sx
        step_y = self._sy
        ux = sp.identity(N * N, dtype=complex, format="csr")
        uy = sp.identity(N * N, dtype=complex, format="csr")
        for _ in range(N):
            ux = (ux @ step_x).tocsr()
            uy = (uy @ step_y).tocsr()
        return ux, uy

    def flux_residual(self) -> float:
        """|exp(2 pi i n) - 1|: the twist cocycle fails to close for fractional n."""
        return abs(np.exp(1j * TAU * self.n) - 1.0)


def build_mode_grid(m: int, n: int, N: int, gauge_seed: int | None = None) -> ModeGrid:
    return ModeGrid(m, n, N, gauge_seed=gauge_seed)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class FormField:
    """A discretized k-form: (total fiber dim, npoints) coefficient array.

    Rows enumerate the bigrade blocks of `degree_layout`; flattening the array
    row-major matches the kron(fiber, spatial) operator layout.
    """

    model: object
    k: int
    data: np.ndarray

    def __post_init__(self):
        F = total_fiber_dim(self.model.m, self.k)
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (F, self.model.npoints):
            raise ValueError(
                f"degree-{self.k} field needs shape {(F, self.model.npoints)}, "
                f"got {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field coefficients must be finite")

    @classmethod
    def zeros(cls, model, k: int) -> "FormField":
        return cls(model, k, np.zeros((total_fiber_dim(model.m, k), model.npoints), complex))

    @classmethod
    def from_vector(cls, model, k: int, vec: np.ndarray) -> "FormField":
        F = total_fiber_dim(model.m, k)
        return cls(model, k, np.asarray(vec, dtype=complex).reshape(F, model.npoints))

    @classmethod
    def random(cls, model, k: int, seed: int = 0) -> "FormField":
        rng = np.random.default_rng(seed)
        shape = (total_fiber_dim(model.m, k), model.npoints)
        data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return cls(model, k, data)

    @classmethod
    def random_smooth(cls, model, k: int, seed: int = 0) -> "FormField":
        """Random field with smooth (N-independent) coefficient functions."""
        rng = np.random.default_rng(seed)
        f = cls.zeros(model, k)
        for r in range(f.data.shape[0]):
            if model.kind == "invariant":
                f.data[r, 0] = rng.standard_normal() + 1j * rng.standard_normal()
            else:
                f.data[r] = model.smooth_section(rng)
        return f

    def vector(self) -> np.ndarray:
        return self.data.reshape(-1)

    def copy(self) -> "FormField":
        return FormField(self.model, self.k, self.data.copy())

    def block(self, bd: BiDegree) -> np.ndarray:
        """View of the coefficient rows of one bigrade block."""
        off = 0
        for b, o in degree_layout(self.model.m, self.k):
            if b == bd:
                return self.data[o:o + fiber_dim(self.model.m, b.p, b.q)]
        raise KeyError(f"bigrade ({bd.p},{bd.q}) not present in degree {self.k}")

    def bigrade_part(self, q: int) -> "FormField":
        """The field with every block of B-degree != q zeroed."""
        out = self.copy()
        for b, o in degree_layout(self.model.m, self.k):
            if b.q != q:
                out.data[o:o + fiber_dim(self.model.m, b.p, b.q)] = 0.0
        return out

    def inner(self, other: "FormField") -> complex:
        if self.k != other.k or self.model is not other.model:
            raise ValueError("inner product needs fields of one degree on one model")
        return complex(self.model.weight * np.vdot(self.data, other.data))

    def norm(self) -> float:
        return float(np.sqrt(self.model.weight) * np.linalg.norm(self.data))

    def norm_geps(self, eps: float) -> float:
        """Norm in the blown-up metric: the B-covector has dual length eps."""
        q0 = self.bigrade_part(0).norm()
        q1 = self.bigrade_part(1).norm()
        return float(np.hypot(q0, eps * q1))


def frame_derivative(model, direction, f: FormField) -> FormField:
    """Apply the frame derivative coefficientwise; `direction` in 0..2m-1 or 'v'."""
    if direction == "v":
        mat = model.dv_mat
    else:
        mat = model.d_mats[direction]
    return FormField(model, f.k, (mat @ f.data.T).T)


def embed_invariant(inv_field: FormField, grid: ModeGrid) -> FormField:
    """Constant-coefficient embedding of an invariant form into the n = 0 sector.

    The embedding is an isometry: invariant forms carry weight 1 on one slot,
    the grid carries total quadrature mass h^{2m} * N^{2m} = 1.
    """
    if inv_field.model.kind != "invariant" or grid.kind != "mode":
        raise ValueError("embed_invariant maps invariant fields to grid fields")
    if grid.n != 0:
        raise ValueError("invariant forms are constant sections of the n = 0 sector")
    if inv_field.model.m != grid.m:
        raise ValueError("mismatched m")
    data = np.repeat(inv_field.data, grid.npoints, axis=1)
    return FormField(grid, inv_field.k, data)
