"""The discretized Rumin complex.

Degree k <= m lives in the horizontal bigrade (k, 0) as the orthogonal
complement of the image of the algebraic piece d^{2,-1}; degree k >= m+1
lives in (k-1, 1) as its kernel.  Both constraints are pointwise algebraic,
so a per-fiber orthonormal basis (from one small SVD) tensored with the
identity over grid points realizes the space, and the orthogonal projection
pi is literally B B^H.

The first-order differential is the compression of the horizontal piece,
d_xi = pi d10, away from the middle degree; across the middle degree the
second-order d_R = pi (d01 - d10 (d21)^{-1} d10) uses the exact inverse of
the bijective Lefschetz block (m-1, 1) -> (m+1, 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .exterior import BiDegree, d21_matrix, fiber_dim, lefschetz_matrix
from .models import FormField, degree_layout, total_fiber_dim
from .operators import (
    OperatorHandle,
    d01_block,
    d10_block,
    space_dim,
)


@dataclass
class RuminBasis:
    """Orthonormal basis of the discretized Rumin space inside Omega^k."""

    model: object
    k: int
    home: BiDegree                 # the bigrade block carrying the space
    fiber: np.ndarray              # (fiber_dim(home), r) orthonormal columns
    fiber_embedded: np.ndarray     # (total fiber dim of Omega^k, r)

    @property
    def dim_fiber(self) -> int:
        return self.fiber.shape[1]

    @property
    def dim(self) -> int:
        return self.dim_fiber * self.model.npoints

    def basis_matrix(self) -> sp.csr_matrix:
        """(ambient dim, r * P) isometry from Rumin coordinates into Omega^k."""
        return sp.kron(
            sp.csr_matrix(self.fiber_embedded),
            sp.identity(self.model.npoints, format="csr"),
        ).tocsr()

    def projector(self) -> OperatorHandle:
        B = self.basis_matrix()
        return OperatorHandle(
            self.model, self.k, self.k, (B @ B.getH()).tocsr(), name=f"pi_k{self.k}"
        )

    def to_coords(self, f: FormField) -> np.ndarray:
        return self.basis_matrix().getH() @ f.vector()

    def from_coords(self, coords: np.ndarray) -> FormField:
        return FormField.from_vector(self.model, self.k, self.basis_matrix() @ coords)


def build_rumin_spaces(model, k: int) -> RuminBasis:
    m = model.m
    if not 0 <= k <= 2 * m + 1:
        raise ValueError(f"degree k={k} out of range for m={m}")
    if k <= m:
        home = BiDegree(k, 0)
        img = d21_matrix(m, k - 2) if fiber_dim(m, k - 2, 1) else None
        if img is None or not img.any():
            fib = np.eye(fiber_dim(m, k, 0), dtype=complex)
        else:
            fib = sla.null_space(img.conj().T).astype(complex)
    else:
        home = BiDegree(k - 1, 1)
        ker = d21_matrix(m, k - 1)
        if ker.shape[0] == 0 or not ker.any():
            fib = np.eye(fiber_dim(m, k - 1, 1), dtype=complex)
        else:
            fib = sla.null_space(ker).astype(complex)
    embedded = np.zeros((total_fiber_dim(m, k), fib.shape[1]), dtype=complex)
    for bd, off in degree_layout(m, k):
        if bd == home:
            embedded[off:off + fiber_dim(m, bd.p, bd.q)] = fib
    return RuminBasis(model, k, home, fib, embedded)


def _compressed(model, name, k_in, k_out, mat) -> "CompressedOperator":
    return CompressedOperator(model=model, k_in=k_in, k_out=k_out, mat=mat.tocsr(), name=name)


@dataclass
class CompressedOperator:
    """A sparse map between Rumin coordinate spaces (r_in * P -> r_out * P)."""

    model: object
    k_in: int
    k_out: int
    mat: sp.csr_matrix
    name: str = ""

    def adjoint(self) -> "CompressedOperator":
        return CompressedOperator(
            self.model, self.k_out, self.k_in, self.mat.getH().tocsr(),
            name=f"{self.name}*",
        )

    @property
    def H(self) -> "CompressedOperator":
        return self.adjoint()

    def dense(self) -> np.ndarray:
        return self.mat.toarray()


def d_xi(basis_k: RuminBasis, basis_k1: RuminBasis) -> CompressedOperator:
    """pi d10 compressed between adjacent Rumin spaces, k != m."""
    model = basis_k.model
    k = basis_k.k
    if k == model.m:
        raise ValueError("degree m crosses the middle; use d_R there")
    if basis_k1.k != k + 1:
        raise ValueError("need bases of consecutive degrees")
    blk = d10_block(model, basis_k.home.p, basis_k.home.q)
    P = sp.identity(model.npoints, format="csr")
    mat = (
        sp.kron(sp.csr_matrix(basis_k1.fiber.conj().T), P)
        @ blk
        @ sp.kron(sp.csr_matrix(basis_k.fiber), P)
    )
    return _compressed(model, f"d_xi_k{k}", k, k + 1, mat)


def d_R(basis_m: RuminBasis, basis_m1: RuminBasis) -> CompressedOperator:
    """pi (d01 - d10 (d21)^{-1} d10) compressed from R^m to R^{m+1}.

    The inverse lives on the bijective Lefschetz block (m-1, 1) -> (m+1, 0);
    its invertibility is asserted by SVD at build time.
    """
    model = basis_m.model
    m = model.m
    if basis_m.k != m or basis_m1.k != m + 1:
        raise ValueError("d_R connects degrees m and m+1")
    lef = d21_matrix(m, m - 1)  # (m-1,1) -> (m+1,0), square and bijective
    sv = np.linalg.svd(lef, compute_uv=False)
    if sv.size == 0 or sv[-1] < 1e-12 * sv[0]:
        raise RuntimeError("Lefschetz block is singular; not a Heisenberg frame")
    linv = np.linalg.inv(lef)
    P = sp.identity(model.npoints, format="csr")
    gamma = sp.kron(sp.csr_matrix(linv), P) @ d10_block(model, m, 0)
    raw = d01_block(model, m) - d10_block(model, m - 1, 1) @ gamma
    mat = (
        sp.kron(sp.csr_matrix(basis_m1.fiber.conj().T), P)
        @ raw
        @ sp.kron(sp.csr_matrix(basis_m.fiber), P)
    )
    return _compressed(model, "d_R", m, m + 1, mat)


def lefschetz_split(basis_m: RuminBasis, alpha: FormField):
    """Split a (m, 0) field into its Rumin part and a Lefschetz preimage.

    Returns (alpha1, alpha2) with alpha = alpha1 + L(alpha2), alpha1 in R^m
    and the two parts orthogonal; alpha2 is recovered pointwise by least
    squares through the injective fiber map L.
    """
    model = basis_m.model
    m = model.m
    if alpha.k != m:
        raise ValueError("lefschetz_split expects a degree-m field")
    if np.any(alpha.bigrade_part(1).data):
        raise ValueError("lefschetz_split expects a purely horizontal (m, 0) field")
    B = basis_m.basis_matrix()
    a1 = FormField.from_vector(model, m, B @ (B.getH() @ alpha.vector()))
    resid = alpha.data - a1.data
    alpha2 = FormField.zeros(model, m - 2)
    if fiber_dim(m, m - 2, 0) > 0:
        lef = lefschetz_matrix(m, m - 2)
        pinv = np.linalg.pinv(lef)
        home_rows = dict(degree_layout(m, m))[BiDegree(m, 0)]
        rows = fiber_dim(m, m, 0)
        src = resid[home_rows:home_rows + rows]
        out_rows = dict(degree_layout(m, m - 2))[BiDegree(m - 2, 0)]
        alpha2.data[out_rows:out_rows + fiber_dim(m, m - 2, 0)] = pinv @ src
    return a1, alpha2


def middle_operator(basis_m: RuminBasis, dR: CompressedOperator | None = None) -> CompressedOperator:
    """d_R* d_R + (d10 d10*)^2 compressed to R^m; Hermitian PSD, fourth order."""
    model = basis_m.model
    m = model.m
    if dR is None:
        dR = d_R(basis_m, build_rumin_spaces(model, m + 1))
    P = sp.identity(model.npoints, format="csr")
    lift = sp.kron(sp.csr_matrix(basis_m.fiber), P)
    if fiber_dim(m, m - 1, 0) > 0:
        t = d10_block(model, m - 1, 0)
        s = (lift.getH() @ (t @ t.getH()) @ lift).tocsr()
    else:
        s = sp.csr_matrix((basis_m.dim, basis_m.dim), dtype=complex)
    mat = dR.mat.getH() @ dR.mat + s @ s
    mat = (mat + mat.getH()) * 0.5
    return _compressed(model, "middle_operator", m, m, mat)


# ---------------------------------------------------------------------------
# nullspace bookkeeping
# ---------------------------------------------------------------------------

def nullity_cut(svals: np.ndarray, exact_rel: float | None = None,
                gap_window: float = 1e-3) -> int:
    """How many trailing singular values count as zero.

    With `exact_rel` set (exact models) a plain relative threshold is used;
    otherwise the cut is placed at the largest relative gap among values
    below `gap_window` times the largest, which avoids fixed-tolerance
    fragility on discretized operators.
    """
    s = np.sort(np.asarray(svals))
    n = s.size
    if n == 0:
        return 0
    smax = s[-1]
    if smax <= 0.0:
        return n
    if exact_rel is not None:
        return int(np.sum(s < exact_rel * smax))
    below = np.nonzero(s < gap_window * smax)[0]
    if below.size == 0:
        return 0
    imax = below[-1]
    if imax == n - 1:
        return n
    # floor at roundoff scale so exact zeros inside the kernel cluster do not
    # fake a gap between each other
    s_floor = np.maximum(s, smax * 1e-14)
    ratios = s_floor[1:imax + 2] / s_floor[:imax + 1]
    cut = int(np.argmax(ratios))
    return cut + 1


def remove_nyquist(model, mat: np.ndarray) -> np.ndarray:
    """Project the spatial Nyquist lines out of coordinate columns (n = 0 grids).

    `mat` has row index = fiber * P + point.  Central differences annihilate
    the Nyquist frequency, so those lines replicate the invariant block and
    must not be counted as geometric kernel.
    """
    if model.kind != "mode" or model.n != 0:
        return mat
    P = model.npoints
    F = mat.shape[0] // P
    out = mat.reshape(F, P, -1).copy()
    for w in model.nyquist_waves():
        wn = w / np.linalg.norm(w)
        out -= np.einsum("p,fpc->fc", wn.conj(), out)[:, None, :] * wn[None, :, None]
    return out.reshape(mat.shape)


def filtered_rank(model, basis: np.ndarray) -> int:
    """Rank of an (orthonormal-column) kernel basis after Nyquist removal."""
    if basis.size == 0:
        return 0
    proj = remove_nyquist(model, basis)
    s = np.linalg.svd(proj, compute_uv=False)
    return int(np.sum(s > 0.5))


@dataclass
class HarmonicSpace:
    basis: np.ndarray        # ambient coordinates, one orthonormal column per dim
    dim: int
    dim_unfiltered: int
    singular_values: np.ndarray


# ---------------------------------------------------------------------------
# the assembled complex
# ---------------------------------------------------------------------------

class RuminComplex:
    """All Rumin spaces and differentials of one model, built lazily."""

    def __init__(self, model):
        self.model = model
        self.m = model.m
        self._bases: dict[int, RuminBasis] = {}
        self._dxi: dict[int, CompressedOperator] = {}
        self._dR: CompressedOperator | None = None

    def basis(self, k: int) -> RuminBasis:
        if k not in self._bases:
            self._bases[k] = build_rumin_spaces(self.model, k)
        return self._bases[k]

    def d_xi(self, k: int) -> CompressedOperator:
        if k not in self._dxi:
            self._dxi[k] = d_xi(self.basis(k), self.basis(k + 1))
        return self._dxi[k]

    def d_R(self) -> CompressedOperator:
        if self._dR is None:
            self._dR = d_R(self.basis(self.m), self.basis(self.m + 1))
        return self._dR

    def out_operator(self, k: int) -> CompressedOperator | None:
        """The Rumin differential leaving degree k, None at the top."""
        if k >= 2 * self.m + 1:
            return None
        return self.d_R() if k == self.m else self.d_xi(k)

    def in_operator(self, k: int) -> CompressedOperator | None:
        """The Rumin differential arriving at degree k, None at the bottom."""
        if k <= 0:
            return None
        return self.d_R() if k - 1 == self.m else self.d_xi(k - 1)

    def stacked_harmonic_operator(self, k: int) -> np.ndarray:
        ops = []
        out = self.out_operator(k)
        if out is not None:
            ops.append(out.dense())
        inc = self.in_operator(k)
        if inc is not None:
            ops.append(inc.dense().conj().T)
        if not ops:
            return np.zeros((0, self.basis(k).dim), dtype=complex)
        return np.vstack(ops)

    def harmonic_space(self, k: int, tol: float | None = None,
                       exclude_aliased: bool = True) -> HarmonicSpace:
        """Joint kernel per the degree rule; dimensions are alias-filtered at n = 0."""
        if tol is not None and tol <= 0:
            raise ValueError("tol must be positive")
        stacked = self.stacked_harmonic_operator(k)
        dim = self.basis(k).dim
        if stacked.shape[0] == 0:
            basis = np.eye(dim, dtype=complex)
            svals = np.zeros(0)
            nul = dim
        else:
            u, s, vh = np.linalg.svd(stacked, full_matrices=True)
            svals = np.concatenate([s, np.zeros(dim - s.size)])
            if self.model.kind == "invariant":
                nul = nullity_cut(svals, exact_rel=tol if tol else 1e-8)
            else:
                nul = nullity_cut(svals, gap_window=tol if tol else 1e-3)
            if nul == 0:
                basis = np.zeros((dim, 0), dtype=complex)
            else:
                basis = vh[-nul:].conj().T
        dim_unf = basis.shape[1]
        if exclude_aliased and self.model.kind == "mode" and self.model.mode_n == 0:
            lift = self.basis(k).basis_matrix()
            ambient = np.asarray(lift @ basis)
            dim_f = filtered_rank(self.model, ambient)
        else:
            dim_f = dim_unf
        return HarmonicSpace(basis=basis, dim=dim_f, dim_unfiltered=dim_unf,
                             singular_values=svals)

    # -- spectral-sequence target spaces ------------------------------------

    def ehat_dimension(self, k: int, l: int, tol: float | None = None) -> int:
        """Direct dimension of the discretized level-l space at degree k.

        Level 1 is the whole Rumin space; level 2 uses the degree-dependent
        kernel conditions; levels >= 3 equal the level-2 space away from the
        middle degrees and the joint harmonic space at them.
        """
        if l < 1:
            raise ValueError("level must be >= 1")
        m = self.m
        if l == 1:
            return self.basis(k).dim
        if l == 2:
            if k == m:
                op = self._restricted_d10_adjoint()
            elif k == m + 1:
                op = self._restricted_d10()
            else:
                op = self.stacked_harmonic_operator(k)
            return self._nullity(k, op, tol)
        if k in (m, m + 1):
            return self.harmonic_space(k, tol=tol).dim
        return self.ehat_dimension(k, 2, tol)

    def _restricted_d10_adjoint(self) -> np.ndarray:
        """(d10)* restricted to R^m, the level-2 condition at the middle."""
        model, m = self.model, self.m
        P = sp.identity(model.npoints, format="csr")
        lift = sp.kron(sp.csr_matrix(self.basis(m).fiber), P)
        if fiber_dim(m, m - 1, 0) == 0:
            return np.zeros((0, self.basis(m).dim), dtype=complex)
        t = d10_block(model, m - 1, 0)
        return np.asarray((t.getH() @ lift).todense())

    def _restricted_d10(self) -> np.ndarray:
        """d10 restricted to R^{m+1} subset Omega^{m, 1}."""
        model, m = self.model, self.m
        P = sp.identity(model.npoints, format="csr")
        lift = sp.kron(sp.csr_matrix(self.basis(m + 1).fiber), P)
        if fiber_dim(m, m + 1, 1) == 0:
            return np.zeros((0, self.basis(m + 1).dim), dtype=complex)
        t = d10_block(model, m, 1)
        return np.asarray((t @ lift).todense())

    def _nullity(self, k: int, op: np.ndarray, tol: float | None) -> int:
        dim = self.basis(k).dim
        if op.shape[0] == 0:
            nul_basis = np.eye(dim, dtype=complex)
        else:
            u, s, vh = np.linalg.svd(op, full_matrices=True)
            svals = np.concatenate([s, np.zeros(dim - s.size)])
            if self.model.kind == "invariant":
                nul = nullity_cut(svals, exact_rel=tol if tol else 1e-8)
            else:
                nul = nullity_cut(svals, gap_window=tol if tol else 1e-3)
            if nul == 0:
                return 0
            nul_basis = vh[-nul:].conj().T
        if self.model.kind == "mode" and self.model.mode_n == 0:
            ambient = np.asarray(self.basis(k).basis_matrix() @ nul_basis)
            return filtered_rank(self.model, ambient)
        return nul_basis.shape[1]

    # -- limit operators for eps^2-scale eigenvalue tracks ------------------

    def class2_limit_operator(self, k: int):
        """(embedded basis, eigenvalues, eigenvectors) of the eps^2-scale limit.

        At k = m the limit operator is d_R* d_R restricted to ker(d_xi*);
        at k = m + 1 it is d_R d_R* restricted to ker(d_xi); elsewhere the
        d_xi Laplacian on the whole space is used.
        """
        m = self.m
        if k == m:
            dn = self.d_xi(m - 1).dense() if m >= 1 else None
            kc = sla.null_space(dn.conj().T) if dn is not None and dn.size else np.eye(self.basis(k).dim)
            op = self.d_R().dense() @ kc
            C = op.conj().T @ op
        elif k == m + 1:
            up = self.d_xi(m + 1).dense() if m + 1 <= 2 * m else None
            kc = sla.null_space(up) if up is not None and up.size else np.eye(self.basis(k).dim)
            op = self.d_R().dense().conj().T @ kc
            C = op.conj().T @ op
        else:
            kc = np.eye(self.basis(k).dim, dtype=complex)
            C = np.zeros((kc.shape[1], kc.shape[1]), dtype=complex)
            out = self.out_operator(k)
            if out is not None and out.mat.shape[0]:
                d = out.dense()
                C = C + d.conj().T @ d
            inc = self.in_operator(k)
            if inc is not None and inc.mat.shape[1]:
                d = inc.dense()
                C = C + d @ d.conj().T
        C = 0.5 * (C + C.conj().T)
        evals, evecs = np.linalg.eigh(C)
        lift = np.asarray(self.basis(k).basis_matrix() @ (kc @ evecs))
        return lift, evals


def invariant_betti(m: int) -> list[int]:
    """De Rham Betti numbers from the exact invariant complex by rank-nullity."""
    from .models import InvariantModel
    from .operators import EpsilonFamily

    model = InvariantModel(m)
    dims = [total_fiber_dim(m, k) for k in range(2 * m + 2)]
    ranks = []
    for k in range(2 * m + 1):
        d = EpsilonFamily(model, k).d_full().dense()
        s = np.linalg.svd(d, compute_uv=False) if d.size else np.zeros(0)
        ranks.append(int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 1.0))))
    betti = []
    for k in range(2 * m + 2):
        rk_out = ranks[k] if k <= 2 * m else 0
        rk_in = ranks[k - 1] if k >= 1 else 0
        betti.append(dims[k] - rk_out - rk_in)
    return betti
