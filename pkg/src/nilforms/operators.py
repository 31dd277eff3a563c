"""Global sparse operators: bigraded differential pieces, d_eps, Laplacians.

Every operator is assembled as a sum of Kronecker products fiber_matrix (x)
spatial_matrix, acting on flattened FormField data.  Adjoints are plain
conjugate transposes: the quadrature weight is a uniform scalar on both sides
of every map, so the weighted L^2 adjoint coincides with the matrix adjoint,
and Laplacians built as A^H A + B B^H are Hermitian PSD by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp

from .exterior import (
    BiDegree,
    d21_matrix,
    fiber_dim,
    interior_matrix,
    wedge_matrix,
    xi_label,
)
from .models import FormField, degree_layout, frame_derivative, total_fiber_dim


@dataclass
class OperatorHandle:
    """A sparse map between two FormField spaces of one model.

    `shift` is the bigrade shift (a, b) when the operator is a pure component,
    else None.  `eps_power` tags the power of eps the component carries inside
    d_eps (-1, 0, or +1), else None.
    """

    model: object
    k_in: int
    k_out: int
    mat: sp.csr_matrix
    shift: tuple[int, int] | None = None
    eps_power: int | None = None
    name: str = ""

    def __post_init__(self):
        want = (space_dim(self.model, self.k_out), space_dim(self.model, self.k_in))
        if self.mat.shape != want:
            raise ValueError(f"{self.name or 'operator'}: shape {self.mat.shape} != {want}")

    def apply(self, f: FormField) -> FormField:
        if f.k != self.k_in:
            raise ValueError(f"operator expects degree {self.k_in}, got {f.k}")
        return FormField.from_vector(self.model, self.k_out, self.mat @ f.vector())

    def adjoint(self) -> "OperatorHandle":
        shift = (-self.shift[0], -self.shift[1]) if self.shift else None
        return OperatorHandle(
            self.model, self.k_out, self.k_in, self.mat.getH().tocsr(),
            shift=shift, eps_power=self.eps_power,
            name=f"{self.name}*" if self.name else "",
        )

    @property
    def H(self) -> "OperatorHandle":
        return self.adjoint()

    def dense(self) -> np.ndarray:
        return self.mat.toarray()


def space_dim(model, k: int) -> int:
    return total_fiber_dim(model.m, k) * model.npoints


def _empty(model, k_in: int, k_out: int, name: str = "") -> OperatorHandle:
    mat = sp.csr_matrix((space_dim(model, k_out), space_dim(model, k_in)), dtype=complex)
    return OperatorHandle(model, k_in, k_out, mat, name=name)


def _assemble_blocks(model, k_in: int, k_out: int, entries, shift, eps_power, name):
    """Assemble a degree k_in -> k_out operator from per-bigrade submatrices.

    `entries` maps (bd_out, bd_in) to a sparse (fdim_out*P, fdim_in*P) block.
    """
    m, P = model.m, model.npoints
    lay_in = degree_layout(m, k_in)
    lay_out = degree_layout(m, k_out)
    if not lay_in or not lay_out:
        return _empty(model, k_in, k_out, name)
    grid = [[entries.get((bo, bi)) for bi, _ in lay_in] for bo, _ in lay_out]
    if all(blk is None for row in grid for blk in row):
        return _empty(model, k_in, k_out, name)
    for r, (bo, _) in enumerate(lay_out):
        for c, (bi, _) in enumerate(lay_in):
            if grid[r][c] is None:
                grid[r][c] = sp.csr_matrix(
                    (fiber_dim(m, bo.p, bo.q) * P, fiber_dim(m, bi.p, bi.q) * P),
                    dtype=complex,
                )
    mat = sp.bmat(grid, format="csr")
    return OperatorHandle(model, k_in, k_out, mat, shift=shift, eps_power=eps_power, name=name)


# ---------------------------------------------------------------------------
# single-block pieces (used directly by the Rumin construction)
# ---------------------------------------------------------------------------

def d21_block(model, p: int) -> sp.csr_matrix:
    """(p,1) -> (p+2,0); purely algebraic, identical at every point."""
    F = d21_matrix(model.m, p)
    return sp.kron(sp.csr_matrix(F), sp.identity(model.npoints, format="csr")).tocsr()


def d10_block(model, p: int, q: int) -> sp.csr_matrix:
    """(p,q) -> (p+1,q); sum over e^a wedge D_a, no zero-order correction.

    On the nilmanifold frame d(e^a) = 0, so the horizontal piece carries no
    structure-constant terms; they all sit in the algebraic (+2,-1) piece.
    """
    m = model.m
    shape = (fiber_dim(m, p + 1, q) * model.npoints, fiber_dim(m, p, q) * model.npoints)
    out = sp.csr_matrix(shape, dtype=complex)
    for a in range(2 * m):
        F = wedge_matrix(m, a, p, q)
        if F.size == 0 or not F.any():
            continue
        out = out + sp.kron(sp.csr_matrix(F), model.d_mats[a])
    return out.tocsr()


def d01_block(model, p: int) -> sp.csr_matrix:
    """(p,0) -> (p,1); xi wedge D_v."""
    m = model.m
    F = wedge_matrix(m, xi_label(m), p, 0)
    return sp.kron(sp.csr_matrix(F), model.dv_mat).tocsr()


# ---------------------------------------------------------------------------
# full-degree components and the rescaled family
# ---------------------------------------------------------------------------

def assemble_components(model, k: int):
    """The three bigraded pieces of d on Omega^k, as (d21, d10, d01)."""
    m = model.m
    if not 0 <= k <= 2 * m + 1:
        raise ValueError(f"degree k={k} out of range for m={m}")
    ent21, ent10, ent01 = {}, {}, {}
    for bd, _ in degree_layout(m, k):
        p, q = bd.p, bd.q
        if q == 1 and fiber_dim(m, p + 2, 0) > 0:
            ent21[(BiDegree(p + 2, 0), bd)] = d21_block(model, p)
        if fiber_dim(m, p + 1, q) > 0:
            ent10[(BiDegree(p + 1, q), bd)] = d10_block(model, p, q)
        if q == 0 and fiber_dim(m, p, 1) > 0:
            ent01[(BiDegree(p, 1), bd)] = d01_block(model, p)
    d21 = _assemble_blocks(model, k, k + 1, ent21, (2, -1), -1, f"d21_k{k}")
    d10 = _assemble_blocks(model, k, k + 1, ent10, (1, 0), 0, f"d10_k{k}")
    d01 = _assemble_blocks(model, k, k + 1, ent01, (0, 1), 1, f"d01_k{k}")
    return d21, d10, d01


class EpsilonFamily:
    """The components of d on a fixed degree, evaluated as d_eps on demand."""

    def __init__(self, model, k: int):
        self.model = model
        self.k = k
        self.d21, self.d10, self.d01 = assemble_components(model, k)

    def d_eps(self, eps: float) -> OperatorHandle:
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        mat = (self.d21.mat / eps + self.d10.mat + eps * self.d01.mat).tocsr()
        return OperatorHandle(
            self.model, self.k, self.k + 1, mat, name=f"d_eps_k{self.k}",
        )

    def d_full(self) -> OperatorHandle:
        return self.d_eps(1.0)


class OperatorCache:
    """Per-model cache of component families and Laplacians."""

    def __init__(self, model):
        self.model = model
        self._families: dict[int, EpsilonFamily] = {}

    def family(self, k: int) -> EpsilonFamily:
        if k not in self._families:
            self._families[k] = EpsilonFamily(self.model, k)
        return self._families[k]

    def laplacian(self, k: int, eps: float) -> OperatorHandle:
        return build_laplacian(self.model, k, eps, cache=self)


def build_d_eps(model, k: int, eps: float, cache: OperatorCache | None = None) -> OperatorHandle:
    fam = cache.family(k) if cache else EpsilonFamily(model, k)
    return fam.d_eps(eps)


def build_laplacian(model, k: int, eps: float, cache: OperatorCache | None = None) -> OperatorHandle:
    """Hodge Laplacian of d_eps on Omega^k, Hermitian PSD by construction."""
    m = model.m
    terms = []
    if k <= 2 * m:
        dk = build_d_eps(model, k, eps, cache).mat
        terms.append(dk.getH() @ dk)
    if k >= 1:
        dkm = build_d_eps(model, k - 1, eps, cache).mat
        terms.append(dkm @ dkm.getH())
    mat = terms[0]
    for t in terms[1:]:
        mat = mat + t
    mat = (mat + mat.getH()) * 0.5
    return OperatorHandle(model, k, k, mat.tocsr(), name=f"laplacian_k{k}_eps{eps:g}")


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------

def theta_matrix(model, k: int, eps: float) -> sp.csr_matrix:
    """Diagonal of the rescaling isometry: q = 1 blocks scaled by eps."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    m, P = model.m, model.npoints
    diag = np.ones(space_dim(model, k), dtype=complex)
    for bd, off in degree_layout(m, k):
        if bd.q == 1:
            rows = fiber_dim(m, bd.p, bd.q)
            diag[off * P:(off + rows) * P] = eps
    return sp.diags(diag).tocsr()


def theta_rescale(f: FormField, eps: float) -> FormField:
    """Multiply the B-degree-1 part by eps; an isometry (g_eps) -> (g_1)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    out = f.copy()
    for bd, off in degree_layout(f.model.m, f.k):
        if bd.q == 1:
            rows = fiber_dim(f.model.m, bd.p, bd.q)
            out.data[off:off + rows] *= eps
    return out


# ---------------------------------------------------------------------------
# the first-order cross operator
# ---------------------------------------------------------------------------

def build_Q(model, k: int, cache: OperatorCache | None = None) -> OperatorHandle:
    """(d01)* d10 + (d10)* d01 + d01 (d10)* + d10 (d01)* on Omega^k.

    Assembled literally from the components; that it acts at first rather
    than second order is a tested property, not a construction input.
    """
    cache = cache or OperatorCache(model)
    up = cache.family(k)
    mat = up.d01.mat.getH() @ up.d10.mat + up.d10.mat.getH() @ up.d01.mat
    if k >= 1:
        dn = cache.family(k - 1)
        mat = mat + dn.d01.mat @ dn.d10.mat.getH() + dn.d10.mat @ dn.d01.mat.getH()
    return OperatorHandle(model, k, k, mat.tocsr(), name=f"Q_k{k}")


# ---------------------------------------------------------------------------
# norms and diagnostics
# ---------------------------------------------------------------------------

@dataclass
class SobolevNorms:
    l2: float
    h1c_semi: float          # sum over horizontal frame derivatives only
    h1c: float               # seminorm plus the L^2 term, so it is a norm
    h2c_semi: float          # all second horizontal derivatives D_a D_b
    dv_semi: float           # Reeb derivative alone


def sobolev_norms(f: FormField) -> SobolevNorms:
    model = f.model
    l2sq = f.norm() ** 2
    firsts = [frame_derivative(model, a, f) for a in range(2 * model.m)]
    h1sq = sum(g.norm() ** 2 for g in firsts)
    h2sq = 0.0
    for g in firsts:
        for b in range(2 * model.m):
            h2sq += frame_derivative(model, b, g).norm() ** 2
    dv = frame_derivative(model, "v", f).norm() ** 2
    return SobolevNorms(
        l2=float(np.sqrt(l2sq)),
        h1c_semi=float(np.sqrt(h1sq)),
        h1c=float(np.sqrt(l2sq + h1sq)),
        h2c_semi=float(np.sqrt(h2sq)),
        dv_semi=float(np.sqrt(dv)),
    )


def estimate_diagnostics(f: FormField, eps: float, cache: OperatorCache | None = None) -> dict:
    """The individual terms of the a priori energy estimates, reported raw.

    The bounds themselves involve generic constants, so nothing is asserted
    here; callers track these quantities along eps-sweeps.
    """
    model, k = f.model, f.k
    cache = cache or OperatorCache(model)
    alpha = f.bigrade_part(0)
    beta = f.bigrade_part(1)
    lap = build_laplacian(model, k, eps, cache)
    lf = lap.apply(f)
    out = {
        "eps": eps,
        "norm_omega": f.norm(),
        "lap_alpha_pairing": complex(lf.inner(alpha)).real,
        "lap_beta_pairing": complex(lf.inner(beta)).real,
    }
    fam = cache.family(k)
    d21a = fam.d21.adjoint().apply(alpha)
    d21b = fam.d21.apply(beta)
    out["d21_adj_alpha_over_eps_sq"] = (d21a.norm() / eps) ** 2
    out["d21_beta_over_eps_sq"] = (d21b.norm() / eps) ** 2
    sa, sb = sobolev_norms(alpha), sobolev_norms(beta)
    out["h1c_semi_alpha"] = sa.h1c_semi
    out["h1c_alpha"] = sa.h1c
    out["h1c_semi_beta"] = sb.h1c_semi
    out["h1c_beta"] = sb.h1c
    out["dv_alpha_eps_sq"] = (eps * sa.dv_semi) ** 2
    out["dv_beta_eps_sq"] = (eps * sb.dv_semi) ** 2
    return out
