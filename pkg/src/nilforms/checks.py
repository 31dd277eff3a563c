"""Named invariant suites with measured residuals against fixed thresholds.

Each check returns a CheckResult; the CLI `verify` command renders them as
"name: residual <= threshold" lines and fails if any check fails.  Exact
identities (fiber algebra, invariant model, gauge equivalence) carry
machine-precision thresholds; grid refinement checks assert observed
convergence orders on smooth probe sections instead, since commutator-type
defects of central differences are O(h^2) only against smooth data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import exterior as ext
from .exterior import BiDegree, PointForm, fiber_basis, fiber_dim, xi_label
from .models import (
    FormField,
    InvariantModel,
    ModeGrid,
    degree_layout,
    embed_invariant,
    frame_derivative,
    total_fiber_dim,
)
from .operators import (
    EpsilonFamily,
    OperatorCache,
    build_laplacian,
    space_dim,
    theta_matrix,
)
from .spectral import eigensolve

EPS_SAMPLE = (1.0, 0.25, 2.0 ** -6)


@dataclass
class CheckResult:
    name: str
    residual: float
    threshold: float
    passed: bool
    note: str = ""
    direction: str = "<="

    @classmethod
    def leq(cls, name, residual, threshold, note=""):
        return cls(name, float(residual), float(threshold),
                   bool(residual <= threshold), note, "<=")

    @classmethod
    def geq(cls, name, value, bound, note=""):
        """For observed-order checks, where larger is better."""
        return cls(name, float(value), float(bound), bool(value >= bound),
                   note, ">=")


def _spnorm(mat) -> float:
    mat = sp.csr_matrix(mat)
    return 0.0 if mat.nnz == 0 else float(np.max(np.abs(mat.data)))


# ---------------------------------------------------------------------------
# fiber algebra
# ---------------------------------------------------------------------------

def exterior_checks(m: int, seed: int = 0) -> list[CheckResult]:
    out = []
    dim = ext.algebra_layout(m)[1]
    iv = ext.full_interior_matrix(m, xi_label(m))

    worst = 0.0
    for label in range(2 * m + 1):
        wx = ext.full_wedge_matrix(m, label)
        pairing = 1.0 if label == xi_label(m) else 0.0
        resid = wx @ iv + iv @ wx - pairing * np.eye(dim)
        worst = max(worst, float(np.max(np.abs(resid))))
    out.append(CheckResult.leq("anticommutator_identity", worst, 1e-12))

    worst = 0.0
    for q in (0, 1):
        for p in range(0, 2 * m + 1):
            basis = fiber_basis(m, p, q)
            for ti in basis:
                a = PointForm.basis_element(m, ti)
                sa = ext.hodge_star(a)
                worst = max(worst, abs(sa.norm() - 1.0))
                ssa = ext.hodge_star(sa)
                worst = max(worst, (ssa - a).norm())
    out.append(CheckResult.leq("star_isometry_involution", worst, 1e-12))

    d21 = ext.full_d21_matrix(m)
    out.append(CheckResult.leq("d21_squared", float(np.max(np.abs(d21 @ d21))), 0.0))

    ok = True
    for j in range(0, 2 * m - 1):
        L = ext.lefschetz_matrix(m, j)
        if L.size == 0:
            continue
        s = np.linalg.svd(L, compute_uv=False)
        rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
        inj = rank == fiber_dim(m, j, 0)
        surj = rank == fiber_dim(m, j + 2, 0)
        if j <= m - 1 and not inj:
            ok = False
        if j >= m - 1 and not surj:
            ok = False
    out.append(CheckResult("lefschetz_rank_pattern", 0.0 if ok else 1.0, 0.5, ok,
                           "injective below j=m-1, surjective above, both at j=m-1"))
    return out


# ---------------------------------------------------------------------------
# shared operator checks
# ---------------------------------------------------------------------------

def operator_checks(model, seed: int = 0, eps_sample=EPS_SAMPLE) -> list[CheckResult]:
    out = []
    m = model.m
    cache = OperatorCache(model)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for k in range(2 * m + 1):
        fam = cache.family(k)
        for op in (fam.d21, fam.d10, fam.d01):
            back = op.adjoint().adjoint()
            worst = max(worst, _spnorm(op.mat - back.mat))
    out.append(CheckResult.leq("adjoint_involution", worst, 0.0))

    worst = 0.0
    for k in range(2 * m + 1):
        fam = cache.family(k)
        for op, shift in ((fam.d21, (2, -1)), (fam.d10, (1, 0)), (fam.d01, (0, 1))):
            if op.mat.nnz == 0:
                continue
            for bd, off in degree_layout(m, k):
                f = FormField.zeros(model, k)
                rows = fiber_dim(m, bd.p, bd.q)
                blk = rng.standard_normal((rows, model.npoints)) \
                    + 1j * rng.standard_normal((rows, model.npoints))
                f.data[off:off + rows] = blk
                g = op.apply(f)
                tgt = BiDegree(bd.p + shift[0], bd.q + shift[1]) \
                    if 0 <= bd.p + shift[0] <= 2 * m and bd.q + shift[1] in (0, 1) else None
                for bo, oo in degree_layout(m, k + 1):
                    if bo != tgt:
                        rr = fiber_dim(m, bo.p, bo.q)
                        worst = max(worst, float(np.max(np.abs(g.data[oo:oo + rr])))
                                    if rr else 0.0)
    out.append(CheckResult.leq("bigrade_bookkeeping", worst, 1e-13))

    worst = 0.0
    for k in range(2 * m + 2):
        for eps in eps_sample:
            lap = build_laplacian(model, k, eps, cache)
            worst = max(worst, _spnorm(lap.mat - lap.mat.getH()))
    out.append(CheckResult.leq("laplacian_hermiticity", worst, 1e-12))

    ritz_min = np.inf
    for k in range(2 * m + 2):
        lap = build_laplacian(model, k, 0.5, cache)
        n = lap.mat.shape[0]
        pairs = eigensolve(lap, K=min(4, n), seed=seed)
        ritz_min = min(ritz_min, min(p.value for p in pairs))
    out.append(CheckResult("psd_ritz_values", float(ritz_min), -1e-10,
                           bool(ritz_min >= -1e-10), "smallest Ritz value"))

    worst = 0.0
    for k in range(2 * m + 1):
        fam = cache.family(k)
        full = fam.d_full().mat
        for eps in eps_sample:
            conj = theta_matrix(model, k + 1, eps) @ full @ theta_matrix(model, k, 1.0 / eps)
            worst = max(worst, _spnorm(conj - fam.d_eps(eps).mat))
    out.append(CheckResult.leq("theta_conjugation", worst, 1e-12))

    # graded bracket identities that hold exactly even on the grid: the fiber
    # anticommutators vanish and D_v is scalar
    worst = 0.0
    for k in range(2 * m):
        a, b = cache.family(k), cache.family(k + 1)
        worst = max(worst, _spnorm(b.d21.mat @ a.d21.mat))
        worst = max(worst, _spnorm(b.d21.mat @ a.d10.mat + b.d10.mat @ a.d21.mat))
        worst = max(worst, _spnorm(b.d10.mat @ a.d01.mat + b.d01.mat @ a.d10.mat))
        worst = max(worst, _spnorm(b.d01.mat @ a.d01.mat))
    out.append(CheckResult.leq("bracket_identities_exact", worst, 1e-12))
    return out


# ---------------------------------------------------------------------------
# invariant-model checks
# ---------------------------------------------------------------------------

def invariant_checks(m: int, seed: int = 0) -> list[CheckResult]:
    from math import comb

    model = InvariantModel(m)
    cache = OperatorCache(model)
    out = []

    dims_ok = all(total_fiber_dim(m, k) == comb(2 * m + 1, k)
                  for k in range(2 * m + 2))
    out.append(CheckResult("invariant_degree_dims", 0.0 if dims_ok else 1.0, 0.5,
                           dims_ok, "binomial dimension count"))

    worst = 0.0
    for k in range(2 * m):
        dk = cache.family(k).d_full().mat
        dk1 = cache.family(k + 1).d_full().mat
        worst = max(worst, _spnorm(dk1 @ dk))
    out.append(CheckResult.leq("d_squared_exact", worst, 0.0))

    worst = 0.0
    for k in range(2 * m):
        for eps in EPS_SAMPLE:
            a = cache.family(k).d_eps(eps).mat
            b = cache.family(k + 1).d_eps(eps).mat
            worst = max(worst, _spnorm(b @ a))
    out.append(CheckResult.leq("d_eps_squared", worst, 1e-12))

    kdims = []
    for eps in EPS_SAMPLE:
        kdims.append([
            sum(1 for p in eigensolve(build_laplacian(model, k, eps, cache), K=None)
                if p.value < 1e-10)
            for k in range(2 * m + 2)
        ])
    stable = all(kd == kdims[0] for kd in kdims)
    out.append(CheckResult("kernel_stability", 0.0 if stable else 1.0, 0.5, stable,
                           f"dim ker per degree {kdims[0]}"))
    return out


# ---------------------------------------------------------------------------
# mode-grid checks
# ---------------------------------------------------------------------------

def _d2_probe_residual(grid: ModeGrid, eps: float, seed: int) -> float:
    cache = OperatorCache(grid)
    worst = 0.0
    for k in (0, 1):
        f = FormField.random_smooth(grid, k, seed=seed)
        a = cache.family(k).d_eps(eps)
        b = cache.family(k + 1).d_eps(eps)
        worst = max(worst, b.apply(a.apply(f)).norm() / max(f.norm(), 1e-300))
    return worst


def _bracket_probe_residual(grid: ModeGrid, seed: int) -> float:
    rng = np.random.default_rng(seed)
    f = FormField(grid, 0, grid.smooth_section(rng)[None, :])
    worst = 0.0
    for i in range(grid.m):
        a = frame_derivative(grid, i, frame_derivative(grid, grid.m + i, f))
        b = frame_derivative(grid, grid.m + i, frame_derivative(grid, i, f))
        comm = FormField(grid, 0, a.data - b.data - grid.dv_scalar * f.data)
        worst = max(worst, comm.norm() / max(f.norm(), 1e-300))
    return worst


def mode_checks(m: int, n: int, N: int, seed: int = 0, gauge_seed: int = 7,
                refine: bool = True) -> list[CheckResult]:
    grid = ModeGrid(m, n, N)
    out = []

    worst = max(_spnorm(D + D.getH()) for D in grid.d_mats)
    out.append(CheckResult.leq("skew_adjointness", worst, 1e-12))

    bx, by = grid.boundary_translations()
    out.append(CheckResult.leq("boundary_translations_commute",
                               _spnorm(bx @ by - by @ bx), 1e-12))
    out.append(CheckResult.leq("flux_residual", grid.flux_residual(), 1e-12))

    inv = InvariantModel(m)
    if n == 0:
        f = FormField.random(inv, 1, seed=seed)
        g = embed_invariant(f, grid)
        out.append(CheckResult.leq("sector_embedding_isometry",
                                   abs(f.norm() - g.norm()), 1e-12))

    kdim = space_dim(grid, min(1, 2 * m))
    if kdim <= 4096:
        eps = 0.5
        lap_a = build_laplacian(grid, 1, eps)
        alt = ModeGrid(m, n, N, gauge_seed=gauge_seed)
        lap_b = build_laplacian(alt, 1, eps)
        K = min(8, kdim)
        ev_a = np.array([p.value for p in eigensolve(lap_a, K=K, seed=seed)])
        ev_b = np.array([p.value for p in eigensolve(lap_b, K=K, seed=seed)])
        scale = max(1.0, float(np.max(np.abs(ev_a))))
        out.append(CheckResult.leq("gauge_invariance",
                                   float(np.max(np.abs(ev_a - ev_b))) / scale, 1e-8))

    res_n = _d2_probe_residual(grid, 1.0, seed)
    stable = max(abs(_d2_probe_residual(grid, e, seed) - res_n) for e in (2.0 ** -4, 2.0 ** -8))
    out.append(CheckResult.leq("d_eps_squared_eps_stability", stable, 1e-9 * max(res_n, 1.0),
                               "the d_eps^2 defect is eps-independent by construction"))

    if refine:
        fine = ModeGrid(m, n, 2 * N)
        r1, r2 = res_n, _d2_probe_residual(fine, 1.0, seed)
        order = np.log2(r1 / max(r2, 1e-300))
        out.append(CheckResult.geq("d2_refinement_order", order, 1.8,
                                   f"residual {r1:.3e} -> {r2:.3e}"))
        b1 = _bracket_probe_residual(grid, seed)
        b2 = _bracket_probe_residual(fine, seed)
        order_b = np.log2(b1 / max(b2, 1e-300))
        out.append(CheckResult.geq("bracket_defect_order", order_b, 1.8,
                                   f"residual {b1:.3e} -> {b2:.3e}"))
    return out


def run_all(m: int, model_kind: str, n: int, N: int, seed: int = 0) -> list[CheckResult]:
    """The full verify suite for one configured model."""
    def tag(results, prefix):
        for r in results:
            r.name = f"{prefix}{r.name}"
        return results

    results = exterior_checks(m, seed)
    results += invariant_checks(m, seed)
    results += tag(operator_checks(InvariantModel(m), seed), "invariant_")
    if model_kind == "mode":
        grid = ModeGrid(m, n, N)
        results += tag(operator_checks(grid, seed, eps_sample=(1.0, 0.25)), "mode_")
        results += mode_checks(m, n, N, seed)
    return results
