"""Eigensolvers, eps-sweeps, eigenpair tracking and decay-rate classification.

A sweep solves the rescaled Laplacian at a geometric eps-schedule and chains
eigenpairs across consecutive eps by maximal overlap.  Eigenvalue clusters
(degenerate to relative 1e-6) are matched as subspaces through principal
angles and gauge-aligned, since individual vectors inside a cluster are pure
gauge.  Rate fits turn the tail of each chain into a decay exponent p of
lambda ~ eps^p; p near the even integer 2(l-1) classifies the chain into the
level-l family of the degeneration pattern, and tracks that sit below 1e-12
throughout the tail are exact kernel ("infinite level") tracks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linear_sum_assignment

from .models import FormField
from .operators import OperatorCache, OperatorHandle, build_laplacian
from .rumin import RuminComplex

DENSE_LIMIT = 4096
CLUSTER_REL = 1e-6
KERNEL_ABS = 1e-12


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float


@dataclass
class Track:
    """One chained eigenvalue family across the schedule."""

    track_id: str
    degree: int
    first: int                      # schedule index where the chain starts
    ranks: list[int] = field(default_factory=list)   # eigen rank per present step
    overlaps: list[float] = field(default_factory=list)
    broken: bool = False

    @property
    def last(self) -> int:
        return self.first + len(self.ranks) - 1

    def rank_at(self, j: int) -> int | None:
        if self.first <= j <= self.last:
            return self.ranks[j - self.first]
        return None

    def covers(self, j0: int, j1: int) -> bool:
        return self.first <= j0 and self.last >= j1 and not self.broken


@dataclass
class SweepRecord:
    model_id: str
    degree: int
    schedule: list[float]
    levels: list[list[EigenPair]]
    tracks: list[Track]
    converged: list[bool]

    def eigenvalue(self, track: Track, j: int) -> float:
        return self.levels[j][track.rank_at(j)].value

    def vector(self, track: Track, j: int) -> np.ndarray:
        return self.levels[j][track.rank_at(j)].vector


@dataclass
class RateFit:
    track_id: str
    degree: int
    exponent: float
    residual: float
    class_l: str                 # "1", "2", ..., "kernel", "unclassified", "broken"
    n_points: int

    @property
    def level(self) -> float:
        if self.class_l == "kernel":
            return np.inf
        try:
            return float(self.class_l)
        except ValueError:
            return -1.0


# ---------------------------------------------------------------------------
# eigensolve
# ---------------------------------------------------------------------------

def eigensolve(op: OperatorHandle | sp.spmatrix | np.ndarray, K: int | None = None,
               strategy: str = "auto", seed: int = 0) -> list[EigenPair]:
    """K smallest eigenpairs of a Hermitian PSD operator, ascending.

    Dense below DENSE_LIMIT, else shift-invert Lanczos with a seeded start
    vector.  Non-convergence raises with the achieved residuals attached.
    """
    mat = op.mat if isinstance(op, OperatorHandle) else sp.csr_matrix(op)
    n = mat.shape[0]
    if K is None:
        K = n
    if K < 1:
        raise ValueError("need K >= 1 eigenpairs")
    K = min(K, n)
    if strategy == "auto":
        strategy = "dense" if n <= DENSE_LIMIT else "shift-invert"
    if strategy == "dense":
        dense = mat.toarray()
        vals, vecs = sla.eigh(dense, subset_by_index=[0, K - 1])
    elif strategy == "shift-invert":
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        scale = abs(mat).max() or 1.0
        try:
            vals, vecs = spla.eigsh(mat.tocsc(), k=K, sigma=-1e-6 * scale,
                                    which="LM", v0=v0)
        except spla.ArpackNoConvergence as err:
            raise RuntimeError(
                f"eigensolver failed to converge: got {len(err.eigenvalues)} of {K} "
                f"eigenpairs"
            ) from err
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    pairs = []
    for i in range(K):
        v = vecs[:, i]
        v = v / np.linalg.norm(v)
        res = float(np.linalg.norm(mat @ v - vals[i] * v))
        pairs.append(EigenPair(float(vals[i]), v, res))
    return pairs


def _clusters(values: np.ndarray) -> list[list[int]]:
    """Contiguous index groups degenerate to relative CLUSTER_REL."""
    groups = [[0]]
    for i in range(1, len(values)):
        scale = max(abs(values[i]), abs(values[i - 1]), 1e-300)
        if abs(values[i] - values[i - 1]) <= CLUSTER_REL * max(scale, 1e-9):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _match_levels(prev: list[EigenPair], cur: list[EigenPair], tol: float):
    """Assign current eigenvectors to previous ones; gauge-fix inside clusters.

    Returns (assignment array sigma with sigma[prev_idx] = cur_idx or -1,
    overlap per prev index, possibly rotated current pairs).
    """
    V = np.stack([p.vector for p in prev], axis=1)
    W = np.stack([p.vector for p in cur], axis=1)
    M = V.conj().T @ W
    A = np.abs(M) ** 2
    rows, cols = linear_sum_assignment(-A)
    sigma = -np.ones(len(prev), dtype=int)
    overlap = np.zeros(len(prev))
    for r, c in zip(rows, cols):
        sigma[r] = c
        overlap[r] = abs(M[r, c])

    prev_vals = np.array([p.value for p in prev])
    cur_vals = np.array([p.value for p in cur])
    for ga in _clusters(prev_vals):
        if len(ga) < 2:
            continue
        targets = sorted({sigma[r] for r in ga if sigma[r] >= 0})
        if not targets:
            continue
        for gb in _clusters(cur_vals):
            if not set(targets) & set(gb):
                continue
            if len(gb) < len(ga):
                continue
            Va = V[:, ga]
            Wb = W[:, gb]
            X = Wb.conj().T @ Va
            u, s, vh = np.linalg.svd(X, full_matrices=False)
            rot = u @ vh                      # aligns Wb onto Va
            Wb_aligned = Wb @ rot
            for pos, r in enumerate(ga):
                c = gb[pos] if pos < len(gb) else None
                if c is None:
                    continue
                w = Wb_aligned[:, pos]
                cur[c] = EigenPair(cur[c].value, w / np.linalg.norm(w), cur[c].residual)
                sigma[r] = c
                overlap[r] = min(1.0, float(s[min(pos, len(s) - 1)]))
            break
    return sigma, overlap


def sweep(model, k: int, schedule, K: int, seed: int = 0,
          cache: OperatorCache | None = None, tracking_tol: float = 0.5,
          strategy: str = "auto") -> SweepRecord:
    """Eigensolve the rescaled Laplacian along a decreasing eps-schedule."""
    schedule = [float(e) for e in schedule]
    if not schedule:
        raise ValueError("empty eps schedule")
    if any(e <= 0 for e in schedule):
        raise ValueError("eps values must be positive")
    if len(schedule) > 1 and not all(a > b for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    cache = cache or OperatorCache(model)
    levels = []
    converged = []
    for j, eps in enumerate(schedule):
        lap = build_laplacian(model, k, eps, cache)
        try:
            pairs = eigensolve(lap, K=K, strategy=strategy, seed=seed + j)
            converged.append(True)
        except RuntimeError:
            pairs = []
            converged.append(False)
        levels.append(pairs)

    tracks: list[Track] = []
    active: dict[int, Track] = {}
    counter = 0
    for j, pairs in enumerate(levels):
        if not pairs:
            for t in active.values():
                t.broken = True
            active = {}
            continue
        if not active:
            for rank in range(len(pairs)):
                t = Track(f"k{k}_t{counter:03d}", k, j, [rank], [1.0])
                counter += 1
                tracks.append(t)
                active[rank] = t
            continue
        sigma, overlap = _match_levels(levels[j - 1], pairs, tracking_tol)
        new_active: dict[int, Track] = {}
        used = set()
        for rank_prev, t in active.items():
            c = sigma[rank_prev]
            if c >= 0 and overlap[rank_prev] >= tracking_tol:
                t.ranks.append(int(c))
                t.overlaps.append(float(overlap[rank_prev]))
                new_active[int(c)] = t
                used.add(int(c))
            else:
                t.broken = c >= 0  # lost with poor overlap: genuinely broken
        for rank in range(len(pairs)):
            if rank not in used:
                t = Track(f"k{k}_t{counter:03d}", k, j, [rank], [1.0])
                counter += 1
                tracks.append(t)
                new_active[rank] = t
        active = new_active
    return SweepRecord(model_id=getattr(model, "label", str(model)), degree=k,
                       schedule=schedule, levels=levels, tracks=tracks,
                       converged=converged)


# ---------------------------------------------------------------------------
# decay-rate classification
# ---------------------------------------------------------------------------

def fit_rates(record: SweepRecord, tail_length: int = 3,
              class_band: float = 0.3, resid_tol: float = 0.2) -> list[RateFit]:
    """Log-log slope of each chain over the schedule tail, classified."""
    if tail_length < 1:
        raise ValueError("tail_length must be >= 1")
    nsched = len(record.schedule)
    if nsched >= 3 and tail_length < 3:
        tail_length = 3
    j0 = max(0, nsched - tail_length)
    j1 = nsched - 1
    fits = []
    for t in record.tracks:
        if not t.covers(j0, j1):
            fits.append(RateFit(t.track_id, t.degree, np.nan, np.nan, "broken", 0))
            continue
        eps = np.array(record.schedule[j0:j1 + 1])
        lam = np.array([record.eigenvalue(t, j) for j in range(j0, j1 + 1)])
        if np.all(np.abs(lam) < KERNEL_ABS):
            fits.append(RateFit(t.track_id, t.degree, np.nan, 0.0, "kernel", len(lam)))
            continue
        keep = lam > 1e-13
        if np.sum(keep) < 2 or nsched < 3:
            fits.append(RateFit(t.track_id, t.degree, np.nan, np.nan,
                                "unclassified", int(np.sum(keep))))
            continue
        x = np.log(eps[keep])
        y = np.log(lam[keep])
        slope, intercept = np.polyfit(x, y, 1)
        resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
        cls = "unclassified"
        nearest = 2 * round(slope / 2.0)
        if nearest >= 0 and abs(slope - nearest) <= class_band and resid <= resid_tol:
            cls = str(int(nearest // 2 + 1))
        fits.append(RateFit(t.track_id, t.degree, float(slope), resid, cls,
                            int(np.sum(keep))))
    return fits


# ---------------------------------------------------------------------------
# convergence to the Rumin complex
# ---------------------------------------------------------------------------

@dataclass
class TrackLimitReport:
    track_id: str
    degree: int
    class_l: str
    eps: list[float]
    beta_norm: list[float]          # the bigrade component that must vanish
    rumin_distance: list[float]     # ||(I - Pi) omega_eps||
    final_angle_deg: float
    comparison: str


def _vanishing_q(m: int, k: int) -> int:
    """Which B-degree dies in the limit: q=1 below the middle, q=0 above."""
    return 1 if k <= m else 0


def principal_angle_deg(u: np.ndarray, basis: np.ndarray) -> float:
    """Angle between a unit vector and the span of (orthonormal) basis columns."""
    if basis.size == 0:
        return 90.0
    c = np.linalg.norm(basis.conj().T @ u)
    return float(np.degrees(np.arccos(np.clip(c, 0.0, 1.0))))


def limit_vs_rumin(record: SweepRecord, rc: RuminComplex,
                   fits: list[RateFit] | None = None,
                   tail_length: int = 3) -> list[TrackLimitReport]:
    """Per-track convergence report against the directly-built Rumin complex.

    Near-harmonic tracks (level >= 2) are compared with the eigenspace of the
    matching eps^2-scale operator; kernel tracks with the joint harmonic
    space.  The angle is taken at the smallest eps of the chain.
    """
    model = rc.model
    k = record.degree
    fits = fits if fits is not None else fit_rates(record, tail_length)
    fit_by_id = {f.track_id: f for f in fits}
    basis = rc.basis(k)
    B = basis.basis_matrix()
    P = np.asarray
    reports = []
    qv = _vanishing_q(model.m, k)

    harmonic = None
    limit_lift, limit_vals = None, None
    for t in record.tracks:
        f = fit_by_id.get(t.track_id)
        if f is None or f.class_l in ("broken", "unclassified", "1"):
            continue
        eps_list, betas, dists = [], [], []
        for j in range(t.first, t.last + 1):
            v = record.vector(t, j)
            fld = FormField.from_vector(model, k, v)
            eps_list.append(record.schedule[j])
            betas.append(fld.bigrade_part(qv).norm() / max(fld.norm(), 1e-300))
            proj = B @ (B.getH() @ v)
            dists.append(float(np.linalg.norm(v - proj)) / max(np.linalg.norm(v), 1e-300))
        vlast = record.vector(t, t.last)
        if f.class_l == "kernel":
            if harmonic is None:
                hs = rc.harmonic_space(k)
                harmonic = np.asarray(B @ hs.basis) if hs.basis.size else np.zeros((B.shape[0], 0))
            angle = principal_angle_deg(vlast, harmonic)
            cmp_name = "harmonic_space"
        else:
            if limit_lift is None:
                limit_lift, limit_vals = rc.class2_limit_operator(k)
            lam_scaled = record.eigenvalue(t, t.last) / record.schedule[t.last] ** 2
            idx = int(np.argmin(np.abs(limit_vals - lam_scaled)))
            lo = hi = idx
            while lo > 0 and abs(limit_vals[lo - 1] - limit_vals[idx]) <= \
                    CLUSTER_REL * max(abs(limit_vals[idx]), 1e-9):
                lo -= 1
            while hi + 1 < len(limit_vals) and abs(limit_vals[hi + 1] - limit_vals[idx]) <= \
                    CLUSTER_REL * max(abs(limit_vals[idx]), 1e-9):
                hi += 1
            cluster = limit_lift[:, lo:hi + 1]
            q, _ = np.linalg.qr(cluster)
            angle = principal_angle_deg(vlast, q)
            cmp_name = "class2_limit_operator"
        reports.append(TrackLimitReport(
            track_id=t.track_id, degree=k, class_l=f.class_l, eps=eps_list,
            beta_norm=betas, rumin_distance=dists, final_angle_deg=angle,
            comparison=cmp_name,
        ))
    return reports


# ---------------------------------------------------------------------------
# spectral-sequence cross-validation
# ---------------------------------------------------------------------------

@dataclass
class SSRow:
    degree: int
    level: int
    scale_count: int
    direct_dim: int
    n_classified: int
    n_indeterminate: int
    match: str                      # "yes" | "no" | "indeterminate"


def spectral_sequence_report(record: SweepRecord, rc: RuminComplex,
                             fits: list[RateFit] | None = None,
                             tail_length: int = 3,
                             levels=(1, 2, 3)) -> list[SSRow]:
    """Eigenvalue-scale counts against directly computed space dimensions.

    The eigensolve window sees only K tracks, so the match criterion is
    scale_count == min(direct dimension, number of classified tracks); rows
    with unclassified tracks that could change the verdict are declared
    indeterminate rather than forced.
    """
    k = record.degree
    fits = fits if fits is not None else fit_rates(record, tail_length)
    if len(record.schedule) < 3:
        return [SSRow(k, l, 0, rc.ehat_dimension(k, l), 0, 0, "indeterminate")
                for l in levels]
    classified = [f for f in fits if f.class_l not in ("broken", "unclassified")]
    n_unc = sum(1 for f in fits if f.class_l == "unclassified")
    rows = []
    for l in levels:
        count = sum(1 for f in classified if f.level >= l)
        direct = rc.ehat_dimension(k, l)
        expected = min(direct, len(classified))
        if count == expected:
            verdict = "yes"
        elif n_unc > 0:
            verdict = "indeterminate"
        else:
            verdict = "no"
        rows.append(SSRow(k, l, count, direct, len(classified), n_unc, verdict))
    return rows


def laplacian_kernel_dimension(model, k: int, eps: float = 1.0,
                               cache: OperatorCache | None = None) -> tuple[int, int]:
    """(filtered, raw) kernel dimension of the degree-k Laplacian.

    Dense full spectrum with a gap-based zero cut; on the n = 0 grid sector
    the spurious Nyquist replicas of central differences are projected out of
    the kernel before counting, so the filtered number is the geometric one.
    """
    from .rumin import filtered_rank, nullity_cut

    lap = build_laplacian(model, k, eps, cache)
    dense = lap.mat.toarray()
    evals, evecs = sla.eigh(dense)
    svals = np.sqrt(np.maximum(evals, 0.0))
    if model.kind == "invariant":
        nul = nullity_cut(svals, exact_rel=1e-8)
    else:
        nul = nullity_cut(svals, gap_window=1e-3)
    if nul == 0:
        return 0, 0
    basis = evecs[:, :nul]
    return filtered_rank(model, basis), nul


# ---------------------------------------------------------------------------
# operator symbol-order fits
# ---------------------------------------------------------------------------

def operator_order_fit(mat: sp.spmatrix, model, fiber_dim_in: int,
                       kappas, seed: int = 0, direction: int = 0) -> float:
    """Fitted growth exponent of ||Op (e^{2 pi i t kappa . x} f0)|| in t.

    f0 is a fixed random smooth section placed in a random fiber direction;
    multiplying a section by a periodic plane wave keeps it a section, so the
    probes sample the operator symbol along the chosen A-frequency ray.  The
    abscissa is the discrete first-derivative symbol sin(2 pi t h)/h rather
    than t itself, so a polynomial in central differences fits its exact
    order without the sin saturation bias.
    """
    rng = np.random.default_rng(seed)
    base = model.smooth_section(rng)
    c = rng.standard_normal(fiber_dim_in) + 1j * rng.standard_normal(fiber_dim_in)
    c /= np.linalg.norm(c)
    kdir = np.zeros(2 * model.m)
    kdir[direction] = 1.0
    xs, vals = [], []
    h = 1.0 / model.N
    for t in kappas:
        sym = np.sin(2.0 * np.pi * t * h) / h
        if sym <= 0:
            continue
        wave = model.plane_wave(t * kdir)
        probe = np.kron(c, wave * base)
        nrm = np.linalg.norm(probe)
        if nrm == 0:
            continue
        out = mat @ probe
        xs.append(sym)
        vals.append(float(np.linalg.norm(out) / nrm))
    x = np.log(np.array(xs))
    y = np.log(np.maximum(np.array(vals), 1e-300))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
