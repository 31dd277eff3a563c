"""Pointwise exterior algebra over a Heisenberg coframe.

The fiber at a point is Lambda^p(A*) wedge Lambda^q(B*), where A carries the
orthonormal coframe e^1, ..., e^{2m} (with e^{m+i} the J-partner of e^i) and
the line B* is spanned by the contact form xi.  Labels are 0-based integers,
0..2m-1 for the A-coframe and 2m for xi, so strictly increasing label tuples
enumerate a basis with xi sorting last.  Coefficients are complex throughout.

Sign conventions, fixed once here and inherited by every assembled operator:
orientation e^1 ^ ... ^ e^{2m} ^ xi, and d(xi) = -sum_i e^i ^ e^{m+i}, which
makes the algebraic piece of the differential equal to L o i(v) with no
correction signs (L is the wedge with d(xi), v the Reeb vector).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


@dataclass(frozen=True)
class BiDegree:
    """A-degree p and B-degree q of a bigraded form; q is 0 or 1."""

    p: int
    q: int

    def __post_init__(self):
        if self.q not in (0, 1):
            raise ValueError(f"B-degree must be 0 or 1, got {self.q}")
        if self.p < 0:
            raise ValueError(f"A-degree must be nonnegative, got {self.p}")

    @property
    def total(self) -> int:
        return self.p + self.q

    def shifted(self, a: int, b: int) -> "BiDegree":
        return BiDegree(self.p + a, self.q + b)


def xi_label(m: int) -> int:
    """Label of the contact form; A-labels are 0..2m-1."""
    return 2 * m


def fiber_dim(m: int, p: int, q: int) -> int:
    if q not in (0, 1) or not 0 <= p <= 2 * m:
        return 0
    return comb(2 * m, p)


@lru_cache(maxsize=None)
def fiber_basis(m: int, p: int, q: int) -> tuple[tuple[int, ...], ...]:
    """Sorted multi-index tuples spanning Lambda^p(A*) (wedge xi if q=1)."""
    if fiber_dim(m, p, q) == 0:
        return ()
    tail = (xi_label(m),) if q else ()
    return tuple(c + tail for c in itertools.combinations(range(2 * m), p))


@lru_cache(maxsize=None)
def _basis_index(m: int, p: int, q: int) -> dict[tuple[int, ...], int]:
    return {t: i for i, t in enumerate(fiber_basis(m, p, q))}


def merge_sign(a: tuple[int, ...], b: tuple[int, ...]):
    """Merge two sorted label tuples; returns (sign, merged) or (0, ()) on a repeat."""
    sign = 1
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            return 0, ()
        if a[i] < b[j]:
            out.append(a[i])
            i += 1
        else:
            if (len(a) - i) % 2:
                sign = -sign
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return sign, tuple(out)


@dataclass
class PointForm:
    """A single fiber element: bigrade plus one complex coefficient per multi-index."""

    m: int
    degree: BiDegree
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        want = fiber_dim(self.m, self.degree.p, self.degree.q)
        if self.coeffs.shape != (want,):
            raise ValueError(
                f"coefficient vector of bigrade ({self.degree.p},{self.degree.q}) "
                f"must have length {want}, got {self.coeffs.shape}"
            )

    @classmethod
    def zero(cls, m: int, degree: BiDegree) -> "PointForm":
        return cls(m, degree, np.zeros(fiber_dim(m, degree.p, degree.q), dtype=complex))

    @classmethod
    def basis_element(cls, m: int, labels: tuple[int, ...]) -> "PointForm":
        labels = tuple(sorted(labels))
        q = 1 if labels and labels[-1] == xi_label(m) else 0
        deg = BiDegree(len(labels) - q, q)
        f = cls.zero(m, deg)
        f.coeffs[_basis_index(m, deg.p, deg.q)[labels]] = 1.0
        return f

    def inner(self, other: "PointForm") -> complex:
        """Hermitian fiber inner product for the g_1 metric (orthonormal coframe)."""
        if self.degree != other.degree:
            return 0.0
        return complex(np.vdot(self.coeffs, other.coeffs))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other: "PointForm") -> "PointForm":
        if self.degree != other.degree or self.m != other.m:
            raise ValueError("can only add forms of equal bigrade")
        return PointForm(self.m, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other: "PointForm") -> "PointForm":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "PointForm":
        return PointForm(self.m, self.degree, scalar * self.coeffs)

    def allclose(self, other: "PointForm", tol: float = 1e-13) -> bool:
        return self.degree == other.degree and bool(
            np.allclose(self.coeffs, other.coeffs, atol=tol, rtol=0.0)
        )


def wedge(a: PointForm, b: PointForm) -> PointForm:
    """Exterior product; bigrades add componentwise."""
    if a.m != b.m:
        raise ValueError("mismatched frame dimensions")
    m = a.m
    p, q = a.degree.p + b.degree.p, a.degree.q + b.degree.q
    if q > 1 or p + q > 2 * m + 1 or p > 2 * m:
        raise ValueError(
            f"degree overflow: ({a.degree.p},{a.degree.q}) wedge "
            f"({b.degree.p},{b.degree.q}) on m={m}"
        )
    out = PointForm.zero(m, BiDegree(p, q))
    idx = _basis_index(m, p, q)
    bas_a = fiber_basis(m, a.degree.p, a.degree.q)
    bas_b = fiber_basis(m, b.degree.p, b.degree.q)
    for ia, ta in enumerate(bas_a):
        ca = a.coeffs[ia]
        if ca == 0:
            continue
        for ib, tb in enumerate(bas_b):
            cb = b.coeffs[ib]
            if cb == 0:
                continue
            sign, merged = merge_sign(ta, tb)
            if sign:
                out.coeffs[idx[merged]] += sign * ca * cb
    return out


def interior(label: int, a: PointForm) -> PointForm:
    """Contraction with the frame vector dual to `label` (xi_label contracts the Reeb vector)."""
    m = a.m
    p, q = a.degree.p, a.degree.q
    if label == xi_label(m):
        tgt = BiDegree(p, 0) if q == 1 else None
    else:
        tgt = BiDegree(p - 1, q) if p >= 1 else None
    if tgt is None or fiber_dim(m, tgt.p, tgt.q) == 0:
        # contraction drops below the valid bigrade range
        low = BiDegree(max(p - 1, 0), q) if label != xi_label(m) else BiDegree(p, 0)
        return PointForm.zero(m, low)
    out = PointForm.zero(m, tgt)
    idx = _basis_index(m, tgt.p, tgt.q)
    for i, t in enumerate(fiber_basis(m, p, q)):
        c = a.coeffs[i]
        if c == 0 or label not in t:
            continue
        pos = t.index(label)
        reduced = t[:pos] + t[pos + 1:]
        out.coeffs[idx[reduced]] += (-1) ** pos * c
    return out


def hodge_star(a: PointForm) -> PointForm:
    """Hodge star for g_1 with orientation e^1 ^ ... ^ e^{2m} ^ xi."""
    m = a.m
    full = tuple(range(2 * m + 1))
    p, q = a.degree.p, a.degree.q
    tgt = BiDegree(2 * m - p, 1 - q)
    out = PointForm.zero(m, tgt)
    idx = _basis_index(m, tgt.p, tgt.q)
    for i, t in enumerate(fiber_basis(m, p, q)):
        c = a.coeffs[i]
        if c == 0:
            continue
        compl = tuple(l for l in full if l not in t)
        sign, _ = merge_sign(t, compl)
        out.coeffs[idx[compl]] += sign * c
    return out


def dxi_form(m: int) -> PointForm:
    """d(xi) = -sum_i e^i ^ e^{m+i}, forced by the bracket [e_i, e_{m+i}] = v."""
    f = PointForm.zero(m, BiDegree(2, 0))
    idx = _basis_index(m, 2, 0)
    for i in range(m):
        f.coeffs[idx[(i, m + i)]] = -1.0
    return f


def lefschetz_L(a: PointForm) -> PointForm:
    """Wedge with d(xi) on horizontal forms."""
    if a.degree.q != 0:
        raise ValueError("the Lefschetz map acts on bigrade (p, 0) only")
    return wedge(a, dxi_form(a.m))


def d21_pointwise(a: PointForm) -> PointForm:
    """Algebraic differential piece of bigrade shift (+2, -1): L o i(v)."""
    if a.degree.q != 1:
        raise ValueError("d^{2,-1} acts on bigrade (p, 1) only")
    return lefschetz_L(interior(xi_label(a.m), a))


# ---------------------------------------------------------------------------
# fiber matrices, used for global sparse assembly
# ---------------------------------------------------------------------------

def _as_matrix(fn, m, p_in, q_in, p_out, q_out) -> np.ndarray:
    n_in = fiber_dim(m, p_in, q_in)
    n_out = fiber_dim(m, p_out, q_out)
    mat = np.zeros((n_out, n_in), dtype=complex)
    if n_in == 0 or n_out == 0:
        return mat
    for j, t in enumerate(fiber_basis(m, p_in, q_in)):
        f = PointForm.zero(m, BiDegree(p_in, q_in))
        f.coeffs[j] = 1.0
        g = fn(f)
        if g.degree == BiDegree(p_out, q_out):
            mat[:, j] = g.coeffs
    return mat


@lru_cache(maxsize=None)
def wedge_matrix(m: int, label: int, p: int, q: int) -> np.ndarray:
    """Matrix of (e^label ^ .) on the (p, q) fiber; empty when the target overflows."""
    q_out = q + 1 if label == xi_label(m) else q
    p_out = p if label == xi_label(m) else p + 1
    if q_out > 1 or fiber_dim(m, p_out, q_out) == 0:
        return np.zeros((0, fiber_dim(m, p, q)), dtype=complex)
    lab = PointForm.basis_element(m, (label,))
    return _as_matrix(lambda f: wedge(lab, f), m, p, q, p_out, q_out)


@lru_cache(maxsize=None)
def interior_matrix(m: int, label: int, p: int, q: int) -> np.ndarray:
    q_out = 0 if label == xi_label(m) else q
    p_out = p if label == xi_label(m) else p - 1
    if p_out < 0 or fiber_dim(m, p_out, q_out) == 0:
        return np.zeros((0, fiber_dim(m, p, q)), dtype=complex)
    return _as_matrix(lambda f: interior(label, f), m, p, q, p_out, q_out)


@lru_cache(maxsize=None)
def lefschetz_matrix(m: int, p: int) -> np.ndarray:
    """Matrix of L: Lambda^p(A*) -> Lambda^{p+2}(A*)."""
    if fiber_dim(m, p + 2, 0) == 0:
        return np.zeros((0, fiber_dim(m, p, 0)), dtype=complex)
    return _as_matrix(lefschetz_L, m, p, 0, p + 2, 0)


@lru_cache(maxsize=None)
def d21_matrix(m: int, p: int) -> np.ndarray:
    """Matrix of the (+2,-1) piece on the (p, 1) fiber."""
    if fiber_dim(m, p + 2, 0) == 0 or fiber_dim(m, p, 1) == 0:
        return np.zeros((fiber_dim(m, p + 2, 0), fiber_dim(m, p, 1)), dtype=complex)
    return _as_matrix(d21_pointwise, m, p, 1, p + 2, 0)


@lru_cache(maxsize=None)
def star_matrix(m: int, p: int, q: int) -> np.ndarray:
    return _as_matrix(hodge_star, m, p, q, 2 * m - p, 1 - q)


# ---------------------------------------------------------------------------
# operators on the whole fiber algebra (all bigrades at once)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def algebra_layout(m: int):
    """All bigrade blocks of the full fiber algebra with offsets: (blocks, dim)."""
    blocks = []
    off = 0
    for q in (0, 1):
        for p in range(0, 2 * m + 1):
            d = fiber_dim(m, p, q)
            if d:
                blocks.append((BiDegree(p, q), off, d))
                off += d
    return tuple(blocks), off


def _full_operator(m: int, block_fn) -> np.ndarray:
    blocks, dim = algebra_layout(m)
    pos = {(bd.p, bd.q): off for bd, off, _ in blocks}
    out = np.zeros((dim, dim), dtype=complex)
    for bd, off, d in blocks:
        mat, tgt = block_fn(bd)
        if mat is None or tgt is None or mat.shape[0] == 0:
            continue
        key = (tgt.p, tgt.q)
        if key not in pos:
            continue
        out[pos[key]:pos[key] + mat.shape[0], off:off + d] = mat
    return out


def full_wedge_matrix(m: int, label: int) -> np.ndarray:
    """(e^label ^ .) on the whole fiber algebra."""
    def block(bd):
        q_out = bd.q + 1 if label == xi_label(m) else bd.q
        p_out = bd.p if label == xi_label(m) else bd.p + 1
        if q_out > 1 or fiber_dim(m, p_out, q_out) == 0:
            return None, None
        return wedge_matrix(m, label, bd.p, bd.q), BiDegree(p_out, q_out)
    return _full_operator(m, block)


def full_interior_matrix(m: int, label: int) -> np.ndarray:
    def block(bd):
        q_out = 0 if label == xi_label(m) else bd.q
        p_out = bd.p if label == xi_label(m) else bd.p - 1
        if p_out < 0 or fiber_dim(m, p_out, q_out) == 0:
            return None, None
        if label == xi_label(m) and bd.q == 0:
            return None, None
        return interior_matrix(m, label, bd.p, bd.q), BiDegree(p_out, q_out)
    return _full_operator(m, block)


def full_d21_matrix(m: int) -> np.ndarray:
    def block(bd):
        if bd.q != 1 or fiber_dim(m, bd.p + 2, 0) == 0:
            return None, None
        return d21_matrix(m, bd.p), BiDegree(bd.p + 2, 0)
    return _full_operator(m, block)
