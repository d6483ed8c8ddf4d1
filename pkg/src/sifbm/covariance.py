"""Covariance kernels over set families and their verification tools.

The central kernel is the fractional one built on the symmetric-difference
pseudo-metric,

    cov(U, V) = (m(U)^2H + m(V)^2H - m(U symdiff V)^2H) / 2,

which is positive semidefinite for H in (0, 1/2] and reduces to the
set-indexed white noise m(U & V) at H = 1/2.  For H > 1/2 the expression can
fail to be a covariance; the probing flag and the counterexample search below
exist to demonstrate exactly that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import streams
from .ioutil import fmt_float
from .set_families import (
    ComplexityError,
    ContextError,
    IncrementSpec,
    MeasureConsistencyError,
    Rectangle,
    SetFamily,
    expansion,
    intersection_measure,
    symdiff_measure,
)

KERNEL_IDS = ("sifbm", "sifbm_alt", "levy", "sheet", "white_noise")

CLOSED_FORM_MAX_SUBTRACTED = 12


@dataclass(frozen=True)
class Hurst:
    """Self-similarity index.

    The fractional kernel is only guaranteed positive semidefinite for
    values in (0, 1/2]; larger values are allowed only with probing=True,
    which marks the caller as deliberately exploring non-PSD territory.
    """

    value: float
    probing: bool = False

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0):
            raise ValueError(f"Hurst index must lie in (0, 1): {v}")
        if not self.probing and v > 0.5:
            raise ValueError(
                f"Hurst index {v} > 1/2 requires probing=True (kernel may not be PSD)"
            )
        object.__setattr__(self, "value", v)


def as_hurst(h: Union[Hurst, float]) -> Hurst:
    return h if isinstance(h, Hurst) else Hurst(float(h))


def _pow(x, two_h):
    """x**(2H) with 0**(2H) = 0; x is a nonnegative scalar or array."""
    return np.power(x, two_h)


def sifbm_cov(a, b, h) -> float:
    """Fractional kernel value between two sets of one family context."""
    two_h = 2.0 * as_hurst(h).value
    ma, mb = a.measure, b.measure
    return 0.5 * (_pow(ma, two_h) + _pow(mb, two_h) - _pow(symdiff_measure(a, b), two_h))


def sifbm_cov_alt(a, b, h) -> float:
    """Alternative kernel using one-sided differences instead of symdiff.

    Whether this expression is a covariance of any Gaussian process is not
    settled; it is evaluated here purely as a PSD-probing subject.  It
    coincides with `sifbm_cov` on nested pairs.
    """
    two_h = 2.0 * as_hurst(h).value
    ma, mb = a.measure, b.measure
    inter = intersection_measure(a, b)
    d_ab = max(ma - inter, 0.0)
    d_ba = max(mb - inter, 0.0)
    return 0.5 * (_pow(ma, two_h) + _pow(mb, two_h) - _pow(d_ba, two_h) - _pow(d_ab, two_h))


def _free_index(h) -> float:
    """Index in (0, 1) for the point kernels, which exist for the whole range."""
    v = h.value if isinstance(h, Hurst) else float(h)
    if not (0.0 < v < 1.0):
        raise ValueError(f"index must lie in (0, 1): {v}")
    return v


def levy_cov(s, t, h) -> float:
    """Euclidean-norm multiparameter fractional kernel between two points."""
    two_h = 2.0 * _free_index(h)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError("points must share a dimension")
    ns, nt = np.linalg.norm(s), np.linalg.norm(t)
    return 0.5 * (ns**two_h + nt**two_h - np.linalg.norm(t - s) ** two_h)


def _sheet_axes(h, dim: int) -> np.ndarray:
    if isinstance(h, Hurst):
        values = np.full(dim, h.value)
    else:
        arr = np.atleast_1d(np.asarray(h, dtype=np.float64))
        values = np.full(dim, float(arr[0])) if arr.size == 1 else arr
    if values.size != dim:
        raise ValueError(f"need {dim} per-axis indices, got {values.size}")
    if np.any(values <= 0.0) or np.any(values >= 1.0):
        raise ValueError("sheet indices must lie in (0, 1)")
    return values


def sheet_cov(s, t, h) -> float:
    """Product-form multiparameter fractional kernel between two points.

    One classical-fBm factor per axis, each carrying its own 1/2, so the
    variance at t is prod_i t_i^(2 H_i) and rectangle increments satisfy the
    product rule tested in the property suite.  With N = 1 this is exactly
    the classical fBm covariance.
    """
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError("points must share a dimension")
    two_h = 2.0 * _sheet_axes(h, s.size)
    factors = 0.5 * (s**two_h + t**two_h - np.abs(t - s) ** two_h)
    return float(np.prod(factors))


@dataclass
class GramMatrix:
    """Kernel matrix of a family, with provenance for golden files."""

    entries: np.ndarray
    kernel_id: str
    hurst: tuple
    family_hash: str
    labels: tuple = ()

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("entries must be a square matrix")
        scale = np.max(np.abs(e)) if e.size else 0.0
        if scale and np.max(np.abs(e - e.T)) > 1e-12 * scale:
            raise ValueError("entries are not symmetric within tolerance")
        self.entries = e
        self.hurst = tuple(float(v) for v in np.atleast_1d(self.hurst))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def max_diagonal(self) -> float:
        return float(np.max(np.diag(self.entries)))

    def hurst_text(self) -> str:
        return ";".join(fmt_float(v) for v in self.hurst)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                f"# kernel_id={self.kernel_id} h={self.hurst_text()} "
                f"family_hash={self.family_hash}\n"
            )
            for row in self.entries:
                fh.write(",".join(fmt_float(v) for v in row) + "\n")

    def to_json(self) -> dict:
        return {
            "kernel_id": self.kernel_id,
            "hurst": list(self.hurst),
            "family_hash": self.family_hash,
            "labels": list(self.labels),
            "entries": [[float(v) for v in row] for row in self.entries],
        }


def _mirror_upper(a: np.ndarray) -> np.ndarray:
    """Force bitwise symmetry by mirroring the upper triangle."""
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def _rect_geometry(family: SetFamily):
    corners = np.asarray([s.corner for s in family.sets], dtype=np.float64)
    meas = corners.prod(axis=1)
    inter = np.minimum(corners[:, None, :], corners[None, :, :]).prod(axis=2)
    return corners, meas, inter


def _grid_geometry(family: SetFamily):
    w = family.sets[0].weights.reshape(-1)
    masks = np.asarray([s.mask.reshape(-1) for s in family.sets], dtype=np.float64)
    meas = masks @ w
    inter = (masks * w) @ masks.T
    return None, meas, inter


def gram(family: SetFamily, h, kernel_id: str = "sifbm") -> GramMatrix:
    """Assemble the kernel matrix of a family.

    Point kernels (levy, sheet) apply to rectangle families only and use the
    rectangle corners as points.  white_noise ignores h and evaluates
    m(U & V) directly.
    """
    if kernel_id not in KERNEL_IDS:
        raise ValueError(f"unknown kernel_id {kernel_id!r}; expected one of {KERNEL_IDS}")
    is_rect = family.kind == "rectangles"
    if kernel_id in ("levy", "sheet") and not is_rect:
        raise ContextError(f"kernel {kernel_id!r} needs rectangle corners as points")

    if kernel_id == "sheet":
        hurst_values = tuple(_sheet_axes(h, family.dim))
    elif kernel_id == "white_noise":
        hurst_values = (0.5,)
    elif kernel_id == "levy":
        hurst_values = (_free_index(h),)
    else:
        hurst_values = (as_hurst(h).value,)

    corners, meas, inter = (_rect_geometry if is_rect else _grid_geometry)(family)

    if kernel_id == "white_noise":
        entries = inter
    elif kernel_id in ("sifbm", "sifbm_alt"):
        two_h = 2.0 * hurst_values[0]
        pm = _pow(meas, two_h)
        if kernel_id == "sifbm":
            sym = meas[:, None] + meas[None, :] - 2.0 * inter
            _check_nonnegative(sym, meas)
            entries = 0.5 * (pm[:, None] + pm[None, :] - _pow(np.maximum(sym, 0.0), two_h))
        else:
            d_ij = np.maximum(meas[:, None] - inter, 0.0)
            d_ji = np.maximum(meas[None, :] - inter, 0.0)
            entries = 0.5 * (pm[:, None] + pm[None, :] - _pow(d_ij, two_h) - _pow(d_ji, two_h))
    elif kernel_id == "levy":
        two_h = 2.0 * hurst_values[0]
        norms = np.linalg.norm(corners, axis=1)
        pn = norms**two_h
        gap = np.linalg.norm(corners[:, None, :] - corners[None, :, :], axis=2)
        entries = 0.5 * (pn[:, None] + pn[None, :] - gap**two_h)
    else:  # sheet
        two_h = 2.0 * np.asarray(hurst_values)
        s = corners[:, None, :]
        t = corners[None, :, :]
        factors = 0.5 * (s**two_h + t**two_h - np.abs(t - s) ** two_h)
        entries = factors.prod(axis=2)

    labels = tuple(family.label(i) for i in range(len(family)))
    return GramMatrix(
        entries=_mirror_upper(entries),
        kernel_id=kernel_id,
        hurst=hurst_values,
        family_hash=family.family_hash(),
        labels=labels,
    )


def _check_nonnegative(sym: np.ndarray, meas: np.ndarray) -> None:
    scale = np.maximum(meas[:, None] + meas[None, :], 1.0)
    if np.any(sym < -1e-12 * scale):
        raise MeasureConsistencyError(
            "symmetric-difference measures went negative beyond noise"
        )


@dataclass(frozen=True)
class PsdReport:
    psd: bool
    min_eigenvalue: float
    tolerance: float
    pivoted_cholesky_ok: bool
    rank: int


def pivoted_cholesky(a: np.ndarray, tol: float):
    """Diagonal-pivoted Cholesky; stops when the remaining diagonal is small.

    Returns (ok, rank, factor): ok is False iff a pivot dips below -tol,
    i.e. the matrix is not PSD at that tolerance.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    piv = np.arange(n)
    rank = n
    for i in range(n):
        d = np.diag(a)[i:]
        j = i + int(np.argmax(d))
        if a[j, j] < -tol:
            return False, i, None
        if a[j, j] <= tol:
            rank = i
            break
        if j != i:
            a[:, [i, j]] = a[:, [j, i]]
            a[[i, j], :] = a[[j, i], :]
            piv[[i, j]] = piv[[j, i]]
        a[i, i] = np.sqrt(a[i, i])
        if i + 1 < n:
            a[i + 1 :, i] /= a[i, i]
            a[i + 1 :, i + 1 :] -= np.outer(a[i + 1 :, i], a[i + 1 :, i])
            a[i, i + 1 :] = 0.0
    factor = np.tril(a)[np.argsort(piv), :rank]
    return True, rank, factor


def psd_check(g, tol_scale: float = 1e-8) -> PsdReport:
    """Verdict on positive semidefiniteness of a symmetric matrix.

    psd is true iff the smallest eigenvalue is >= -tol_scale * max diagonal;
    the pivoted factorization result is reported independently.
    """
    entries = g.entries if isinstance(g, GramMatrix) else np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(entries)):
        raise ValueError("matrix has non-finite entries")
    max_diag = float(np.max(np.diag(entries))) if entries.size else 0.0
    tol = tol_scale * max(max_diag, 0.0)
    min_eig = float(np.linalg.eigvalsh(entries)[0])
    ok, rank, _ = pivoted_cholesky(entries, max(tol, 1e-300))
    return PsdReport(
        psd=min_eig >= -tol,
        min_eigenvalue=min_eig,
        tolerance=tol,
        pivoted_cholesky_ok=ok,
        rank=rank,
    )


@dataclass(frozen=True)
class CounterexampleWitness:
    family: SetFamily
    hurst: float
    min_eigenvalue: float
    max_diagonal: float
    trial_index: int
    seed: int


def psd_counterexample_search(
    h: Hurst,
    dim: int,
    family_size_max: int = 8,
    trials: int = 10_000,
    seed: int = 0,
) -> Optional[CounterexampleWitness]:
    """Random search for a rectangle family whose fractional Gram is not PSD.

    Corners are drawn uniformly from [0.05, 1]^dim (kept away from measure
    zero) on the stream keyed (seed, trial), so any witness is reproducible
    from (seed, trial index) alone.  Returns None when the budget is
    exhausted, which is the expected outcome for H <= 1/2 and for dim 1.
    """
    h = as_hurst(h)
    if not h.probing:
        raise ValueError("counterexample search requires a probing Hurst index")
    two_h = 2.0 * h.value
    for trial in range(trials):
        u = streams.uniforms(seed, trial, 1 + family_size_max * dim)
        size = 2 + min(int(u[0] * (family_size_max - 1)), family_size_max - 2)
        corners = 0.05 + 0.95 * u[1 : 1 + size * dim].reshape(size, dim)
        meas = corners.prod(axis=1)
        inter = np.minimum(corners[:, None, :], corners[None, :, :]).prod(axis=2)
        sym = np.maximum(meas[:, None] + meas[None, :] - 2.0 * inter, 0.0)
        pm = _pow(meas, two_h)
        entries = 0.5 * (pm[:, None] + pm[None, :] - _pow(sym, two_h))
        min_eig = float(np.linalg.eigvalsh(_mirror_upper(entries))[0])
        max_diag = float(pm.max())
        if min_eig < -1e-6 * max_diag:
            family = SetFamily(tuple(Rectangle(tuple(c)) for c in corners))
            return CounterexampleWitness(
                family=family,
                hurst=h.value,
                min_eigenvalue=min_eig,
                max_diagonal=max_diag,
                trial_index=trial,
                seed=seed,
            )
    return None


def increment_variance_via_gram(spec: IncrementSpec, h) -> float:
    """Var of the increment over C as the quadratic form of its expansion.

    The expansion family collects every subset intersection of the
    subtracted sets with signs (-1)^k; the variance is w' G w over that
    family's fractional Gram.  This is the independent oracle for the
    closed form below.
    """
    sets, signs = expansion(spec)
    family = SetFamily(tuple(sets), allow_duplicates=True)
    g = gram(family, h, "sifbm")
    return float(signs @ g.entries @ signs)


def increment_variance_closed_form(spec: IncrementSpec, h) -> float:
    """Closed-form Var of the increment over C = U \\ (U_1 | ... | U_n).

    Two alternating sums over subset intersections I_S = U_i1 & ... & U_ik:

        sum_S (-1)^(|S|+1) m(U symdiff I_S)^2H
        - (1/2) sum_{S,T} (-1)^(|S|+|T|) m(I_S symdiff I_T)^2H

    Expanding the quadratic form of the increment and cancelling the
    m(U)^2H and m(I_S)^2H groups (binomial alternating sums) leaves exactly
    these terms; note the second carries a minus sign, which the oracle
    equivalence tests pin down.
    """
    two_h = 2.0 * as_hurst(h).value
    n = spec.n_subtracted
    if n < 1:
        raise ValueError("closed form needs at least one subtracted set")
    if n > CLOSED_FORM_MAX_SUBTRACTED:
        raise ComplexityError(
            f"{n} subtracted sets exceed the closed-form limit {CLOSED_FORM_MAX_SUBTRACTED}"
        )
    caps = []
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            current = spec.subtracted[idx[0]]
            for i in idx[1:]:
                current = current.intersection(spec.subtracted[i])
            caps.append((len(idx), current))
    total = 0.0
    for k, cap in caps:
        total += ((-1) ** (k + 1)) * _pow(symdiff_measure(spec.outer, cap), two_h)
    for k, cap_a in caps:
        for l, cap_b in caps:
            total -= 0.5 * ((-1) ** (k + l)) * _pow(symdiff_measure(cap_a, cap_b), two_h)
    return float(total)


def _require_nested_single(spec: IncrementSpec) -> None:
    if spec.n_subtracted != 1:
        raise ValueError(
            "cross covariance is defined for nested specs with exactly one subtracted set"
        )


def increment_cross_cov(c: IncrementSpec, c2: IncrementSpec, h) -> float:
    """Cross covariance of two nested increments U\\V and U'\\V'.

    Closed form (m(U symdiff V')^2H + m(V symdiff U')^2H - m(U symdiff U')^2H
    - m(V symdiff V')^2H) / 2; must agree with the 4-term Gram expansion.
    """
    _require_nested_single(c)
    _require_nested_single(c2)
    two_h = 2.0 * as_hurst(h).value
    u, v = c.outer, c.subtracted[0]
    u2, v2 = c2.outer, c2.subtracted[0]
    return 0.5 * (
        _pow(symdiff_measure(u, v2), two_h)
        + _pow(symdiff_measure(v, u2), two_h)
        - _pow(symdiff_measure(u, u2), two_h)
        - _pow(symdiff_measure(v, v2), two_h)
    )


def increment_cross_cov_via_gram(c: IncrementSpec, c2: IncrementSpec, h) -> float:
    """Same cross covariance through kernel evaluations of the four sets."""
    _require_nested_single(c)
    _require_nested_single(c2)
    u, v = c.outer, c.subtracted[0]
    u2, v2 = c2.outer, c2.subtracted[0]
    return (
        sifbm_cov(u, u2, h)
        - sifbm_cov(u, v2, h)
        - sifbm_cov(v, u2, h)
        + sifbm_cov(v, v2, h)
    )
