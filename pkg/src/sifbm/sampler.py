"""Exact joint Gaussian sampling on set families.

Sampling is factorization based: the family's Gram matrix G is Cholesky
factored (with an escalating, always-reported diagonal jitter as a fallback)
and each replicate is L z_r with z_r standard normal.  Replicate r draws its
normals from the counter-based stream keyed (master_seed, r), so ensembles
are bitwise reproducible and independent of generation order or thread
count.  Cost is O(n^3) for the factorization plus O(r n^2) for the draws,
which is the right trade for families with no structure to exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import streams
from .covariance import GramMatrix
from .ioutil import fmt_float
from .set_families import IncrementSpec, SetFamily, expansion


class NotPositiveSemidefiniteError(ValueError):
    """Factorization failed at the largest allowed jitter."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class MissingSetsError(KeyError):
    """The sampled family lacks sets required by an increment expansion."""

    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__(f"{len(self.missing)} expansion sets missing from the family")


@dataclass(frozen=True)
class JitterPolicy:
    """Diagonal regularization schedule for borderline factorizations.

    epsilon = 0 is always tried first; afterwards `initial` (default
    1e-12 x mean diagonal) grows by `growth` for `max_attempts` tries.
    """

    initial: Optional[float] = None
    growth: float = 10.0
    max_attempts: int = 4

    def __post_init__(self):
        if self.initial is not None and self.initial <= 0:
            raise ValueError("initial jitter must be positive")

    def schedule(self, mean_diagonal: float):
        first = self.initial if self.initial is not None else 1e-12 * max(mean_diagonal, 0.0)
        yield 0.0
        eps = first
        for _ in range(self.max_attempts):
            yield eps
            eps *= self.growth


def factorize(g: GramMatrix, policy: JitterPolicy = JitterPolicy()):
    """Lower Cholesky factor of G + eps I for the smallest workable eps.

    Returns (factor, applied_jitter).  Raises NotPositiveSemidefiniteError
    (carrying the smallest eigenvalue) when even the largest jitter fails,
    the expected outcome for probing Grams with H > 1/2.
    """
    entries = g.entries
    mean_diag = float(np.mean(np.diag(entries))) if entries.size else 0.0
    eye = np.eye(entries.shape[0])
    for eps in policy.schedule(mean_diag):
        try:
            return np.linalg.cholesky(entries + eps * eye), eps
        except np.linalg.LinAlgError:
            continue
    min_eig = float(np.linalg.eigvalsh(entries)[0])
    raise NotPositiveSemidefiniteError(
        f"Gram is not positive semidefinite (min eigenvalue {min_eig:.3e}) "
        f"even with maximal jitter",
        min_eigenvalue=min_eig,
    )


@dataclass
class SampleEnsemble:
    """Jointly Gaussian values of the process on a family, replicate-major."""

    values: np.ndarray
    family_hash: str
    kernel_id: str
    hurst: tuple
    master_seed: int
    jitter: float
    labels: tuple = ()

    @property
    def replicate_count(self) -> int:
        return self.values.shape[0]

    @property
    def size(self) -> int:
        return self.values.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def metadata(self) -> dict:
        return {
            "family_hash": self.family_hash,
            "kernel_id": self.kernel_id,
            "hurst": [float(v) for v in self.hurst],
            "master_seed": int(self.master_seed),
            "replicates": int(self.replicate_count),
            "jitter": float(self.jitter),
            "generator": "philox4x64-10 keyed (master_seed, replicate)",
            "normal_transform": "box-muller",
            "labels": list(self.labels),
        }

    def to_csv(self, path) -> None:
        labels = self.labels or tuple(f"s{i}" for i in range(self.size))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                f"# kernel_id={self.kernel_id} master_seed={self.master_seed} "
                f"family_hash={self.family_hash}\n"
            )
            fh.write("replicate," + ",".join(labels) + "\n")
            for r, row in enumerate(self.values):
                fh.write(str(r) + "," + ",".join(fmt_float(v) for v in row) + "\n")


def sample(
    g: GramMatrix,
    replicates: int,
    master_seed: int,
    policy: JitterPolicy = JitterPolicy(),
) -> SampleEnsemble:
    """Draw an ensemble of jointly Gaussian rows with covariance G."""
    if replicates < 1:
        raise ValueError("need at least one replicate")
    factor, jitter = factorize(g, policy)
    n = g.size
    z = streams.standard_normals(master_seed, np.arange(replicates, dtype=np.uint64), n)
    values = np.asarray(z).reshape(replicates, n) @ factor.T
    return SampleEnsemble(
        values=values,
        family_hash=g.family_hash,
        kernel_id=g.kernel_id,
        hurst=g.hurst,
        master_seed=int(master_seed),
        jitter=jitter,
        labels=g.labels,
    )


def increment_values(
    ensemble: SampleEnsemble, spec: IncrementSpec, family: SetFamily
) -> np.ndarray:
    """Per-replicate increment over C via the alternating expansion.

    Every subset intersection required by the expansion must be a member of
    the sampled family; otherwise the error lists the missing sets so the
    caller can extend the family and resample.
    """
    sets, signs = expansion(spec)
    columns, missing = [], []
    for s in sets:
        idx = family.index_of(s)
        if idx is None:
            missing.append(s)
        else:
            columns.append(idx)
    if missing:
        raise MissingSetsError(missing)
    result = np.zeros(ensemble.replicate_count)
    for sign, idx in zip(signs, columns):
        result += sign * ensemble.values[:, idx]
    return result


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    std_error_of_variance: float


def empirical_moments(values) -> Moments:
    """Mean, unbiased variance, and the Gaussian-data standard error of the
    variance, var * sqrt(2 / (r - 1))."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("need at least two scalar values")
    var = float(np.var(values, ddof=1))
    return Moments(
        mean=float(np.mean(values)),
        variance=var,
        std_error_of_variance=var * float(np.sqrt(2.0 / (values.size - 1))),
    )
