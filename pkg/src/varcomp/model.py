"""Domain types and validity rules for the one-kernel mixed model.

The model is Y ~ N(X beta, sigma_g^2 K + sigma_e^2 I) with a known symmetric
positive-semidefinite kernel K.  Inference targets the variance proportion
h2 = sigma_g^2 / (sigma_g^2 + sigma_e^2) in [0, 1), with total variance
sigma2 = sigma_g^2 + sigma_e^2 > 0.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DimensionMismatch,
    NonSymmetricKernel,
    RankDeficientX,
    TooFewObservations,
)

KERNEL_SYMMETRY_RTOL = 1e-10
EIGENVALUE_CLAMP_RTOL = 1e-8


@dataclass(frozen=True)
class AR1Kernel:
    """Banded correlation kernel K_ij = rho^|i-j| on index order."""

    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"AR1 correlation must lie in (0, 1), got {self.rho}")


@dataclass(frozen=True)
class ExpDecayKernel:
    """Spatial kernel K_ij = exp(-||s_i - s_j|| / length_scale)."""

    coordinates: np.ndarray
    length_scale: float

    def __post_init__(self):
        coords = np.asarray(self.coordinates, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        object.__setattr__(self, "coordinates", coords)
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")


@dataclass(frozen=True)
class DenseKernel:
    """Kernel loaded from a dense numeric CSV/whitespace matrix file."""

    path: str


KernelSpec = Union[AR1Kernel, ExpDecayKernel, DenseKernel]


def materialize_kernel(spec: KernelSpec, n: int) -> np.ndarray:
    """Build the dense symmetric n x n kernel matrix for a spec.

    AR1 and ExpDecay kernels have unit diagonal by construction.

    Raises:
        DimensionMismatch: coordinate count or loaded matrix size is not n.
    """
    if isinstance(spec, AR1Kernel):
        idx = np.arange(n)
        return spec.rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    if isinstance(spec, ExpDecayKernel):
        coords = spec.coordinates
        if coords.shape[0] != n:
            raise DimensionMismatch(
                f"kernel coordinates have {coords.shape[0]} rows, expected n={n}"
            )
        dist = cdist(coords, coords)
        kernel = np.exp(-dist / spec.length_scale)
        return 0.5 * (kernel + kernel.T)
    if isinstance(spec, DenseKernel):
        kernel = np.loadtxt(spec.path, delimiter=",", ndmin=2)
        if kernel.shape != (n, n):
            raise DimensionMismatch(
                f"dense kernel at {spec.path} has shape {kernel.shape}, expected ({n}, {n})"
            )
        return kernel
    raise TypeError(f"unknown kernel spec {type(spec).__name__}")


def kernel_label(kernel) -> str:
    """Short textual tag for report rows, e.g. 'ar1:0.95'."""
    if isinstance(kernel, AR1Kernel):
        return f"ar1:{kernel.rho:g}"
    if isinstance(kernel, ExpDecayKernel):
        return f"expdecay:{kernel.length_scale:g}"
    if isinstance(kernel, DenseKernel):
        return f"dense:{kernel.path}"
    return "dense:<array>"


@dataclass(frozen=True)
class ModelData:
    """Raw inputs (Y, X, kernel) before rotation.

    X may have zero columns (p = 0); the GLS projection terms then vanish.
    The kernel is either a dense matrix or a KernelSpec to be materialized.
    """

    y: np.ndarray
    x: np.ndarray
    kernel: Union[np.ndarray, KernelSpec]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = self.x
        if x is None:
            x = np.empty((y.shape[0], 0))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def kernel_matrix(self) -> np.ndarray:
        if isinstance(self.kernel, np.ndarray):
            return np.asarray(self.kernel, dtype=float)
        return materialize_kernel(self.kernel, self.n)


@dataclass(frozen=True)
class Parameters:
    """Model parameters in the (h2, sigma2) parameterization."""

    beta: np.ndarray
    h2: float
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))
        if not 0.0 <= self.h2 < 1.0:
            raise ValueError(f"h2 must lie in [0, 1), got {self.h2}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def sigma_g2(self) -> float:
        return self.h2 * self.sigma2

    @property
    def sigma_e2(self) -> float:
        return (1.0 - self.h2) * self.sigma2

    @property
    def tau(self) -> float:
        return self.h2 / (1.0 - self.h2)

    @classmethod
    def from_components(cls, beta, sigma_g2: float, sigma_e2: float) -> "Parameters":
        """Construct from the (sigma_g2, sigma_e2) parameterization."""
        total = sigma_g2 + sigma_e2
        return cls(beta=beta, h2=sigma_g2 / total, sigma2=total)


@dataclass(frozen=True)
class ConfidenceInterval:
    """Interval for h2 with boundary-touch flags and a diagnostic trace.

    touches_zero/touches_one are derived from the bounds, so the
    biconditional (touches_zero iff lower == 0) holds by construction.
    """

    lower: float
    upper: float
    level: float
    one_sided: bool = False
    evaluations: int = 0
    notes: tuple = ()
    touches_zero: bool = field(init=False)
    touches_one: bool = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"invalid interval [{self.lower}, {self.upper}]")
        object.__setattr__(self, "touches_zero", self.lower == 0.0)
        object.__setattr__(self, "touches_one", self.upper == 1.0)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, h2: float) -> bool:
        return self.lower <= h2 <= self.upper


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(): pass/fail plus the quantities checked."""

    ok: bool
    n: int
    p: int
    rank_x: int
    kernel_symmetry_defect: float
    problems: tuple = ()

    def raise_first(self):
        if self.problems:
            raise self.problems[0]


def validate(data: ModelData, strict: bool = False) -> ValidationReport:
    """Check the standing model assumptions on (Y, X, kernel).

    Verifies n > p and n >= 2, full column rank of X (rank-revealing SVD
    with tolerance n * eps * largest singular value), and kernel symmetry.
    Semidefiniteness is checked later, at decomposition time.

    Args:
        data: raw model inputs.
        strict: raise the first problem instead of reporting it.

    Returns:
        ValidationReport with ok flag, rank of X, and symmetry defect of K.
    """
    n, p = data.n, data.p
    problems = []

    if n < 2 or n <= p:
        problems.append(TooFewObservations(f"need n > p and n >= 2, got n={n}, p={p}"))

    rank_x = p
    if p > 0 and n > 0:
        singular_values = np.linalg.svd(data.x, compute_uv=False)
        tol = n * np.finfo(float).eps * (singular_values[0] if singular_values.size else 0.0)
        rank_x = int(np.sum(singular_values > tol))
        if rank_x < p:
            problems.append(RankDeficientX(f"design matrix has rank {rank_x} < p={p}"))

    kernel = data.kernel_matrix()
    if kernel.shape != (n, n):
        problems.append(DimensionMismatch(f"kernel has shape {kernel.shape}, expected ({n}, {n})"))
        defect = float("nan")
    else:
        scale = np.max(np.abs(kernel)) if kernel.size else 0.0
        defect = float(np.max(np.abs(kernel - kernel.T))) if kernel.size else 0.0
        if defect > KERNEL_SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
            problems.append(NonSymmetricKernel(f"kernel symmetry defect {defect:.3e} exceeds tolerance"))

    report = ValidationReport(
        ok=not problems,
        n=n,
        p=p,
        rank_x=rank_x,
        kernel_symmetry_defect=defect,
        problems=tuple(problems),
    )
    if strict:
        report.raise_first()
    return report
