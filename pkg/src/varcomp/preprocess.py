"""One-time eigendecomposition K = O Lambda O^T and rotation to a diagonal model.

After rotating Y and X by O^T, the covariance is diagonal and every
likelihood quantity is a sum over coordinates, which is what makes the
per-evaluation cost linear in n.  The decomposition is the expensive step
and is meant to be shared across many responses with the same kernel.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EigenFailure, IndefiniteKernel
from .model import EIGENVALUE_CLAMP_RTOL, ModelData, validate

CACHE_MAGIC = b"VCEIG1"


@dataclass(frozen=True, eq=False)
class RotatedData:
    """Eigenvalues plus rotated response and design; the reusable model input.

    Eigenvalues are sorted in decreasing order and the i-th entries of
    y_rotated correspond to the i-th eigenvalue.
    """

    lambdas: np.ndarray
    y_rotated: np.ndarray
    x_rotated: np.ndarray

    def __post_init__(self):
        for name in ("lambdas", "y_rotated", "x_rotated"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]

    @property
    def p(self) -> int:
        return self.x_rotated.shape[1]


@dataclass(frozen=True, eq=False)
class SharedBasis:
    """Decomposition product retained for rotating additional responses.

    Holds the orthogonal rotation matrix (O(n^2) memory); use prepare()
    instead when only a single response will ever be analyzed.
    """

    lambdas: np.ndarray
    x_rotated: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        for name in ("lambdas", "x_rotated", "rotation"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]

    @property
    def p(self) -> int:
        return self.x_rotated.shape[1]


def _clamped_eigh(kernel: np.ndarray):
    """Symmetric eigendecomposition, decreasing order, small negatives clamped to 0."""
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(kernel)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"symmetric eigensolver failed: {exc}") from exc
    eigenvalues = eigenvalues[::-1].copy()
    eigenvectors = eigenvectors[:, ::-1].copy()
    largest = eigenvalues[0] if eigenvalues.size else 0.0
    floor = -EIGENVALUE_CLAMP_RTOL * max(largest, 0.0)
    smallest = eigenvalues[-1] if eigenvalues.size else 0.0
    if smallest < floor:
        raise IndefiniteKernel(
            f"kernel eigenvalue {smallest:.6e} is below the repair tolerance {floor:.6e}"
        )
    np.clip(eigenvalues, 0.0, None, out=eigenvalues)
    return eigenvalues, eigenvectors


def decompose(data: ModelData, normalize: bool = False) -> SharedBasis:
    """Validate, eigendecompose the kernel, and rotate the design.

    Args:
        data: model inputs; validate() must pass.
        normalize: rescale eigenvalues by the largest one.  Off by default;
            it changes the meaning of h2 (the proportion is then relative
            to K / lambda_1), with statistics mapping through the induced
            reparameterization.

    Returns:
        SharedBasis with eigenvalues (decreasing), rotated design, and the
        rotation matrix retained for rotating further responses.
    """
    validate(data, strict=True)
    eigenvalues, eigenvectors = _clamped_eigh(data.kernel_matrix())
    if normalize:
        if eigenvalues[0] <= 0:
            raise IndefiniteKernel("cannot normalize: largest eigenvalue is not positive")
        eigenvalues = eigenvalues / eigenvalues[0]
    return SharedBasis(
        lambdas=eigenvalues,
        x_rotated=eigenvectors.T @ data.x,
        rotation=eigenvectors,
    )


def rotate_response(basis: SharedBasis, y: np.ndarray) -> RotatedData:
    """Rotate a response vector into the shared eigenbasis."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != basis.n:
        raise DimensionMismatch(f"response has length {y.shape[0]}, expected {basis.n}")
    return RotatedData(
        lambdas=basis.lambdas,
        y_rotated=basis.rotation.T @ y,
        x_rotated=basis.x_rotated,
    )


def prepare(data: ModelData, normalize: bool = False) -> RotatedData:
    """Decompose-and-discard path for single-response use.

    Rotates data.y and data.x and drops the rotation matrix, so the peak
    O(n^2) memory is released as soon as this returns.
    """
    basis = decompose(data, normalize=normalize)
    return rotate_response(basis, data.y)


def save_basis(path: str, basis: SharedBasis) -> None:
    """Write a SharedBasis cache file.

    Layout (little-endian): magic b"VCEIG1", n and p as unsigned 64-bit,
    then eigenvalues (n doubles), rotated design (n*p doubles, row-major),
    rotation matrix (n*n doubles, row-major).
    """
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<QQ", basis.n, basis.p))
        fh.write(np.ascontiguousarray(basis.lambdas, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.x_rotated, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.rotation, dtype="<f8").tobytes())


def load_basis(path: str) -> SharedBasis:
    """Read a SharedBasis cache file written by save_basis()."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CACHE_MAGIC))
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path} is not a basis cache (bad magic {magic!r})")
        n, p = struct.unpack("<QQ", fh.read(16))
        payload = fh.read()
    expected = 8 * (n + n * p + n * n)
    if len(payload) != expected:
        raise ValueError(f"{path} is truncated: {len(payload)} payload bytes, expected {expected}")
    floats = np.frombuffer(payload, dtype="<f8")
    lambdas = floats[:n]
    x_rotated = floats[n : n + n * p].reshape(n, p)
    rotation = floats[n + n * p :].reshape(n, n)
    return SharedBasis(lambdas=lambdas, x_rotated=x_rotated, rotation=rotation)
