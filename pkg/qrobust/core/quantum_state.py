"""Dense linear algebra for small quantum systems.

Density operators, the generalized Gell-Mann operator basis, tensor products,
partial traces, trace distance and the coherent-vector representation

    rho = I/n + 1/2 * sum_l y_l U_l,    y_l = tr(U_l rho),

with generators normalised so that ``tr(U_l U_m) = 2 delta_lm``. For ``n = 2``
the coherent vector is the Bloch vector.

Array-level helpers (prefixed ``batch_``) accept stacks of matrices with
arbitrary leading axes and are what the propagators and fitness kernels use.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt

ComplexMatrix = npt.NDArray[np.complex128]

HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8
IMAGINARY_TOL = 1e-12
SYMMETRIZE_TOL = 1e-10


class StateError(ValueError):
    """Raised when a matrix is not a valid density operator."""


# ---------------------------------------------------------------------------
# Elementary operators
# ---------------------------------------------------------------------------

_PAULI: dict[str, tuple[tuple[complex, complex], tuple[complex, complex]]] = {
    "x": ((0, 1), (1, 0)),
    "y": ((0, -1j), (1j, 0)),
    "z": ((1, 0), (0, -1)),
}


def pauli(axis: str) -> ComplexMatrix:
    """Return the Pauli matrix for ``axis`` in ``{"x", "y", "z"}``."""
    try:
        return np.array(_PAULI[axis.lower()], dtype=np.complex128)
    except KeyError:
        raise ValueError(f"Unknown Pauli axis: {axis!r} (expected x, y or z)") from None


def all_ones(n: int) -> ComplexMatrix:
    """The n x n matrix with every entry equal to one (not the identity)."""
    if n < 1:
        raise ValueError(f"Dimension must be positive, got {n}")
    return np.ones((n, n), dtype=np.complex128)


def tensor(*operators: npt.ArrayLike) -> ComplexMatrix:
    """Kronecker product with lexicographic index ordering (first factor slowest)."""
    if not operators:
        raise ValueError("tensor() needs at least one operator")
    result = np.asarray(operators[0], dtype=np.complex128)
    for op in operators[1:]:
        result = np.kron(result, np.asarray(op, dtype=np.complex128))
    return result


def embed(operator: npt.ArrayLike, site: int, n_sites: int, local_dim: int = 2) -> ComplexMatrix:
    """Place a single-site operator at ``site`` of an ``n_sites`` register."""
    if not 0 <= site < n_sites:
        raise ValueError(f"Site {site} out of range for {n_sites} sites")
    identity = np.eye(local_dim, dtype=np.complex128)
    factors = [operator if k == site else identity for k in range(n_sites)]
    return tensor(*factors)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


# ---------------------------------------------------------------------------
# Generator basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorBasis:
    """Ordered traceless Hermitian basis with ``tr(U_l U_m) = 2 delta_lm``.

    Ordering: symmetric pairs (j < k), antisymmetric pairs (j < k), then the
    diagonal generators. For ``n = 2`` this is ``(sigma_x, sigma_y, sigma_z)``.
    """

    dim: int
    generators: np.ndarray  # shape (n*n - 1, n, n)

    def __len__(self) -> int:
        return self.generators.shape[0]

    def __iter__(self):
        return iter(self.generators)

    def __getitem__(self, index: int) -> ComplexMatrix:
        return self.generators[index]

    def gram(self) -> np.ndarray:
        """Matrix of Hilbert-Schmidt products ``tr(U_l U_m)``."""
        return np.einsum("lij,mji->lm", self.generators, self.generators)


def generator_basis(n: int) -> GeneratorBasis:
    """Generalized Gell-Mann generators of SU(n), scaled to ``tr(U_l U_m) = 2 delta``."""
    if n < 2:
        raise ValueError(f"Generator basis needs n >= 2, got {n}")

    pairs = list(itertools.combinations(range(n), 2))
    generators: list[np.ndarray] = []

    for j, k in pairs:
        g = np.zeros((n, n), dtype=np.complex128)
        g[j, k] = g[k, j] = 1.0
        generators.append(g)

    for j, k in pairs:
        g = np.zeros((n, n), dtype=np.complex128)
        g[j, k] = -1j
        g[k, j] = 1j
        generators.append(g)

    for l in range(1, n):
        diag = np.zeros(n, dtype=np.complex128)
        diag[:l] = 1.0
        diag[l] = -l
        generators.append(np.diag(np.sqrt(2.0 / (l * (l + 1))) * diag))

    return GeneratorBasis(dim=n, generators=np.stack(generators))


# ---------------------------------------------------------------------------
# Density operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix.

    Construction through :meth:`from_matrix` validates the invariants; the
    plain constructor trusts its input (used by kernels that already
    guarantee them).
    """

    matrix: ComplexMatrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix: npt.ArrayLike, validate: bool = True) -> DensityOperator:
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateError(f"Density operator must be square, got shape {m.shape}")
        state = cls(m)
        if validate:
            state.validate()
        return state

    @classmethod
    def pure(cls, vector: npt.ArrayLike) -> DensityOperator:
        """Projector onto the normalised ``vector``."""
        psi = np.asarray(vector, dtype=np.complex128).ravel()
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise StateError("Cannot build a pure state from the zero vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def basis_state(cls, index: int, dim: int) -> DensityOperator:
        psi = np.zeros(dim, dtype=np.complex128)
        psi[index] = 1.0
        return cls.pure(psi)

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityOperator:
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @classmethod
    def uniform_superposition(cls, dim: int) -> DensityOperator:
        """``(1/n) * all_ones(n)``, the projector onto the uniform superposition."""
        return cls(all_ones(dim) / dim)

    def residuals(self) -> dict[str, float]:
        """Hermiticity, trace and positivity residuals of the stored matrix."""
        m = self.matrix
        eigvals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        return {
            "hermiticity": float(np.max(np.abs(m - m.conj().T))),
            "trace": float(abs(np.trace(m) - 1.0)),
            "min_eigenvalue": float(eigvals.min()),
        }

    def validate(self) -> None:
        res = self.residuals()
        if res["hermiticity"] > HERMITIAN_TOL:
            raise StateError(f"Matrix is not Hermitian (residual {res['hermiticity']:.3e})")
        if res["trace"] > TRACE_TOL:
            raise StateError(f"Trace differs from one by {res['trace']:.3e}")
        if res["min_eigenvalue"] < -POSITIVITY_TOL:
            raise StateError(
                f"Matrix is not positive semidefinite (min eigenvalue {res['min_eigenvalue']:.3e})"
            )

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


# ---------------------------------------------------------------------------
# Partial trace
# ---------------------------------------------------------------------------

def batch_partial_trace(
    matrices: np.ndarray,
    local_dims: Sequence[int],
    keep: int | Sequence[int],
) -> np.ndarray:
    """Partial trace over every subsystem not in ``keep``, for stacked matrices."""
    dims = [int(d) for d in local_dims]
    total = int(np.prod(dims))
    if matrices.shape[-1] != total or matrices.shape[-2] != total:
        raise ValueError(
            f"local_dims {tuple(dims)} multiply to {total}, "
            f"but matrices have shape {matrices.shape[-2:]}"
        )
    keep_list = [keep] if isinstance(keep, (int, np.integer)) else list(keep)
    m = len(dims)
    for k in keep_list:
        if not 0 <= k < m:
            raise ValueError(f"Subsystem index {k} out of range for {m} subsystems")

    lead = matrices.shape[:-2]
    tensor_form = matrices.reshape(*lead, *dims, *dims)

    letters = "abcdefghijklmnopqrstuvw"
    row = list(letters[:m])
    col = list(letters[m : 2 * m])
    for k in range(m):
        if k not in keep_list:
            col[k] = row[k]
    out_row = "".join(row[k] for k in keep_list)
    out_col = "".join(col[k] for k in keep_list)
    spec = f"...{''.join(row)}{''.join(col)}->...{out_row}{out_col}"
    reduced = np.einsum(spec, tensor_form)
    kept = int(np.prod([dims[k] for k in keep_list]))
    return reduced.reshape(*lead, kept, kept)


def partial_trace(
    rho: DensityOperator,
    local_dims: Sequence[int],
    keep: int | Sequence[int],
) -> DensityOperator:
    """Reduced density operator of the ``keep`` subsystem(s)."""
    return DensityOperator(batch_partial_trace(rho.matrix, local_dims, keep))


# ---------------------------------------------------------------------------
# Coherent vector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoherentVector:
    """Real components ``y_l = tr(U_l rho)``; the Bloch vector for a qubit."""

    dim: int
    components: np.ndarray

    def __len__(self) -> int:
        return self.components.shape[0]

    def norm_squared(self) -> float:
        return float(self.components @ self.components)

    @staticmethod
    def norm_bound(dim: int) -> float:
        """Largest squared norm of a physical coherent vector, ``2(1 - 1/n)``."""
        return 2.0 * (1.0 - 1.0 / dim)


def batch_coherent(matrices: np.ndarray, basis: GeneratorBasis) -> np.ndarray:
    """``tr(U_l rho)`` for stacked matrices; returns the complex values."""
    return np.einsum("lij,...ji->...l", basis.generators, matrices)


def to_coherent(rho: DensityOperator, basis: GeneratorBasis) -> CoherentVector:
    if rho.dim != basis.dim:
        raise ValueError(f"State dimension {rho.dim} does not match basis dimension {basis.dim}")
    values = batch_coherent(rho.matrix, basis)
    residue = float(np.max(np.abs(values.imag)))
    if residue > IMAGINARY_TOL:
        raise StateError(f"Non-Hermitian input: imaginary coherent residue {residue:.3e}")
    return CoherentVector(dim=basis.dim, components=values.real.copy())


def batch_from_coherent(components: np.ndarray, basis: GeneratorBasis) -> np.ndarray:
    n = basis.dim
    identity = np.eye(n, dtype=np.complex128) / n
    return identity + 0.5 * np.einsum("...l,lij->...ij", components, basis.generators)


def from_coherent(
    y: CoherentVector,
    basis: GeneratorBasis,
    validate: bool = True,
) -> DensityOperator:
    """Rebuild ``rho = I/n + 1/2 sum y_l U_l``.

    With ``validate`` a reconstruction outside the positive cone raises
    :class:`StateError`; without it the matrix is returned as-is.
    """
    if y.dim != basis.dim or len(y) != len(basis):
        raise ValueError(
            f"Coherent vector of length {len(y)} (n={y.dim}) does not match basis n={basis.dim}"
        )
    rho = DensityOperator(batch_from_coherent(np.asarray(y.components, dtype=float), basis))
    if validate:
        rho.validate()
    return rho


# ---------------------------------------------------------------------------
# Trace distance
# ---------------------------------------------------------------------------

def batch_trace_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Half the sum of absolute eigenvalues of ``a - b`` over the last two axes."""
    diff = a - b
    residue = np.max(np.abs(diff - dagger(diff))) if diff.size else 0.0
    if residue > SYMMETRIZE_TOL:
        raise StateError(f"Difference is not Hermitian (residual {residue:.3e})")
    diff = 0.5 * (diff + dagger(diff))
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff)), axis=-1)


def trace_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    if rho.dim != sigma.dim:
        raise ValueError(f"Dimension mismatch: {rho.dim} vs {sigma.dim}")
    return float(batch_trace_distance(rho.matrix, sigma.matrix))


def relative_error_percent(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Trace distance expressed as a percentage of its maximum (one)."""
    return 100.0 * trace_distance(rho, sigma)


def random_density_operator(
    dim: int,
    rng: np.random.Generator,
    rank: int | None = None,
) -> DensityOperator:
    """Random state ``G G^dagger / tr`` from a complex Ginibre matrix."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityOperator(m / np.trace(m).real)
