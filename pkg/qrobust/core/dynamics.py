"""State propagation under piecewise-constant controls.

Three backends share one Hamiltonian convention (hbar = 1)::

    H(t) = theta_0 * H0 + sum_j theta_j * u_j(t) * H_j

* :func:`propagate_lindblad` integrates the Lindblad master equation with RK4.
* :func:`propagate_unitary` applies exact step propagators ``exp(-i H dt)``.
* :func:`propagate_bloch` integrates the affine coherent-vector flow obtained
  from :func:`build_bloch_system`.

Every backend has a ``batch_`` form operating on stacks of controls and
uncertainty tuples. Each row is computed independently of the others, so the
result for a row does not depend on how rows are grouped into batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from qrobust.core.quantum_state import (
    CoherentVector,
    DensityOperator,
    GeneratorBasis,
    dagger,
)
from qrobust.logging import get_logger

logger = get_logger(__name__)

DEFAULT_SUBSTEPS = 4
TRACE_DRIFT_TOL = 1e-6
NORM_DRIFT_TOL = 1e-6
AMPLIFICATION_TOL = 1e-9
HAMILTONIAN_HERMITIAN_TOL = 1e-12

# observer(step, t, states) with states of shape (B, n, n)
StepObserver = Callable[[int, float, np.ndarray], None]


class DynamicsError(RuntimeError):
    """Raised when a propagated state leaves the set of density operators."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class PiecewiseConstantControl:
    """``M`` control channels held constant over ``D`` steps of length ``dt``."""

    values: np.ndarray                       # shape (M, D)
    dt: float
    bounds: np.ndarray | None = None         # shape (M, 2): per-channel (min, max)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.dt <= 0:
            raise ValueError(f"Step length must be positive, got {self.dt}")
        if self.bounds is not None:
            self.bounds = np.asarray(self.bounds, dtype=float).reshape(self.channels, 2)
            low = self.bounds[:, :1]
            high = self.bounds[:, 1:]
            if np.any(self.values < low) or np.any(self.values > high):
                raise ValueError("Control values outside their channel bounds")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    @classmethod
    def from_genome(
        cls,
        genome: np.ndarray,
        channels: int,
        dt: float,
        bounds: np.ndarray | None = None,
    ) -> PiecewiseConstantControl:
        """Unpack a channel-major genome (all steps of channel 0, then channel 1, ...)."""
        genome = np.asarray(genome, dtype=float)
        if genome.size % channels:
            raise ValueError(f"Genome of length {genome.size} does not split into {channels} channels")
        return cls(values=genome.reshape(channels, -1), dt=dt, bounds=bounds)

    def to_genome(self) -> np.ndarray:
        return self.values.ravel().copy()


@dataclass
class LindbladModel:
    """Drift Hamiltonian, control Hamiltonians and weighted jump operators."""

    drift: np.ndarray
    controls: list[np.ndarray] = field(default_factory=list)
    jump_operators: list[np.ndarray] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.drift = np.asarray(self.drift, dtype=np.complex128)
        self.controls = [np.asarray(h, dtype=np.complex128) for h in self.controls]
        self.jump_operators = [np.asarray(op, dtype=np.complex128) for op in self.jump_operators]
        if not self.rates:
            self.rates = [1.0] * len(self.jump_operators)
        if len(self.rates) != len(self.jump_operators):
            raise ValueError(
                f"{len(self.rates)} rates given for {len(self.jump_operators)} jump operators"
            )
        if any(rate < 0 for rate in self.rates):
            raise ValueError("Lindblad rates must be non-negative")

        for label, term in [("drift", self.drift)] + [
            (f"control {j}", h) for j, h in enumerate(self.controls)
        ]:
            if term.shape != (self.dim, self.dim):
                raise ValueError(f"{label} Hamiltonian has shape {term.shape}, expected {self.dim}")
            residual = np.max(np.abs(term - term.conj().T))
            if residual > HAMILTONIAN_HERMITIAN_TOL:
                raise ValueError(f"{label} Hamiltonian is not Hermitian (residual {residual:.3e})")

        # sum_k gamma_k L_k^dagger L_k, the anticommutator part of the dissipator
        self._decay = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for rate, op in zip(self.rates, self.jump_operators):
            self._decay += rate * (op.conj().T @ op)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def is_closed(self) -> bool:
        return not any(rate > 0 for rate in self.rates)

    def hamiltonian(self, thetas: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
        """Stacked ``theta_0 H0 + sum_j theta_j u_j H_j``.

        ``thetas`` has shape ``(..., M + 1)`` and ``amplitudes`` ``(..., M)``.
        """
        return assemble_hamiltonian(self.drift, self.controls, thetas, amplitudes)

    def dissipator(self, states: np.ndarray) -> np.ndarray:
        """``sum_k gamma_k D[L_k]`` applied to stacked (not necessarily physical) matrices."""
        out = -0.5 * (self._decay @ states + states @ self._decay)
        for rate, op in zip(self.rates, self.jump_operators):
            if rate:
                out = out + rate * (op @ states @ op.conj().T)
        return out


def assemble_hamiltonian(
    drift: np.ndarray,
    controls: Sequence[np.ndarray],
    thetas: np.ndarray,
    amplitudes: np.ndarray,
) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=float)
    h = thetas[..., 0, None, None] * drift
    for j, term in enumerate(controls):
        h = h + (thetas[..., j + 1] * amplitudes[..., j])[..., None, None] * term
    return h


# ---------------------------------------------------------------------------
# Lindblad backend
# ---------------------------------------------------------------------------

def lindblad_rhs(rho: DensityOperator | np.ndarray, h: np.ndarray, model: LindbladModel) -> np.ndarray:
    """``-i[H, rho] + sum_k gamma_k D[L_k] rho`` with broadcasting over leading axes."""
    states = rho.matrix if isinstance(rho, DensityOperator) else rho
    return -1j * (h @ states - states @ h) + model.dissipator(states)


def rk4_step(
    rhs: Callable[[np.ndarray], np.ndarray],
    y: np.ndarray,
    h: float,
) -> np.ndarray:
    """One classical Runge-Kutta step of an autonomous system."""
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_trace(states: np.ndarray, step: int) -> None:
    drift = np.abs(np.trace(states, axis1=-2, axis2=-1) - 1.0)
    drift = np.where(np.isfinite(drift), drift, np.inf)
    worst = float(np.max(drift)) if drift.size else 0.0
    if worst > TRACE_DRIFT_TOL:
        row = int(np.argmax(drift))
        raise DynamicsError(
            f"Trace drifted by {worst:.3e} after control step {step} (row {row}); "
            f"reduce the step length or increase substeps"
        )


def batch_propagate_lindblad(
    model: LindbladModel,
    values: np.ndarray,
    thetas: np.ndarray,
    rho0: np.ndarray,
    dt: float,
    substeps: int = DEFAULT_SUBSTEPS,
    observer: StepObserver | None = None,
) -> np.ndarray:
    """Propagate ``B`` copies of ``rho0``; ``values`` (B, M, D), ``thetas`` (B, M + 1)."""
    values = np.asarray(values, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    batch, _, steps = values.shape
    states = np.broadcast_to(np.asarray(rho0, dtype=np.complex128), (batch, model.dim, model.dim)).copy()
    h = dt / substeps

    if observer is not None:
        observer(0, 0.0, states)
    for step in range(steps):
        ham = model.hamiltonian(thetas, values[:, :, step])
        for _ in range(substeps):
            states = rk4_step(lambda r: lindblad_rhs(r, ham, model), states, h)
        _check_trace(states, step)
        if observer is not None:
            observer(step + 1, (step + 1) * dt, states)
    return states


def propagate_lindblad(
    model: LindbladModel,
    control: PiecewiseConstantControl,
    theta: Sequence[float],
    rho0: DensityOperator,
    substeps: int = DEFAULT_SUBSTEPS,
    trajectory: bool = False,
) -> DensityOperator | tuple[DensityOperator, list[DensityOperator]]:
    """Final state, or ``(final, [rho(0), rho(dt), ...])`` when ``trajectory`` is set."""
    _check_control(model.n_controls, control, theta)
    recorded: list[DensityOperator] = []

    def _record(_step: int, _t: float, states: np.ndarray) -> None:
        recorded.append(DensityOperator(states[0].copy()))

    final = batch_propagate_lindblad(
        model,
        control.values[None],
        np.asarray(theta, dtype=float)[None],
        rho0.matrix,
        control.dt,
        substeps=substeps,
        observer=_record if trajectory else None,
    )[0]
    if trajectory:
        return DensityOperator(final), recorded
    return DensityOperator(final)


def _check_control(n_controls: int, control: PiecewiseConstantControl, theta: Sequence[float]) -> None:
    if control.channels != n_controls:
        raise ValueError(f"Control has {control.channels} channels, model expects {n_controls}")
    if len(theta) != n_controls + 1:
        raise ValueError(f"Uncertainty tuple needs {n_controls + 1} entries, got {len(theta)}")


# ---------------------------------------------------------------------------
# Closed-system backend
# ---------------------------------------------------------------------------

def step_propagators(hamiltonians: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i H dt)`` for stacked Hermitian ``H`` via eigendecomposition."""
    eigvals, eigvecs = np.linalg.eigh(hamiltonians)
    phases = np.exp(-1j * dt * eigvals)
    return (eigvecs * phases[..., None, :]) @ dagger(eigvecs)


def batch_propagate_unitary(
    drift: np.ndarray,
    controls: Sequence[np.ndarray],
    values: np.ndarray,
    thetas: np.ndarray,
    rho0: np.ndarray,
    dt: float,
    observer: StepObserver | None = None,
) -> np.ndarray:
    """Closed-system propagation of ``B`` copies of ``rho0`` (or ``B`` initial states)."""
    values = np.asarray(values, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    batch, _, steps = values.shape
    terms = [np.asarray(drift), *(np.asarray(h) for h in controls)]
    # real symmetric Hamiltonians are diagonalised in real arithmetic
    if any(np.any(np.imag(t)) for t in terms):
        terms = [t.astype(np.complex128) for t in terms]
    else:
        terms = [np.real(t).astype(np.float64) for t in terms]
    drift, *controls = terms
    n = drift.shape[0]
    states = np.broadcast_to(np.asarray(rho0, dtype=np.complex128), (batch, n, n)).copy()

    if observer is not None:
        observer(0, 0.0, states)
    for step in range(steps):
        ham = assemble_hamiltonian(drift, controls, thetas, values[:, :, step])
        u = step_propagators(ham, dt)
        states = u @ states @ dagger(u)
        if observer is not None:
            observer(step + 1, (step + 1) * dt, states)
    return states


def propagate_unitary(
    drift: np.ndarray,
    controls: Sequence[np.ndarray],
    control: PiecewiseConstantControl,
    theta: Sequence[float],
    rho0: DensityOperator,
) -> DensityOperator:
    _check_control(len(controls), control, theta)
    if rho0.dim != np.asarray(drift).shape[0]:
        raise ValueError(f"State dimension {rho0.dim} does not match Hamiltonian {np.shape(drift)}")
    final = batch_propagate_unitary(
        drift,
        controls,
        control.values[None],
        np.asarray(theta, dtype=float)[None],
        rho0.matrix,
        control.dt,
    )[0]
    return DensityOperator(final)


# ---------------------------------------------------------------------------
# Coherent-vector backend
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineBlochSystem:
    """``dy/dt = (theta_0 A_H + A_D + sum_j theta_j u_j B_j) y + l0``.

    ``coherent_drift`` is the image of the drift Hamiltonian, kept apart from
    ``dissipative_drift`` so the drift uncertainty only scales the coherent part.
    """

    coherent_drift: np.ndarray       # (d, d)
    dissipative_drift: np.ndarray    # (d, d)
    offset: np.ndarray               # (d,)
    controls: np.ndarray             # (M, d, d)

    @property
    def size(self) -> int:
        return self.offset.shape[0]

    @property
    def dim(self) -> int:
        """Hilbert-space dimension ``n`` with ``size = n**2 - 1``."""
        return int(round(np.sqrt(self.size + 1)))

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]

    def drift(self, theta0: float = 1.0) -> np.ndarray:
        return theta0 * self.coherent_drift + self.dissipative_drift

    def generator(self, thetas: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
        """Stacked linear part for ``thetas`` (..., M + 1) and ``amplitudes`` (..., M)."""
        thetas = np.asarray(thetas, dtype=float)
        amplitudes = np.asarray(amplitudes, dtype=float)
        m = thetas[..., 0, None, None] * self.coherent_drift + self.dissipative_drift
        coupling = thetas[..., 1:] * amplitudes
        return m + np.einsum("...j,jab->...ab", coupling, self.controls)


def build_bloch_system(model: LindbladModel, basis: GeneratorBasis) -> AffineBlochSystem:
    """Derive the coherent-vector flow numerically from the master equation.

    Column ``m`` of each block is the image of generator ``U_m`` under the
    corresponding part of the Lindblad generator, projected back with
    ``tr(U_l .) / 2``; the offset is the image of ``I/n``.
    """
    if model.dim != basis.dim:
        raise ValueError(f"Model dimension {model.dim} does not match basis dimension {basis.dim}")
    gens = basis.generators
    n = basis.dim

    def project(images: np.ndarray) -> np.ndarray:
        # images[m] is the image of U_m; result[l, m] = tr(U_l images[m]) / 2
        return 0.5 * np.einsum("lij,mji->lm", gens, images).real

    def hamiltonian_block(h: np.ndarray) -> np.ndarray:
        return project(-1j * (h @ gens - gens @ h))

    dissipated = model.dissipator(gens)
    offset_image = model.dissipator(np.eye(n, dtype=np.complex128) / n)
    offset = np.einsum("lij,ji->l", gens, offset_image).real

    system = AffineBlochSystem(
        coherent_drift=hamiltonian_block(model.drift),
        dissipative_drift=project(dissipated),
        offset=offset,
        controls=np.stack([hamiltonian_block(h) for h in model.controls])
        if model.controls
        else np.zeros((0, len(basis), len(basis))),
    )
    logger.debug("Derived coherent-vector system of size %d with %d controls", system.size, system.n_controls)
    return system


def rk4_transfer(generator: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 step of ``dy/dt = M y + l`` written as ``y <- P y + Q l``."""
    d = generator.shape[-1]
    eye = np.eye(d)
    hm = h * generator
    hm2 = hm @ hm
    hm3 = hm2 @ hm
    hm4 = hm3 @ hm
    p = eye + hm + hm2 / 2.0 + hm3 / 6.0 + hm4 / 24.0
    q = h * (eye + hm / 2.0 + hm2 / 6.0 + hm3 / 24.0)
    return p, q


def rk4_amplification(generator: np.ndarray, h: float) -> np.ndarray:
    """Spectral radius of the RK4 transfer matrix for stacked generators.

    A step is stable when the radius does not exceed one; past the RK4
    stability region the coherent vector grows geometrically.
    """
    p, _ = rk4_transfer(generator, h)
    return np.max(np.abs(np.linalg.eigvals(p)), axis=-1)


def _check_coherent(y: np.ndarray, bound: float, step: int) -> None:
    norms = np.einsum("...i,...i->...", y, y)
    norms = np.where(np.isfinite(norms), norms, np.inf)
    worst = float(np.max(norms)) if norms.size else 0.0
    if worst > bound + NORM_DRIFT_TOL:
        row = int(np.argmax(norms))
        raise DynamicsError(
            f"Coherent vector norm^2 {worst:.3e} exceeds the physical bound {bound:.3f} "
            f"after control step {step} (row {row}); the RK4 step is outside its "
            f"stability region, increase steps or substeps"
        )


def batch_propagate_bloch(
    system: AffineBlochSystem,
    values: np.ndarray,
    thetas: np.ndarray,
    y0: np.ndarray,
    dt: float,
    substeps: int = DEFAULT_SUBSTEPS,
    observer: Callable[[int, float, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Propagate ``B`` coherent vectors; returns shape (B, d)."""
    values = np.asarray(values, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    batch, _, steps = values.shape
    y = np.broadcast_to(np.asarray(y0, dtype=float), (batch, system.size)).copy()[..., None]
    offset = system.offset[:, None]
    h = dt / substeps
    bound = CoherentVector.norm_bound(system.dim)

    if observer is not None:
        observer(0, 0.0, y[..., 0])
    for step in range(steps):
        p, q = rk4_transfer(system.generator(thetas, values[:, :, step]), h)
        kick = q @ offset
        for _ in range(substeps):
            y = p @ y + kick
        _check_coherent(y[..., 0], bound, step)
        if observer is not None:
            observer(step + 1, (step + 1) * dt, y[..., 0])
    return y[..., 0]


def propagate_bloch(
    system: AffineBlochSystem,
    control: PiecewiseConstantControl,
    theta: Sequence[float],
    y0: CoherentVector,
    substeps: int = DEFAULT_SUBSTEPS,
) -> CoherentVector:
    _check_control(system.n_controls, control, theta)
    final = batch_propagate_bloch(
        system,
        control.values[None],
        np.asarray(theta, dtype=float)[None],
        y0.components,
        control.dt,
        substeps=substeps,
    )[0]
    return CoherentVector(dim=y0.dim, components=final)
