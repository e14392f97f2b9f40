"""Truncated Fock-space states: TMSV, its fully dephased version, thermal states.

Bipartite operators use the basis ``|j>_A |k>_B`` with the B index running
fastest, i.e. flat index ``j * d_B + k``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TAIL_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
NEG_EIG_TOL = 1e-10
EIG_DROP = 1e-14


class TruncationError(ValueError):
    """Fock cutoff leaves more probability mass in the tail than allowed."""


class StateError(ValueError):
    """Operator violates the density-operator invariants."""


def check_epsilon(epsilon: float) -> float:
    eps = float(epsilon)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"squeezing strength must lie in (0, 1), got {epsilon}")
    return eps


def thermal_mean(epsilon: float) -> float:
    """Mean photon number ``eps^2 / (1 - eps^2)`` of either marginal."""
    eps = check_epsilon(epsilon)
    return eps**2 / (1.0 - eps**2)


def tail_mass(epsilon: float, cutoff: int) -> float:
    return check_epsilon(epsilon) ** (2 * cutoff)


def default_cutoff(epsilon: float, tail_tol: float = TAIL_TOL) -> int:
    """Smallest ``d`` whose geometric tail ``eps^(2d)`` falls below ``tail_tol``."""
    eps = check_epsilon(epsilon)
    d = max(2, math.ceil(math.log(tail_tol) / (2 * math.log(eps))))
    while eps ** (2 * d) >= tail_tol:
        d += 1
    while d > 2 and eps ** (2 * (d - 1)) < tail_tol:
        d -= 1
    return d


def geometric_pmf(epsilon: float, j) -> float | np.ndarray:
    """Source photon-number law ``(1 - eps^2) eps^(2j)``."""
    eps = check_epsilon(epsilon)
    j = np.asarray(j)
    if np.any(j < 0):
        raise ValueError("photon count must be non-negative")
    out = (1.0 - eps**2) * eps ** (2 * j.astype(float))
    return float(out) if out.ndim == 0 else out


@dataclass
class DensityOperator:
    """Finite-dimensional density matrix over one or two parties."""

    dims: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        size = math.prod(self.dims)
        if len(self.dims) not in (1, 2) or self.matrix.shape != (size, size):
            raise StateError(f"matrix shape {self.matrix.shape} does not fit dims {self.dims}")

    @property
    def bipartite(self) -> bool:
        return len(self.dims) == 2

    def validate(self) -> "DensityOperator":
        rho = self.matrix
        herm = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
        if herm > HERMITIAN_TOL:
            raise StateError(f"operator is not Hermitian (deviation {herm:.2e})")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"trace {tr!r} differs from 1")
        lam = np.linalg.eigvalsh(rho)
        if lam.size and lam[0] < -NEG_EIG_TOL:
            raise StateError(f"negative eigenvalue {lam[0]:.2e}")
        return self

    def renormalized(self) -> "DensityOperator":
        return DensityOperator(self.dims, self.matrix / np.trace(self.matrix).real)

    def tensor(self) -> np.ndarray:
        """View as ``(d_A, d_B, d_A, d_B)``."""
        dA, dB = self.dims
        return self.matrix.reshape(dA, dB, dA, dB)

    def swapped(self) -> "DensityOperator":
        """Same state with the A and B labels exchanged."""
        dA, dB = self.dims
        t = self.tensor().transpose(1, 0, 3, 2)
        return DensityOperator((dB, dA), t.reshape(dA * dB, dA * dB))

    def to_json(self) -> dict:
        dims = list(self.dims) if self.bipartite else [self.dims[0], 1]
        return {"dims": dims, "re": self.matrix.real.tolist(), "im": self.matrix.imag.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "DensityOperator":
        try:
            dims = tuple(int(d) for d in data["dims"])
            mat = np.array(data["re"], dtype=float) + 1j * np.array(data["im"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise StateError(f"malformed density-operator record: {exc}") from exc
        if len(dims) != 2:
            raise StateError("dims must be a pair [d_A, d_B]")
        return cls(dims, mat).validate()


def save_density(path: str | os.PathLike, rho: DensityOperator) -> None:
    Path(path).write_text(json.dumps(rho.to_json()) + "\n")


def load_density(path: str | os.PathLike) -> DensityOperator:
    return DensityOperator.from_json(json.loads(Path(path).read_text()))


def _truncated_weights(epsilon, cutoff, renormalize, tail_tol):
    eps = check_epsilon(epsilon)
    if cutoff < 2:
        raise ValueError("cutoff must be >= 2")
    p = geometric_pmf(eps, np.arange(cutoff))
    if renormalize:
        return p / p.sum()
    if tail_mass(eps, cutoff) > tail_tol:
        raise TruncationError(
            f"tail mass {tail_mass(eps, cutoff):.2e} above {tail_tol:.0e} at cutoff {cutoff}"
        )
    return p


def tmsv_state(
    epsilon: float, cutoff: int, renormalize: bool = True, tail_tol: float = TAIL_TOL
) -> np.ndarray:
    """Two-mode squeezed vacuum amplitudes on ``|j>|j>``, ``j < cutoff``.

    Returns a flat vector of length ``cutoff**2``.
    """
    amp = np.sqrt(_truncated_weights(epsilon, cutoff, renormalize, tail_tol))
    psi = np.zeros(cutoff * cutoff, dtype=np.complex128)
    psi[np.arange(cutoff) * (cutoff + 1)] = amp
    return psi


def pure_density(psi: np.ndarray, dims: tuple[int, int]) -> DensityOperator:
    psi = np.asarray(psi, dtype=np.complex128)
    return DensityOperator(dims, np.outer(psi, psi.conj()))


def tmsv_density(epsilon: float, cutoff: int, **kw) -> DensityOperator:
    return pure_density(tmsv_state(epsilon, cutoff, **kw), (cutoff, cutoff))


def fdtsv_density(
    epsilon: float, cutoff: int, renormalize: bool = True, tail_tol: float = TAIL_TOL
) -> DensityOperator:
    """Phase-averaged TMSV: ``sum_j p_j |j><j| (x) |j><j|``.

    The uniform phase average over one arm kills every ``j != j'`` coherence,
    so the result is written down directly.
    """
    p = _truncated_weights(epsilon, cutoff, renormalize, tail_tol)
    diag = np.zeros(cutoff * cutoff)
    diag[np.arange(cutoff) * (cutoff + 1)] = p
    return DensityOperator((cutoff, cutoff), np.diag(diag).astype(np.complex128))


def dephase_numerically(rho: DensityOperator, n_phases: int = 64) -> DensityOperator:
    """Trapezoid average of ``R_A(theta) rho R_A(theta)^dag`` over a uniform phase grid.

    Cross-check for :func:`fdtsv_density`; exact once ``n_phases`` exceeds the
    largest photon-number difference ``d_A - 1``.
    """
    dA, dB = rho.dims
    nA = np.repeat(np.arange(dA), dB)
    out = np.zeros_like(rho.matrix)
    for theta in 2 * np.pi * np.arange(n_phases) / n_phases:
        ph = np.exp(-1j * theta * nA)
        out += ph[:, None] * rho.matrix * ph.conj()[None, :]
    return DensityOperator(rho.dims, out / n_phases)


def thermal_density(epsilon: float, cutoff: int, renormalize: bool = True) -> DensityOperator:
    """Single-mode thermal state with mean ``eps^2 / (1 - eps^2)``."""
    p = _truncated_weights(epsilon, cutoff, renormalize, TAIL_TOL)
    return DensityOperator((cutoff,), np.diag(p).astype(np.complex128))


def product_density(rho_a: DensityOperator, rho_b: DensityOperator) -> DensityOperator:
    return DensityOperator(
        (rho_a.dims[0], rho_b.dims[0]), np.kron(rho_a.matrix, rho_b.matrix)
    )


def cc_density(joint: np.ndarray) -> DensityOperator:
    """Classical-classical state encoding the joint table ``joint[j, k]`` in Fock bases."""
    joint = np.asarray(joint, dtype=float)
    return DensityOperator(joint.shape, np.diag(joint.ravel()).astype(np.complex128))


def partial_trace(rho: DensityOperator, side: str) -> DensityOperator:
    """Trace out ``side`` ("A" or "B") and return the other party's state."""
    if not rho.bipartite:
        raise StateError("partial trace needs a bipartite operator")
    side = side.upper()
    t = rho.tensor()
    if side == "B":
        return DensityOperator((rho.dims[0],), np.einsum("ikjk->ij", t))
    if side == "A":
        return DensityOperator((rho.dims[1],), np.einsum("kikj->ij", t))
    raise ValueError(f"side must be 'A' or 'B', got {side!r}")


def _spectrum(matrix: np.ndarray) -> np.ndarray:
    herm = np.max(np.abs(matrix - matrix.conj().T)) if matrix.size else 0.0
    if herm > HERMITIAN_TOL:
        raise StateError(f"operator is not Hermitian (deviation {herm:.2e})")
    lam = np.linalg.eigvalsh(matrix)
    if lam.size and lam[0] < -NEG_EIG_TOL:
        raise StateError(f"negative eigenvalue {lam[0]:.2e}")
    return lam


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > EIG_DROP]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho: DensityOperator | np.ndarray) -> float:
    """``-Tr rho log2 rho`` in bits; eigenvalues under 1e-14 are dropped."""
    matrix = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    return shannon_entropy(_spectrum(matrix))


def thermal_entropy(nbar: float) -> float:
    """Closed-form entropy of a thermal state, in bits."""
    if nbar == 0:
        return 0.0
    return (nbar + 1) * math.log2(nbar + 1) - nbar * math.log2(nbar)
