"""Correlation quantifiers for bipartite Fock-truncated states.

All entropies are in bits. Discord is one-way (A measured, B conditioned)
unless the state is swapped first; :func:`correlation_report` computes both.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .config import DEFAULT_CAPS, Caps, CapacityError
from .fock import haar_unitary
from .states import (
    DensityOperator,
    StateError,
    partial_trace,
    shannon_entropy,
    von_neumann_entropy,
)

PROB_DROP = 1e-14
BASIS_TOL = 1e-10
CERTIFY_TOL = 1e-10
STRUCT_TOL = 1e-10
TOP_LEVEL_WARN = 1e-8


class TruncationWarning(UserWarning):
    pass


@dataclass
class MeasurementBasis:
    """Rank-1 projective measurement ``{|v_i><v_i|}`` with ``v_i`` the columns of ``vectors``."""

    vectors: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.complex128)
        V = self.vectors
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValueError(f"basis needs a square matrix of column vectors, got {V.shape}")
        dev = np.max(np.abs(V.conj().T @ V - np.eye(V.shape[0])))
        if dev > BASIS_TOL:
            raise ValueError(f"basis vectors are not orthonormal (deviation {dev:.2e})")

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def projectors(self) -> list[np.ndarray]:
        return [np.outer(v, v.conj()) for v in self.vectors.T]

    @classmethod
    def computational(cls, d: int) -> "MeasurementBasis":
        return cls(np.eye(d), label="fock")

    def to_json(self) -> dict:
        return {"label": self.label, "re": self.vectors.real.tolist(), "im": self.vectors.imag.tolist()}


def mutual_information(rho: DensityOperator) -> float:
    """``S(A) + S(B) - S(AB)``."""
    return (
        von_neumann_entropy(partial_trace(rho, "B"))
        + von_neumann_entropy(partial_trace(rho, "A"))
        - von_neumann_entropy(rho)
    )


def _conditional_states(rho: DensityOperator, vectors: np.ndarray):
    # rho_{B|i} p_i = <v_i| rho |v_i>_A for every column v_i at once
    t = rho.tensor()
    blocks = np.einsum("ai,abcd,ci->ibd", vectors.conj(), t, vectors, optimize=True)
    probs = np.einsum("ibb->i", blocks).real
    return probs, blocks


def _measured_mi(rho: DensityOperator, vectors: np.ndarray, s_b: float) -> float:
    probs, blocks = _conditional_states(rho, vectors)
    cond = 0.0
    for p, blk in zip(probs, blocks):
        if p < PROB_DROP:
            continue
        blk = blk / p
        cond += p * shannon_entropy(np.linalg.eigvalsh(0.5 * (blk + blk.conj().T)))
    return s_b - cond


def measured_mutual_information(rho: DensityOperator, basis: MeasurementBasis) -> float:
    """``S(B) - sum_i p_i S(rho_B|i)`` after measuring A in ``basis``."""
    if not rho.bipartite:
        raise StateError("measured mutual information needs a bipartite state")
    if basis.dim != rho.dims[0]:
        raise ValueError(f"basis dimension {basis.dim} does not match d_A={rho.dims[0]}")
    return _measured_mi(rho, basis.vectors, von_neumann_entropy(partial_trace(rho, "A")))


@dataclass
class DiscordResult:
    discord: float
    classical_correlation: float
    mutual_information: float
    basis: MeasurementBasis
    certified: bool  # True when J attains its upper bound min(I, S(B))
    evaluations: int


def _hermitian_from_params(x: np.ndarray, d: int) -> np.ndarray:
    H = np.zeros((d, d), dtype=np.complex128)
    iu = np.triu_indices(d, 1)
    k = len(iu[0])
    H[iu] = x[:k] + 1j * x[k : 2 * k]
    H = H + H.conj().T
    H[np.diag_indices(d)] = x[2 * k :]
    return H


def discord(
    rho: DensityOperator,
    n_random: int = 2000,
    seed: int = 0,
    refine: bool = True,
    maxiter: int = 2000,
    caps: Caps = DEFAULT_CAPS,
) -> DiscordResult:
    """One-way discord ``I - sup_Pi J`` with Alice measured.

    The Fock basis is tried first. Because ``J <= min(I, S(B))`` for every
    projective measurement, reaching that bound ends the search with an exact
    answer. Otherwise Haar-random bases are swept (lowest index wins ties)
    and the best one is refined with Nelder-Mead over a Hermitian generator.
    The result is then an upper bound on the true discord.
    """
    if not rho.bipartite:
        raise StateError("discord needs a bipartite state")
    dA = rho.dims[0]
    s_a = von_neumann_entropy(partial_trace(rho, "B"))
    s_b = von_neumann_entropy(partial_trace(rho, "A"))
    mi = s_a + s_b - von_neumann_entropy(rho)
    bound = min(mi, s_b)

    best_V = np.eye(dA, dtype=np.complex128)
    best_J = _measured_mi(rho, best_V, s_b)
    best_label = "fock"
    evals = 1
    if best_J >= bound - CERTIFY_TOL:
        return DiscordResult(mi - best_J, best_J, mi, MeasurementBasis(best_V, best_label), True, evals)

    if dA > caps.optimizer_dim:
        raise CapacityError(
            f"d_A={dA} exceeds optimizer cap {caps.optimizer_dim} and the Fock basis is not optimal"
        )
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        V = haar_unitary(dA, rng)
        J = _measured_mi(rho, V, s_b)
        evals += 1
        if J > best_J:
            best_J, best_V, best_label = J, V, f"sweep[{i}]"
    if refine and dA > 1:
        V0 = best_V

        def objective(x):
            return -_measured_mi(rho, V0 @ expm(1j * _hermitian_from_params(x, dA)), s_b)

        res = minimize(
            objective,
            np.zeros(dA * dA),
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-14},
        )
        evals += res.nfev
        if -res.fun > best_J:
            best_J = -res.fun
            best_V = V0 @ expm(1j * _hermitian_from_params(res.x, dA))
            best_label += "+refined"
    best_J = min(best_J, bound)
    certified = best_J >= bound - CERTIFY_TOL
    return DiscordResult(mi - best_J, best_J, mi, MeasurementBasis(best_V, best_label), certified, evals)


# ---------------------------------------------------------------------------
# Phase-space witness
# ---------------------------------------------------------------------------


def _number_populations(rho: DensityOperator) -> np.ndarray:
    dA, dB = rho.dims
    return np.diag(rho.matrix).real.reshape(dA, dB)


def _warn_top_level(pop: np.ndarray) -> None:
    top = max(pop[-1, :].sum(), pop[:, -1].sum()) if pop.ndim == 2 else pop[-1]
    if top > TOP_LEVEL_WARN:
        warnings.warn(
            f"top Fock level holds population {top:.2e}; moments may be truncation-biased",
            TruncationWarning,
            stacklevel=3,
        )


def pnc_witness(rho: DensityOperator) -> float:
    """Normally ordered moment ``<:(n_A - n_B)^2:> = <(n_A - n_B)^2> - <n_A> - <n_B>``.

    Non-negative for every state with a non-negative P-function, so a
    negative value certifies P-nonclassicality.
    """
    if not rho.bipartite:
        raise StateError("witness needs a bipartite state")
    pop = _number_populations(rho)
    _warn_top_level(pop)
    j = np.arange(rho.dims[0])[:, None]
    k = np.arange(rho.dims[1])[None, :]
    return float(np.sum(pop * ((j - k) ** 2 - j - k)))


def single_mode_witness(rho: DensityOperator) -> float:
    """``<:(dn)^2:> = <n^2> - <n> - <n>^2``; negative means sub-Poissonian, hence P-nonclassical."""
    if rho.bipartite:
        raise StateError("expected a single-mode state")
    pop = np.diag(rho.matrix).real
    _warn_top_level(pop)
    n = np.arange(len(pop))
    mean = float(pop @ n)
    return float(pop @ n**2 - mean - mean**2)


# ---------------------------------------------------------------------------
# Distribution comparison
# ---------------------------------------------------------------------------


def tv_distance(p: Mapping, q: Mapping) -> float:
    """Half the L1 distance over the union of both supports."""
    for name, dist in (("p", p), ("q", q)):
        if any(v < 0 for v in dist.values()):
            raise ValueError(f"{name} has negative entries")
    keys = set(p) | set(q)
    return 0.5 * float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


# ---------------------------------------------------------------------------
# Structural classification
# ---------------------------------------------------------------------------


def _max_offdiag(M: np.ndarray) -> float:
    if M.shape[-1] < 2:
        return 0.0
    mask = ~np.eye(M.shape[-1], dtype=bool)
    return float(np.max(np.abs(M[..., mask])))


def _degenerate(lam: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.any(np.diff(np.sort(lam)) < tol))


def _classical_on_a(rho: DensityOperator, seed: int = 0) -> str | None:
    """Is ``rho = sum_i p_i |i><i| (x) rho_i`` for some basis of A?

    Returns "marginal" if the eigenbasis of rho_A works, "sweep" if only the
    fallback found one, None otherwise. The fallback diagonalises a random
    Hermitian combination of all A-blocks ``rho[:, k, :, l]``: those blocks
    commute exactly when a common A-basis exists, and a generic combination
    then has that basis as its eigenbasis.
    """
    t = rho.tensor()
    blocks = t.transpose(1, 3, 0, 2)  # (k, l, a, a')
    lam, V = np.linalg.eigh(partial_trace(rho, "B").matrix)
    rot = V.conj().T @ blocks @ V
    if _max_offdiag(rot) < STRUCT_TOL:
        return "marginal"
    if not _degenerate(lam):
        return None
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(blocks.shape[:2]) + 1j * rng.standard_normal(blocks.shape[:2])
    H = np.einsum("kl,klab->ab", w, blocks)
    H = H + H.conj().T
    _, V2 = np.linalg.eigh(H)
    rot = V2.conj().T @ blocks @ V2
    return "sweep" if _max_offdiag(rot) < STRUCT_TOL else None


def classify_state(rho: DensityOperator, caps: Caps = DEFAULT_CAPS) -> str:
    """One of "product", "CC", "CC (degenerate-basis)", "QC", "discordant".

    "QC" means classical on exactly one side.
    """
    if not rho.bipartite:
        raise StateError("classification needs a bipartite state")
    if max(rho.dims) > caps.classify_dim:
        raise CapacityError(f"dims {rho.dims} too large to classify")
    ra = partial_trace(rho, "B").matrix
    rb = partial_trace(rho, "A").matrix
    if np.max(np.abs(rho.matrix - np.kron(ra, rb))) < STRUCT_TOL:
        return "product"
    on_a = _classical_on_a(rho)
    on_b = _classical_on_a(rho.swapped())
    if on_a and on_b:
        return "CC" if on_a == on_b == "marginal" else "CC (degenerate-basis)"
    if on_a or on_b:
        return "QC"
    return "discordant"


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class CorrelationReport:
    mutual_information: float
    classical_correlation_J: float
    discord: float
    discord_AtoB: float
    discord_BtoA: float
    classical_correlation_J_BtoA: float
    certified_AtoB: bool
    certified_BtoA: bool
    classification: str
    witness_value: float
    basis_found: MeasurementBasis
    tv_distances: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["basis_found"] = self.basis_found.to_json()
        d["tv_distances"] = [{"label": k, "tv": v} for k, v in self.tv_distances]
        d["class"] = self.classification
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fock_count_tvs(rho: DensityOperator) -> list[tuple[str, float]]:
    """TV distances read off joint photon counting on both sides.

    ``joint_vs_product`` compares the count distribution with the product of
    its marginals; ``marginal_A_vs_B`` compares the two local count laws
    (padded to the larger cutoff).
    """
    dA, dB = rho.dims
    P = np.clip(np.diag(rho.matrix).real.reshape(dA, dB), 0, None)
    pa, pb = P.sum(axis=1), P.sum(axis=0)
    joint = {(j, k): P[j, k] for j in range(dA) for k in range(dB)}
    prod = {(j, k): pa[j] * pb[k] for j in range(dA) for k in range(dB)}
    return [
        ("joint_vs_product", tv_distance(joint, prod)),
        ("marginal_A_vs_B", tv_distance(dict(enumerate(pa)), dict(enumerate(pb)))),
    ]


def correlation_report(rho: DensityOperator, seed: int = 0, n_random: int = 2000, caps: Caps = DEFAULT_CAPS) -> CorrelationReport:
    ab = discord(rho, n_random=n_random, seed=seed, caps=caps)
    ba = discord(rho.swapped(), n_random=n_random, seed=seed, caps=caps)
    return CorrelationReport(
        mutual_information=ab.mutual_information,
        classical_correlation_J=ab.classical_correlation,
        discord=ab.discord,
        discord_AtoB=ab.discord,
        discord_BtoA=ba.discord,
        classical_correlation_J_BtoA=ba.classical_correlation,
        certified_AtoB=ab.certified,
        certified_BtoA=ba.certified,
        classification=classify_state(rho, caps),
        witness_value=pnc_witness(rho),
        basis_found=ab.basis,
        tv_distances=fock_count_tvs(rho),
    )
