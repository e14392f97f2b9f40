"""Fock-space machinery for lossless linear-optical networks.

Occupation vectors are plain tuples of non-negative ints, one entry per mode.
A network is an ``m x m`` complex unitary ``U`` acting on creation operators as
``a_j^dag -> sum_i U[i, j] a_i^dag``, so column ``j`` holds the amplitudes of a
photon entering mode ``j`` and row ``i`` those of a photon leaving mode ``i``.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .config import DEFAULT_CAPS, Caps, CapacityError

UNITARITY_TOL = 1e-12

# Gray-code index ranges are split into this many chunks once n reaches
# PARALLEL_MIN_N. The chunk layout never depends on the worker count, so the
# summation order (and hence every bit of the result) is fixed.
PARALLEL_MIN_N = 16
N_CHUNKS = 64
_BATCH_ROWS = 1 << 16


class UnitaryError(ValueError):
    """Matrix fails the unitarity check."""

    def __init__(self, message: str, deviation: float):
        super().__init__(message)
        self.deviation = deviation


class PhotonNumberMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# Occupation vectors
# ---------------------------------------------------------------------------


def occupation(counts: Sequence[int], m: int | None = None) -> tuple[int, ...]:
    """Validate ``counts`` and return it as a tuple."""
    occ = tuple(int(c) for c in counts)
    if len(occ) < 1:
        raise ValueError("occupation vector needs at least one mode")
    if m is not None and len(occ) != m:
        raise ValueError(f"occupation vector has {len(occ)} modes, expected {m}")
    if any(c < 0 for c in occ):
        raise ValueError(f"negative photon count in {occ}")
    return occ


def is_collision_free(occ: Sequence[int]) -> bool:
    return all(c in (0, 1) for c in occ)


def count_outputs(m: int, n: int, collision_free: bool = False) -> int:
    if collision_free:
        return math.comb(m, n)
    return math.comb(m + n - 1, n)


def _compositions(m: int, n: int):
    if m == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(m - 1, n - first):
            yield (first,) + rest


def enumerate_outputs(
    m: int, n: int, collision_free: bool = False, caps: Caps = DEFAULT_CAPS
) -> list[tuple[int, ...]]:
    """All occupation vectors of ``m`` modes holding ``n`` photons.

    Ordered lexicographically from the highest first entry down, so
    ``(m=2, n=2)`` gives ``[(2, 0), (1, 1), (0, 2)]``.
    """
    if m < 1 or n < 0:
        raise ValueError(f"need m >= 1 and n >= 0, got m={m}, n={n}")
    total = count_outputs(m, n, collision_free)
    if total > caps.enumeration:
        raise CapacityError(
            f"{total} output patterns for m={m}, n={n} exceeds enumeration cap {caps.enumeration}"
        )
    if collision_free:
        out = []
        for pos in itertools.combinations(range(m), n):
            v = [0] * m
            for p in pos:
                v[p] = 1
            out.append(tuple(v))
        return out
    return list(_compositions(m, n))


# ---------------------------------------------------------------------------
# Permanents
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _ryser_range(M, start, stop):
    # Signed Ryser sum over Gray-code subsets g(k) = k ^ (k >> 1), start <= k < stop.
    n = M.shape[0]
    rowsum = np.zeros(n, dtype=np.complex128)
    g = start ^ (start >> 1)
    size = 0
    for j in range(n):
        if (g >> j) & 1:
            size += 1
            for i in range(n):
                rowsum[i] += M[i, j]
    total = 0j
    if size > 0:
        prod = 1.0 + 0j
        for i in range(n):
            prod *= rowsum[i]
        total += prod if size % 2 == 0 else -prod
    for k in range(start + 1, stop):
        bit = 0
        while not (k >> bit) & 1:
            bit += 1
        if (g >> bit) & 1:
            for i in range(n):
                rowsum[i] -= M[i, bit]
            size -= 1
        else:
            for i in range(n):
                rowsum[i] += M[i, bit]
            size += 1
        g ^= 1 << bit
        prod = 1.0 + 0j
        for i in range(n):
            prod *= rowsum[i]
        if size % 2 == 0:
            total += prod
        else:
            total -= prod
    return total


@njit(cache=True, nogil=True)
def _ryser_batch(mats):
    k = mats.shape[0]
    n = mats.shape[1]
    out = np.empty(k, dtype=np.complex128)
    sign = 1.0 if n % 2 == 0 else -1.0
    for b in range(k):
        out[b] = sign * _ryser_range(mats[b], 0, 1 << n)
    return out


@njit(cache=True, nogil=True)
def _glynn(M):
    n = M.shape[0]
    colsum = np.zeros(n, dtype=np.complex128)
    for j in range(n):
        for i in range(n):
            colsum[j] += M[i, j]
    delta = np.ones(n, dtype=np.int64)
    sign = 1
    prod = 1.0 + 0j
    for j in range(n):
        prod *= colsum[j]
    total = prod
    for k in range(1, 1 << (n - 1)):
        bit = 0
        while not (k >> bit) & 1:
            bit += 1
        row = bit + 1
        if delta[row] == 1:
            for j in range(n):
                colsum[j] -= 2.0 * M[row, j]
        else:
            for j in range(n):
                colsum[j] += 2.0 * M[row, j]
        delta[row] = -delta[row]
        sign = -sign
        prod = 1.0 + 0j
        for j in range(n):
            prod *= colsum[j]
        total += sign * prod
    return total / (1 << (n - 1))


def _as_square(M) -> np.ndarray:
    A = np.ascontiguousarray(M, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {A.shape}")
    return A


def _chunk_bounds(n: int) -> list[tuple[int, int]]:
    size = 1 << n
    chunks = N_CHUNKS if n >= PARALLEL_MIN_N else 1
    step = size // chunks
    return [(c * step, (c + 1) * step) for c in range(chunks)]


def permanent(M, workers: int = 1, caps: Caps = DEFAULT_CAPS) -> complex:
    """Permanent via Ryser's formula with Gray-code subset ordering.

    ``O(2^n n)`` work. For ``n >= 16`` the subset range is cut into a fixed
    set of chunks that ``workers`` threads may share; partial sums are always
    added in chunk order, so the output is identical for any worker count.
    """
    A = _as_square(M)
    n = A.shape[0]
    if n == 0:
        return 1 + 0j
    if n > caps.permanent:
        raise CapacityError(f"permanent of size {n} exceeds cap {caps.permanent}")
    bounds = _chunk_bounds(n)
    if workers <= 1 or len(bounds) == 1:
        parts = [_ryser_range(A, lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _ryser_range(A, b[0], b[1]), bounds))
    total = 0j
    for p in parts:
        total += p
    return complex(-total if n % 2 else total)


def permanents(mats, workers: int = 1, caps: Caps = DEFAULT_CAPS) -> np.ndarray:
    """Permanents of a stack of equal-size square matrices, shape ``(K, n, n)``.

    Each matrix is handled whole by one worker, so results match
    :func:`permanent` with ``workers=1`` bit for bit.
    """
    A = np.ascontiguousarray(mats, dtype=np.complex128)
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise ValueError(f"expected a (K, n, n) stack, got shape {A.shape}")
    k, n = A.shape[0], A.shape[1]
    if n == 0:
        return np.ones(k, dtype=np.complex128)
    if n > caps.permanent:
        raise CapacityError(f"permanent of size {n} exceeds cap {caps.permanent}")
    if n >= PARALLEL_MIN_N:
        # keep chunked summation so batch and single-matrix results agree
        def one(i):
            return permanent(A[i], workers=1, caps=caps)

        if workers <= 1:
            return np.array([one(i) for i in range(k)], dtype=np.complex128)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, range(k))), dtype=np.complex128)
    if workers <= 1 or k < 2:
        return _ryser_batch(A)
    parts = np.array_split(np.arange(k), min(workers, k))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        res = list(pool.map(lambda idx: _ryser_batch(A[idx]), parts))
    return np.concatenate(res)


def permanent_glynn(M) -> complex:
    """Glynn's formula with Gray-code sign flips; independent cross-check kernel."""
    A = _as_square(M)
    if A.shape[0] == 0:
        return 1 + 0j
    return complex(_glynn(A))


def permanent_naive(M) -> complex:
    """Literal sum over all ``n!`` permutations. Reference oracle, keep n small."""
    A = _as_square(M)
    n = A.shape[0]
    if n == 0:
        return 1 + 0j
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    terms = A[np.arange(n), perms].prod(axis=1)
    return complex(terms.sum())


# ---------------------------------------------------------------------------
# Transition amplitudes
# ---------------------------------------------------------------------------


def _repeat_index(occ: Sequence[int]) -> np.ndarray:
    return np.repeat(np.arange(len(occ)), occ)


def _check_pair(U: np.ndarray, input_occ, output_occ):
    m = U.shape[0]
    n_in = occupation(input_occ, m)
    n_out = occupation(output_occ, m)
    if sum(n_in) != sum(n_out):
        raise PhotonNumberMismatch(
            f"input carries {sum(n_in)} photons but output carries {sum(n_out)}"
        )
    return n_in, n_out


def build_submatrix(U, input_occ, output_occ) -> np.ndarray:
    """Submatrix whose permanent gives the ``input -> output`` amplitude.

    Column ``j`` of ``U`` is repeated ``input_occ[j]`` times, then row ``i``
    ``output_occ[i]`` times, both in ascending mode order.
    """
    U = np.asarray(U, dtype=np.complex128)
    n_in, n_out = _check_pair(U, input_occ, output_occ)
    if sum(n_in) == 0:
        raise ValueError("submatrix needs at least one photon")
    return U[:, _repeat_index(n_in)][_repeat_index(n_out), :]


def _factorial_norm(occ: Sequence[int]) -> float:
    return float(math.prod(math.factorial(c) for c in occ))


def transition_probability(U, input_occ, output_occ, caps: Caps = DEFAULT_CAPS) -> float:
    """``|Per A|^2 / (prod n_i! prod s_j!)`` for one input/output pair."""
    U = np.asarray(U, dtype=np.complex128)
    n_in, n_out = _check_pair(U, input_occ, output_occ)
    if sum(n_in) == 0:
        return 1.0
    A = build_submatrix(U, n_in, n_out)
    per = permanents(A[None], caps=caps)
    norm = np.array([_factorial_norm(n_out) * _factorial_norm(n_in)])
    return float((np.abs(per) ** 2 / norm)[0])


def output_distribution(
    U, input_occ, caps: Caps = DEFAULT_CAPS, workers: int = 1
) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Every output pattern for ``input_occ`` and its probability.

    Patterns come in :func:`enumerate_outputs` order. Probabilities are
    computed with the same kernel as :func:`transition_probability`.
    """
    U = np.asarray(U, dtype=np.complex128)
    m = U.shape[0]
    n_in = occupation(input_occ, m)
    n = sum(n_in)
    if n > caps.permanent:
        raise CapacityError(f"{n} photons exceeds permanent cap {caps.permanent}")
    outputs = enumerate_outputs(m, n, caps=caps)
    if n == 0:
        return outputs, np.ones(1)
    Ucols = U[:, _repeat_index(n_in)]
    rows = np.array([_repeat_index(s) for s in outputs], dtype=np.intp)
    norms = np.array([_factorial_norm(s) for s in outputs]) * _factorial_norm(n_in)
    probs = np.empty(len(outputs))
    for lo in range(0, len(outputs), _BATCH_ROWS):
        hi = min(lo + _BATCH_ROWS, len(outputs))
        per = permanents(Ucols[rows[lo:hi]], workers=workers, caps=caps)
        probs[lo:hi] = np.abs(per) ** 2 / norms[lo:hi]
    return outputs, probs


# ---------------------------------------------------------------------------
# Unitaries
# ---------------------------------------------------------------------------


def unitarity_deviation(U) -> float:
    U = np.asarray(U, dtype=np.complex128)
    return float(np.max(np.abs(U @ U.conj().T - np.eye(U.shape[0]))))


def check_unitary(U, tol: float = UNITARITY_TOL) -> np.ndarray:
    U = np.asarray(U, dtype=np.complex128)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or U.shape[0] < 1:
        raise UnitaryError(f"expected a non-empty square matrix, got shape {U.shape}", np.inf)
    dev = unitarity_deviation(U)
    if not dev <= tol:
        raise UnitaryError(f"matrix is not unitary: max |UU^dag - I| = {dev:.3e} > {tol:.0e}", dev)
    return U


def haar_unitary(m: int, seed=None) -> np.ndarray:
    """Haar-random ``m x m`` unitary from a QR-factorised Ginibre matrix.

    Columns of Q are multiplied by the phases of diag(R); without that step
    the QR output is not Haar distributed.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def beamsplitter() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)


def unitary_to_json(U) -> dict:
    U = np.asarray(U, dtype=np.complex128)
    return {"m": U.shape[0], "re": U.real.tolist(), "im": U.imag.tolist()}


def unitary_from_json(data: dict, tol: float = UNITARITY_TOL) -> np.ndarray:
    try:
        m = int(data["m"])
        U = np.array(data["re"], dtype=float) + 1j * np.array(data["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise UnitaryError(f"malformed matrix record: {exc}", np.inf) from exc
    if U.shape != (m, m):
        raise UnitaryError(f"matrix shape {U.shape} does not match m={m}", np.inf)
    return check_unitary(U, tol)


def save_unitary(path: str | os.PathLike, U) -> None:
    Path(path).write_text(json.dumps(unitary_to_json(U)) + "\n")


def load_unitary(path: str | os.PathLike, tol: float = UNITARITY_TOL) -> np.ndarray:
    return unitary_from_json(json.loads(Path(path).read_text()), tol)
