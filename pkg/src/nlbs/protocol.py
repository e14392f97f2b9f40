"""Two-party heralded sampling with fully dephased TMSV sources.

Charlie's ``m`` sources emit perfectly number-correlated pairs; Bob counts
photons on his halves and thereby heralds Alice's input pattern, which she
sends through her network ``U`` before counting. Also contains the exact
joint table for small instances and the phase-space sampler that reproduces
Alice's local statistics classically.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .config import DEFAULT_CAPS, Caps, CapacityError
from .fock import check_unitary, enumerate_outputs, is_collision_free, output_distribution
from .states import check_epsilon, geometric_pmf, thermal_mean

BLOCK_SHOTS = 4096
COLLISION_POLICIES = ("retain", "filter")
DEFAULT_TABLE_MASS = 1 - 1e-6

# spawn-key domains keep the quantum and classical streams disjoint
_PROTOCOL_STREAM = 0
_CLASSICAL_STREAM = 1


class ConfigError(ValueError):
    pass


@dataclass
class ProtocolConfig:
    m: int
    epsilon: float
    unitary: np.ndarray | None = None  # None means the identity network
    shots: int = 1000
    seed: int = 0
    collision_policy: str = "retain"
    caps: Caps = field(default_factory=Caps)
    epsilons: tuple[float, ...] | None = None  # optional per-pair override

    def __post_init__(self):
        if int(self.m) < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        self.m = int(self.m)
        try:
            self.epsilon = check_epsilon(self.epsilon)
            if self.epsilons is not None:
                self.epsilons = tuple(check_epsilon(e) for e in self.epsilons)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.epsilons is not None and len(self.epsilons) != self.m:
            raise ConfigError(f"{len(self.epsilons)} per-pair epsilons for m={self.m}")
        if int(self.shots) < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        self.shots = int(self.shots)
        if self.collision_policy not in COLLISION_POLICIES:
            raise ConfigError(f"collision_policy must be one of {COLLISION_POLICIES}")
        if self.unitary is not None:
            U = np.asarray(self.unitary, dtype=np.complex128)
            if U.shape != (self.m, self.m):
                raise ConfigError(f"unitary has shape {U.shape}, config has m={self.m}")
            try:
                self.unitary = check_unitary(U)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

    @property
    def pair_epsilons(self) -> np.ndarray:
        if self.epsilons is not None:
            return np.array(self.epsilons)
        return np.full(self.m, self.epsilon)

    @property
    def is_identity(self) -> bool:
        return self.unitary is None


@dataclass(frozen=True)
class SampleRecord:
    bob: tuple[int, ...]
    alice: tuple[int, ...] | None  # None when caps stopped Alice's sampler
    total_n: int
    collision: bool
    herald_prob: float

    @property
    def unsampled(self) -> bool:
        return self.alice is None

    def to_json(self) -> str:
        return json.dumps(
            {
                "bob": list(self.bob),
                "alice": None if self.alice is None else list(self.alice),
                "n": self.total_n,
                "collision": self.collision,
                "herald_p": self.herald_prob,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        d = json.loads(line)
        return cls(
            bob=tuple(d["bob"]),
            alice=None if d["alice"] is None else tuple(d["alice"]),
            total_n=int(d["n"]),
            collision=bool(d["collision"]),
            herald_prob=float(d["herald_p"]),
        )


# ---------------------------------------------------------------------------
# Source law
# ---------------------------------------------------------------------------


def herald_probability(epsilon: float, m: int, n: int) -> float:
    """Probability of any one Bob pattern with ``n`` photons in total."""
    eps = check_epsilon(epsilon)
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    return (1 - eps**2) ** m * eps ** (2 * n)


def source_probability(epsilons: Sequence[float], counts: Sequence[int]) -> float:
    """Product of per-pair geometric weights; equals the herald law for equal epsilons."""
    return float(math.prod(geometric_pmf(e, c) for e, c in zip(epsilons, counts)))


def total_photon_law(epsilon: float, m: int, n: int) -> float:
    """``C(m+n-1, n) (1-eps^2)^m eps^(2n)``: law of the summed counts."""
    return math.comb(m + n - 1, n) * herald_probability(epsilon, m, n)


def total_photon_pmf(epsilons: Sequence[float], n_max: int) -> np.ndarray:
    """Law of the summed counts for ``n = 0..n_max``, by convolving the pair laws."""
    out = np.zeros(n_max + 1)
    out[0] = 1.0
    for e in epsilons:
        out = np.convolve(out, geometric_pmf(e, np.arange(n_max + 1)))[: n_max + 1]
    return out


def default_n_max(epsilons: Sequence[float], mass: float = DEFAULT_TABLE_MASS) -> int:
    """Smallest ``n`` whose cumulative total-photon mass exceeds ``mass``."""
    n = 8
    while True:
        cdf = np.cumsum(total_photon_pmf(epsilons, n))
        hit = np.nonzero(cdf > mass)[0]
        if hit.size:
            return int(hit[0])
        n *= 2


def _block_rng(seed: int, domain: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(domain, block)))


def sample_source(config: ProtocolConfig, rng: np.random.Generator, size: int | None = None):
    """Bob's counts, which are also Alice's heralded input pattern.

    One i.i.d. geometric count per pair. With ``size`` given, returns an
    ``(size, m)`` int array instead of a single tuple.
    """
    eps = config.pair_epsilons
    shape = (config.m,) if size is None else (size, config.m)
    counts = rng.geometric(1.0 - eps**2, size=shape) - 1
    if size is None:
        return tuple(int(c) for c in counts)
    return counts


# ---------------------------------------------------------------------------
# Alice's sampler
# ---------------------------------------------------------------------------


class _DistributionCache:
    """Per-run memo of Alice's conditional output law, keyed by input pattern."""

    def __init__(self, U, caps: Caps):
        self.U = U
        self.caps = caps
        self._store: dict = {}

    def get(self, occ: tuple[int, ...]):
        hit = self._store.get(occ)
        if hit is None:
            try:
                outputs, probs = output_distribution(self.U, occ, caps=self.caps)
                hit = (outputs, np.cumsum(probs))
            except CapacityError as exc:
                hit = exc
            self._store[occ] = hit
        if isinstance(hit, CapacityError):
            raise hit
        return hit


def _draw(outputs, cdf, u: float) -> tuple[int, ...]:
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return outputs[min(idx, len(outputs) - 1)]


def sample_alice_output(U, input_occ, rng: np.random.Generator, caps: Caps = DEFAULT_CAPS):
    """Exact draw from Alice's output law for a fixed input pattern.

    Raises :class:`CapacityError` when the pattern is too large to enumerate.
    """
    outputs, probs = output_distribution(U, input_occ, caps=caps)
    return _draw(outputs, np.cumsum(probs), rng.random())


def _run_block(config: ProtocolConfig, block: int, cache: _DistributionCache | None):
    rng = _block_rng(config.seed, _PROTOCOL_STREAM, block)
    lo = block * BLOCK_SHOTS
    size = min(BLOCK_SHOTS, config.shots - lo)
    bobs = sample_source(config, rng, size)
    uniforms = rng.random(size)
    eps = config.pair_epsilons
    records = []
    for counts, u in zip(bobs, uniforms):
        bob = tuple(int(c) for c in counts)
        collision = not is_collision_free(bob)
        if collision and config.collision_policy == "filter":
            continue
        if cache is None:
            alice = bob
        else:
            try:
                alice = _draw(*cache.get(bob), u)
            except CapacityError:
                alice = None
        records.append(
            SampleRecord(bob, alice, sum(bob), collision, source_probability(eps, bob))
        )
    return records


def iter_protocol(config: ProtocolConfig, threads: int = 1) -> Iterator[SampleRecord]:
    """Stream protocol shots in shot order.

    Shots are grouped in fixed blocks of ``BLOCK_SHOTS``, each with its own
    generator derived from ``(seed, block index)``. The stream is therefore
    the same for every ``threads`` value.
    """
    cache = None if config.is_identity else _DistributionCache(config.unitary, config.caps)
    n_blocks = -(-config.shots // BLOCK_SHOTS)
    if threads <= 1:
        for b in range(n_blocks):
            yield from _run_block(config, b, cache)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for recs in pool.map(lambda b: _run_block(config, b, cache), range(n_blocks)):
            yield from recs


def run_protocol(config: ProtocolConfig, threads: int = 1) -> list[SampleRecord]:
    return list(iter_protocol(config, threads))


def write_records(path: str | os.PathLike, records: Iterable[SampleRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path: str | os.PathLike) -> list[SampleRecord]:
    with open(path) as fh:
        return [SampleRecord.from_json(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Exact joint statistics
# ---------------------------------------------------------------------------


@dataclass
class JointDistributionTable:
    entries: dict[tuple[tuple[int, ...], tuple[int, ...]], float]
    m: int
    n_max: int
    epsilons: tuple[float, ...]
    caps: Caps

    @property
    def mass(self) -> float:
        return float(sum(self.entries.values()))

    @property
    def deficit(self) -> float:
        return 1.0 - self.mass

    def alice_marginal(self) -> dict[tuple[int, ...], float]:
        out: dict = {}
        for (_, a), p in self.entries.items():
            out[a] = out.get(a, 0.0) + p
        return out

    def bob_marginal(self) -> dict[tuple[int, ...], float]:
        out: dict = {}
        for (b, _), p in self.entries.items():
            out[b] = out.get(b, 0.0) + p
        return out


def exact_joint_distribution(config: ProtocolConfig, n_max: int | None = None) -> JointDistributionTable:
    """``p(s_B) p(s_A | U, s_B)`` for every Bob pattern with at most ``n_max`` photons."""
    eps = tuple(float(e) for e in config.pair_epsilons)
    if n_max is None:
        n_max = default_n_max(eps)
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    caps = config.caps
    if not config.is_identity and n_max > caps.permanent:
        raise CapacityError(f"n_max={n_max} exceeds permanent cap {caps.permanent}")
    entries = {}
    for n in range(n_max + 1):
        for bob in enumerate_outputs(config.m, n, caps=caps):
            pb = source_probability(eps, bob)
            if config.is_identity:
                entries[(bob, bob)] = pb
                continue
            outputs, probs = output_distribution(config.unitary, bob, caps=caps)
            for alice, pa in zip(outputs, probs):
                entries[(bob, alice)] = pb * float(pa)
    return JointDistributionTable(entries, config.m, n_max, eps, caps)


def conditional_symmetry_check(table: JointDistributionTable) -> float:
    """Largest disagreement between the two herald factorisations of the table.

    Reading Bob-first, each entry is ``herald(s_B) * p(s_A | s_B)``; reading
    Alice-first it is ``herald(s_A) * p(s_B | s_A)``. Both conditionals are
    taken from the entries divided by the analytic herald weight, so each
    must sum to one over its free pattern; the return value is the worst
    violation of that, together with the worst entrywise mismatch between the
    two readings.
    """
    eps = table.epsilons
    rows: dict = {}
    cols: dict = {}
    worst = 0.0
    for (b, a), p in table.entries.items():
        hb = source_probability(eps, b)
        ha = source_probability(eps, a)
        via_bob = hb * (p / hb)
        via_alice = ha * (p / ha)
        worst = max(worst, abs(via_bob - via_alice))
        rows[b] = rows.get(b, 0.0) + p / hb
        cols[a] = cols.get(a, 0.0) + p / ha
    for b, s in rows.items():
        worst = max(worst, abs(s - 1.0) * source_probability(eps, b))
    for a, s in cols.items():
        worst = max(worst, abs(s - 1.0) * source_probability(eps, a))
    return worst


def pattern_str(occ: Sequence[int]) -> str:
    return "-".join(str(int(c)) for c in occ)


def parse_pattern(text: str) -> tuple[int, ...]:
    return tuple(int(c) for c in text.split("-"))


def write_table_csv(path: str | os.PathLike, table: JointDistributionTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bob_pattern", "alice_pattern", "probability"])
        for (b, a), p in sorted(table.entries.items()):
            w.writerow([pattern_str(b), pattern_str(a), repr(float(p))])


def read_table_csv(path: str | os.PathLike) -> dict[tuple[tuple[int, ...], tuple[int, ...]], float]:
    with open(path, newline="") as fh:
        return {
            (parse_pattern(r["bob_pattern"]), parse_pattern(r["alice_pattern"])): float(r["probability"])
            for r in csv.DictReader(fh)
        }


# ---------------------------------------------------------------------------
# Classical phase-space sampler for Alice's local statistics
# ---------------------------------------------------------------------------


def sample_thermal_points(epsilon: float, m: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Coherent amplitudes drawn from the thermal P-function (complex Gaussian, ``E|a|^2 = nbar``)."""
    sd = math.sqrt(thermal_mean(epsilon) / 2)
    return sd * (rng.standard_normal((size, m)) + 1j * rng.standard_normal((size, m)))


def classical_pattern_probability(U, alpha, pattern) -> float:
    """Probability of ``pattern`` given input amplitudes ``alpha``: product of Poisson laws in ``|U alpha|^2``."""
    zeta = np.asarray(U) @ np.asarray(alpha)
    mu = np.abs(zeta) ** 2
    s = np.asarray(pattern)
    return float(np.exp(-mu.sum()) * np.prod(mu**s) / math.prod(math.factorial(int(c)) for c in s))


def coherent_click_formula(U, alpha, pattern) -> float:
    """``exp(-sum |alpha|^2) prod |zeta_i|^(2 s_i)`` for a {0,1} pattern, ``zeta = U alpha``."""
    if not is_collision_free(pattern):
        raise ValueError("formula only covers patterns with entries in {0, 1}")
    alpha = np.asarray(alpha)
    zeta = np.asarray(U) @ alpha
    return float(np.exp(-np.sum(np.abs(alpha) ** 2)) * np.prod(np.abs(zeta) ** (2 * np.asarray(pattern))))


def _classical_block(U, epsilon, m, size, rng):
    alpha = sample_thermal_points(epsilon, m, size, rng)
    zeta = alpha if U is None else alpha @ np.asarray(U).T
    return rng.poisson(np.abs(zeta) ** 2)


def classical_local_sampler(U, epsilon: float, m: int, shots: int, rng=0, threads: int = 1) -> np.ndarray:
    """Alice's local patterns from thermal phase-space points, shape ``(shots, m)``.

    ``rng`` may be a Generator (drawn from directly) or an integer seed, in
    which case shots are produced in fixed blocks with derived streams and
    the result does not depend on ``threads``.
    """
    if U is not None and np.asarray(U).shape != (m, m):
        raise ValueError(f"unitary shape {np.asarray(U).shape} does not match m={m}")
    if isinstance(rng, np.random.Generator):
        return _classical_block(U, epsilon, m, shots, rng)
    seed = int(rng)
    n_blocks = -(-shots // BLOCK_SHOTS)

    def block(b):
        size = min(BLOCK_SHOTS, shots - b * BLOCK_SHOTS)
        return _classical_block(U, epsilon, m, size, _block_rng(seed, _CLASSICAL_STREAM, b))

    if threads <= 1:
        parts = [block(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, range(n_blocks)))
    return np.concatenate(parts) if parts else np.zeros((0, m), dtype=np.int64)


def bucket(pattern: Sequence[int], top: int = 2) -> tuple[int, ...]:
    """Clip counts at ``top`` so patterns fall in per-mode buckets {0, 1, ..., >=top}."""
    return tuple(min(int(c), top) for c in pattern)


def empirical_distribution(patterns: Iterable[Sequence[int]], top: int | None = None) -> dict:
    counts: dict = {}
    total = 0
    for p in patterns:
        key = bucket(p, top) if top is not None else tuple(int(c) for c in p)
        counts[key] = counts.get(key, 0) + 1
        total += 1
    return {k: v / total for k, v in counts.items()} if total else {}
