"""Markov chains with a distinguished origin.

Three families are supported: the nearest-neighbour walk on Z with
up-probability ``p``, the simple symmetric walk on Z^d (d <= 4) and an
arbitrary irreducible finite stochastic matrix.  Chains are immutable and
can be shared freely between workers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

ROW_TOL = 1e-12
MAX_LATTICE_DIM = 4


class ChainError(ValueError):
    """Invalid chain definition."""


class RowSumError(ChainError):
    pass


class NegativeEntry(ChainError):
    pass


class NotIrreducible(ChainError):
    pass


class InvalidState(ChainError):
    pass


@dataclass(frozen=True)
class BiasedWalkZ:
    p: float

    @property
    def degenerate(self) -> bool:
        # a monotone walk never comes back
        return self.p in (0.0, 1.0)

    @property
    def origin(self) -> tuple[int, ...]:
        return (0,)

    @property
    def dim(self) -> int:
        return 1


@dataclass(frozen=True)
class SimpleWalkZd:
    d: int

    @property
    def degenerate(self) -> bool:
        return False

    @property
    def origin(self) -> tuple[int, ...]:
        return (0,) * self.d

    @property
    def dim(self) -> int:
        return self.d


@dataclass(frozen=True)
class FiniteStochastic:
    rows: tuple[tuple[float, ...], ...]
    origin: int = 0
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mat = np.array(self.rows, dtype=float)
        mat.setflags(write=False)
        object.__setattr__(self, "_matrix", mat)

    @property
    def n_states(self) -> int:
        return len(self.rows)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def degenerate(self) -> bool:
        return False


ChainSpec = Union[BiasedWalkZ, SimpleWalkZd, FiniteStochastic]
State = Union[int, tuple[int, ...]]


def make_biased_walk(p: float) -> BiasedWalkZ:
    p = float(p)
    if not math.isfinite(p) or not 0.0 <= p <= 1.0:
        raise ChainError(f"p must be a probability, got {p!r}")
    return BiasedWalkZ(p)


def make_simple_walk(d: int) -> SimpleWalkZd:
    if isinstance(d, bool) or int(d) != d:
        raise ChainError(f"dimension must be an integer, got {d!r}")
    d = int(d)
    if d < 1:
        raise ChainError(f"dimension must be >= 1, got {d}")
    if d > MAX_LATTICE_DIM:
        raise ChainError(f"dimension {d} exceeds the supported maximum {MAX_LATTICE_DIM}")
    return SimpleWalkZd(d)


def _strongly_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]

    def reach(a):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = []
            for i in frontier:
                for j in np.flatnonzero(a[i] & ~seen):
                    seen[j] = True
                    nxt.append(j)
            frontier = nxt
        return seen.all()

    return reach(adj) and reach(adj.T)


def make_finite(rows, origin: int = 0) -> FiniteStochastic:
    mat = np.asarray(rows, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
        raise ChainError(f"transition matrix must be square and non-empty, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ChainError("transition matrix has non-finite entries")
    n = mat.shape[0]
    if isinstance(origin, bool) or int(origin) != origin or not 0 <= int(origin) < n:
        raise ChainError(f"origin {origin!r} is not a state index in [0, {n})")
    if np.any(mat < 0):
        i, j = np.argwhere(mat < 0)[0]
        raise NegativeEntry(f"entry ({i}, {j}) is negative: {mat[i, j]}")
    if np.any(mat > 1):
        i, j = np.argwhere(mat > 1)[0]
        raise ChainError(f"entry ({i}, {j}) exceeds 1: {mat[i, j]}")
    sums = mat.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        raise RowSumError(f"row {bad[0]} sums to {sums[bad[0]]!r}")
    if not _strongly_connected(mat > 0):
        raise NotIrreducible("transition graph is not strongly connected")
    return FiniteStochastic(tuple(tuple(float(x) for x in r) for r in mat), int(origin))


def _check_lattice_state(chain, s) -> tuple[int, ...]:
    if isinstance(s, (int, np.integer)) and chain.dim == 1:
        s = (int(s),)
    if isinstance(s, str):
        raise InvalidState(f"{s!r} is not a lattice point")
    try:
        s = tuple(int(x) for x in s)
    except (TypeError, ValueError):
        raise InvalidState(f"{s!r} is not a lattice point") from None
    if len(s) != chain.dim:
        raise InvalidState(f"state {s} has dimension {len(s)}, chain has {chain.dim}")
    return s


def step_distribution(chain: ChainSpec, s: State) -> list[tuple[State, float]]:
    """One-step law from ``s``, zero-mass moves dropped, sorted by state."""
    if isinstance(chain, BiasedWalkZ):
        (x,) = _check_lattice_state(chain, s)
        out = [(x - 1, 1.0 - chain.p), (x + 1, chain.p)]
        return [(y, w) for y, w in out if w > 0]
    if isinstance(chain, SimpleWalkZd):
        x = _check_lattice_state(chain, s)
        w = 1.0 / (2 * chain.d)
        nbrs = []
        for k in range(chain.d):
            for step in (-1, 1):
                y = list(x)
                y[k] += step
                nbrs.append(tuple(y))
        return [(y, w) for y in sorted(nbrs)]
    if isinstance(chain, FiniteStochastic):
        if isinstance(s, bool) or not isinstance(s, (int, np.integer)) or not 0 <= s < chain.n_states:
            raise InvalidState(f"{s!r} is not a state of a {chain.n_states}-state chain")
        row = chain.rows[int(s)]
        return [(j, w) for j, w in enumerate(row) if w > 0]
    raise TypeError(f"unknown chain type {type(chain).__name__}")


def step_sample(chain: ChainSpec, s: State, rng: np.random.Generator) -> State:
    """Draw the next state by inverse CDF over ``step_distribution``; one uniform per call."""
    dist = step_distribution(chain, s)
    u = rng.random()
    acc = 0.0
    for y, w in dist:
        acc += w
        if u < acc:
            return y
    return dist[-1][0]


def exact_return_beta(chain: ChainSpec) -> float | None:
    """Closed-form probability of ever returning to the origin, when one is known."""
    if isinstance(chain, BiasedWalkZ):
        return 1.0 - abs(1.0 - 2.0 * chain.p)
    if isinstance(chain, FiniteStochastic):
        return 1.0
    if isinstance(chain, SimpleWalkZd):
        return 1.0 if chain.d <= 2 else None
    raise TypeError(f"unknown chain type {type(chain).__name__}")


def chain_to_dict(chain: ChainSpec) -> dict:
    if isinstance(chain, BiasedWalkZ):
        return {"kind": "biased_walk_z", "p": chain.p}
    if isinstance(chain, SimpleWalkZd):
        return {"kind": "simple_walk_zd", "d": chain.d}
    if isinstance(chain, FiniteStochastic):
        return {"kind": "finite", "rows": [list(r) for r in chain.rows], "origin": chain.origin}
    raise TypeError(f"unknown chain type {type(chain).__name__}")


def chain_from_dict(doc: dict) -> ChainSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ChainError("chain document must be an object with a 'kind' field")
    kind = doc["kind"]
    try:
        if kind == "biased_walk_z":
            return make_biased_walk(doc["p"])
        if kind == "simple_walk_zd":
            return make_simple_walk(doc["d"])
        if kind == "finite":
            return make_finite(doc["rows"], doc.get("origin", 0))
    except KeyError as exc:
        raise ChainError(f"chain of kind {kind!r} is missing field {exc}") from None
    except TypeError as exc:
        raise ChainError(str(exc)) from None
    raise ChainError(f"unknown chain kind {kind!r}")


def load_chain(text: str) -> ChainSpec:
    """Parse a chain from inline JSON or from a path to a JSON file."""
    text = text.strip()
    if not text.startswith("{"):
        path = Path(text)
        if not path.is_file():
            raise ChainError(f"--chain is neither JSON nor an existing file: {text!r}")
        text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChainError(f"invalid chain JSON: {exc}") from None
    return chain_from_dict(doc)
