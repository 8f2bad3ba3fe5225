"""Compiled inner loops for the branching simulation.

Randomness is SplitMix64 keyed by (seed, trial, individual), so an
individual's path never depends on the order in which trials or
individuals are processed.
"""
import numpy as np
from numba import njit

KIND_BIASED = 0
KIND_LATTICE = 1
KIND_FINITE = 2

EXTINCT = 0
SURVIVED = 1
CENSORED = 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TRIAL_SALT = np.uint64(0xD1B54A32D192ED03)
_INDIV_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_key(seed, trial, individual):
    k = _mix(np.uint64(seed) + _GOLDEN)
    k = _mix(k ^ _mix(np.uint64(trial) + _TRIAL_SALT))
    return _mix(k ^ _mix(np.uint64(individual) + _INDIV_SALT))


@njit(cache=True, nogil=True)
def run_individual(kind, p, d, cum, origin, alpha, max_steps, state, times, limit):
    """Walk from the origin until death; return (returns, steps, censored).

    Each step consumes one uniform u: u >= alpha is death, otherwise
    u / alpha drives the move.  The first ``limit`` return times (steps
    since birth) are written to ``times``.
    """
    returns = 0
    steps = 0
    q = 1.0 - p
    two_d = 2 * d
    pos = np.zeros(4, np.int64)
    nonzero = 0
    x = origin
    while steps < max_steps:
        state = state + _GOLDEN
        u = (_mix(state) >> _S11) * _INV53
        if u >= alpha:
            return returns, steps, False
        v = u / alpha
        steps += 1
        if kind == KIND_BIASED:
            if v < q:
                pos[0] -= 1
            else:
                pos[0] += 1
            home = pos[0] == 0
        elif kind == KIND_LATTICE:
            k = int(v * two_d)
            if k >= two_d:
                k = two_d - 1
            axis = k // 2
            old = pos[axis]
            new = old - 1 if k % 2 == 0 else old + 1
            pos[axis] = new
            if old == 0:
                nonzero += 1
            elif new == 0:
                nonzero -= 1
            home = nonzero == 0
        else:
            row = cum[x]
            j = np.searchsorted(row, v, side="right")
            n = row.shape[0]
            if j >= n:
                j = n - 1
            # skip zero-width entries left by rounding at the top of the row
            while j > 0 and row[j] == row[j - 1]:
                j -= 1
            x = j
            home = x == origin
        if home:
            if returns < limit:
                times[returns] = steps
            returns += 1
    return returns, steps, True


@njit(cache=True, nogil=True)
def sample_returns(kind, p, d, cum, origin, alpha, max_steps, seed, start, count, out, censored):
    times = np.empty(1, np.int64)
    for i in range(count):
        st = stream_key(seed, start + i, 0)
        r, s, c = run_individual(kind, p, d, cum, origin, alpha, max_steps, st, times, 0)
        out[i] = r
        censored[i] = c


@njit(cache=True, nogil=True)
def simulate_trial(kind, p, d, cum, origin, alpha, max_steps, birth_cap, horizon, seed, trial):
    """Process one genealogy breadth-first.

    Returns (status, extinction_time, births, peak_pending, steps, alive).
    Births are recorded with their real time so that extinction_time is
    the first time with nobody alive.
    """
    queue = np.empty(birth_cap + 1, np.int64)
    times = np.empty(birth_cap + 1, np.int64)
    queue[0] = 0
    head = 0
    tail = 1
    births = 0
    peak = 1
    total_steps = 0
    last_alive = 0
    individual = 0
    while head < tail:
        born = queue[head]
        head += 1
        st = stream_key(seed, trial, individual)
        individual += 1
        room = birth_cap - births
        r, s, cens = run_individual(kind, p, d, cum, origin, alpha, max_steps, st, times, room)
        total_steps += s
        if born + s + 1 > last_alive:
            last_alive = born + s + 1
        if r >= room:
            return SURVIVED, -1, birth_cap, max(peak, tail - head + room), total_steps, tail - head + room
        for i in range(r):
            queue[tail] = born + times[i]
            tail += 1
        births += r
        pending = tail - head
        if pending > peak:
            peak = pending
        if cens:
            return CENSORED, -1, births, peak, total_steps, pending + 1
        if total_steps > horizon:
            return CENSORED, -1, births, peak, total_steps, pending
    return EXTINCT, last_alive, births, peak, total_steps, 0
