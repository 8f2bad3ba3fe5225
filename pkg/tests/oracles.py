"""Independent reference values: closed forms and brute-force enumeration."""
import itertools
import math
from fractions import Fraction


def central_binomial_return(n, p=0.5):
    """P(walk on Z with up-probability p is at 0 after n steps)."""
    if n % 2:
        return 0.0
    m = n // 2
    # exact rational when p is a simple fraction, else float
    return math.comb(n, m) * (p * (1 - p)) ** m


def central_binomial_exact(n):
    if n % 2:
        return Fraction(0)
    return Fraction(math.comb(n, n // 2), 4 ** (n // 2))


def first_return_biased(n, p):
    """f_2m = C(2m, m) (pq)^m / (2m - 1)."""
    if n % 2 or n == 0:
        return 0.0
    m = n // 2
    return math.comb(2 * m, m) * (p * (1 - p)) ** m / (2 * m - 1)


def enumerate_lattice_returns(d, n_max):
    """p_n for the simple walk on Z^d by listing every path (small n only)."""
    moves = []
    for k in range(d):
        for s in (-1, 1):
            v = [0] * d
            v[k] = s
            moves.append(tuple(v))
    out = [Fraction(1)]
    for n in range(1, n_max + 1):
        hits = 0
        for path in itertools.product(moves, repeat=n):
            if all(sum(c) == 0 for c in zip(*path)):
                hits += 1
        out.append(Fraction(hits, (2 * d) ** n))
    return out


def mu_biased_closed(p, alpha):
    """sum_{n>=1} alpha^n p_n = (1 - 4 p q alpha^2)^(-1/2) - 1."""
    return (1.0 - 4 * p * (1 - p) * alpha**2) ** -0.5 - 1.0


def F_biased_closed(p, alpha):
    """Probability of a return before death: 1 - sqrt(1 - 4 p q alpha^2)."""
    return 1.0 - math.sqrt(1.0 - 4 * p * (1 - p) * alpha**2)


def alpha_c_biased_closed(p):
    return math.sqrt(3.0 / (16.0 * p * (1 - p)))


def geometric_survival(b):
    """1 - smallest root of b s^2 - s + (1 - b) = 0 in [0, 1]."""
    disc = math.sqrt(1 - 4 * b * (1 - b))
    roots = [(1 - disc) / (2 * b), (1 + disc) / (2 * b)]
    q = min(r for r in roots if r >= -1e-15)
    return 1.0 - min(q, 1.0)
