"""Return probability of the simple walk on Z^3 as the series length grows.

Prints the raw partial sum, the tail-corrected estimate and the Green-sum
cross-check for each n_max.
"""
import argparse

from branchwalk.chains import make_simple_walk
from branchwalk.series import beta_from_f, compute_series, default_tails, green_sum


def fmt(x, spec):
    width = int(spec.split(".")[0])
    return format(x, spec) if x is not None and x != float("inf") else "-".rjust(width)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, nargs="+", default=[20, 40, 60, 100, 150, 200])
    args = ap.parse_args()
    print(f"{'n_max':>6} {'lower':>9} {'beta':>9} {'+-':>8} {'1-1/G':>9} {'+-':>8}")
    for n in args.n_max:
        s = compute_series(make_simple_walk(3), n)
        p_tail, f_tail = default_tails(s)
        b = beta_from_f(s, f_tail)
        g = green_sum(s, p_tail)
        print(f"{n:>6} {b.lower_bound:9.5f} {b.value:9.5f} {b.uncertainty:8.1e} {fmt(g.beta_tilde, '9.5f')} {fmt(g.beta_tilde_uncertainty, '8.1e')}  {g.verdict}")
