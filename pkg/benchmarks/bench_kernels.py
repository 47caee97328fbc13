"""Time the compiled and numpy element kernels on identical random batches.

Usage: python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from adfcontact import kernels


def _simplices(rng, n, d):
    x = np.vstack([np.zeros(d), np.eye(d)])[None] + 0.15 * rng.standard_normal((n, d + 1, d))
    J = np.swapaxes(x[:, 1:] - x[:, :1], 1, 2)
    flip = np.linalg.det(J) < 0
    x[flip] = x[flip][:, [1, 0] + list(range(2, d + 1))]
    return x


def cases(n, d, rng):
    xe = _simplices(rng, n, d)
    J = np.swapaxes(xe[:, 1:] - xe[:, :1], 1, 2)
    pg = np.vstack([-np.ones(d), np.eye(d)])
    G = np.einsum("kj,eji->eki", pg, np.linalg.inv(J))
    vol = np.linalg.det(J) / (2.0 if d == 2 else 6.0)
    ue = 0.02 * rng.standard_normal((n, d + 1, d))
    mu = np.full(n, 3846.0)
    chi = np.full(n, 5769.0)
    xi = rng.dirichlet(np.ones(d + 1), n)
    xI = np.einsum("ek,ekj->ej", xi, xe)
    phi = rng.uniform(0.2, 0.9, (n, d + 1))
    kappa = np.full(n, 1e6)
    return {
        "neo_hookean": lambda k: k.neo_hookean(G, vol, ue, mu, chi),
        "screened_poisson": lambda k: k.screened_poisson(xe, 0.01),
        "barycentric": lambda k: k.barycentric(xI, xe),
        "contact": lambda k: k.contact(xe, xI, phi, kappa, 0.1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}; batch size {args.n}")
    print(f"{'kernel':<18}{'dim':>4}" + "".join(f"{b + ' [ms]':>16}" for b in backends) + f"{'speedup':>10}")
    for d in (2, 3):
        rng = np.random.default_rng(0)
        for name, fn in cases(args.n, d, rng).items():
            times = []
            for b in backends:
                mod = kernels.get_backend(b)
                fn(mod)
                times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3)
            speed = f"{times[-1] / times[0]:>9.1f}x" if len(times) > 1 else ""
            print(f"{name:<18}{d:>4}" + "".join(f"{t:>16.2f}" for t in times) + speed)


if __name__ == "__main__":
    main()
