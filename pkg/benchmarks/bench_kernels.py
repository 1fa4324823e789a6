"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--T 500 2000 10000] [--repeat 20]

Prints the median wall time per call for each kernel, both backends, and
the speed-up. Also checks that the two backends agree.
"""

import argparse
import statistics
import time

import numpy as np

from arhmm import _kernels
from arhmm.likelihood import state_constants
from arhmm.model import ModelSpec, stationary_dist
from arhmm.simulate import paper_scenario, simulate


def _calls(k, s, p, c):
    d = stationary_dist(p.tpm)
    dens = (s.steps, s.turns, p.mu_step, c.shape, c.lgamma_shape, p.mu_turn, p.kappa_turn, c.log_norm,
            c.phi_step, c.p_step, c.phi_turn, c.p_turn)
    logp = k.log_densities(*dens)
    grad = (s.steps, s.turns, p.tpm, d, p.mu_step, c.shape, c.lgamma_shape, c.digamma_shape, p.mu_turn,
            p.kappa_turn, c.log_norm, c.bessel_ratio, c.phi_step, c.p_step, c.phi_turn, c.p_turn)
    return {
        "log_densities": lambda: k.log_densities(*dens),
        "forward": lambda: k.forward(logp, p.tpm, d),
        "loglik_grad": lambda: k.loglik_grad(*grad),
        "viterbi": lambda: k.viterbi(logp, np.log(p.tpm), np.log(d)),
    }


def _median_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, nargs="+", default=[500, 2000, 10000])
    ap.add_argument("--degree", type=int, default=3, choices=range(4))
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    backends = {"python": _kernels.get_backend("python")}
    try:
        backends["cython"] = _kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    print(f"{'T':>6}  {'kernel':<14}" + "".join(f"{b + ' ms':>12}" for b in backends) + "   speed-up")
    for T in args.T:
        sc = paper_scenario(args.degree, T=T, seed=1)
        s, _ = simulate(sc)
        p = sc.params
        assert p.spec == ModelSpec.uniform(2, args.degree)
        c = state_constants(p)
        calls = {name: _calls(k, s, p, c) for name, k in backends.items()}
        ref = calls["python"]["loglik_grad"]()[0]
        for name in backends:
            got = calls[name]["loglik_grad"]()[0]
            assert abs(got - ref) <= 1e-10 * abs(ref), (name, got, ref)
        for kernel in calls["python"]:
            ms = {b: 1e3 * _median_time(calls[b][kernel], args.repeat) for b in backends}
            ratio = f"{ms['python'] / ms['cython']:9.1f}x" if "cython" in ms else ""
            print(f"{T:>6}  {kernel:<14}" + "".join(f"{v:12.3f}" for v in ms.values()) + "   " + ratio)


if __name__ == "__main__":
    main()
