"""Timing comparison of the compiled pair-sampling kernel against the pure
numpy fallback.

Run:  python benchmarks/bench_kernels.py [T]

The fallback path is what you get with LCULAB_DISABLE_NUMBA=1; both paths
draw identical samples, so the printed means must agree exactly.
"""

import sys
import time

import numpy as np

from lculab import _kernels
from lculab.core_algebra import basis_state, ham_to_dense, parse_pauli_text
from lculab.estimator import prepare
from lculab.lcu_decomp import inverse_lcu


def build_case():
    h = ham_to_dense(parse_pauli_text("0.6*ZZ+0.4*XX"))
    dec = inverse_lcu(5.0, 0.005)
    prepared = prepare(dec, h)
    psi0 = basis_state(2, 0)
    states = prepared.states(psi0)
    obs = ham_to_dense(parse_pauli_text("ZI"))
    ou = states @ obs.entries.T
    return states, ou, prepared.probs


def run(states, ou, probs, t_reps, key1, key2, force_numpy):
    t0 = time.perf_counter()
    s, s2 = _kernels.pair_accumulate(states, ou, probs, key1, key2, t_reps,
                                     force_numpy=force_numpy)
    elapsed = time.perf_counter() - t0
    return s / t_reps, elapsed


def main():
    t_reps = int(sys.argv[1]) if len(sys.argv) > 1 else 2_000_000
    states, ou, probs = build_case()
    key1 = _kernels.derive_key(7, 0, 0, 1)
    key2 = _kernels.derive_key(7, 0, 0, 2)

    if _kernels.USE_NUMBA:
        run(states, ou, probs, 1000, key1, key2, False)  # JIT warm-up
        m1, t1 = run(states, ou, probs, t_reps, key1, key2, False)
        print(f"numba kernel : {t1:8.3f} s   mean={m1:.17g}")
    else:
        m1 = None
        print("numba kernel : disabled or unavailable")
    m2, t2 = run(states, ou, probs, t_reps, key1, key2, True)
    print(f"numpy kernel : {t2:8.3f} s   mean={m2:.17g}")
    if m1 is not None:
        print(f"speedup      : {t2 / t1:6.2f}x   means equal: {m1 == m2}")


if __name__ == "__main__":
    main()
