#!/usr/bin/env python3
"""Feed exact Born probabilities of each test state through every estimator.

Prints the trace-norm error to the true state, iteration counts and run time.
"""
import time

from ditomo.di_regularizer import hybrid_from_joint
from ditomo.estimators import linear_inversion, mle_estimate
from ditomo.numerics import trace_norm
from ditomo.scenario import design_for, full_design
from ditomo.simulation import STATE_KINDS, born_probabilities, make_test_state


def main():
    print(f"{'state':6} {'estimator':16} {'error':>10} {'iters':>7} {'time/s':>7}")
    for kind in STATE_KINDS:
        rho = make_test_state(kind)
        rows = []
        for design_kind in ("full", "partial"):
            design = design_for(design_kind)
            p = born_probabilities(rho, design)
            t = time.perf_counter()
            lin = linear_inversion(p, design)
            rows.append((f"LIN {design_kind}", trace_norm(lin.matrix - rho), 0, time.perf_counter() - t))
            t = time.perf_counter()
            ml = mle_estimate(p, design)
            rows.append((f"MLE {design_kind}", trace_norm(ml.state - rho), ml.iterations, time.perf_counter() - t))
        t = time.perf_counter()
        hyb = hybrid_from_joint(born_probabilities(rho, full_design()))
        rows.append(("hybrid DI/DD", trace_norm(hyb.state - rho), hyb.iterations, time.perf_counter() - t))
        for name, err, iters, secs in rows:
            print(f"{kind:6} {name:16} {err:10.2e} {iters:7d} {secs:7.2f}")


if __name__ == "__main__":
    main()
