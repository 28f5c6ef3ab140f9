#!/usr/bin/env python3
"""Smoke test for the animalia Python extension.

Build the module first (see python/build_ext.sh), then run:

    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import animalia  # noqa: E402

FAILURES = []


def check(name, ok, detail=""):
    tag = "ok" if ok else "FAIL"
    print(f"[{tag}] {name} {detail}")
    if not ok:
        FAILURES.append(name)


def main():
    print(f"animalia {animalia.__version__}")

    # formula spot values
    k = animalia.k_delta(1.0, 1.0)
    check("k_delta(1,1)", abs(k - 0.2823312263026936) < 1e-12, f"= {k:.12f}")
    thr = animalia.a_threshold(1)
    check("a_threshold(1)", abs(thr - 5.828427) < 1e-6, f"= {thr:.6f}")

    # parameter chain solves and is self-consistent
    params = animalia.feasible_parameters(1)
    check("feasible_parameters(1)", abs(params["q"] * params["nu"] - 1.0) < 1e-12,
          f"alpha = {params['alpha']:.6f}")
    try:
        animalia.feasible_parameters(1, 5.0)
        check("infeasible a=5 raises", False)
    except ValueError:
        check("infeasible a=5 raises", True)

    # a one-site hard-core model: occupancy 1/2 at rate 1
    model = animalia.Model.single_site(1, [0], [0])
    check("model repr", "animals=1" in repr(model), repr(model))
    env = animalia.Environment.homogeneous(model, 1.0, seed=1)
    n = 20000
    occupied = 0
    for rep in range(n):
        status, sample, clear = animalia.perfect_sample(env, rep)
        assert status == "Closed" and clear
        occupied += 1 if sample else 0
    p = occupied / n
    check("perfect sampler occupancy", abs(p - 0.5) < 3.5 * math.sqrt(0.25 / n), f"= {p:.4f}")

    # clan exploration statistics
    stats = animalia.clan_of_point(env, [0], 0.0, seed=3)
    check("clan closes", stats["status"] == "Closed", str(stats))

    # connectivity self-estimate: G(X, X) = 1 - exp(-w)
    wide = animalia.Model.single_site(1, [-3], [3])
    env_w = animalia.Environment.homogeneous(wide, 0.5, seed=2)
    est, lo, hi = animalia.estimate_g(env_w, [0], 0.0, [0], 0.0, replicas=20000, seed=4)
    target = 1.0 - math.exp(-0.5)
    check("G(X,X) matches Poisson oracle", lo - 0.01 <= target <= hi + 0.01,
          f"= {est:.4f} (target {target:.4f})")

    # diagnostics and the hypothesis report round-trip
    ups, psi, xi = env_w.diagnostics()
    check("diagnostics ordering", ups <= xi + 1e-12 and psi == 0.5, f"({ups}, {psi}, {xi})")
    report = json.loads(animalia.check_hypotheses_json(env_w, epsilon=0.9, replicas=50, seed=5))
    check("hypothesis report", report["psi_condition_pass"] is True,
          f"a_threshold = {report['a_threshold']:.6f}")

    # model JSON interface matches the CLI schema
    spec = {"type": "strauss", "d": 1, "r": 1, "penalty": {"type": "hard_core"}}
    strauss = animalia.Model.from_json(json.dumps(spec), [-2], [2])
    a, b = strauss.animals_containing([0])[0], strauss.animals_containing([1])[0]
    check("strauss incompatibility", strauss.incompatible(a, b))

    if FAILURES:
        print(f"\n{len(FAILURES)} smoke checks failed: {FAILURES}")
        sys.exit(1)
    print("\nall smoke checks passed")


if __name__ == "__main__":
    main()
