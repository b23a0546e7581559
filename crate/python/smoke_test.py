"""Exercises the ptlab extension end to end. Run after `pip install -e .`."""

import math

import ptlab


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL {msg}")
    print(f"ok   {msg}")


# exact probabilities
check(abs(ptlab.q_sb_exact(2, 4, 6) - 0.5) < 1e-12, "q_sb_exact(2, 4, 6) = 1/2")
crit = ptlab.critical_ell(4, 6)
check(crit["ell_star"] >= 1, f"critical_ell -> {crit}")

# recovery with a random operator
op = ptlab.MeasurementOperator.uniform_spherical(6, 12, B=2, seed=1)
check((op.real_rows, op.real_cols) == (12, 24), repr(op))
x0 = ptlab.sample_signal(1, 12, 2, "real", seed=2)
y = op.apply(x0)
sol = ptlab.solve_p1(op, y, "real")
err = math.dist(sol["x1"], x0) / math.hypot(*x0)
check(sol["status"] == "CONVERGED" and err < 1e-3, f"solve_p1 rel_err={err:.2e}")
ref = ptlab.lp_oracle(op.to_dense(), y, "real")
check(abs(ref["value"] - sol["objective"]) < 1e-6, "admm objective matches lp_oracle")

# adjoint consistency
v = [0.1 * i for i in range(op.real_rows)]
lhs = sum(a * b for a, b in zip(op.apply(x0), v))
rhs = sum(a * b for a, b in zip(x0, op.adjoint(v)))
check(abs(lhs - rhs) < 1e-9, "<Ax, v> = <x, A*v>")

# prediction
p = ptlab.predict_pt(96, 192, 192, "complex")
check(abs(p["rel_offset"] - 0.19482) < 5e-5, f"predict_pt rel_offset={p['rel_offset']:.5f}")
check(0 < ptlab.asymptotic_pt(0.5, "complex") < 1, "asymptotic_pt in (0, 1)")

# monte carlo and fitting
cell = ptlab.run_trials(2, 4, 8, 1, "nonneg", trials=10, seed=3)
check(cell["summary"]["S"] == 10 and len(cell["records"]) == 10, "run_trials")
rows = ptlab.run_grid(6, 10, 1, "real", trials=20, seed=4, ells=[1, 2, 3, 4, 5, 6, 7])
fit = ptlab.fit_quantal(
    [r["ell"] / 10 for r in rows], [r["S"] for r in rows], [r["successes"] for r in rows], link="probit"
)
check(0 < fit["eps_star"] < 0.7, f"fit_quantal eps*={fit['eps_star']:.3f}")
dec = ptlab.hypothesis_test(0.01, 10000, 100)
check(dec["outcome"] == "REJECT_H0", "hypothesis_test")

# structure checks
g = ptlab.check_gram_structure(ptlab.MeasurementOperator.aniso_2d(8, [0, 3]))
check(g["pass"], "aniso Gram is block diagonal")

print("all smoke checks passed")
