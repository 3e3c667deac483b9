"""End-to-end exercise of the python bindings against the bundled models.

Run from anywhere:  python3 python/smoke_test.py
"""

import math
import sys
from pathlib import Path

import obata

MODELS = Path(__file__).resolve().parent.parent / "models"

failures = []


def check(name: str, ok: bool, detail: str = "") -> None:
    mark = "ok" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"{mark:4} {name}{suffix}")
    if not ok:
        failures.append(name)


def main() -> int:
    # --- model loading and the field equation on the quadric -------------
    ds = obata.Model.load(str(MODELS / "de-sitter.json"))
    check("de-sitter shape", ds.dim == 2 and ds.signature == (1, 1) and ds.kind == "quadric")
    check("de-sitter field", ds.omega == "x1" and ds.kappa == 1.0)

    report = ds.verify(samples=200, seed=17)
    check(
        "field equation residual",
        report["max_residual"] <= 1e-8,
        f"max {report['max_residual']:.3e}",
    )
    check(
        "first integral constant",
        report["first_integral_spread"] <= 1e-7
        and abs(report["first_integral_mean"] - 1.0) <= 1e-9,
        f"mean {report['first_integral_mean']:.12f}",
    )
    census = report["census"]
    check(
        "gradient census mixed",
        min(census["timelike"], census["null"], census["spacelike"]) >= 0
        and census["timelike"] > 0
        and census["spacelike"] > 0
        and sum(census.values()) == report["samples"],
        f"{census['timelike']}/{census['null']}/{census['spacelike']}",
    )

    k = ds.sectional([0.2, -0.3], [1.0, 0.0], [0.0, 1.0])
    check("constant curvature", abs(k - 1.0) <= 1e-9, f"K = {k:.12f}")
    check(
        "tangent classification",
        ds.classify_tangent([0.0, 0.0], [1.0, 0.0]) == "timelike"
        and ds.classify_tangent([0.0, 0.0], [1.0, 1.0]) == "null",
    )

    # --- geodesics on the flat model --------------------------------------
    flat = obata.Model.load(str(MODELS / "flat.json"))
    traj = flat.geodesic([0.0, 0.0], [0.3, 1.0], 2.0)
    end = traj["x"][-1]
    check(
        "flat geodesic is straight",
        traj["termination"] == "budget_reached"
        and abs(end[0] - 0.6) <= 1e-9
        and abs(end[1] - 2.0) <= 1e-9,
        f"end {end}",
    )
    check("velocity norm conserved", traj["norm_drift"] <= 1e-9)
    fi = traj["first_integral"]
    check(
        "first integral along the curve",
        fi is not None and max(abs(v - 1.0) for v in fi) <= 1e-9,
    )

    # --- quantitative incompleteness on the exponential warp --------------
    warp = obata.Model.load(str(MODELS / "exp-warp.json"))
    fall = warp.geodesic([0.0, 0.0, 0.0], [-5.0 / 3.0, 4.0 / 3.0, 0.0], 5.0)
    check(
        "timelike escape parameter",
        fall["termination"] == "domain_escape"
        and abs(fall["s_end"] - math.log(2.0)) <= 1e-4,
        f"s* = {fall['s_end']:.6f}, ln 2 = {math.log(2.0):.6f}",
    )

    # --- sign-pair classification and closed forms -------------------------
    row = obata.classify(1.0, -1.0)
    check(
        "classification row (+,-)",
        row["omega_type"] == "timelike"
        and row["structure"] == "warped-split"
        and row["riemannian_range"] == "impossible-riemannian",
    )
    row = obata.classify(0.0, 1.0)
    check(
        "classification row (0,+)",
        row["omega_type"] == "spacelike"
        and row["structure"] == "direct-product"
        and row["riemannian_range"] == "all reals",
    )

    check("profile branch", obata.solution_branch(1.0, 1.0) == "cosine")
    check(
        "profile values",
        abs(obata.closed_form(1.0, 1.0, 0.0) - 1.0) <= 1e-15
        and abs(obata.closed_form(1.0, 1.0, math.pi / 3.0) - 0.5) <= 1e-15,
    )

    # --- expression jets ----------------------------------------------------
    x = [0.3, -0.7]
    v, g, h = obata.jet("sin(x0) * exp(x1)", x)
    s, c, e = math.sin(x[0]), math.cos(x[0]), math.exp(x[1])
    exact_g = [c * e, s * e]
    exact_h = [[-s * e, c * e], [c * e, s * e]]
    gap = max(
        abs(v - s * e),
        max(abs(a - b) for a, b in zip(g, exact_g)),
        max(abs(a - b) for ra, rb in zip(h, exact_h) for a, b in zip(ra, rb)),
    )
    check("jet matches analytic partials", gap <= 1e-12, f"gap {gap:.3e}")
    check("hessian exactly symmetric", h[0][1] == h[1][0])
    check(
        "evaluate agrees with jet value",
        obata.evaluate("sin(x0) * exp(x1)", x) == v,
    )

    # --- error paths --------------------------------------------------------
    try:
        obata.evaluate("x9", [0.0])
        check("unknown variable rejected", False)
    except ValueError:
        check("unknown variable rejected", True)
    try:
        obata.Model.from_json("{}")
        check("malformed model rejected", False)
    except ValueError:
        check("malformed model rejected", True)
    try:
        ds.verify(omega="ln(x0 - 5)")
        check("domain error surfaces", False)
    except (ValueError, RuntimeError):
        check("domain error surfaces", True)

    if failures:
        print(f"\nsmoke test: {len(failures)} check(s) failed: {', '.join(failures)}")
        return 1
    print("\nsmoke test: all checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
