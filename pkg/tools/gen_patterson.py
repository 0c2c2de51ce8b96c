#!/usr/bin/env python3
"""Regenerate the nested Gauss-Patterson node/weight tables.

Builds the 1, 3, 7, 15, 31, 63 point sequence from scratch at 80-digit
precision: each extension adds the roots of the Stieltjes-type polynomial
E of degree n+1 that is orthogonal to every power x^k (k <= n) against
the node polynomial W of the current rule, then recomputes interpolatory
weights by matching Legendre moments.  Output is written to
src/slipuq/_patterson.py as plain float literals.

Run from the repository root:

    python tools/gen_patterson.py
"""

import pathlib

import mpmath as mp

mp.mp.dps = 80

MAX_LEVEL = 5  # 2**(MAX_LEVEL+1) - 1 = 63 points


def poly_from_roots(roots):
    """Monic polynomial coefficients (ascending powers) with given roots."""
    coeffs = [mp.mpf(1)]
    for r in roots:
        nxt = [mp.mpf(0)] * (len(coeffs) + 1)
        for i, c in enumerate(coeffs):
            nxt[i + 1] += c
            nxt[i] -= c * r
        coeffs = nxt
    return coeffs


def power_moment(t):
    """integral of x^t over [-1, 1]."""
    return mp.mpf(2) / (t + 1) if t % 2 == 0 else mp.mpf(0)


def weighted_moment(wcoeffs, t):
    """integral of x^t * W(x) over [-1, 1]."""
    return mp.fsum(c * power_moment(t + i) for i, c in enumerate(wcoeffs) if c != 0)


def extend(nodes):
    """Add len(nodes)+1 Patterson points to the rule with the given nodes."""
    n = len(nodes)
    wcoeffs = poly_from_roots(nodes)
    # Monic E of degree n+1 with integral(W * E * x^k) = 0 for k = 0..n.
    rows = mp.matrix(n + 1, n + 1)
    rhs = mp.matrix(n + 1, 1)
    for k in range(n + 1):
        for j in range(n + 1):
            rows[k, j] = weighted_moment(wcoeffs, k + j)
        rhs[k] = -weighted_moment(wcoeffs, k + n + 1)
    sol = mp.lu_solve(rows, rhs)
    ecoeffs = [sol[j] for j in range(n + 1)] + [mp.mpf(1)]
    roots = mp.polyroots(list(reversed(ecoeffs)), maxsteps=200, extraprec=200)
    new = sorted(nodes + [mp.mpf(r.real) for r in roots])
    for r in roots:
        assert abs(mp.im(r)) < mp.mpf(10) ** -40, "complex Patterson root"
        assert abs(mp.re(r)) < 1, "Patterson root outside (-1, 1)"
    return new


def legendre_eval(k, x):
    if k == 0:
        return mp.mpf(1)
    pm, p = mp.mpf(1), x
    for j in range(1, k):
        pm, p = p, ((2 * j + 1) * x * p - j * pm) / (j + 1)
    return p


def interpolatory_weights(nodes):
    """Weights matching integral(P_k) = 2*delta_k0 for k < len(nodes)."""
    n = len(nodes)
    mat = mp.matrix(n, n)
    rhs = mp.matrix(n, 1)
    for k in range(n):
        for i in range(n):
            mat[k, i] = legendre_eval(k, nodes[i])
        rhs[k] = mp.mpf(2) if k == 0 else mp.mpf(0)
    sol = mp.lu_solve(mat, rhs)
    return [sol[i] for i in range(n)]


def exactness_degree(npoints):
    # Established degrees for the Patterson sequence: 1, 5, 11, 23, 47, 95.
    return {1: 1, 3: 5, 7: 11, 15: 23, 31: 47, 63: 95}[npoints]


def verify(nodes, weights):
    deg = exactness_degree(len(nodes))
    for k in range(1, deg + 1):
        val = mp.fsum(w * legendre_eval(k, x) for x, w in zip(nodes, weights))
        assert abs(val) < mp.mpf(10) ** -40, (len(nodes), k, val)
    total = mp.fsum(weights)
    assert abs(total - 2) < mp.mpf(10) ** -40
    if len(nodes) > 1:
        val = mp.fsum(w * legendre_eval(deg + 1, x) for x, w in zip(nodes, weights))
        assert abs(val) > mp.mpf(10) ** -30, "rule unexpectedly exact beyond table"


def main():
    levels = []
    nodes = [mp.mpf(0)]
    for level in range(MAX_LEVEL + 1):
        if level > 0:
            nodes = extend(nodes)
        weights = interpolatory_weights(nodes)
        verify(nodes, weights)
        levels.append((nodes[:], weights))
        print(f"level {level}: {len(nodes)} points, exact to degree "
              f"{exactness_degree(len(nodes))}")

    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "slipuq" / "_patterson.py"
    with out.open("w") as fh:
        fh.write('"""Nested Gauss-Patterson rules on [-1, 1], Lebesgue weight.\n\n')
        fh.write("Levels 0..5 hold 1, 3, 7, 15, 31, 63 points; each level's nodes\n")
        fh.write("contain the previous level's.  Weights sum to 2.  Generated by\n")
        fh.write("tools/gen_patterson.py; do not edit by hand.\n")
        fh.write('"""\n\n')
        fh.write("NODES = [\n")
        for nds, _ in levels:
            fh.write("    [\n")
            for x in nds:
                fh.write(f"        {mp.nstr(x, 19, strip_zeros=False)},\n")
            fh.write("    ],\n")
        fh.write("]\n\n")
        fh.write("WEIGHTS = [\n")
        for _, wts in levels:
            fh.write("    [\n")
            for w in wts:
                fh.write(f"        {mp.nstr(w, 19, strip_zeros=False)},\n")
            fh.write("    ],\n")
        fh.write("]\n\n")
        fh.write("EXACTNESS = [1, 5, 11, 23, 47, 95]\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
