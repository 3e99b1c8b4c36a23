"""Regenerate sixrow_expected.json by exact rational hand evaluation.

This script is the independent oracle behind the six-row golden fixture: it
evaluates the augmented terms, the effect estimates, and the plug-in variance
with `fractions.Fraction` arithmetic, entirely separate from the library
implementation, and freezes the results as decimals.  Run from the repository
root:

    python3 tests/golden/make_expected.py
"""

import json
import math
from fractions import Fraction as F
from pathlib import Path

Z975 = 1.959963984540054  # standard-normal 0.975 quantile (reference constant)

Y = [F(1), F(3, 2), F(3), F(6), F(2), F(5)]
D = [0, 1, 1, 1, 0, 1]
Z = [0, 1, 1, 0, 0, 1]
S = [0, 0, 0, 0, 1, 1]  # labels: a a a a b b
THRESH = [F(5, 2), F(11, 2)]
N = 6
J = 2
STRATA = (0, 1)

# hand-set nuisance tables (dyadic, hence float-exact), nondecreasing in j
MU = {
    1: [[F(1, 4), F(1, 2), F(1, 4), F(1, 8), F(1, 4), F(1, 2)],
        [F(1, 2), F(3, 4), F(1, 2), F(1, 4), F(1, 2), F(5, 8)]],
    0: [[F(1, 8), F(1, 4), F(1, 2), F(1, 4), F(1, 8), F(1, 4)],
        [F(1, 4), F(1, 2), F(3, 4), F(1, 2), F(1, 4), F(1, 2)]],
}
ETA = {
    1: [F(1, 2), F(3, 4), F(1, 2), F(1, 4), F(1, 2), F(3, 4)],
    0: [F(1, 4), F(1, 2), F(1, 4), F(1, 8), F(1, 4), F(1, 2)],
}
ZERO_MU = {z: [[F(0)] * N for _ in range(J)] for z in (0, 1)}
ZERO_ETA = {z: [F(0)] * N for z in (0, 1)}

n_s = {s: sum(1 for i in range(N) if S[i] == s) for s in STRATA}
n_zs = {(z, s): sum(1 for i in range(N) if S[i] == s and Z[i] == z)
        for z in (0, 1) for s in STRATA}
PI = {(z, s): F(n_zs[(z, s)], n_s[s]) for z in (0, 1) for s in STRATA}


def ind(i, j):
    return 1 if Y[i] <= THRESH[j] else 0


def augmented_terms(mu, eta):
    xi_y = {z: [[F(int(Z[i] == z)) * (ind(i, j) - mu[z][j][i]) / PI[(z, S[i])]
                 + mu[z][j][i] for i in range(N)] for j in range(J)]
            for z in (0, 1)}
    xi_d = {z: [F(int(Z[i] == z)) * (D[i] - eta[z][i]) / PI[(z, S[i])]
                + eta[z][i] for i in range(N)] for z in (0, 1)}
    return xi_y, xi_d


def point_estimates(xi_y, xi_d):
    first_stage = sum(xi_d[1][i] - xi_d[0][i] for i in range(N)) / N
    numerator = [sum(xi_y[1][j][i] - xi_y[0][j][i] for i in range(N)) / N
                 for j in range(J)]
    beta = [numerator[j] / first_stage for j in range(J)]
    return first_stage, numerator, beta


def plug_in_variance(mu, eta, beta, first_stage):
    phi_tilde = {1: [[None] * N for _ in range(J)], 0: [[None] * N for _ in range(J)]}
    for j in range(J):
        for i in range(N):
            s = S[i]
            y_part1 = ((1 - 1 / PI[(1, s)]) * mu[1][j][i] - mu[0][j][i]
                       + F(ind(i, j)) / PI[(1, s)])
            d_part1 = ((1 - 1 / PI[(1, s)]) * eta[1][i] - eta[0][i]
                       + F(D[i]) / PI[(1, s)])
            phi_tilde[1][j][i] = y_part1 - beta[j] * d_part1
            y_part0 = ((1 / PI[(0, s)] - 1) * mu[0][j][i] + mu[1][j][i]
                       - F(ind(i, j)) / PI[(0, s)])
            d_part0 = ((1 / PI[(0, s)] - 1) * eta[0][i] + eta[1][i]
                       - F(D[i]) / PI[(0, s)])
            phi_tilde[0][j][i] = y_part0 - beta[j] * d_part0
    phi_hat = {z: [[None] * N for _ in range(J)] for z in (0, 1)}
    for z in (0, 1):
        for s in STRATA:
            cell = [i for i in range(N) if S[i] == s and Z[i] == z]
            for j in range(J):
                cell_mean = sum(phi_tilde[z][j][i] for i in cell) / len(cell)
                for i in range(N):
                    if S[i] == s:
                        phi_hat[z][j][i] = phi_tilde[z][j][i] - cell_mean
    xi_hat = [[None] * N for _ in range(J)]
    for j in range(J):
        by_stratum = {}
        for s in STRATA:
            arm = {z: [i for i in range(N) if S[i] == s and Z[i] == z] for z in (0, 1)}
            means = {z: sum(ind(i, j) - beta[j] * D[i] for i in arm[z]) / len(arm[z])
                     for z in (0, 1)}
            by_stratum[s] = means[1] - means[0]
        for i in range(N):
            xi_hat[j][i] = by_stratum[S[i]]
    comp1 = [sum(Z[i] * phi_hat[1][j][i] ** 2 for i in range(N)) / N for j in range(J)]
    comp0 = [sum((1 - Z[i]) * phi_hat[0][j][i] ** 2 for i in range(N)) / N for j in range(J)]
    compx = [sum(xi_hat[j][i] ** 2 for i in range(N)) / N for j in range(J)]
    omega = [(comp1[j] + comp0[j] + compx[j]) / first_stage ** 2 for j in range(J)]
    return comp1, comp0, compx, omega


def case(mu, eta):
    xi_y, xi_d = augmented_terms(mu, eta)
    first_stage, numerator, beta = point_estimates(xi_y, xi_d)
    comp1, comp0, compx, omega = plug_in_variance(mu, eta, beta, first_stage)
    se = [math.sqrt(float(o) / N) for o in omega]
    return {
        "xi_y": {str(z): [[float(v) for v in row] for row in xi_y[z]] for z in (0, 1)},
        "xi_d": {str(z): [float(v) for v in xi_d[z]] for z in (0, 1)},
        "first_stage": float(first_stage),
        "numerator": [float(v) for v in numerator],
        "beta": [float(v) for v in beta],
        "arm1_phi_sq": [float(v) for v in comp1],
        "arm0_phi_sq": [float(v) for v in comp0],
        "xi_sq": [float(v) for v in compx],
        "omega_hat": [float(v) for v in omega],
        "se": se,
        "ci_lower": [float(beta[j]) - Z975 * se[j] for j in range(J)],
        "ci_upper": [float(beta[j]) + Z975 * se[j] for j in range(J)],
    }


def main():
    payload = {
        "thresholds": [float(t) for t in THRESH],
        "level": 0.95,
        "normal_multiplier": Z975,
        "zero_learner": case(ZERO_MU, ZERO_ETA),
        "hand_set": case(MU, ETA),
        "hand_set_mu": {str(z): [[float(v) for v in row] for row in MU[z]]
                        for z in (0, 1)},
        "hand_set_eta": {str(z): [float(v) for v in ETA[z]] for z in (0, 1)},
    }
    out = Path(__file__).parent / "sixrow_expected.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
    print("zero beta:", payload["zero_learner"]["beta"],
          "first stage:", payload["zero_learner"]["first_stage"])
    print("hand beta:", payload["hand_set"]["beta"],
          "first stage:", payload["hand_set"]["first_stage"])


if __name__ == "__main__":
    main()
