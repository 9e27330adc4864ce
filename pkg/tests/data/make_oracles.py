"""Regenerate the frozen arbitrary-precision reference values in oracles.json.

Every value here comes from mpmath alone (power series or quadrature at high
working precision); nothing imports the package under test.

    python tests/data/make_oracles.py
"""

import json
from pathlib import Path

import mpmath as mp
import numpy as np


def ml_series(p, r, z):
    """Power series summed with enough guard digits to survive cancellation."""
    p, r, z = mp.mpf(p), mp.mpf(r), mp.mpf(z)
    eff = float(abs(z) ** (1 / p)) if z != 0 else 0.0
    with mp.workdps(int(2 * eff / 2.3) + 40):
        total = mp.mpf(0)
        k = 0
        while True:
            term = z**k / mp.gamma(p * k + r)
            total += term
            k += 1
            if p * k + r > eff + 2 and abs(term) < mp.mpf(10) ** (-40) * abs(total):
                break
        return total


def ml_laplace(p, x):
    """E_p(-x) for 0 < p < 1 from its completely monotone spectral density."""
    p, x = mp.mpf(p), mp.mpf(x)
    if x == 0:
        return mp.mpf(1)
    t = x ** (1 / p)
    s = mp.sin(p * mp.pi)
    c = mp.cos(p * mp.pi)
    dens = lambda u: u ** (p - 1) * s / (mp.pi * (u ** (2 * p) + 2 * u**p * c + 1))
    return mp.quad(lambda u: mp.exp(-u * t) * dens(u), [0, 1 / t, 1, mp.inf])


def volterra_exact(alpha, q, t):
    """Solution of u = 1 + int_0^t (t-tau)**(alpha-1) tau**(-q) u dtau as a power series in t**(alpha-q).

    Inserting u = sum c_k t**(k p) and integrating term by term gives
    c_{k+1} = B(alpha, 1 - q + k p) c_k.
    """
    alpha, q, t = mp.mpf(alpha), mp.mpf(q), mp.mpf(t)
    p = alpha - q
    c, total, k = mp.mpf(1), mp.mpf(1), 0
    while True:
        c *= mp.beta(alpha, 1 - q + k * p)
        k += 1
        term = c * t ** (k * p)
        total += term
        if k > 10 and term < mp.mpf(10) ** (-30) * total:
            return total


def main():
    mp.mp.dps = 40
    rng = np.random.default_rng(20240601)
    points = []
    for i in range(50):
        p = float(rng.uniform(0.1, 2.0))
        r = float(rng.uniform(0.1, 3.0))
        if i % 5 == 0:
            z = float(rng.uniform(0.0, 5.0))
        else:
            # spread the effective argument |z|**(1/p) over [0, 60] to reach every route
            z = -float(rng.uniform(0.0, 60.0)) ** p
        points.append({"p": p, "r": r, "z": z, "value": mp.nstr(ml_series(p, r, z), 25)})

    decay = {}
    xs = [0.0] + [float(x) for x in np.geomspace(1e-4, 1e6, 241)]
    for p in (0.2, 0.5, 0.8):
        ratios = [ml_laplace(p, x) * mp.gamma(1 - p) * (1 + x) for x in xs]
        decay[str(p)] = [mp.nstr(min(ratios), 20), mp.nstr(max(ratios), 20)]

    singles = {
        "gamma_0.3": mp.nstr(mp.gamma(mp.mpf("0.3")), 25),
        "ml_0.5_0.5_-1": mp.nstr(ml_series(0.5, 0.5, -1), 25),
        "gronwall_0.5_0.25": mp.nstr(mp.gamma(mp.mpf("0.75")) * ml_series(0.25, 0.75, mp.gamma(mp.mpf("0.5"))), 25),
        "backward_0.5_pi2_0.1": mp.nstr(ml_series(0.5, 1, -mp.pi**2 * mp.sqrt(mp.mpf("0.1"))) / ml_series(0.5, 1, -mp.pi**2), 25),
        "E0_0.3_0.3_0": mp.nstr(mp.gamma(mp.mpf("0.4")) / mp.gamma(mp.mpf("0.7")), 25),
        "kernel_int_0.5_pi2_0.3": mp.nstr(
            mp.quad(lambda s: s ** mp.mpf(-0.5) * ml_series(0.5, 0.5, -mp.pi**2 * mp.sqrt(s)), [0, mp.mpf("0.3")]), 25
        ),
    }
    volterra = []
    cases = [("0.5", "0.25", "0.0055"), ("0.609", "0.507", "0.0039"), ("0.45", "-0.119", "1"), ("0.5", "0", "1"), ("1", "-1", "1")]
    for alpha, q, t in cases:
        a, qq, tt = mp.mpf(alpha), mp.mpf(q), mp.mpf(t)
        bound = mp.gamma(1 - qq) * ml_series(a - qq, 1 - qq, mp.gamma(a) * tt ** (a - qq))
        volterra.append({"alpha": float(alpha), "q": float(q), "t": float(t),
                         "exact": mp.nstr(volterra_exact(alpha, q, t), 20), "bound": mp.nstr(bound, 20)})
    out = {"ml_points": points, "two_sided_decay": decay, "values": singles, "volterra": volterra}
    Path(__file__).with_name("oracles.json").write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
