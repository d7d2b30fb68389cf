"""Invariant suite behind ``nsbgk check``: random data, fixed tolerances."""
from __future__ import annotations

import numpy as np

from .diagnostics import weighted_lp_norm, weighted_sobolev_norm, weighted_sup_norm
from .domain import build_phase_grid
from .maxwellian import bgk_operator, discrete_maxwellian
from .moments import check_rho_T_relation


def _random_f(grid, rng):
    # smooth positive bumps in x times random Gaussians in v
    x = grid.x_mesh[0].reshape(grid.nx + (1,) * grid.dim)
    v = grid.v_component(0)
    c, s = rng.uniform(-2, 2), rng.uniform(0.4, 1.5)
    amp = 1.0 + 0.5 * np.sin(2 * np.pi * x / grid.lengths[0] + rng.uniform(0, 6.3))
    return amp * np.exp(-(v - c) ** 2 / (2 * s * s)) * rng.uniform(0.5, 2.0)


def run_checks(seed: int = 0, count: int = 20):
    rng = np.random.default_rng(seed)
    grid = build_phase_grid(1, 1.0, 16, 8.0, 64)
    v = grid.v_nodes[0]
    out = []

    worst = 0.0
    for _ in range(count):
        f = rng.random(grid.shape)
        Q = bgk_operator(f, grid, 1.0)
        scale = f.max() * grid.v_max[0] ** 2
        for p in range(3):
            worst = max(worst, float(np.abs((Q * v ** p * grid.v_weights).sum(-1)).max()) / scale)
    out.append(("bgk_cancellation", worst <= 1e-12, f"max scaled moment {worst:.2e}"))

    worst = 0.0
    for _ in range(count):
        rho, u, T = rng.uniform(0.5, 3), rng.uniform(-2, 2), rng.uniform(0.3, 3)
        M = discrete_maxwellian(np.full(grid.nx, rho), np.full((1,) + grid.nx, u),
                                np.full(grid.nx, T), grid)
        worst = max(worst, float(np.abs(bgk_operator(M, grid, 1.0)).max()))
    out.append(("maxwellian_fixed_point", worst <= 1e-12, f"max |Q(M)| {worst:.2e}"))

    worst = 0.0
    for _ in range(count):
        worst = max(worst, check_rho_T_relation(rng.random(grid.shape), grid).max_margin)
    out.append(("rho_T_relation_d1", worst <= 1 + 1e-6, f"max margin {worst:.4f}"))

    bad = 0
    for _ in range(count):
        f, g = _random_f(grid, rng), _random_f(grid, rng)
        c = rng.uniform(-3, 3)
        for norm in (lambda a: weighted_lp_norm(a, grid, 2, 1.5),
                     lambda a: weighted_lp_norm(a, grid, 1, 1.5),
                     lambda a: weighted_sup_norm(a, grid, 1.5),
                     lambda a: weighted_sobolev_norm(a, grid, 2, 1.5)):
            nf, ng, nfg = norm(f), norm(g), norm(f + g)
            if nfg > (nf + ng) * (1 + 1e-12) or abs(norm(c * f) - abs(c) * nf) > 1e-12 * abs(c) * nf:
                bad += 1
    out.append(("norm_identities", bad == 0, f"{bad} violation(s) on {count} pairs"))
    return out
