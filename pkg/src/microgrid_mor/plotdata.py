"""Data series behind the stability-region, eigenvalue and response plots.

Each builder returns ``(name, header, blocks)``; blocks become gnuplot data
sets separated by blank lines.
"""

from __future__ import annotations

import numpy as np

from .analysis import eigen_report, region_builder, stability_region
from .models import build_network_model, build_network_nonlinear
from .scenario import read_document, scenario_from_dict, with_gains, with_line_length, with_rating_scale, load_scenario
from .sim import angle_kick, integrate

KP_RANGE = (0.05, 6.0)  # percent
KQ_RANGE = (0.5, 100.0)


def _axes(n, m):
    return np.linspace(*KP_RANGE, n) / 100.0, np.linspace(*KQ_RANGE, m) / 100.0


def _boundary(sc, kind, n, m):
    kp, kq = _axes(n, m)
    region = stability_region(region_builder(sc.network, sc.inverters, kind), kp, kq, kind)
    return [(p * 100, q * 100, kind) for p, q in region.boundary]


def _twobus(length_km=1.0, rating=None):
    doc = with_line_length(read_document("twobus"), length_km)
    if rating is not None:
        doc = with_rating_scale(doc, rating)
    return scenario_from_dict(doc)


def model_regions(n, m):
    sc = _twobus()
    return "fig2_regions", ["kp_percent", "kq_percent", "model"], [_boundary(sc, k, n, m) for k in ("full", "simple3", "hifi3")]


def line_lengths(n, m):
    blocks = []
    for length in (0.0, 1.0, 3.0, 6.0):
        rows = _boundary(_twobus(length), "full", n, m)
        blocks.append([(p, q, f"{length:g}km") for p, q, _ in rows])
    return "fig3_lengths", ["kp_percent", "kq_percent", "line"], blocks


def ratings(n, m):
    blocks = []
    for scale in (0.5, 1.0, 2.0):
        rows = _boundary(_twobus(1.0, scale), "full", n, m)
        blocks.append([(p, q, f"{10 * scale:g}kVA") for p, q, _ in rows])
    return "fig4_ratings", ["kp_percent", "kq_percent", "rating"], blocks


def eigen_paths(n, m):
    base = load_scenario("table1_cascade")
    blocks = []
    for kind in ("full", "simple3", "hifi3"):
        rows = []
        for kp in np.linspace(0.3, 0.75, max(n // 4, 2)):
            sc = with_gains(base, kp=kp / 100.0)
            eig = eigen_report(build_network_model(sc.network, sc.inverters, kind)).eigenvalues
            rows += [(float(e.real), float(e.imag), float(kp), kind) for e in eig if abs(e) < 500]
        blocks.append(rows)
    return "fig5_eigenvalues", ["re", "im", "kp_percent", "model"], blocks


def responses(n, m):
    sc = with_gains(load_scenario("table1_cascade"), kp=0.0075)
    grid = np.linspace(0.0, 1.0, 1001)
    blocks = []
    for kind in ("full", "simple3", "hifi3"):
        model = build_network_nonlinear(sc.network, sc.inverters, kind)
        traj = integrate(model, angle_kick(model, 0, 1e-3), 1.0)
        om = traj.sample(grid, "omega")[:, 0]
        p = traj.sample(grid, "P")[:, 0]
        blocks.append([(float(t), float(w - model.inverters[0].w0), float(pp), kind) for t, w, pp in zip(grid, om, p)])
    return "fig6_responses", ["t", "omega_dev_inv1", "P_inv1", "model"], blocks


FIGURES = {
    "fig2": model_regions,
    "fig3": line_lengths,
    "fig4": ratings,
    "fig5": eigen_paths,
    "fig6": responses,
}
