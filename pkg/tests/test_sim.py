import csv
import io

import numpy as np
import pytest
from scipy.linalg import expm

from microgrid_mor.errors import IntegrationError
from microgrid_mor.models import build_network_nonlinear, build_twobus
from microgrid_mor.models.statespace import LinearStateSpace, StateLabel
from microgrid_mor.scenario import identical_cascade
from microgrid_mor.sim import angle_kick, bench, droop_step, integrate, load_step

from conftest import W0, default_inverter, twobus_rx

GRID = np.linspace(0.0, 1.0, 1001)


def normalized_rms(reference, other):
    """Per-column rms(difference) / peak-to-peak range of the reference."""
    return np.sqrt(np.mean((other - reference) ** 2, axis=0)) / np.ptp(reference, axis=0)


@pytest.mark.parametrize("kind", ["full", "simple3", "hifi3"])
def test_equilibrium_stays_put(cascade, kind):
    model = build_network_nonlinear(cascade.network, cascade.inverters, kind)
    traj = integrate(model, None, 0.2)
    assert not traj.diverged
    assert np.abs(traj.states - model.equilibrium).max() < 1e-9
    assert np.all(np.diff(traj.t) > 0)


def test_linear_model_matches_matrix_exponential():
    r, x = twobus_rx(1.0)
    lin, _ = build_twobus(default_inverter(), r, x, "full")
    x0 = np.array([1e-3, 0.1, -1e-3, 0.01, 0.0])
    traj = integrate(lin, x0, 0.1, rtol=1e-8, atol=1e-14)
    ref = expm(lin.a * 0.1) @ x0
    assert np.linalg.norm(traj.final - ref) <= 1e-5 * np.linalg.norm(ref)


def test_scalar_decay_both_solvers():
    lin = LinearStateSpace(np.array([[-3.0]]), (StateLabel("angle", "x"),), "toy")
    for solver in ("trapezoidal", "explicit"):
        traj = integrate(lin, [1.0], 1.0, solver=solver, rtol=1e-8, atol=1e-12)
        # tolerances bound the local error; the global error accumulates over the steps
        assert traj.final[0] == pytest.approx(np.exp(-3.0), rel=1e-5)
        assert traj.accepted > 0


def test_step_halving_converges(cascade):
    model = build_network_nonlinear(cascade.network, cascade.inverters, "full")
    x0 = angle_kick(model, 0, 1e-3)
    coarse = integrate(model, x0, 0.01, fixed_step=1e-4).final
    fine = integrate(model, x0, 0.01, fixed_step=5e-5).final
    assert np.abs(coarse - fine).max() < 10 * 1e-6 * np.abs(fine).max()


def test_droop_relation_at_steady_state(cascade):
    model, x0 = load_step(cascade.network, cascade.inverters, "hifi3", 0, 1.5)
    traj = integrate(model, x0, 5.0)
    for k, inv in enumerate(model.inverters):
        lhs = traj.outputs["omega"][-1, k] - inv.w_set
        rhs = -inv.gains.mp * traj.outputs["P"][-1, k]
        assert abs(lhs - rhs) / W0 < 1e-6


def _responses(make, kinds=("full", "hifi3", "simple3")):
    out = {}
    for kind in kinds:
        model, x0 = make(kind)
        traj = integrate(model, x0, 1.0)
        out[kind] = {name: traj.sample(GRID, name) for name in ("P", "Q", "omega")}
    return out


def test_hifi3_tracks_full_after_droop_step(cascade):
    res = _responses(lambda k: droop_step(cascade.network, cascade.inverters, k, kp_scale=0.8))
    worst_simple = 0.0
    for name in ("P", "Q", "omega"):
        assert normalized_rms(res["full"][name], res["hifi3"][name]).max() < 0.02
        worst_simple = max(worst_simple, normalized_rms(res["full"][name], res["simple3"][name]).max())
    assert worst_simple > 0.02


def test_hifi3_frequency_tracks_full_after_angle_kick(cascade):
    def make(kind):
        model = build_network_nonlinear(cascade.network, cascade.inverters, kind)
        return model, angle_kick(model, 0, 1e-3)

    res = _responses(make, ("full", "hifi3"))
    assert normalized_rms(res["full"]["omega"], res["hifi3"]["omega"]).max() < 0.02


def test_explicit_and_implicit_agree_on_hifi3(cascade):
    model = build_network_nonlinear(cascade.network, cascade.inverters, "hifi3")
    x0 = angle_kick(model, 0, 1e-3)
    a = integrate(model, x0, 1.0, solver="explicit")
    b = integrate(model, x0, 1.0, solver="trapezoidal")
    assert np.abs(a.final - b.final).max() < 1e-5


def test_divergence_is_marked_not_raised():
    lin = LinearStateSpace(np.array([[40.0]]), (StateLabel("angle", "x"),), "toy")
    traj = integrate(lin, [1.0], 1.0)
    assert traj.diverged
    assert np.abs(traj.states[traj.diverged_at]).max() > 1e6
    assert np.all(np.abs(traj.states[: traj.diverged_at]) <= 1e6)


def test_step_limit_raises_with_time_reached():
    lin = LinearStateSpace(np.array([[-1.0]]), (StateLabel("angle", "x"),), "toy")
    with pytest.raises(IntegrationError) as info:
        integrate(lin, [1.0], 1.0, max_steps=3, max_step=1e-3)
    assert 0 < info.value.t_reached < 1.0


def test_argument_validation(cascade):
    model = build_network_nonlinear(cascade.network, cascade.inverters, "hifi3")
    with pytest.raises(ValueError):
        integrate(model, np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        integrate(model, None, 0.0)
    with pytest.raises(ValueError):
        integrate(model, None, 1.0, solver="euler")


def test_csv_format(cascade):
    model = build_network_nonlinear(cascade.network, cascade.inverters, "hifi3")
    traj = integrate(model, angle_kick(model), 0.05)
    rows = list(csv.reader(io.StringIO(traj.to_csv())))
    assert rows[0] == ["t"] + [str(lab) for lab in model.labels]
    assert len(rows) == len(traj.t) + 1
    t = [float(r[0]) for r in rows[1:]]
    assert t == sorted(t)
    assert float(rows[-1][1]) == pytest.approx(traj.final[0], rel=1e-14)


def test_droop_step_moves_equilibrium(cascade):
    model, x0 = droop_step(cascade.network, cascade.inverters, "hifi3", kp_scale=0.5)
    assert np.abs(model.rhs(x0)).max() > 1e-6
    settled = model.rhs(integrate(model, x0, 5.0).final)
    angle = np.array([lab.kind == "angle" for lab in model.labels])
    # new synchronous frequency: all angles drift together, everything else at rest
    assert np.ptp(settled[angle]) < 1e-6 and abs(settled[angle][0]) > 1e-3
    assert np.abs(settled[~angle]).max() < 1e-6
    assert all(a.w_set == b.w_set for a, b in zip(model.inverters, build_network_nonlinear(cascade.network, cascade.inverters, "hifi3").inverters))


def test_load_step_rejects_bad_scale(cascade):
    with pytest.raises(ValueError):
        load_step(cascade.network, cascade.inverters, "hifi3", 0, 0.0)


def test_bench_records():
    records = bench([identical_cascade(5)], kinds=("full", "hifi3"), repeats=1, t_end=0.05)
    by_kind = {r.kind: r for r in records}
    assert by_kind["hifi3"].n_states == 15
    assert by_kind["full"].n_states == 43
    assert all(r.wall_time > 0 and r.error is None and r.solver == "trapezoidal" for r in records)
