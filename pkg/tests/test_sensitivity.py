import numpy as np
import pytest

from swimlab.core import BodyShape, DomainSpec, SwimmerState
from swimlab import fluid, sensitivity
from swimlab.errors import GridMismatch, MissingSensitivity
from swimlab.forces import rasterize_densities, unit_densities
from swimlab.simulator import (
    ControlSchedule,
    Scenario,
    Trajectory,
    baseline_run,
    simulate,
)

from conftest import l_swimmer_scenario


def make_synthetic_baseline(field_builder, steps=10, dt=1e-3):
    """A hand-built trajectory with stationary parts and given fields."""
    dom = DomainSpec((1.0, 1.0), (48, 48), 0.02)
    state = SwimmerState([[0.35, 0.5], [0.55, 0.5], [0.75, 0.5]])
    scn = Scenario(
        dom, BodyShape.disc(0.05), state, ControlSchedule.zero(3),
        horizon=steps * dt, dt=dt,
    )
    times = np.arange(steps + 1) * dt
    snapshots = [(k, field_builder(dom)) for k in range(steps + 1)]
    k = steps + 1
    return Trajectory(
        times=times,
        positions=np.tile(state.positions, (k, 1, 1)),
        controls=np.zeros((k, 3)),
        part_velocities=np.zeros((k, 3, 2)),
        energy=np.zeros(k),
        pair_margin=np.full(k, 0.1),
        wall_margin=np.full(k, 0.1),
        max_divergence_rel=0.0,
        halted=False,
        halt_time=np.nan,
        halt_cause="",
        scenario=scn,
        snapshots=snapshots,
    )


def shear_field(dom, gamma=0.8):
    yc = dom.cell_edges(1)[:-1] + dom.h[1] / 2.0
    u = np.tile(gamma * yc, (dom.cells[0] + 1, 1))
    v = np.zeros((dom.cells[0], dom.cells[1] + 1))
    return fluid.VectorField(dom, (u, v))


# ---------------------------------------------------------------------------
# Volterra solver on manufactured problems


def test_volterra_zero_kernel_returns_data():
    times = np.linspace(0.0, 1.0, 33)
    g = np.stack([np.sin(times), np.cos(times)], axis=1)
    kernel = np.zeros((33, 2, 2))
    psi = sensitivity.volterra_solve(times, kernel, g)
    assert psi == pytest.approx(g)


def manufactured_error(steps):
    kmat = np.array([[0.3, -0.1], [0.2, 0.4]])
    times = np.linspace(0.0, 2.0, steps + 1)
    psi_exact = np.stack([np.cos(times), np.sin(times)], axis=1)
    integral = np.stack([np.sin(times), 1.0 - np.cos(times)], axis=1)
    g = psi_exact + integral @ kmat.T
    kernel = np.tile(kmat, (steps + 1, 1, 1))
    psi = sensitivity.volterra_solve(times, kernel, g)
    return float(np.max(np.abs(psi - psi_exact)))


def test_volterra_second_order_convergence():
    e1 = manufactured_error(50)
    e2 = manufactured_error(100)
    e3 = manufactured_error(200)
    assert np.log2(e1 / e2) >= 1.7
    assert np.log2(e2 / e3) >= 1.7


def test_volterra_grid_mismatch():
    times = np.linspace(0.0, 1.0, 10)
    with pytest.raises(GridMismatch):
        sensitivity.volterra_solve(times, np.zeros((9, 2, 2)), np.zeros((10, 2)))


# ---------------------------------------------------------------------------
# kernel


def test_kernel_on_shear_baseline():
    base = make_synthetic_baseline(lambda dom: shear_field(dom, gamma=0.8))
    ker = sensitivity.volterra_kernel(base, part=0)
    # grad u = [[0, 0.8], [0, 0]] so the kernel is the negated average
    expected = np.array([[0.0, -0.8], [0.0, 0.0]])
    assert np.max(np.abs(ker.values - expected)) < 1e-10
    assert ker.anorm == pytest.approx(0.8 * base.times[-1], rel=1e-6)
    assert ker.contraction_ok


def test_kernel_warns_above_contraction_bound():
    base = make_synthetic_baseline(
        lambda dom: shear_field(dom, gamma=30.0), steps=10, dt=1e-3
    )
    with pytest.warns(RuntimeWarning, match="contraction"):
        ker = sensitivity.volterra_kernel(base, part=0)
    assert not ker.contraction_ok


def test_kernel_zero_at_equilibrium():
    scn = l_swimmer_scenario(cells=48, horizon=0.004, dt=1e-3)
    base = baseline_run(scn)
    ker = sensitivity.volterra_kernel(base, part=1)
    assert np.max(np.abs(ker.values)) == 0.0
    assert ker.anorm == 0.0


# ---------------------------------------------------------------------------
# linearized solver


def test_linearized_solver_matches_stokes_at_equilibrium():
    # at a resting baseline the linearized system is exactly the Stokes
    # system driven by the frozen unit force
    scn = l_swimmer_scenario(cells=48, nu=0.01, horizon=0.005, dt=5e-4)
    base = baseline_run(scn)
    sens = sensitivity.linearized_solve(base, control=3)

    w = fluid.VectorField.zeros(scn.domain)
    state = scn.state0
    rows = unit_densities(state, 3)
    force = rasterize_densities(state, scn.shapes, scn.domain, rows)
    for _ in range(len(base.times) - 1):
        w, _ = fluid.stokes_step(w, force, 5e-4)
    final = sens.snapshots[-1]
    for a in range(2):
        assert final.comps[a] == pytest.approx(w.comps[a], abs=1e-13)


def test_linearized_response_scales_linearly():
    scn = l_swimmer_scenario(cells=48, nu=0.01, horizon=0.005, dt=5e-4)
    base = baseline_run(scn)
    sens = sensitivity.linearized_solve(base, control=3)
    assert len(sens.snapshots) == len(base.times)
    assert sens.snapshots[0].norm() == 0.0
    assert sens.snapshots[-1].norm() > 0.0


def test_linear_response_error_shrinks_linearly_in_gain():
    scn = l_swimmer_scenario(cells=48, nu=0.01, horizon=0.005, dt=5e-4)
    base = baseline_run(scn)
    sens = sensitivity.linearized_solve(base, control=3)
    w_final = sens.snapshots[-1]

    def final_field(gain):
        v = np.zeros(5)
        v[2] = gain
        traj = simulate(scn.with_controls(v), store_every=len(base.times) - 1)
        return traj.snapshots[-1][1]

    e = {}
    for gain in (1e-1, 1e-2):
        u_T = final_field(gain)
        diff = fluid.VectorField(
            scn.domain,
            tuple(
                u_T.comps[a] / gain - w_final.comps[a] for a in range(2)
            ),
        )
        e[gain] = diff.norm()
    ratio = e[1e-1] / e[1e-2]
    assert 3.0 <= ratio <= 30.0  # about first order in the gain


# ---------------------------------------------------------------------------
# displacement sensitivities


def test_displacement_matches_small_time_law_at_equilibrium():
    scn = l_swimmer_scenario(cells=48, nu=0.002, horizon=0.006, dt=2e-4)
    base = baseline_run(scn)
    sens = sensitivity.linearized_solve(base, control=3)
    disp = sensitivity.displacement_sensitivity(sens, part=0)
    v = sensitivity.projected_force_averages(scn.state0, scn.shapes, scn.domain)
    expected = 0.5 * base.times[-1] ** 2 * v[2, 0]
    assert disp.psi[-1] == pytest.approx(expected, rel=0.08)


def test_displacement_sensitivity_against_finite_differences_on_drift():
    dom = DomainSpec((1.0, 1.0), (48, 48), 0.02)
    state = SwimmerState([[0.3, 0.35], [0.5, 0.65], [0.7, 0.35]])
    scn = Scenario(
        dom, BodyShape.disc(0.05), state, ControlSchedule.zero(3),
        horizon=0.03, dt=5e-4, eddy_amplitude=0.4,
    )
    base = baseline_run(scn)
    sens = sensitivity.linearized_solve(base, control=2)
    ker = sensitivity.volterra_kernel(base, part=0)
    assert ker.anorm > 0.01  # genuinely nonzero kernel on this baseline
    disp = sensitivity.displacement_sensitivity(sens, part=0, kernel=ker)

    h = 1e-3
    vp = np.zeros(3)
    vp[1] = h
    zp = simulate(scn.with_controls(vp)).positions[-1][0]
    zm = simulate(scn.with_controls(-vp)).positions[-1][0]
    fd = (zp - zm) / (2.0 * h)
    rel = np.linalg.norm(disp.psi[-1] - fd) / np.linalg.norm(fd)
    assert rel <= 0.05

    # flipping the kernel sign must visibly worsen the agreement
    averages = sensitivity.part_average_series(sens, 0)
    g = sensitivity.cumulative_trapezoid(averages, base.times)
    flipped = sensitivity.volterra_solve(base.times, -ker.values, g)
    rel_flipped = np.linalg.norm(flipped[-1] - fd) / np.linalg.norm(fd)
    assert rel_flipped > 3.0 * rel


def test_displacement_kernel_bookkeeping():
    scn = l_swimmer_scenario(cells=48, horizon=0.004, dt=1e-3)
    base = baseline_run(scn)
    sens = sensitivity.linearized_solve(base, control=3)
    ker = sensitivity.volterra_kernel(base, part=2)
    with pytest.raises(MissingSensitivity):
        sensitivity.displacement_sensitivity(sens, part=0, kernel=ker)


# ---------------------------------------------------------------------------
# micromotion prediction


def test_micromotion_zero_time_returns_start():
    scn = l_swimmer_scenario(cells=48)
    amps = np.zeros(5)
    amps[2] = 1.0
    pred = sensitivity.micromotion_predict(
        scn.state0, scn.shapes, scn.domain, amps, gain=0.05, t=0.0
    )
    assert pred == pytest.approx(scn.state0.positions)


def test_micromotion_scales_with_gain_and_time():
    scn = l_swimmer_scenario(cells=48)
    amps = np.zeros(5)
    amps[2] = 1.0
    p1 = sensitivity.micromotion_predict(
        scn.state0, scn.shapes, scn.domain, amps, gain=0.05, t=0.01
    )
    p2 = sensitivity.micromotion_predict(
        scn.state0, scn.shapes, scn.domain, amps, gain=0.10, t=0.01
    )
    p3 = sensitivity.micromotion_predict(
        scn.state0, scn.shapes, scn.domain, amps, gain=0.05, t=0.02
    )
    d1 = p1 - scn.state0.positions
    assert p2 - scn.state0.positions == pytest.approx(2.0 * d1, rel=1e-12)
    assert p3 - scn.state0.positions == pytest.approx(4.0 * d1, rel=1e-12)


def test_projected_force_averages_shape():
    scn = l_swimmer_scenario(cells=48)
    v = sensitivity.projected_force_averages(scn.state0, scn.shapes, scn.domain)
    assert v.shape == (5, 4, 2)
    assert np.all(np.isfinite(v))
    # elastic control 3 pushes part 0 along +x (long axis keeps the force)
    assert v[2, 0, 0] > 5.0 * abs(v[2, 0, 1])
