import math

import numpy as np
import pytest

from _oracles import symplectic_gradient_fd
from rabitherm import semiclassical as sc
from rabitherm.errors import IntegrationError, PoleError
from rabitherm.hamiltonian import ModelParams

STRONG = ModelParams(1.0, 10.0, 2.0)


def test_energy_examples():
    assert sc.classical_energy(sc.ClassicalState(0, 0, 1, 0.7), ModelParams(1.0, 3.0, 1.0)) == pytest.approx(0.5)
    assert sc.classical_energy(sc.ClassicalState(1, 0, 0, math.pi / 2), STRONG) == pytest.approx(0.5)
    # 1/2 + 1/2 + (10 sqrt 2 + 2)
    e = sc.classical_energy(sc.ClassicalState(1, 1, 0, 0), STRONG)
    assert e == pytest.approx(17.142135623730951, abs=1e-12)
    with pytest.raises(ValueError):
        sc.ClassicalState(0, 0, 1.2, 0)


def test_rhs_read_off():
    d = sc.eom_rhs(sc.ClassicalState(1.3, 0.4, 0.0, math.pi / 2), ModelParams(1.0, 2.0, 0.0))
    assert d[2] == pytest.approx(2.0 * math.sqrt(2) * 1.3)
    assert d[3] == pytest.approx(0.5)
    assert d[0] == pytest.approx(0.4)


def test_rhs_drive_enters_inversion_rate():
    s = sc.ClassicalState(0.0, 0.0, 0.2, 1.0)
    d = sc.eom_rhs(s, ModelParams(1.0, 2.0, 1.5))
    assert d[2] == pytest.approx(1.5 * math.sqrt(1 - 0.04) * math.sin(1.0))


@pytest.mark.parametrize("seed", range(5))
def test_rhs_is_symplectic_gradient(seed):
    rng = np.random.default_rng(seed)
    params = ModelParams(rng.uniform(0.5, 2), rng.uniform(0, 10), rng.uniform(-3, 3))
    y = np.array([rng.normal(), rng.normal(), rng.uniform(-0.99, 0.99), rng.uniform(-np.pi, np.pi)])

    def h(v):
        return sc.classical_energy(sc.ClassicalState(*v), params)

    got = sc.eom_rhs(sc.ClassicalState(*y), params)
    np.testing.assert_allclose(got, symplectic_gradient_fd(h, y), atol=1e-6)


def test_cartesian_rhs_matches_chart():
    s = sc.ClassicalState(0.7, -0.3, 0.4, 2.0)
    r = math.sqrt(1 - s.Z**2)
    d = sc.eom_rhs(s, STRONG)
    dc = sc.eom_rhs_cartesian(s.to_cartesian(), STRONG)
    # chain rule from (Z, dphi) to (s_x, s_y, s_z)
    dsx = -s.Z / r * math.cos(s.dphi) * d[2] - r * math.sin(s.dphi) * d[3]
    dsy = -s.Z / r * math.sin(s.dphi) * d[2] + r * math.cos(s.dphi) * d[3]
    np.testing.assert_allclose(dc, [d[0], d[1], dsx, dsy, d[2]], atol=1e-12)


def test_pole_flagged():
    with pytest.raises(PoleError):
        sc.eom_rhs(sc.ClassicalState(0, 0, 1.0, 0), STRONG)


def test_harmonic_limit():
    params = ModelParams(1.0, 0.0, 0.0)
    s0 = sc.ClassicalState(1.0, 0.0, 0.3, 0.5)
    tr = sc.integrate(s0, params, 4 * math.pi, math.pi / 2)
    np.testing.assert_allclose(tr.states[:, 0], np.cos(tr.times), atol=1e-10)
    np.testing.assert_allclose(tr.states[:, 1], -np.sin(tr.times), atol=1e-10)
    np.testing.assert_allclose(tr.states[:, 2], 0.3, atol=1e-12)
    np.testing.assert_allclose(tr.states[:, 3], 0.5 + 0.5 * tr.times, atol=1e-10)


def test_energy_conservation_strong_coupling():
    s0 = sc.state_on_shell(0.0, STRONG, 1.0, 0.3, 2.4)
    tr = sc.integrate(s0, STRONG, 1e3, 1.0, max_drift=1e-8)
    assert tr.relative_energy_drift < 1e-8


@pytest.mark.parametrize(
    "params, s0, t",
    [
        # chaotic orbit: keep e^(lambda t) times rounding well below the tolerance
        (STRONG, sc.state_on_shell(0.0, STRONG, 1.0, 0.3, 2.4), 10.0),
        (ModelParams(1.0, 0.3, 0.0), sc.ClassicalState(1.0, 0.5, 0.2, 0.1), 200.0),
    ],
)
def test_time_reversal(params, s0, t):
    fwd = sc.integrate(s0, params, t, t)
    back = sc.integrate(fwd.state(-1), params, -t, t)
    np.testing.assert_allclose(back.raw[-1], fwd.raw[0], atol=1e-6)


def test_chart_and_cartesian_agree():
    s0 = sc.ClassicalState(0.5, 0.2, 0.1, 0.3)
    params = ModelParams(1.0, 0.5, 0.3)
    a = sc.integrate(s0, params, 50.0, 1.0, coords="chart")
    b = sc.integrate(s0, params, 50.0, 1.0, coords="cartesian")
    assert np.max(np.abs(np.abs(a.states[:, 2])) < 0.99)
    np.testing.assert_allclose(a.states, b.states, atol=1e-6)


def test_chart_reports_pole():
    # the strong-coupling orbit passes close to the poles
    s0 = sc.state_on_shell(0.0, STRONG, 1.0, 0.3, 2.4)
    saved = sc.POLE_EPS
    try:
        sc.POLE_EPS = 1e-3
        with pytest.raises(PoleError):
            sc.integrate(s0, STRONG, 1e3, 1.0, coords="chart")
    finally:
        sc.POLE_EPS = saved


def test_max_drift_enforced():
    s0 = sc.state_on_shell(0.0, STRONG, 1.0, 0.3, 2.4)
    with pytest.raises(IntegrationError):
        sc.integrate(s0, STRONG, 100.0, 1.0, rtol=1e-5, atol=1e-5, max_drift=1e-12)


def test_section_harmonic_circle():
    params = ModelParams(1.0, 0.0, 0.0)
    # Z constant: use the surface x = 0 crossed upward, record (p, Z)
    tr = sc.integrate(sc.ClassicalState(1.0, 0.0, 0.3, 0.0), params, 40.0, 1.0)
    sec = sc.poincare_section(tr, sc.SurfaceSpec("x", 0.0, 1, ("p", "Z")))
    np.testing.assert_allclose(sec.points[:, 0], 1.0, atol=1e-10)
    np.testing.assert_allclose(np.diff(sec.times), 2 * math.pi, atol=1e-9)


def test_section_shell_confinement():
    s0 = sc.state_on_shell(0.0, STRONG, 1.0, 0.3, 2.4)
    tr = sc.integrate(s0, STRONG, 300.0, 1.0)
    sec = sc.poincare_section(tr)
    assert sec.points.shape[0] > 100
    assert np.max(np.abs(sec.energies - 0.0)) < 1e-6
    z = np.array([sc.eom_rhs_cartesian(sc.ClassicalState(x, p, 0.0, 0.0).to_cartesian(), STRONG)[4]
                  for x, p in sec.points[:3]])
    assert z.shape == (3,)


def test_section_errors():
    tr = sc.integrate(sc.ClassicalState(0.0, 0.0, 0.3, 0.0), ModelParams(1.0, 0.0, 0.0), 5.0, 1.0)
    with pytest.raises(ValueError):
        sc.poincare_section(tr)
    with pytest.raises(ValueError):
        sc.SurfaceSpec("dphi")


def test_fill_fraction_chaotic_vs_regular():
    params = ModelParams(1.0, 10.0, 2.0)
    s0 = sc.state_on_shell(0.0, params, 1.0, 0.3, 2.4)
    surface = sc.SurfaceSpec("x", 0.0, 1, ("p", "Z"))
    chaotic = sc.poincare_section(sc.integrate(s0, params, 1000.0, 1.0), surface)
    r0 = sc.ClassicalState(2.0, 0.0, -0.2, 0.0)
    regular = sc.poincare_section(sc.integrate(r0, ModelParams(1.0, 0.05, 0.0), 1000.0, 1.0), surface)
    pts = chaotic.points
    ext = ((pts[:, 0].min(), pts[:, 0].max()), (-1.0, 1.0))
    assert sc.fill_fraction(regular.points, ext) < 0.2 * sc.fill_fraction(chaotic.points, ext)


def test_lyapunov_integrable_and_chaotic():
    zero = sc.lyapunov_largest(sc.ClassicalState(1.0, 0.0, 0.3, 0.4), ModelParams(1.0, 0.0, 0.0), 2000.0)
    assert abs(zero.exponent) < 1e-3
    s0 = sc.state_on_shell(0.0, STRONG, 1.0, 0.3, 2.4)
    chaos = sc.lyapunov_largest(s0, STRONG, 2000.0)
    assert chaos.exponent > 0.3
    assert chaos.history.shape == chaos.times.shape


def test_lyapunov_seeded():
    s0 = sc.state_on_shell(0.0, STRONG, 1.0, 0.3, 2.4)
    a = sc.lyapunov_largest(s0, STRONG, 200.0, seed=7)
    b = sc.lyapunov_largest(s0, STRONG, 200.0, seed=7)
    assert np.array_equal(a.history, b.history)
    with pytest.raises(ValueError):
        sc.lyapunov_largest(s0, STRONG, 3.0)


def test_adiabatic_potentials():
    vm, vp = sc.adiabatic_potentials(0.0, STRONG)
    assert (vm, vp) == pytest.approx((-math.sqrt(4.25), math.sqrt(4.25)))
    xc = -STRONG.lam / (math.sqrt(2) * STRONG.g)
    vm, vp = sc.adiabatic_potentials(xc, STRONG)
    assert vp - vm == pytest.approx(1.0, abs=1e-12)


def test_double_well_minima_and_symmetry():
    from scipy.optimize import minimize_scalar

    params = ModelParams(1.0, 10.0, 0.0)
    res = minimize_scalar(lambda x: sc.adiabatic_potentials(x, params)[0], bounds=(1, 30), method="bounded",
                          options={"xatol": 1e-10})
    assert res.x == pytest.approx(math.sqrt(2) * 10, rel=1e-3)
    assert res.x**2 / 2 == pytest.approx(100, rel=1e-2)
    x = np.linspace(-20, 20, 101)
    np.testing.assert_allclose(sc.adiabatic_potentials(x, params)[0], sc.adiabatic_potentials(-x, params)[0])
    asym = sc.adiabatic_potentials(x, STRONG)[0] - sc.adiabatic_potentials(-x, STRONG)[0]
    assert np.max(np.abs(asym)) > 1.0


def test_state_on_shell():
    s = sc.state_on_shell(10.0, STRONG, 0.5, 0.1, 1.0, sign=-1)
    assert s.p < 0
    assert sc.classical_energy(s, STRONG) == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(ValueError):
        sc.state_on_shell(-1e3, STRONG, 0.5, 0.1, 1.0)
