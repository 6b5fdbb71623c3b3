import numpy as np
import pytest
from scipy.integrate import quad

from hsbem.timeshapes import TimeShape, GridPiecewisePoly, correlation, LagKernel


def brute_correlation(test, trial, u, sigma=0.0):
    """Oracle: adaptive quadrature of the correlation integrand, with trial
    deltas added in closed form."""
    tlo, thi = test.pp.support
    dt = test.dt

    def integrand(t):
        return (np.exp(-2 * sigma * t) * test.pp.eval(np.array([t]))[0]
                * trial.pp.eval(np.array([t - u]))[0])

    # split at every kink/jump of either shape so quad sees smooth pieces
    bks = {tlo, thi}
    bks.update(tlo + dt * k for k in range(1, test.pp.ncells))
    bks.update(u + (trial.pp.j0 + k) * dt for k in range(trial.pp.ncells + 1))
    bks = sorted(b for b in bks if tlo <= b <= thi)
    val = sum(quad(integrand, b0, b1, limit=100, epsabs=1e-13)[0]
              for b0, b1 in zip(bks[:-1], bks[1:]))
    for loc, wt in trial.deltas:
        val += wt * np.exp(-2 * sigma * (u + loc)) * test.pp.eval(np.array([u + loc]))[0]
    return val


def test_hat_box_shapes():
    dt = 0.25
    hat = TimeShape.hat(dt)
    box = TimeShape.box(dt)
    tau = np.array([-dt, -dt / 2, 0.0 + 1e-12, dt / 2, dt - 1e-12])
    assert np.allclose(hat.pp.eval(tau), [0, 0.5, 1.0, 0.5, 0.0], atol=1e-10)
    assert np.allclose(box.pp.eval(np.array([-dt / 2])), [1.0])
    assert box.pp.eval(np.array([dt / 2]))[0] == 0.0


def test_hat_derivative_and_delta_train():
    dt = 0.5
    hat = TimeShape.hat(dt)
    d1 = hat.derivative()
    assert not d1.deltas
    assert np.allclose(d1.pp.eval(np.array([-0.25, 0.25])), [1 / dt, -1 / dt])
    d2 = d1.derivative()
    locs = sorted(l for l, _ in d2.deltas)
    assert np.allclose(locs, [-dt, 0.0, dt])
    wts = dict(d2.deltas)
    assert np.isclose(wts[0.0], -2 / dt)
    with pytest.raises(ValueError):
        d2.derivative()


@pytest.mark.parametrize("sigma", [0.0, 1.0])
@pytest.mark.parametrize("pair", [("box", "box"), ("box", "hat"), ("hat", "hat"),
                                  ("hat", "box")])
def test_correlation_against_quadrature(sigma, pair):
    dt = 0.3
    mk = {"box": TimeShape.box, "hat": TimeShape.hat}
    test_s, trial_s = mk[pair[0]](dt), mk[pair[1]](dt)
    C = correlation(test_s, trial_s, sigma=sigma)
    rng = np.random.default_rng(3)
    lo, hi = C.support
    for u in rng.uniform(lo - 0.2, hi + 0.2, size=12):
        ref = brute_correlation(test_s, trial_s, u, sigma)
        assert C.eval(np.array([u]))[0] == pytest.approx(ref, abs=1e-10)


def test_correlation_with_delta_trial():
    # d/dt of the box shape: deltas at -dt and 0
    dt = 0.3
    box = TimeShape.box(dt)
    dbox = box.derivative()
    C = correlation(box, dbox)
    # C(u) = box(u - dt)... check against the closed form box(u-dt)*1 - box(u)*1
    for u in np.linspace(-0.8, 0.8, 17):
        ref = (box.pp.eval(np.array([u - dt]))[0] - box.pp.eval(np.array([u]))[0])
        assert C.eval(np.array([u]))[0] == pytest.approx(ref, abs=1e-12)


def test_lagkernel_derivative_consistency():
    """eval(deriv=1) must be the tau-derivative of eval(deriv=0)."""
    dt = 0.2
    lk = LagKernel(TimeShape.box(dt), TimeShape.hat(dt), d=0)
    tau = np.linspace(-0.39, 0.19, 40)
    eps = 1e-6
    fd = (lk.eval(tau + eps) - lk.eval(tau - eps)) / (2 * eps)
    # away from breakpoints the FD matches the analytic derivative
    mask = np.abs((tau / dt) - np.round(tau / dt)) > 0.05
    assert np.allclose(lk.eval(tau, deriv=1)[mask], fd[mask], atol=1e-6)


def test_fl_transform_against_quadrature():
    dt = 0.25
    lk = LagKernel(TimeShape.box(dt), TimeShape.hat(dt), d=1)
    omega = 1.3 + 0.8j
    ref_re = quad(lambda u: (lk.eval(np.array([u]))[0]
                             * np.exp(-1j * omega * u)).real, -2 * dt, dt,
                  limit=200, epsabs=1e-12)[0]
    ref_im = quad(lambda u: (lk.eval(np.array([u]))[0]
                             * np.exp(-1j * omega * u)).imag, -2 * dt, dt,
                  limit=200, epsabs=1e-12)[0]
    val = lk.fl_transform(omega)
    assert val == pytest.approx(ref_re + 1j * ref_im, abs=1e-10)


def test_acoustic_lag_supports_are_causal():
    """Lag kernels used by the marching solver vanish for tau > dt, so the
    superdiagonal block vanishes identically."""
    dt = 0.5
    box = TimeShape.box(dt)
    hat = TimeShape.hat(dt)
    for trial, d in [(hat, 1), (hat, 0), (box, 0), (box, 1)]:
        lk = LagKernel(box, trial, d=d)
        lo, hi = lk.support()
        assert hi <= dt + 1e-14
        tau = np.linspace(dt + 1e-9, dt + 5, 50)
        assert np.all(lk.eval(tau) == 0.0)
