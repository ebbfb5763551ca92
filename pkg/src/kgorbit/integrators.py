"""Fixed-step time evolution with section (return-map) event detection.

Two schemes:

* ``split2`` — Strang composition kick(dt/2) o linear(dt) o kick(dt/2).
  The kick applies only the power nonlinearity, b_n -= dt/2 <u^(2p+1), e_n>;
  the linear flow of da_n = b_n, db_n = -(lam_n^2 - m^2) a_n is applied
  exactly per mode: an elliptic rotation with omega_n = sqrt(lam_n^2 - m^2)
  for n >= 1 and the cosh/sinh hyperbolic map for the constant mode, where
  lam_0^2 - m^2 = -m^2 < 0.  Exact linear flow removes any step-size
  restriction from the fast modes, and the hyperbolic mode is not
  amplified by splitting error near the saddle.

* ``rk4`` — classical 4-stage Runge-Kutta on the full vector field, used
  as the cross-validation oracle and wherever one-loop accuracy matters
  more than long-time energy behaviour.

Section crossings are detected by a per-step sign change of the residual
and refined by bisected re-integration from the bracketing state, which
keeps the refined point on the numerical flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoCrossing, NonFiniteState
from .hamiltonian import EnergyBreakdown, State, energy_breakdown, validate_state
from .spectra import ModelParams, SpectrumTable, _project_power_raw

__all__ = [
    "StepperConfig", "SectionSpec", "Trajectory",
    "split2_step", "rk4_step", "evolve", "refine_crossing",
]

_SIGN_CONSTRAINTS = ("b0_positive", "b0_negative", "a0_left_of_center", "a0_right_of_center")


@dataclass(frozen=True)
class SectionSpec:
    """A codimension-one section in the constant-mode plane.

    kind 'a0_equals' / 'b0_equals' fixes which coordinate hits ``level``;
    the sign constraint selects the admissible side of the crossing.
    """

    kind: str
    level: float
    sign_constraint: str

    def __post_init__(self):
        if self.kind not in ("a0_equals", "b0_equals"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.sign_constraint not in _SIGN_CONSTRAINTS:
            raise ValueError(f"unknown sign constraint {self.sign_constraint!r}")

    def residual(self, a0: float, b0: float) -> float:
        return (a0 if self.kind == "a0_equals" else b0) - self.level

    def admits(self, a0: float, b0: float, center: float) -> bool:
        c = self.sign_constraint
        if c == "b0_positive":
            return b0 > 0
        if c == "b0_negative":
            return b0 < 0
        if c == "a0_left_of_center":
            return a0 < center
        return a0 > center


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    scheme: str = "split2"
    max_time: float = 10.0
    sample_stride: int = 1
    section: SectionSpec | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("split2", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass
class Trajectory:
    """Sampled run: times, states and energy diagnostics at every sample,
    plus refined section crossings as (time, State) pairs."""

    times: np.ndarray
    states: list[State]
    events: list[tuple[float, State]]
    energy_series: list[EnergyBreakdown]

    def series(self, name: str) -> np.ndarray:
        """Extract one EnergyBreakdown field as an array over samples."""
        return np.array([getattr(bd, name) for bd in self.energy_series])


class _LinearFlow:
    """Exact per-mode flow of the quadratic part over a fixed step."""

    def __init__(self, table: SpectrumTable, params: ModelParams, dt: float):
        w2 = table.lam_sq - params.m ** 2
        c = np.empty_like(w2)
        s = np.empty_like(w2)   # coefficient of b in the a-update
        g = np.empty_like(w2)   # coefficient of a in the b-update
        ell = w2 > 1e-14
        hyp = w2 < -1e-14
        deg = ~(ell | hyp)
        w = np.sqrt(w2[ell])
        c[ell] = np.cos(w * dt)
        s[ell] = np.sin(w * dt) / w
        g[ell] = -w * np.sin(w * dt)
        k = np.sqrt(-w2[hyp])
        c[hyp] = np.cosh(k * dt)
        s[hyp] = np.sinh(k * dt) / k
        g[hyp] = k * np.sinh(k * dt)
        c[deg] = 1.0
        s[deg] = dt
        g[deg] = 0.0
        self.c, self.s, self.g = c, s, g

    def apply(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.c * a + self.s * b, self.g * a + self.c * b


def _kick(a: np.ndarray, b: np.ndarray, tau: float, table: SpectrumTable,
          exponent: int) -> None:
    b -= tau * _project_power_raw(a, exponent, table)


def split2_step(s: State, dt: float, table: SpectrumTable, params: ModelParams,
                nonlinear: bool = True) -> State:
    """One Strang step.  ``nonlinear=False`` drops the kick (linear-flow testing)."""
    validate_state(s, table)
    flow = _LinearFlow(table, params, dt)
    a, b = s.a.copy(), s.b.copy()
    exponent = 2 * params.p + 1
    if nonlinear:
        _kick(a, b, 0.5 * dt, table, exponent)
    a, b = flow.apply(a, b)
    if nonlinear:
        _kick(a, b, 0.5 * dt, table, exponent)
    return State(a, b, s.t + dt)


def _rk4_arrays(a: np.ndarray, b: np.ndarray, dt: float, w2: np.ndarray,
                table: SpectrumTable, exponent: int, nonlinear: bool
                ) -> tuple[np.ndarray, np.ndarray]:
    def db(av):
        out = -w2 * av
        if nonlinear:
            out -= _project_power_raw(av, exponent, table)
        return out

    k1a, k1b = b, db(a)
    k2a, k2b = b + 0.5 * dt * k1b, db(a + 0.5 * dt * k1a)
    k3a, k3b = b + 0.5 * dt * k2b, db(a + 0.5 * dt * k2a)
    k4a, k4b = b + dt * k3b, db(a + dt * k3a)
    return (a + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a),
            b + dt / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b))


def rk4_step(s: State, dt: float, table: SpectrumTable, params: ModelParams,
             nonlinear: bool = True) -> State:
    """One classical Runge-Kutta step on the full vector field."""
    validate_state(s, table)
    w2 = table.lam_sq - params.m ** 2
    a, b = _rk4_arrays(s.a, s.b, dt, w2, table, 2 * params.p + 1, nonlinear)
    return State(a, b, s.t + dt)


def _single_step(s: State, dt: float, table: SpectrumTable, params: ModelParams,
                 scheme: str) -> State:
    if scheme == "split2":
        return split2_step(s, dt, table, params)
    return rk4_step(s, dt, table, params)


def refine_crossing(s_before: State, s_after: State, section: SectionSpec,
                    table: SpectrumTable, params: ModelParams,
                    scheme: str = "split2", tol: float = 1e-10,
                    max_iter: int = 200) -> tuple[float, State]:
    """Bisect the sub-step length until the section residual is below tol.

    Each trial point is produced by one scheme step of the trial length
    from ``s_before``, so the refined crossing stays on the numerical
    flow.  Raises NoCrossing when the bracketing residuals do not change
    sign or the refined point violates the sign constraint.
    """
    dt_full = s_after.t - s_before.t
    if not dt_full > 0:
        raise NoCrossing("bracketing states are not time-ordered")
    r_lo = section.residual(float(s_before.a[0]), float(s_before.b[0]))
    r_hi = section.residual(float(s_after.a[0]), float(s_after.b[0]))
    if r_lo == 0.0:
        candidate, tau = s_before.copy(), 0.0
    elif r_hi == 0.0:
        candidate, tau = s_after.copy(), dt_full
    elif r_lo * r_hi > 0:
        raise NoCrossing(
            f"section residual does not change sign over [{s_before.t}, {s_after.t}]")
    else:
        lo, hi = 0.0, dt_full
        candidate, tau = s_after, dt_full
        best, best_res = s_after, abs(r_hi)
        for _ in range(max_iter):
            tau = 0.5 * (lo + hi)
            candidate = _single_step(s_before, tau, table, params, scheme)
            r_mid = section.residual(float(candidate.a[0]), float(candidate.b[0]))
            if abs(r_mid) < best_res:
                best, best_res = candidate, abs(r_mid)
            if abs(r_mid) <= tol:
                break
            if r_lo * r_mid < 0:
                hi = tau
            else:
                lo = tau
        else:
            if best_res > tol:
                raise NoCrossing(f"refinement stalled at |residual| = {best_res:.3e}")
            candidate = best
            tau = candidate.t - s_before.t
    if not section.admits(float(candidate.a[0]), float(candidate.b[0]), params.center):
        raise NoCrossing(f"crossing rejected by sign constraint {section.sign_constraint}")
    return s_before.t + tau, candidate


def evolve(s0: State, cfg: StepperConfig, table: SpectrumTable,
           params: ModelParams, max_events: int | None = None) -> Trajectory:
    """Integrate to cfg.max_time with fixed steps.

    States and energy breakdowns are recorded every ``sample_stride``
    steps (plus the final step); every transversal crossing of
    cfg.section that satisfies the sign constraint is refined to
    |residual| <= 1e-10 and recorded.  Stops early once ``max_events``
    crossings have been collected.  Raises NonFiniteState if the
    coefficients blow up (checked at sample resolution; NaN persists).
    """
    validate_state(s0, table)
    n_steps = max(1, int(round(cfg.max_time / cfg.dt)))
    dt = cfg.dt
    exponent = 2 * params.p + 1
    w2 = table.lam_sq - params.m ** 2
    section = cfg.section

    a, b = s0.a.astype(float).copy(), s0.b.astype(float).copy()
    t0 = s0.t

    if cfg.scheme == "split2":
        flow = _LinearFlow(table, params, dt)
        half = 0.5 * dt

        def advance(a, b):
            _kick(a, b, half, table, exponent)
            a, b = flow.apply(a, b)
            _kick(a, b, half, table, exponent)
            return a, b
    else:
        def advance(a, b):
            return _rk4_arrays(a, b, dt, w2, table, exponent, True)

    times = [t0]
    states = [State(a.copy(), b.copy(), t0)]
    energies = [energy_breakdown(states[0], table, params)]
    events: list[tuple[float, State]] = []

    prev_a = a.copy()
    prev_b = b.copy()
    res_prev = section.residual(float(a[0]), float(b[0])) if section else 0.0

    for i in range(1, n_steps + 1):
        if section is not None:
            np.copyto(prev_a, a)
            np.copyto(prev_b, b)
        a, b = advance(a, b)
        t = t0 + i * dt

        if section is not None:
            res = section.residual(float(a[0]), float(b[0]))
            crossed = (res_prev * res < 0) or (res == 0.0 and res_prev != 0.0)
            if crossed:
                try:
                    ev = refine_crossing(State(prev_a.copy(), prev_b.copy(), t - dt),
                                         State(a.copy(), b.copy(), t),
                                         section, table, params, scheme=cfg.scheme)
                    events.append(ev)
                except NoCrossing:
                    pass
            res_prev = res
            if max_events is not None and len(events) >= max_events:
                st = State(a.copy(), b.copy(), t)
                if not (np.isfinite(a).all() and np.isfinite(b).all()):
                    raise NonFiniteState(f"non-finite coefficients at t = {t}")
                times.append(t)
                states.append(st)
                energies.append(energy_breakdown(st, table, params))
                break

        if i % cfg.sample_stride == 0 or i == n_steps:
            if not (np.isfinite(a).all() and np.isfinite(b).all()):
                raise NonFiniteState(f"non-finite coefficients at t = {t}")
            st = State(a.copy(), b.copy(), t)
            times.append(t)
            states.append(st)
            energies.append(energy_breakdown(st, table, params))

    return Trajectory(times=np.array(times), states=states,
                      events=events, energy_series=energies)
