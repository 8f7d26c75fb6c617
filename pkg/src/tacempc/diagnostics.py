"""Turnpike statistics and Lyapunov-function diagnostics.

Turnpike reports count how many predicted time instants lie in an
epsilon ball around the optimal steady-state and check the lower bound
on that count implied by the dissipation margin.  Lyapunov diagnostics
combine the rotated value function with the weighted history deviation
into the per-step function What and its T-step forward sum W, which is
practically decreasing along the closed loop even when the rotated
value function alone is not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .closedloop import ClosedLoopTrace
from .errors import DomainError
from .history import HistoryState, iss_function, matrix_one_norm, window_deficit
from .model import DissipativityCertificate, SteadyState, output_extremes
from .ocp import OcpSolution


@dataclass(frozen=True)
class TurnpikeReport:
    """Steady-state proximity statistics of one open-loop solution."""

    epsilon: float
    proximity_set: Tuple[int, ...]  # sorted k with (x(k), u(k)) near (x_s, u_s)
    Q: int
    consecutive_set: Tuple[int, ...]  # k_x ending T consecutive proximate instants
    lemma1_lhs: int  # = Q
    lemma1_rhs: float  # N - C' / rho(epsilon)
    C: float  # 2 * sup |lam| over the state box
    C_prime: float  # delta + C - k_{T,N} * theta_low
    delta: float  # realized cost excess J_N - N * ell_s
    theta_low: float  # min over Z of lambda_bar . h

    @property
    def lemma1_holds(self) -> bool:
        """True when the bound is informative (rhs > 0) and satisfied,
        and vacuously when it is uninformative."""
        return self.lemma1_rhs <= 0 or self.lemma1_lhs >= self.lemma1_rhs


def _storage_sup(cert: DissipativityCertificate, model, grid_density=101) -> float:
    axes = [
        np.linspace(model.z_lower[j], model.z_upper[j], grid_density)
        for j in range(model.n)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh])
    return float(np.max(np.abs(np.asarray(cert.lam(pts)))))


def turnpike_report(
    solution: OcpSolution,
    ss: SteadyState,
    cert: DissipativityCertificate,
    epsilon: float,
) -> TurnpikeReport:
    """Proximity count Q, the consecutive-window detector and the
    dissipativity-based lower bound Q >= N - C'/rho(epsilon).

    Proximity uses the Euclidean norm of the stacked deviation
    (x(k) - x_s, u(k) - u_s); delta is the realized excess of the plain
    economic cost over N * ell_s for this solution.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    spec = solution.spec
    model, N, T = spec.model, spec.N, spec.T
    dev = np.hstack([solution.x_pred[:N] - ss.x_s, solution.u - ss.u_s])
    dist = np.linalg.norm(dev, axis=1)
    proximate = dist <= epsilon
    proximity_set = tuple(int(k) for k in np.nonzero(proximate)[0])

    consecutive = []
    run = 0
    for k in range(N):
        run = run + 1 if proximate[k] else 0
        if run >= T:
            consecutive.append(k)

    J_N = float(np.sum(model.ell(solution.x_pred[:N].T, solution.u.T)))
    delta = J_N - N * ss.ell_s
    C = 2.0 * _storage_sup(cert, model)
    theta_low = output_extremes(model, cert)[0]
    C_prime = delta + C - window_deficit(N, T) * theta_low
    rhs = N - C_prime / float(cert.rho(epsilon))
    return TurnpikeReport(
        epsilon=float(epsilon),
        proximity_set=proximity_set,
        Q=len(proximity_set),
        consecutive_set=tuple(consecutive),
        lemma1_lhs=len(proximity_set),
        lemma1_rhs=rhs,
        C=C,
        C_prime=C_prime,
        delta=delta,
        theta_low=theta_low,
    )


@dataclass(frozen=True)
class LyapunovTrace:
    """Per-step Lyapunov quantities along a closed-loop trace.

    What(k) = Jtildestar(k) + c * V(k) with V the omega-weighted history
    deviation; W(k) sums What over the next T steps and is defined for
    k = 0 .. len(What) - T.
    """

    c: float
    V: np.ndarray  # weighted history deviation per step
    What: np.ndarray
    W: np.ndarray


def lyapunov_trace(
    trace: ClosedLoopTrace,
    cert: DissipativityCertificate,
    ss: SteadyState,
) -> LyapunovTrace:
    """Build What and its T-step forward sum W from a recorded run."""
    T = trace.T
    if T < 2:
        raise DomainError("Lyapunov diagnostics require T >= 2")
    n_vals = min(trace.K, len(trace.Jtildestar), len(trace.histories))
    if n_vals < T:
        raise DomainError(
            f"trace too short for W: need at least {T} evaluated steps, got {n_vals}"
        )
    n, m = trace.model.n, trace.model.m
    c = cert.a * (n + m) ** (-0.5 * cert.omega) / (2.0 * cert.L_h * (T - 1))
    V = np.array(
        [iss_function(trace.histories[k], ss.h_s, cert.omega) for k in range(n_vals)]
    )
    What = trace.Jtildestar[:n_vals] + c * V
    W = np.array([np.sum(What[k : k + T]) for k in range(n_vals - T + 1)])
    return LyapunovTrace(c=c, V=V, What=What, W=W)


def w_decrease_check(lt: LyapunovTrace, tol: float = 1e-3):
    """Largest one-step increase of W and whether it stays within tol."""
    series = np.asarray(lt.W, dtype=float)
    if series.size == 0:
        raise DomainError("empty Lyapunov series")
    if series.size == 1:
        return 0.0, True
    max_increase = float(np.max(np.diff(series)))
    return max_increase, max_increase <= tol


def series_decrease_check(series, tol: float = 1e-3):
    """Same check on an arbitrary series (e.g. the rotated value
    function, which fails it on the closed loop)."""
    series = np.asarray(series, dtype=float)
    if series.size < 2:
        return 0.0, True
    max_increase = float(np.max(np.diff(series)))
    return max_increase, max_increase <= tol


def remark2_bound(H: HistoryState, lambda_bar, h_s=None) -> float:
    """Worst-case multiplier-weighted history contribution
    (T-1)^2 * ||lambda_bar|| * ||H - H^s||_1 (induced matrix 1-norm)."""
    if H.T < 2:
        raise DomainError("remark2_bound requires T >= 2")
    lambda_bar = np.atleast_1d(np.asarray(lambda_bar, dtype=float))
    columns = H.columns
    if h_s is not None:
        columns = columns - np.atleast_1d(np.asarray(h_s, dtype=float)).reshape(-1, 1)
    return float(
        (H.T - 1) ** 2 * np.linalg.norm(lambda_bar) * matrix_one_norm(columns)
    )
