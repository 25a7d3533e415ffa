"""Deterministic limits: CM closed forms, Bohman-Frieze and bounded-size-rule ODEs, IRG constants,
parabolic Brownian excursions and the multiplicative coalescent."""

import logging
import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats
from scipy.integrate import trapezoid

from .constants import (
    CRITICALITY_TOL,
    DEFAULT_DELTA,
    MIN_EXCURSION_STEPS,
    PARABOLIC_DT,
    POWER_ITERATION_CAP,
    POWER_ITERATION_TOL,
    RK4_MIN_STEP,
    RK4_TOL,
)
from .models import (
    BFSolution,
    BSREstimate,
    BSRRule,
    CMLimitParams,
    CMLimitValues,
    CoalescentState,
    ConvergenceError,
    ExcursionSet,
    IRGLimitConstants,
    Kernel,
    ParabolicPath,
    WindowScaling,
)
from .samplers import IRGWindow, effective_kernel

logger = logging.getLogger(__name__)

Field = Callable[[float, np.ndarray], np.ndarray]


# Configuration model

def cm_limit_eval(t: float, params: CMLimitParams) -> CMLimitValues:
    """Closed-form free-stub susceptibilities of the dynamic CM at time t < t_c."""
    if t < 0 or t >= params.t_c:
        raise ValueError(f"t={t} outside [0, t_c={params.t_c})")
    mu, nu, beta = params.mu, params.nu, params.beta
    E = math.exp(2 * t)
    w = nu - (nu - 1) * E  # vanishes at t_c

    s1 = mu / E
    s2 = mu * (nu + w) / (E * w)
    s3 = beta / w ** 3 + mu * (3 * nu + w) / (E * w)
    g = mu / w
    D = nu ** 2 * mu * (1 - 1 / E) / w ** 2
    s2_star = 1 - mu / (nu - 1) + mu / ((nu - 1) * w)
    return CMLimitValues(
        t=t, s1=s1, s2=s2, s3=s3, g=g, D=D, s2_star=s2_star,
        y=1 / s2, z=s3 / s2 ** 3, u=g / s2, v=D / s2 ** 2,
    )


def cm_drift_fields(
    s1: float,
    s2: float,
    s3: float,
    g: float,
    D: float,
    y: float,
    v: float,
) -> Dict[str, float]:
    """Drift of each CM susceptibility, and of y = 1/s2 and v = D/s2^2."""
    if s1 <= 0:
        raise ValueError(f"s1 must be positive, got {s1}")
    return {
        "F2_s": (2 * s2 ** 2 + 4 * s1 ** 2 - 8 * s2 * s1) / s1,
        "F3_s": (s2 / s1) * (6 * s3 - 12 * s2) + 24 * s2 - 12 * s3 - 8 * s1,
        "F_g": (2 * g * s2 - 4 * g * s1) / s1,
        "F_d": (4 * D * s2 + 2 * s2 ** 2 - 8 * D * s1 - 4 * s2 * s1 + 2 * s1 ** 2) / s1,
        "F2_star": 2 * g ** 2 / s1,
        "F_y": -(2 + 4 * s1 ** 2 * y ** 2 - 8 * s1 * y) / s1,
        "F_v": (2 + 8 * v * s1 - 4 * s1 * y + 2 * s1 ** 2 * y ** 2 - 8 * v * s1 ** 2 * y) / s1,
    }


def cm_near_critical_limits(params: CMLimitParams) -> Dict[str, float]:
    """Limits of y/(t_c - t), z, u and v as t increases to t_c."""
    mu, nu, beta = params.mu, params.nu, params.beta
    return {
        "y_slope": 2 * nu / (mu * (nu - 1)),
        "z": beta / (mu ** 3 * (nu - 1) ** 3),
        "u": 1 / (nu - 1),
        "v": nu / (mu * (nu - 1) ** 2),
    }


def cm_entrance_time(params: CMLimitParams, n: int, delta: float = DEFAULT_DELTA) -> float:
    """Barely subcritical time t_n = t_c - (nu/(2(nu-1))) n^{-delta}."""
    return params.t_c - 0.5 * params.nu / (params.nu - 1) * n ** (-delta)


def cm_entrance_targets(params: CMLimitParams) -> Dict[str, float]:
    """Limits at t_n of g/n^delta, D/n^{2 delta} and s3/s2^3."""
    mu, nu, beta = params.mu, params.nu, params.beta
    return {
        "g_scaled": (nu - 1) * mu / nu ** 2,
        "D_scaled": mu * (nu - 1) ** 2 / nu ** 3,
        "s3_over_s2_cubed": beta / (mu ** 3 * (nu - 1) ** 3),
    }


def cm_blob_weights(free: np.ndarray, params: CMLimitParams, n: int) -> np.ndarray:
    """Blob weights beta^{1/3} f_i / (mu (nu - 1) n^{2/3}) from free-stub counts."""
    return params.beta ** (1 / 3) * np.asarray(free, dtype=float) / (params.mu * (params.nu - 1) * n ** (2 / 3))


def cm_blob_q(params: CMLimitParams, n: int, delta: float = DEFAULT_DELTA, lam: float = 0.0) -> float:
    mu, nu, beta = params.mu, params.nu, params.beta
    return n ** (1 / 3 - delta) * mu * nu ** 2 / beta ** (2 / 3) + 2 * mu * (nu - 1) * nu * lam / beta ** (2 / 3)


def cm_dynamic_scaling(params: CMLimitParams, n: int, lam: float = 0.0) -> WindowScaling:
    """Rescaling of the dynamic CM at t_c + lam n^{-1/3}."""
    mu, nu, beta = params.mu, params.nu, params.beta
    return WindowScaling(
        model="cm",
        distance=beta ** (2 / 3) / (mu * nu * n ** (1 / 3)),
        mass=beta ** (1 / 3) / (mu * n ** (2 / 3)),
        crit_lambda=2 * nu * (nu - 1) * mu * lam / beta ** (2 / 3),
    )


def cm_percolation_scaling(params: CMLimitParams, n: int, lam: float = 0.0) -> WindowScaling:
    """Rescaling of CM percolation at p = 1/nu + lam n^{-1/3}."""
    mu, nu, beta = params.mu, params.nu, params.beta
    return WindowScaling(
        model="cm_percolation",
        distance=beta ** (2 / 3) / (mu * nu * n ** (1 / 3)),
        mass=beta ** (1 / 3) / (mu * n ** (2 / 3)),
        crit_lambda=nu ** 2 * lam / beta ** (2 / 3),
    )


def poisson_degree_pmf(mean: float, min_degree: int = 0, kmax: Optional[int] = None) -> np.ndarray:
    """Poisson(mean) law conditioned on k >= min_degree, truncated at kmax."""
    kmax = kmax if kmax is not None else int(mean + 20 * math.sqrt(mean) + 20)
    k = np.arange(kmax + 1)
    pmf = stats.poisson.pmf(k, mean)
    pmf[:min_degree] = 0.0
    return pmf / pmf.sum()


# Runge-Kutta integration

def _rk4_step(f: Field, t: float, s: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, s)
    k2 = f(t + h / 2, s + h / 2 * k1)
    k3 = f(t + h / 2, s + h / 2 * k2)
    k4 = f(t + h, s + h * k3)
    return s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate(
    f: Field,
    s0: np.ndarray,
    t0: float,
    t1: float,
    h: float,
    tol: float,
    max_step: float = math.inf,
) -> Tuple[np.ndarray, float]:
    """Adaptive RK4 by step doubling; returns the state at t1 and the last step size."""
    s = np.asarray(s0, dtype=float).copy()
    t = t0
    h = min(h, max_step)
    while t < t1:
        last = h >= t1 - t
        step = t1 - t if last else h
        full = _rk4_step(f, t, s, step)
        half = _rk4_step(f, t + step / 2, _rk4_step(f, t, s, step / 2), step / 2)
        err = float(np.max(np.abs(full - half))) / 15.0
        if err <= tol * (1.0 + float(np.max(np.abs(half)))):
            s = half + (half - full) / 15.0
            t = t1 if last else t + step
            if err < tol / 32:
                h = min(2 * step, max_step)
        else:
            h = step / 2
            if h < RK4_MIN_STEP:
                raise ConvergenceError(f"RK4 step collapsed below {RK4_MIN_STEP} at t={t:.6g}")
    return s, h


def rk4_integrate(
    f: Field,
    s0: Sequence[float],
    t0: float,
    t1: float,
    tol: float = RK4_TOL,
    max_step: float = math.inf,
) -> np.ndarray:
    """State at t1 of s' = f(t, s), s(t0) = s0, with steps never above max_step."""
    return _integrate(f, np.asarray(s0, dtype=float), t0, t1, 1e-3, tol, max_step)[0]


def _find_zero(
    f: Field,
    s0: np.ndarray,
    t0: float,
    index: int,
    tol: float,
    march: float = 1e-3,
    t_max: float = 20.0,
    max_step: float = math.inf,
) -> Tuple[float, float, np.ndarray]:
    """First time component `index` crosses zero, by marching then bisection.

    Returns (time, bracket width, state at that time).
    """
    t, s, h = t0, np.asarray(s0, dtype=float), march
    while True:
        nxt, h = _integrate(f, s, t, t + march, min(h, march), tol, max_step)
        if nxt[index] <= 0:
            break
        t, s = t + march, nxt
        if t > t_max:
            raise ConvergenceError(f"Component {index} did not reach zero by t={t_max}")
    lo, hi = 0.0, march
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if rk4_integrate(f, s, t, t + mid, tol, max_step)[index] > 0:
            lo = mid
        else:
            hi = mid
    crossing = t + 0.5 * (lo + hi)
    return crossing, hi - lo, rk4_integrate(f, s, t, crossing, tol, max_step)


# Bohman-Frieze

def _bf_field(v_form: str) -> Field:
    if v_form not in ("primary", "alternative"):
        raise ValueError(f"Unknown v form: {v_form}")

    def field(t: float, s: np.ndarray) -> np.ndarray:
        x, y, z, v = s
        x2 = x * x
        coupling = x2 if v_form == "primary" else x2 * x2
        return np.array([
            -x2 - (1 - x2) * x,
            -x2 * y * y - (1 - x2),
            3 * x2 * (y ** 3 - y * z),
            -2 * coupling * y * v + x2 * y * y / 2 + 1 - x2,
        ])

    return field


def bf_ode_solve(
    t_grid: Optional[Sequence[float]] = None,
    v_form: str = "primary",
    tol: float = RK4_TOL,
    dt: float = math.inf,
) -> BFSolution:
    """Integrate the Bohman-Frieze system in (x, y = 1/s2, z = s3/s2^3, v).

    y stays finite through the s2 blow-up; t_c is its zero. Trajectories are
    reported on t_grid, which must lie in [0, t_c). dt caps the RK4 step.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    field = _bf_field(v_form)
    start = np.array([1.0, 1.0, 1.0, 0.0])
    t_c, bracket, at_tc = _find_zero(field, start, 0.0, index=1, tol=tol, max_step=dt)
    x_c, _, z_c, v_c = at_tc

    grid = np.sort(np.asarray(t_grid if t_grid is not None else [], dtype=float))
    if len(grid) and (grid[0] < 0 or grid[-1] >= t_c):
        raise ValueError(f"Grid must lie in [0, t_c={t_c:.6f})")
    path = np.empty((len(grid), 4))
    t, s = 0.0, start
    for i, target in enumerate(grid):
        s = rk4_integrate(field, s, t, target, tol, dt)
        t = target
        path[i] = s

    y = path[:, 1]
    solution = BFSolution(
        t=grid,
        x=path[:, 0],
        s2=1 / y,
        s3=path[:, 2] / y ** 3,
        y=y,
        v=path[:, 3],
        t_c=t_c,
        t_c_bracket=bracket,
        alpha=1 / (1 - x_c ** 2),
        beta=z_c,
        rho=v_c,
        v_form=v_form,
    )
    logger.info(
        f"Bohman-Frieze: t_c={t_c:.6f} alpha={solution.alpha:.6f} beta={solution.beta:.6f} "
        f"rho={solution.rho:.6f} ({v_form} v form)"
    )
    return solution


def bf_window_time(solution: BFSolution, lam: float, n: int) -> float:
    """t_c + alpha beta^{2/3} lam n^{-1/3}."""
    return solution.t_c + solution.alpha * solution.beta ** (2 / 3) * lam * n ** (-1 / 3)


def bf_scaling(solution: BFSolution, n: int, lam: float = 0.0) -> WindowScaling:
    return WindowScaling(
        model="bf",
        distance=solution.beta ** (2 / 3) / (solution.rho * n ** (1 / 3)),
        mass=solution.beta ** (1 / 3) / n ** (2 / 3),
        crit_lambda=lam,
    )


# General bounded-size rules

def _bsr_field(rule: BSRRule) -> Tuple[Field, Callable[[np.ndarray], np.ndarray]]:
    """Field for (c_1..c_K, y, z); c_k is the density of vertices in size-k components."""
    C, K = rule.omega, rule.K
    first = np.zeros((C,) * 4)
    for quad in rule.F:
        first[tuple(c - 1 for c in quad)] = 1.0
    second = 1.0 - first
    sizes = np.arange(1, K + 1, dtype=float)

    # transfer[i, j] changes the densities when classes i and j merge
    transfer = np.zeros((C, C, K))
    for i in range(C):
        for j in range(C):
            if i < K:
                transfer[i, j, i] -= i + 1
            if j < K:
                transfer[i, j, j] -= j + 1
            if i < K and j < K and i + j + 2 <= K:
                transfer[i, j, i + j + 1] += i + j + 2

    def weights(c: np.ndarray) -> np.ndarray:
        cf = np.append(c, 1.0 - c.sum())
        return (
            np.einsum("ijkl,k,l->ij", first, cf, cf)
            + np.einsum("klij,k,l->ij", second, cf, cf)
        )

    def field(t: float, s: np.ndarray) -> np.ndarray:
        c, y, z = s[:K], s[K], s[K + 1]
        cf = np.append(c, 1.0 - c.sum())
        G = weights(c)
        Gs = 0.5 * (G + G.T)
        P = np.outer(cf, cf) * G

        S = float(np.dot(sizes, c))
        Q = float(np.dot(sizes ** 2, c))
        a = sizes * c  # vertex-weighted first moments per class
        b = sizes ** 2 * c
        free = 1.0 - y * S  # y times the omega-class second moment

        dc = 0.5 * np.einsum("ij,ijk->k", P, transfer)
        ya = np.append(y * a, free)
        dy = -float(ya @ Gs @ ya)

        inner = Gs[:K, :K]
        dz = 3 * (
            y ** 3 * float(b @ inner @ a)
            + y ** 2 * free * float(b @ Gs[:K, K])
            + (z - y ** 3 * Q) * float(Gs[K, :K] @ a)
            + Gs[K, K] * free * (z * S - y ** 2 * Q)
        ) - 3 * z * (y * float(a @ inner @ a) + 2 * free * float(Gs[:K, K] @ a))
        return np.concatenate([dc, [dy, dz]])

    return field, weights


def bsr_ode_estimate(rule: BSRRule, tol: float = RK4_TOL) -> BSREstimate:
    """Estimate t_c, alpha and beta of a bounded-size rule from its size-class ODE."""
    field, weights = _bsr_field(rule)
    K = rule.K
    start = np.zeros(K + 2)
    if K >= 1:
        start[0] = 1.0
    start[K] = 1.0
    start[K + 1] = 1.0
    t_c, _, at_tc = _find_zero(field, start, 0.0, index=K, tol=tol)
    G = weights(at_tc[:K])
    estimate = BSREstimate(t_c=t_c, alpha=1.0 / G[K, K], beta=float(at_tc[K + 1]))
    logger.info(f"BSR(K={K}, |F|={len(rule.F)}): t_c~{t_c:.6f} alpha~{estimate.alpha:.6f} beta~{estimate.beta:.6f}")
    return estimate


# Inhomogeneous random graphs

def _perron(M: np.ndarray) -> Tuple[float, np.ndarray]:
    vec = np.full(M.shape[0], 1.0 / M.shape[0])
    for _ in range(POWER_ITERATION_CAP):
        nxt = M @ vec
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - vec)) < POWER_ITERATION_TOL:
            return float((M @ nxt).sum() / nxt.sum()), nxt
        vec = nxt
    raise ConvergenceError(f"Power iteration did not converge in {POWER_ITERATION_CAP} steps")


def normalize_kernel(kappa: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Scale kappa so that the mean matrix kappa diag(mu) has Perron root one."""
    kappa = np.asarray(kappa, dtype=float)
    rho, _ = _perron(kappa * np.asarray(mu, dtype=float)[None, :])
    return kappa / rho


def irg_constants(kernel: Kernel) -> IRGLimitConstants:
    """Perron data of M = kappa diag(mu) with u^t 1 = 1, v^t u = 1, and alpha, beta, zeta."""
    mu = kernel.mu
    M = kernel.kappa * mu[None, :]
    rho, u = _perron(M)
    _, v = _perron(M.T)
    u = u / u.sum()
    v = v / float(v @ u)

    ones = np.ones(kernel.K)
    vt1 = float(v @ ones)
    mu_u = float(mu @ u)
    alpha = 1.0 / (vt1 * mu_u)
    beta = float(np.sum(v * u ** 2)) / (vt1 * mu_u ** 2)

    zeta = None
    if kernel.A is not None or kernel.b is not None:
        A = kernel.A if kernel.A is not None else np.zeros_like(kernel.kappa)
        b = kernel.b if kernel.b is not None else np.zeros(kernel.K)
        zeta = alpha * float(v @ (A * mu[None, :] + kernel.kappa * b[None, :]) @ u)

    critical = abs(rho - 1.0) <= CRITICALITY_TOL
    if not critical:
        logger.warning(f"Kernel is not critical: rho(M)={rho:.9f}")
    return IRGLimitConstants(
        M=M,
        rho=rho,
        u=u,
        v=v,
        alpha=alpha,
        beta=beta,
        zeta=zeta,
        residual_right=float(np.max(np.abs(M @ u - rho * u))),
        residual_left=float(np.max(np.abs(v @ M - rho * v))),
        critical=critical,
    )


def irg_scaling(constants: IRGLimitConstants, n: int, lam: float = 0.0) -> WindowScaling:
    """Rescaling of an IRG whose kernel is multiplied by 1 + lam n^{-1/3}."""
    zeta = constants.zeta or 0.0
    return WindowScaling(
        model="irg",
        distance=constants.beta ** (2 / 3) / (constants.alpha * n ** (1 / 3)),
        mass=constants.beta ** (1 / 3) / n ** (2 / 3),
        crit_lambda=(zeta + constants.alpha * lam) / constants.beta ** (2 / 3),
    )


def irg_bp_expectations(kernel: Kernel, n: int, delta: float = DEFAULT_DELTA) -> Dict[str, float]:
    """Total-progeny moments of the multitype Poisson branching process of kappa_n - n^{-delta}.

    T0 counts individuals and T1 sums their generations; the root type is drawn from mu_n.
    """
    kappa = effective_kernel(kernel, n, IRGWindow(delta=delta, perturbed=True))
    mu = kernel.mu if kernel.b is None else kernel.mu + kernel.b * n ** (-1 / 3)
    M = kappa * mu[None, :]
    rho = float(np.max(np.abs(np.linalg.eigvals(M))))
    if rho >= 1:
        raise ValueError(f"Branching process is not subcritical: rho={rho:.6f}")

    I = np.eye(kernel.K)
    ones = np.ones(kernel.K)
    w1 = linalg.solve(I - M, ones)
    # E T0^2 solves (I - M) w2 = w1^2 for Poisson offspring
    w2 = linalg.solve(I - M, w1 ** 2)
    t1 = linalg.solve(I - M, M @ w1)
    return {
        "ET0": float(mu @ w1),
        "ET0_sq": float(mu @ w2),
        "ET1": float(mu @ t1),
        "rho": rho,
    }


# Parabolic Brownian motion and the multiplicative coalescent

def default_horizon(lam: float) -> float:
    return max(10.0, 4.0 + 2.0 * abs(lam))


def sample_parabolic_path(
    lam: float,
    rng: np.random.Generator,
    horizon: Optional[float] = None,
    dt: float = PARABOLIC_DT,
) -> ParabolicPath:
    """Euler grid for W(t) = B(t) + lam t - t^2/2 and its reflection above the running minimum."""
    horizon = horizon if horizon is not None else default_horizon(lam)
    if horizon <= 0 or dt <= 0:
        raise ValueError(f"Horizon and dt must be positive, got {horizon}, {dt}")
    steps = int(round(horizon / dt))
    t = np.arange(steps) * dt
    increments = math.sqrt(dt) * rng.standard_normal(steps) + (lam - t) * dt
    w = np.concatenate([[0.0], np.cumsum(increments)])
    reflected = w - np.minimum.accumulate(w)
    return ParabolicPath(lam=lam, dt=dt, w=w, w_reflected=reflected)


def sample_parabolic_excursions(
    lam: float,
    rng: np.random.Generator,
    horizon: Optional[float] = None,
    dt: float = PARABOLIC_DT,
    keep_path: bool = False,
) -> ExcursionSet:
    """Excursions of the reflected path above zero, longest first.

    Excursions shorter than MIN_EXCURSION_STEPS grid steps are dropped; one
    still open at the horizon is kept truncated.
    """
    path = sample_parabolic_path(lam, rng, horizon, dt)
    reflected = path.w_reflected
    zeros = np.flatnonzero(reflected <= 0.0)
    if zeros[-1] != len(reflected) - 1:
        zeros = np.append(zeros, len(reflected) - 1)
    gaps = np.diff(zeros)
    keep = gaps >= MIN_EXCURSION_STEPS
    starts = zeros[:-1][keep]
    ends = zeros[1:][keep]
    areas = np.array([trapezoid(reflected[s:e + 1], dx=dt) for s, e in zip(starts, ends)])
    lengths = (ends - starts) * dt
    order = np.argsort(-lengths, kind="stable")
    return ExcursionSet(
        lam=lam,
        lengths=lengths[order],
        areas=areas[order] if len(areas) else np.empty(0),
        starts=starts[order] * dt,
        path=path if keep_path else None,
    )


def mult_coalescent(masses: Sequence[float], duration: float, rng: np.random.Generator) -> CoalescentState:
    """Blocks i and j merge at rate x_i x_j; run for `duration` by total-rate racing."""
    x = [float(m) for m in masses]
    if any(m <= 0 for m in x):
        raise ValueError("Block masses must be positive")
    if duration < 0:
        raise ValueError(f"Duration must be nonnegative, got {duration}")
    t, merges = 0.0, 0
    while len(x) > 1:
        arr = np.asarray(x)
        total = float(arr.sum())
        rate = 0.5 * (total ** 2 - float(np.sum(arr ** 2)))
        t += rng.exponential(1.0 / rate)
        if t > duration:
            break
        # ordered pair (i, j), i != j, with probability x_i x_j / (2 rate)
        first = arr * (total - arr)
        i = int(rng.choice(len(x), p=first / first.sum()))
        rest = arr.copy()
        rest[i] = 0.0
        j = int(rng.choice(len(x), p=rest / rest.sum()))
        i, j = min(i, j), max(i, j)
        x[i] += x[j]
        x.pop(j)
        merges += 1
    return CoalescentState(masses=np.sort(np.asarray(x))[::-1], time=duration, merges=merges)
