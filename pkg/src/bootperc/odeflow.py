"""Fluid-limit ODE system for the exposure process over a finite class set.

For classes with weights W_i and fractions gamma_i, the scaled state
(nu, mu_U, gamma_{i,j}) obeys

    gamma_{i,0}' = -gamma_{i,0} (W_i/d) G
    gamma_{i,j}' = (gamma_{i,j-1} - gamma_{i,j}) (W_i/d) G
    nu'          = -1 + G * sum_i (W_i/d) gamma_{i,r-1}
    mu_U'        = -G + G * sum_i (W_i^2/d) gamma_{i,r-1}

closed with G = mu_U / nu, the mean weight of the infected-unexposed
pool.  The system admits closed forms in terms of I = integral of G;
the first zero of mu_U locates the predicted stopping time, and
I(tau_hat)/d solves a scalar fixed-point equation whose value feeds the
predicted final fraction alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretise import Discretisation
from .theory import psi_r, poisson_pmf, scan_smallest_root, FixedPointResult

__all__ = [
    "DomainExit",
    "DegenerateStart",
    "OdeSolution",
    "ode_rhs",
    "initial_state",
    "integrate",
    "closed_form_gamma",
    "closed_form_nu_mu",
    "discretised_fixed_point",
    "alpha",
]


class DomainExit(RuntimeError):
    """The solution left the admissible region (nu hit zero with mass left)."""


class DegenerateStart(ValueError):
    """nu(0) = 0: nothing is infected at time zero, the flow is undefined."""


# ---------------------------------------------------------------------------
# Right-hand side and initial conditions
# ---------------------------------------------------------------------------

def ode_rhs(gammas: np.ndarray, nu: float, mu_u: float,
            levels: np.ndarray, d: float, r: int):
    """Derivatives (dgammas, dnu, dmu) at the given state; needs nu > 0."""
    if nu <= 0.0:
        raise DomainExit("nu <= 0: ratio G undefined")
    G = mu_u / nu
    wd = levels / d
    dgam = np.empty_like(gammas)
    dgam[:, 0] = -gammas[:, 0] * wd * G
    for j in range(1, r):
        dgam[:, j] = (gammas[:, j - 1] - gammas[:, j]) * wd * G
    top = gammas[:, r - 1]
    dnu = -1.0 + G * float(np.dot(wd, top))
    dmu = -G + G * float(np.dot(levels * levels / d, top))
    return dgam, dnu, dmu


def initial_state(disc: Discretisation, p: float, r: int):
    """State at tau = 0: heavy part fully infected, classes seeded at rate p.

    Returns (gammas, nu, mu_U) with gamma_{i,0} = (1-p) * fraction_i, the
    higher mark levels empty, nu = p(1-gamma) + gamma', and mu_U the heavy
    weight fraction plus the seeded share of class weight.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    gam0 = np.zeros((disc.levels.size, r))
    gam0[:, 0] = (1.0 - p) * disc.fractions
    nu0 = p * (1.0 - disc.gamma) + disc.gamma_prime
    mu0 = disc.w_gamma_prime + p * float(np.dot(disc.levels, disc.fractions))
    return gam0, float(nu0), float(mu0)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OdeSolution:
    tau: np.ndarray               # (T,)
    gamma: np.ndarray             # (T, p, r)
    nu: np.ndarray
    mu_u: np.ndarray
    I: np.ndarray                 # accumulated integral of G
    tau_hat: float                # first zero of mu_U (extrapolated)
    y_hat: float                  # I(tau_hat) / d
    alpha_hat: float              # predicted final fraction at y_hat
    levels: np.ndarray
    d: float
    h: float
    flags: tuple[str, ...] = field(default_factory=tuple)

    def save_csv(self, path) -> None:
        p, r = self.gamma.shape[1], self.gamma.shape[2]
        heads = ["tau", "nu", "mu_U", "I"] + \
            [f"gamma_{i+1}_{j}" for i in range(p) for j in range(r)]
        flat = self.gamma.reshape(self.gamma.shape[0], -1)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(heads) + "\n")
            for k in range(self.tau.size):
                row = [repr(float(self.tau[k])), repr(float(self.nu[k])),
                       repr(float(self.mu_u[k])), repr(float(self.I[k]))]
                row += [repr(float(x)) for x in flat[k]]
                fh.write(",".join(row) + "\n")


def _pack(gam, nu, mu, I):
    return np.concatenate([gam.ravel(), [nu, mu, I]])


def _rhs_vec(s: np.ndarray, levels: np.ndarray, d: float, r: int) -> np.ndarray:
    p = levels.size
    gam = s[:p * r].reshape(p, r)
    nu, mu = s[p * r], s[p * r + 1]
    dgam, dnu, dmu = ode_rhs(gam, nu, mu, levels, d, r)
    G = mu / nu
    return np.concatenate([dgam.ravel(), [dnu, dmu, G]])


def _try_rk4_step(s, h, levels, d, r):
    """One classical step; fails (returns None) if any stage leaves nu > 0."""
    try:
        k1 = _rhs_vec(s, levels, d, r)
        k2 = _rhs_vec(s + 0.5 * h * k1, levels, d, r)
        k3 = _rhs_vec(s + 0.5 * h * k2, levels, d, r)
        k4 = _rhs_vec(s + h * k3, levels, d, r)
    except DomainExit:
        return None
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(disc: Discretisation, p: float, r: int, h: float = 1e-4,
              eps_domain: float | None = None) -> OdeSolution:
    """Fixed-step classical 4th-order integration with stopping at mu_U = 0.

    The step shrinks near the stopping point so the state never overshoots
    through zero; tau_hat is then located by linear extrapolation of mu_U
    across the final sliver (relative size eps_domain, default 1e-8 of
    mu_U(0)).  A run where nu collapses while weight remains is flagged
    ``ratio_blowup``; exceeding the mean-weight ceiling 2*C_gamma is
    flagged ``ratio_exit``.
    """
    levels = disc.levels
    d = disc.d_ref
    gam0, nu0, mu0 = initial_state(disc, p, r)
    if nu0 <= 0.0:
        raise DegenerateStart("nu(0) = 0; seed something or add a heavy part")
    eps = 1e-8 * mu0 if eps_domain is None else float(eps_domain)
    ratio_cap = 2.0 * disc.c_gamma * (1.0 + 1e-9)
    s = _pack(gam0, nu0, mu0, 0.0)
    idx_nu, idx_mu, idx_I = levels.size * r, levels.size * r + 1, levels.size * r + 2
    taus = [0.0]
    states = [s.copy()]
    flags: list[str] = []
    tau = 0.0
    max_steps = int(4.0 / h) + 20000
    for _ in range(max_steps):
        nu, mu = s[idx_nu], s[idx_mu]
        if mu <= eps:
            break
        if nu <= 0.0:
            flags.append("ratio_blowup")
            break
        if mu / nu > ratio_cap:
            flags.append("ratio_exit")
            break
        deriv = _rhs_vec(s, levels, d, r)
        h_step = h
        if deriv[idx_mu] < 0.0:
            h_to_cross = (mu - 0.5 * eps) / (-deriv[idx_mu])
            h_step = min(h, h_to_cross)
        ok = None
        for _halve in range(60):
            ok = _try_rk4_step(s, h_step, levels, d, r)
            if ok is not None and ok[idx_mu] >= 0.0 and ok[idx_nu] > 0.0:
                break
            ok = None
            h_step *= 0.5
        if ok is None:
            flags.append("stalled")
            break
        s = ok
        tau += h_step
        taus.append(tau)
        states.append(s.copy())
        if h_step < h * 1e-12:
            flags.append("stalled")
            break
    else:
        flags.append("max_steps")

    arr = np.asarray(states)
    tau_arr = np.asarray(taus)
    p_l = levels.size
    gamma = arr[:, :p_l * r].reshape(-1, p_l, r)
    nu_arr = arr[:, idx_nu]
    mu_arr = arr[:, idx_mu]
    I_arr = arr[:, idx_I]
    # extrapolate the remaining sliver of mu_U linearly to zero
    try:
        deriv = _rhs_vec(s, levels, d, r)
        dmu_end = deriv[idx_mu]
        G_end = mu_arr[-1] / nu_arr[-1] if nu_arr[-1] > 0 else 0.0
    except DomainExit:
        dmu_end, G_end = 0.0, 0.0
    if dmu_end < 0.0:
        dt = mu_arr[-1] / (-dmu_end)
        tau_hat = float(tau_arr[-1] + dt)
        I_hat = float(I_arr[-1] + G_end * dt)
    else:
        tau_hat = float(tau_arr[-1])
        I_hat = float(I_arr[-1])
        flags.append("nonnegative_mu_slope_at_stop")
    y_hat = I_hat / d
    return OdeSolution(
        tau=tau_arr, gamma=gamma, nu=nu_arr, mu_u=mu_arr, I=I_arr,
        tau_hat=tau_hat, y_hat=y_hat,
        alpha_hat=alpha(y_hat, disc, p, r),
        levels=levels.copy(), d=d, h=h, flags=tuple(flags))


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def closed_form_gamma(i: int, j: int, I_val: float, disc: Discretisation,
                      p: float, r: int) -> float:
    """gamma_{i,j} at accumulated integral I: Poisson-shaped in W_i I / d.

    gamma_{i,0} decays exponentially; level j carries the j-th power of
    the exponent over j! (the log ratio is substituted directly, which is
    stable when gamma_{i,0} underflows).
    """
    lam = disc.levels[i] * I_val / disc.d_ref
    g0_init = (1.0 - p) * disc.fractions[i]
    g0 = g0_init * math.exp(-lam)
    if j == 0:
        return g0
    if not 0 < j < r:
        raise ValueError("j must lie in [0, r)")
    return g0 * lam ** j / math.factorial(j)


def closed_form_nu_mu(I_val: float, tau: float, disc: Discretisation,
                      p: float, r: int) -> tuple[float, float]:
    """(nu, mu_U) at time tau with accumulated integral I."""
    lam = disc.levels * I_val / disc.d_ref
    tails = psi_r(r, lam)
    nu = p * (1.0 - disc.gamma) + disc.gamma_prime - tau \
        + (1.0 - p) * float(np.dot(disc.fractions, tails))
    mu = disc.w_gamma_prime + p * float(np.dot(disc.levels, disc.fractions)) \
        - I_val + (1.0 - p) * float(np.dot(disc.levels * disc.fractions, tails))
    return float(nu), float(mu)


# ---------------------------------------------------------------------------
# Discretised fixed point and predicted fraction
# ---------------------------------------------------------------------------

def _mu_hat(x, disc: Discretisation, p: float, r: int):
    wsum = float(np.dot(disc.levels, disc.fractions))
    tails = psi_r(r, disc.levels * x)
    return disc.w_gamma_prime / disc.d_ref + p * wsum / disc.d_ref - x \
        + (1.0 - p) * float(np.dot(disc.levels * disc.fractions / disc.d_ref, tails))


def discretised_fixed_point(disc: Discretisation, p: float, r: int,
                            tol: float = 1e-12, scan_step: float = 1e-4,
                            ) -> FixedPointResult:
    """Smallest positive root of the stopped-flow equation mu_hat(x) = 0.

    mu_hat is mu_U / d re-expressed in x = I/d; its root is the value the
    integrated flow reaches at the stopping time.  The derivative sign at
    the root is reported (negative means the stop is transversal and the
    prediction applies).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")

    def g(x):
        return _mu_hat(x, disc, p, r)

    wsum = float(np.dot(disc.levels, disc.fractions))
    hi = (disc.w_gamma_prime + wsum) / disc.d_ref + 1e-9
    root, bracket, found = scan_smallest_root(g, tol, hi, scan_step, tol)
    boundary = not found
    lam = disc.levels * root
    pmf = poisson_pmf(r - 1, lam)
    deriv = -1.0 + (1.0 - p) * float(
        np.dot(disc.levels * disc.levels * disc.fractions / disc.d_ref, pmf))
    return FixedPointResult(
        y_hat=float(root), residual=float(g(root)), derivative=float(deriv),
        stable=bool(deriv < -1e-9), bracket=bracket, scan_step=scan_step,
        boundary_root=boundary)


def alpha(y: float, disc: Discretisation, p: float, r: int) -> float:
    """Predicted final infected fraction at fixed-point value y."""
    if y < 0:
        raise ValueError("y must be nonnegative")
    tails = psi_r(r, disc.levels * y)
    return float(p * (1.0 - disc.gamma) + disc.gamma_prime
                 + (1.0 - p) * float(np.dot(disc.fractions, tails)))
