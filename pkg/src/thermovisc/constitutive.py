"""Thermomechanical material laws for the split free-energy ansatz

    psi(E, theta) = phi(E) + theta * coupling(tr E) + gamma(theta)

and every quantity derived from it (stress, entropy, internal energy, heat
capacity, creep rate, dissipation, conductivity), together with the
exponent-admissibility checker used to validate run configurations.

Symmetric tensors use the Voigt layout of :mod:`thermovisc.tensor_kernel`.
Derivatives with respect to ``E`` are taken with respect to the six Voigt
unknowns, so ``d psi / d E_c = w_c * psi'_E[c]`` for the Frobenius gradient
``psi'_E`` and the Voigt weights ``w``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from . import tensor_kernel as tk

Array = np.ndarray
ScalarFn = Callable[[Array], Array]

FACES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


class DomainError(ValueError):
    """An argument lies outside the domain of a material law."""


def _check_theta(theta) -> Array:
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or not np.all(np.isfinite(theta)):
        raise DomainError("temperature must be finite and non-negative")
    return theta


def _pos_power(x: Array, a: float) -> Array:
    """``x**a`` for ``x >= 0`` with the convention ``0**a = 0`` for ``a > 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(x, a)
    if a > 0:
        out = np.where(x > 0, out, 0.0)
    return out


# ---------------------------------------------------------------------------
# material model


@dataclass(frozen=True)
class MaterialModel:
    """The ansatz triple (phi, coupling, gamma) with derivatives.

    ``phi``/``dphi``/``d2phi`` act on Voigt arrays ``(..., 6)`` and return
    ``(...)``, the Frobenius gradient ``(..., 6)`` and its Jacobian
    ``(..., 6, 6)`` with respect to the Voigt unknowns.  ``coupling`` is the
    function of ``tr E`` multiplying ``theta``; ``gamma`` is the purely
    thermal part.  ``alpha`` is the heat-capacity growth exponent.

    ``thermal_inverse`` and ``entropy_lambda`` are optional closed forms; the
    generic fallbacks are a bracketed root solve and adaptive quadrature.
    """

    phi: ScalarFn
    dphi: ScalarFn
    d2phi: ScalarFn
    coupling: ScalarFn
    dcoupling: ScalarFn
    d2coupling: ScalarFn
    gamma: ScalarFn
    dgamma: ScalarFn
    d2gamma: ScalarFn
    alpha: float
    thermal_inverse: Optional[ScalarFn] = None
    entropy_lambda: Optional[Callable[[Array, float], Array]] = None
    name: str = "custom"

    def validate(self, rng: Optional[np.random.Generator] = None) -> None:
        """Spot-check the structural assumptions of the ansatz."""
        if not self.alpha >= 0:
            raise DomainError("heat-capacity exponent alpha must be >= 0")
        g0, dg0 = float(self.gamma(np.array(0.0))), float(self.dgamma(np.array(0.0)))
        if abs(g0) > 1e-14 or abs(dg0) > 1e-14:
            raise DomainError("the thermal part must satisfy gamma(0) = gamma'(0) = 0")
        rng = rng or np.random.default_rng(0)
        # convexity of phi along random segments
        a, b = rng.normal(size=(2, 32, 6))
        for s in (0.25, 0.5, 0.75):
            lhs = self.phi(s * a + (1 - s) * b)
            rhs = s * self.phi(a) + (1 - s) * self.phi(b)
            if np.any(lhs > rhs + 1e-12 * (1 + np.abs(rhs))):
                raise DomainError("stored energy phi is not convex")
        th = np.linspace(1e-3, 10.0, 200)
        if np.any(np.diff(thermal_energy(self, th)) <= 0):
            raise DomainError("thermal energy U(theta) must be strictly increasing")


def thermo_creep_material(bulk_modulus: float, shear_modulus: float,
                          expansion: float, heat_capacity: float,
                          alpha: float) -> MaterialModel:
    """Creep in thermally expanding materials.

    ``psi = K/2 (tr E)^2 + G |dev E|^2 - alpha_v K theta tr E
    - c_v / (alpha (1 + alpha)) theta^(1 + alpha)``
    """
    K, G, av, cv, a = map(float, (bulk_modulus, shear_modulus, expansion, heat_capacity, alpha))
    if K <= 0 or G <= 0:
        raise DomainError("elastic moduli must be positive")
    if cv <= 0:
        raise DomainError("heat-capacity coefficient c_v must be positive")
    if a <= 0:
        raise DomainError("heat-capacity exponent alpha must be positive")

    def phi(E):
        E = np.asarray(E, dtype=float)
        d = tk.dev(E)
        return 0.5 * K * tk.trace(E) ** 2 + G * tk.ddot(d, d)

    def dphi(E):
        E = np.asarray(E, dtype=float)
        return K * tk.trace(E)[..., None] * tk.IDENTITY6 + 2.0 * G * tk.dev(E)

    iso = np.outer(tk.IDENTITY6, tk.IDENTITY6)
    hess = K * iso + 2.0 * G * (np.eye(6) - iso / 3.0)

    def d2phi(E):
        E = np.asarray(E, dtype=float)
        return np.broadcast_to(hess, E.shape[:-1] + (6, 6)).copy()

    c_gamma = cv / (a * (1.0 + a))

    def thermal_inverse(u):
        u = np.asarray(u, dtype=float)
        return _pos_power((1.0 + a) * u / cv, 1.0 / (1.0 + a))

    def entropy_lambda(theta, lam):
        return cv * _pos_power(theta, 1.0 + a - lam) / (1.0 + a - lam)

    m = MaterialModel(
        phi=phi, dphi=dphi, d2phi=d2phi,
        coupling=lambda x: -av * K * np.asarray(x, dtype=float),
        dcoupling=lambda x: np.full(np.shape(x), -av * K),
        d2coupling=lambda x: np.zeros(np.shape(x)),
        gamma=lambda t: -c_gamma * _pos_power(np.asarray(t, dtype=float), 1.0 + a),
        dgamma=lambda t: -(cv / a) * _pos_power(np.asarray(t, dtype=float), a),
        d2gamma=lambda t: -cv * _pos_power(np.asarray(t, dtype=float), a - 1.0),
        alpha=a,
        thermal_inverse=thermal_inverse,
        entropy_lambda=entropy_lambda,
        name="thermo_creep",
    )
    return m


# ---------------------------------------------------------------------------
# dissipation


@dataclass(frozen=True)
class QuadraticCreep:
    """Maxwell creep with ``zeta_p(theta, Pi) = M(theta)/2 |Pi|^2``.

    ``M(theta) = M0`` or, with ``activation > 0``,
    ``M0 * exp(activation / max(theta, theta_floor))``.  ``M0 = inf``
    switches creep off.
    """

    modulus0: float
    activation: float = 0.0
    theta_floor: float = 1e-6

    def __post_init__(self):
        if not self.modulus0 > 0:
            raise DomainError("Maxwell modulus must be positive")

    def modulus(self, theta: Array) -> Array:
        theta = np.asarray(theta, dtype=float)
        if self.activation == 0.0:
            return np.full(theta.shape, self.modulus0)
        return self.modulus0 * np.exp(self.activation / np.maximum(theta, self.theta_floor))

    def dmodulus(self, theta: Array) -> Array:
        theta = np.asarray(theta, dtype=float)
        if self.activation == 0.0 or math.isinf(self.modulus0):
            return np.zeros(theta.shape)
        t = np.maximum(theta, self.theta_floor)
        return np.where(theta > self.theta_floor,
                        -self.modulus(theta) * self.activation / t ** 2, 0.0)

    def _inv(self, theta):
        return 1.0 / self.modulus(theta)

    def rate(self, theta: Array, S: Array) -> Array:
        """Creep rate ``[zeta_p*]'(S)`` for a deviatoric stress ``S``."""
        return tk.dev(self._inv(theta)[..., None] * S)

    def d_rate_dS(self, theta: Array) -> Array:
        """Jacobian of :meth:`rate` w.r.t. the Voigt entries of ``S``.

        ``S`` is deviatoric on input; the Jacobian includes the deviatoric
        projection applied to the output."""
        inv = self._inv(theta)
        proj = np.eye(6) - np.outer(tk.IDENTITY6, tk.IDENTITY6) / 3.0
        return inv[..., None, None] * proj

    def d_rate_dtheta(self, theta: Array, S: Array) -> Array:
        M = self.modulus(theta)
        with np.errstate(invalid="ignore"):
            f = np.where(np.isinf(M), 0.0, -self.dmodulus(theta) / M ** 2)
        return tk.dev(f[..., None] * S)

    def potential(self, theta: Array, Pi: Array) -> Array:
        q = tk.ddot(Pi, Pi)
        M = self.modulus(theta)
        # with creep off only Pi = 0 is admissible; take 0 there instead of inf*0
        return np.where(q == 0.0, 0.0, 0.5 * M * q)

    def potential_derivative(self, theta: Array, Pi: Array) -> Array:
        """``zeta_p'(theta, Pi) = M(theta) Pi``."""
        Pi = np.asarray(Pi, dtype=float)
        with np.errstate(invalid="ignore"):
            out = self.modulus(theta)[..., None] * Pi
        return np.where(Pi == 0.0, 0.0, out)

    def dissipation(self, theta: Array, S: Array) -> Array:
        """``zeta_p'(Pi):Pi`` at ``Pi = rate(S)``; equals ``S : Pi``."""
        return tk.ddot(S, self.rate(theta, S))


@dataclass(frozen=True)
class DissipationModel:
    """Kelvin-Voigt (Stokes) viscosity, multipolar hyper-viscosity and creep.

    The Stokes viscosity is isotropic: ``D eps = 2 eta_shear dev eps +
    eta_bulk (tr eps) I``.  The hyperstress is ``mu |H|^(p-2) H``.
    """

    eta_shear: float = 0.0
    eta_bulk: float = 0.0
    mu: float = 0.0
    p: float = 4.0
    creep: QuadraticCreep = field(default_factory=lambda: QuadraticCreep(math.inf))

    def __post_init__(self):
        if self.eta_shear < 0 or self.eta_bulk < 0:
            raise DomainError("Stokes viscosity must be positive semi-definite")
        if self.mu < 0:
            raise DomainError("hyper-viscosity mu must be >= 0")
        if not self.p > 3:
            raise DomainError("hyper-viscosity exponent requires p > 3")

    @property
    def viscosity_matrix(self) -> Array:
        """6x6 Voigt matrix of the Stokes viscosity acting on tensor entries."""
        iso = np.outer(tk.IDENTITY6, tk.IDENTITY6)
        return 2.0 * self.eta_shear * (np.eye(6) - iso / 3.0) + self.eta_bulk * iso

    def viscous_stress(self, eps: Array) -> Array:
        return np.asarray(eps, dtype=float) @ self.viscosity_matrix.T


HExt = Union[float, Mapping[str, float], Callable[[float, Array, str], Array]]
Source = Union[float, Callable[[float, Array], Array]]


@dataclass(frozen=True)
class HeatModel:
    """Fourier conduction ``kappa(theta) = kappa0 (1 + theta^beta)`` with the
    Robin boundary law ``kappa grad theta . n + h(theta) = h_ext`` where
    ``h(theta) = a1 theta + a2 theta^4``.

    ``h_ext`` is a constant, a per-face mapping (missing faces are 0) or a
    callable ``(t, x, face) -> values``; ``source`` is a constant or a callable
    ``(t, x) -> values``.  ``a1 = a2 = 0`` is allowed and gives an
    insulated boundary when ``h_ext = 0``.
    """

    kappa0: float = 1.0
    beta: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    h_ext: HExt = 0.0
    source: Source = 0.0

    def __post_init__(self):
        if not self.kappa0 > 0:
            raise DomainError("conductivity kappa0 must be positive")
        if self.beta < 0:
            raise DomainError("conductivity exponent beta must be >= 0")
        if self.a1 < 0 or self.a2 < 0:
            raise DomainError("boundary out-flux coefficients must be >= 0")
        if isinstance(self.h_ext, Mapping):
            bad = set(self.h_ext) - set(FACES)
            if bad:
                raise DomainError(f"unknown boundary faces {sorted(bad)}")
            if any(v < 0 for v in self.h_ext.values()):
                raise DomainError("external heat flux must be non-negative")
        elif not callable(self.h_ext) and self.h_ext < 0:
            raise DomainError("external heat flux must be non-negative")
        if not callable(self.source) and self.source < 0:
            raise DomainError("bulk heat source must be non-negative")

    def external_flux(self, t: float, x: Array, face: str) -> Array:
        n = len(x)
        if callable(self.h_ext):
            return np.broadcast_to(np.asarray(self.h_ext(t, x, face), dtype=float), (n,)).copy()
        if isinstance(self.h_ext, Mapping):
            return np.full(n, float(self.h_ext.get(face, 0.0)))
        return np.full(n, float(self.h_ext))

    def bulk_source(self, t: float, x: Array) -> Array:
        n = len(x)
        if callable(self.source):
            return np.broadcast_to(np.asarray(self.source(t, x), dtype=float), (n,)).copy()
        return np.full(n, float(self.source))

    @property
    def insulated(self) -> bool:
        zero_ext = (not callable(self.h_ext)) and (
            all(v == 0 for v in self.h_ext.values()) if isinstance(self.h_ext, Mapping)
            else self.h_ext == 0)
        return zero_ext and self.a1 == 0 and self.a2 == 0


# ---------------------------------------------------------------------------
# constitutive evaluations


def free_energy(m: MaterialModel, E: Array, theta) -> Array:
    theta = _check_theta(theta)
    E = np.asarray(E, dtype=float)
    return m.phi(E) + theta * m.coupling(tk.trace(E)) + m.gamma(theta)


def cauchy_stress(m: MaterialModel, E: Array, theta) -> Array:
    """Conservative Cauchy stress ``psi'_E + psi I``."""
    theta = _check_theta(theta)
    E = np.asarray(E, dtype=float)
    trE = tk.trace(E)
    vol = theta * m.dcoupling(trE) + free_energy(m, E, theta)
    return m.dphi(E) + vol[..., None] * tk.IDENTITY6


def stress_jacobians(m: MaterialModel, E: Array, theta: Array) -> tuple[Array, Array]:
    """``(dT/dE, dT/dtheta)`` with shapes ``(..., 6, 6)`` and ``(..., 6)``."""
    E = np.asarray(E, dtype=float)
    theta = np.asarray(theta, dtype=float)
    trE = tk.trace(E)
    dT_dE = m.d2phi(E).copy()
    # gradient of the scalar (theta*coupling'(trE) + psi) w.r.t. Voigt unknowns
    dpsi = tk.VOIGT_WEIGHTS * (m.dphi(E) + (theta * m.dcoupling(trE))[..., None] * tk.IDENTITY6)
    dvol = dpsi + (theta * m.d2coupling(trE))[..., None] * tk.IDENTITY6
    dT_dE += tk.IDENTITY6[:, None] * dvol[..., None, :]
    dvol_dtheta = m.dcoupling(trE) + m.coupling(trE) + m.dgamma(theta)
    dT_dtheta = dvol_dtheta[..., None] * tk.IDENTITY6
    return dT_dE, dT_dtheta


def thermal_energy(m: MaterialModel, theta) -> Array:
    """``U(theta) = gamma(theta) - theta gamma'(theta)``."""
    theta = _check_theta(theta)
    return m.gamma(theta) - theta * m.dgamma(theta)


def internal_energy(m: MaterialModel, E: Array, theta) -> Array:
    return m.phi(np.asarray(E, dtype=float)) + thermal_energy(m, theta)


def heat_capacity(m: MaterialModel, theta) -> Array:
    """``c(theta) = U'(theta) = -theta gamma''(theta)``."""
    theta = _check_theta(theta)
    return np.where(theta > 0, -theta * m.d2gamma(np.where(theta > 0, theta, 1.0)), 0.0)


def thermal_energy_inverse(m: MaterialModel, u) -> Array:
    """Temperature with ``U(theta) = u``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("thermal energy must be finite and non-negative")
    if m.thermal_inverse is not None:
        return m.thermal_inverse(u)
    return _generic_inverse(m, u)


def _generic_inverse(m: MaterialModel, u: Array) -> Array:
    flat = u.ravel()
    out = np.empty_like(flat)
    for i, target in enumerate(flat):
        if target == 0:
            out[i] = 0.0
            continue
        lo, hi = 0.0, 1.0
        while thermal_energy(m, hi) < target:
            lo, hi = hi, 2.0 * hi
        # bisection to a bracket then secant-safe Newton
        x = 0.5 * (lo + hi)
        for _ in range(200):
            f = float(thermal_energy(m, x)) - target
            if f > 0:
                hi = x
            else:
                lo = x
            c = float(heat_capacity(m, x))
            xn = x - f / c if c > 0 else 0.5 * (lo + hi)
            if not lo < xn < hi:
                xn = 0.5 * (lo + hi)
            if abs(xn - x) <= 1e-14 * max(1.0, abs(xn)):
                x = xn
                break
            x = xn
        out[i] = x
    return out.reshape(u.shape)


def entropy(m: MaterialModel, E: Array, theta) -> Array:
    """``eta = -psi'_theta = -coupling(tr E) - gamma'(theta)``."""
    theta = _check_theta(theta)
    return -m.coupling(tk.trace(np.asarray(E, dtype=float))) - m.dgamma(theta)


def creep_rate(m: MaterialModel, d: DissipationModel, E: Array, theta) -> Array:
    """Inelastic strain rate ``[zeta_p*]'(dev T(E, theta))`` (trace-free)."""
    theta = _check_theta(theta)
    S = tk.dev(cauchy_stress(m, E, theta))
    return d.creep.rate(theta, S)


def dissipation_rate(d: DissipationModel, theta, eps_v: Array, Pi: Array, H: Array) -> Array:
    """Extended dissipation ``D eps:eps + zeta_p'(Pi):Pi + mu |H|^p``."""
    theta = _check_theta(theta)
    eps_v = np.asarray(eps_v, dtype=float)
    H = np.asarray(H, dtype=float)
    visc = tk.ddot(d.viscous_stress(eps_v), eps_v)
    creep = tk.ddot(d.creep.potential_derivative(theta, Pi), Pi)
    hyper = d.mu * np.sqrt(tk.triple_contraction(H, H)) ** d.p
    return visc + creep + hyper


def adiabatic_power(m: MaterialModel, E: Array, theta, divv) -> Array:
    """``(theta coupling' + theta coupling + gamma) div v``, which equals
    ``tr(T(E, theta) - T(E, 0)) / 3 * div v``."""
    theta = _check_theta(theta)
    E = np.asarray(E, dtype=float)
    trE = tk.trace(E)
    a = theta * m.dcoupling(trE) + theta * m.coupling(trE) + m.gamma(theta)
    return a * np.asarray(divv, dtype=float)


def adiabatic_power_from_stress(m: MaterialModel, E: Array, theta, divv) -> Array:
    zero = np.zeros_like(np.asarray(theta, dtype=float))
    dT = cauchy_stress(m, E, theta) - cauchy_stress(m, E, zero)
    return tk.trace(dT) / 3.0 * np.asarray(divv, dtype=float)


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float, rtol: float) -> float:
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(fa, fm, fb, a, b)
    tol = rtol * max(abs(whole), 1e-300)
    return rec(a, b, fa, fm, fb, whole, tol, 50)


def generalized_entropy(m: MaterialModel, theta, lam: float) -> Array:
    """``eta_lambda(theta) = int_0^theta U'(s) / s^lambda ds``."""
    theta = _check_theta(theta)
    if not 0 <= lam < 1.0 + m.alpha:
        raise DomainError(f"lambda = {lam} must lie in [0, 1 + alpha) for a convergent integral")
    if m.entropy_lambda is not None:
        return m.entropy_lambda(theta, lam)
    # substitution s = theta * z**q removes the integrable endpoint singularity
    q = max(1.0, 2.0 / (1.0 + m.alpha - lam))
    out = np.empty(theta.size)
    for i, th in enumerate(theta.ravel()):
        if th == 0:
            out[i] = 0.0
            continue

        def integrand(z, th=th):
            if z == 0:
                return 0.0
            s = th * z ** q
            return float(heat_capacity(m, s)) / s ** lam * th * q * z ** (q - 1.0)

        out[i] = _adaptive_simpson(integrand, 0.0, 1.0, 1e-10)
    return out.reshape(theta.shape)


def generalized_entropy_of_energy(m: MaterialModel, u, lam: float) -> Array:
    """Primitive of ``1 / U^{-1}(u)^lambda`` calibrated to 0 at ``u = 0``;
    composes with ``U`` to :func:`generalized_entropy`."""
    return generalized_entropy(m, thermal_energy_inverse(m, u), lam)


def exponent_violations(alpha: float, beta: float, lam: float) -> list[str]:
    """Reasons why ``(alpha, beta, lambda)`` fails the admissibility region."""
    reasons = []
    bp = max(beta, 0.0)
    if not 0 < lam < 2:
        reasons.append(f"lambda = {lam} must lie in (0, 2)")
        return reasons
    if alpha < 0:
        reasons.append("alpha must be >= 0")
    if not 1.0 + lam > bp:
        reasons.append(f"beta+ = {bp} must be < 1 + lambda = {1 + lam}")
    lower = 2.0 / 3.0 * alpha + lam - 1.0 / 3.0
    if not bp >= lower:
        reasons.append(f"beta+ = {bp} must be >= 2/3 alpha + lambda - 1/3 = {lower}")
    if not alpha >= max(1.5 * lam - 1.0, 0.0):
        reasons.append(f"alpha = {alpha} must be >= (3/2 lambda - 1)+ = {max(1.5 * lam - 1.0, 0.0)}")
    return reasons


def admissible_exponents(alpha: float, beta: float, lam: float) -> tuple[bool, Optional[float]]:
    """Check the growth exponents of heat capacity (alpha) and conductivity
    (beta) against the entropy-test exponent lambda.

    Returns ``(True, mu_max)`` with the integrability exponent
    ``mu_max = (5 + 2 alpha + 3 beta+ - 3 lambda) / (4 + alpha)`` of the
    temperature gradient, or ``(False, None)``.
    """
    if exponent_violations(alpha, beta, lam):
        return False, None
    bp = max(beta, 0.0)
    return True, (5.0 + 2.0 * alpha + 3.0 * bp - 3.0 * lam) / (4.0 + alpha)


def conductivity(hm: HeatModel, theta) -> Array:
    theta = _check_theta(theta)
    return hm.kappa0 * (1.0 + _pos_power(theta, hm.beta) if hm.beta > 0 else 2.0 + 0 * theta)


def dconductivity(hm: HeatModel, theta) -> Array:
    theta = np.asarray(theta, dtype=float)
    if hm.beta == 0:
        return np.zeros(theta.shape)
    return hm.kappa0 * hm.beta * _pos_power(theta, hm.beta - 1.0)


def boundary_outflux(hm: HeatModel, theta) -> Array:
    theta = _check_theta(theta)
    return hm.a1 * theta + hm.a2 * theta ** 4


def dboundary_outflux(hm: HeatModel, theta) -> Array:
    theta = np.asarray(theta, dtype=float)
    return hm.a1 + 4.0 * hm.a2 * theta ** 3


def stress_energy_bound_ratio(m: MaterialModel, n: int = 200, seed: int = 0) -> float:
    """Sampled ``max |T| / (1 + E)``; warns if it grows with the sample scale,
    which signals a stored energy violating the stress-by-energy bound."""
    rng = np.random.default_rng(seed)
    ratios = []
    for scale in (1.0, 10.0, 100.0):
        E = scale * rng.normal(size=(n, 6))
        th = scale * rng.uniform(0.0, 1.0, size=n)
        T = tk.norm(cauchy_stress(m, E, th))
        ratios.append(float(np.max(T / (1.0 + np.abs(internal_energy(m, E, th))))))
    if ratios[-1] > 10.0 * max(ratios[0], 1e-300):
        warnings.warn("|T(E, theta)| does not appear to be bounded by C(1 + energy)")
    return max(ratios)
