"""Isoparametric families on the round sphere and the sphere-level checks.

An isoparametric family is fixed by the number ``ell`` of distinct principal
curvatures and the two multiplicities ``m_minus <= m_plus``.  Everything the
radial ODE needs (the damping profile ``h``, its zero ``a0``, the admissible
exponent window) is derived here, together with the degree one and two
Cartan-Munzner polynomials and a finite-difference Laplace-Beltrami oracle
that is independent of the ODE reduction.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import FamilyError, InvarianceError

ALLOWED_ELL = (1, 2, 3, 4, 6)
UNIT_TOL = 1e-12
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class IsoparametricFamily:
    ell: int
    m_minus: int
    m_plus: int
    n: int

    @property
    def dim_focal_minus(self) -> int:
        return self.n - 1 - self.m_minus

    @property
    def dim_focal_plus(self) -> int:
        return self.n - 1 - self.m_plus

    @property
    def a0(self) -> float:
        return a0(self)

    def to_json(self) -> str:
        return json.dumps({"ell": self.ell, "m_minus": self.m_minus, "m_plus": self.m_plus})

    @classmethod
    def from_json(cls, text: str | dict) -> "IsoparametricFamily":
        data = json.loads(text) if isinstance(text, str) else text
        return make_family(int(data["ell"]), int(data["m_minus"]), int(data["m_plus"]))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["dim_focal_minus"] = self.dim_focal_minus
        out["dim_focal_plus"] = self.dim_focal_plus
        return out


def make_family(ell: int, m_minus: int, m_plus: int) -> IsoparametricFamily:
    """Validate ``(ell, m_minus, m_plus)`` and derive the sphere dimension."""
    if ell not in ALLOWED_ELL:
        raise FamilyError(f"ell must be one of {ALLOWED_ELL}, got {ell}")
    if m_minus < 1 or m_plus < m_minus:
        raise FamilyError(f"need 1 <= m_minus <= m_plus, got ({m_minus}, {m_plus})")
    if ell % 2 == 1 and m_minus != m_plus:
        raise FamilyError(f"odd ell={ell} forces equal multiplicities, got ({m_minus}, {m_plus})")
    twice = ell * (m_minus + m_plus)
    if twice % 2:
        raise FamilyError(f"n - 1 = ell*(m_minus+m_plus)/2 = {twice / 2} is not an integer")
    n = 1 + twice // 2
    if n < 3:
        raise FamilyError(f"sphere dimension n={n} < 3")
    fam = IsoparametricFamily(ell, m_minus, m_plus, n)
    if fam.dim_focal_minus < 0 or fam.dim_focal_plus < 0:
        raise FamilyError("negative focal dimension")
    return fam


def h_coeff(family: IsoparametricFamily, r):
    """Damping profile ``h(r)`` of the radial equation; works on arrays."""
    s = 0.5 * (family.m_minus + family.m_plus)
    t = 0.5 * (family.m_plus - family.m_minus)
    return s * np.cos(r) - t


def h_reflected(family: IsoparametricFamily, r):
    """``-h(pi - r)``: the profile seen from the far pole."""
    s = 0.5 * (family.m_minus + family.m_plus)
    t = 0.5 * (family.m_plus - family.m_minus)
    return s * np.cos(r) + t


def a0(family: IsoparametricFamily) -> float:
    """Unique zero of ``h`` in ``(0, pi)``."""
    return math.acos((family.m_plus - family.m_minus) / (family.m_plus + family.m_minus))


def ab_coeffs(family: IsoparametricFamily, t):
    """Coefficients ``a(t) = Laplacian f`` and ``b(t) = |grad f|^2``."""
    ell, n = family.ell, family.n
    a = -ell * (n + ell - 1) * np.asarray(t, dtype=float) + ell**2 * (family.m_plus - family.m_minus) / 2
    b = ell**2 * (1.0 - np.asarray(t, dtype=float) ** 2)
    if np.ndim(t) == 0:
        return float(a), float(b)
    return a, b


@dataclass(frozen=True)
class AdmissibleRange:
    lower: float
    upper: float
    critical: float

    def contains(self, p: float) -> bool:
        return self.lower < p < self.upper


def admissible_p(family: IsoparametricFamily) -> AdmissibleRange:
    """Exponent window ``1 < p < (m_plus+3)/(m_plus-1)`` and the Sobolev exponent."""
    m = family.m_plus
    upper = math.inf if m == 1 else (m + 3) / (m - 1)
    critical = (family.n + 2) / (family.n - 2)
    return AdmissibleRange(1.0, upper, critical)


# --------------------------------------------------------------------------
# Cartan-Munzner polynomials (degree 1 and the split degree 2 form)


def check_split(family: IsoparametricFamily, split) -> tuple[int, int] | None:
    if family.ell == 1:
        return None
    if family.ell != 2:
        raise FamilyError(f"only ell in (1, 2) have an explicit polynomial here, got ell={family.ell}")
    if split is None:
        raise FamilyError("ell=2 needs a split (alpha, beta)")
    alpha, beta = (int(v) for v in split)
    if alpha < 1 or beta < 1 or 2 * (alpha + beta) != family.n + 1:
        raise FamilyError(f"split {split} does not fill R^{family.n + 1} as C^alpha x C^beta")
    # |x|^2 - |y|^2 puts multiplicity 2*beta-1 at r=0 and 2*alpha-1 at r=pi
    if (2 * beta - 1, 2 * alpha - 1) != (family.m_minus, family.m_plus):
        raise FamilyError(
            f"split {split} realises multiplicities ({2 * beta - 1}, {2 * alpha - 1}), "
            f"family has ({family.m_minus}, {family.m_plus})"
        )
    return alpha, beta


def default_split(family: IsoparametricFamily) -> tuple[int, int] | None:
    if family.ell == 1:
        return None
    if family.ell == 2:
        return check_split(family, ((family.m_plus + 1) // 2, (family.m_minus + 1) // 2))
    raise FamilyError(f"no explicit polynomial for ell={family.ell}")


def _cm_raw(family: IsoparametricFamily, split, y: np.ndarray) -> np.ndarray:
    # y has shape (..., n+1); no normalisation
    if family.ell == 1:
        return y[..., -1]
    alpha, _ = split
    xb = y[..., : 2 * alpha]
    yb = y[..., 2 * alpha :]
    return np.sum(xb * xb, axis=-1) - np.sum(yb * yb, axis=-1)


def cartan_munzner_f(family: IsoparametricFamily, split, x) -> float | np.ndarray:
    """Isoparametric function on the unit sphere (height for ell=1, ``|x|^2-|y|^2`` for ell=2).

    ``x`` may be one point or an array of points along the last axis.
    """
    split = check_split(family, split)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != family.n + 1:
        raise FamilyError(f"point has {x.shape[-1]} coordinates, sphere S^{family.n} needs {family.n + 1}")
    out = _cm_raw(family, split, x)
    return float(out) if out.ndim == 0 else out


def _homogeneous_f(family, split, y):
    y = np.asarray(y, dtype=float)
    nrm = np.linalg.norm(y, axis=-1, keepdims=True)
    return _cm_raw(family, split, y / nrm)


def random_sphere_points(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    pts = rng.standard_normal((count, n + 1))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def check_unit(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if abs(float(x @ x) - 1.0) > UNIT_TOL:
        raise ValueError(f"point is not on the unit sphere: |x|^2 = {float(x @ x)!r}")
    return x


# --------------------------------------------------------------------------
# Laplace-Beltrami by central differences of the degree-zero extension


def _stencil(x: np.ndarray, step: float) -> np.ndarray:
    dim = x.shape[0]
    eye = np.eye(dim) * step
    return np.vstack([x[None, :], x + eye, x - eye])


def sphere_gradient_sq(fun: Callable[[np.ndarray], np.ndarray], x, step: float = 1e-4) -> float:
    """``|grad u|^2`` on the sphere for ``u = fun`` extended as ``fun(y/|y|)``."""
    x = np.asarray(x, dtype=float)
    pts = _stencil(x, step)
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    vals = np.asarray(fun(pts), dtype=float)
    dim = x.shape[0]
    grad = (vals[1 : dim + 1] - vals[dim + 1 :]) / (2 * step)
    return float(grad @ grad)


def sphere_laplacian(fun: Callable[[np.ndarray], np.ndarray], x, step: float = 1e-3) -> float:
    """Laplace-Beltrami of ``fun`` at ``x`` via the Euclidean Laplacian of ``fun(y/|y|)``."""
    x = np.asarray(x, dtype=float)
    pts = _stencil(x, step)
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    vals = np.asarray(fun(pts), dtype=float)
    dim = x.shape[0]
    return float(np.sum(vals[1 : dim + 1] - 2 * vals[0] + vals[dim + 1 :]) / step**2)


# --------------------------------------------------------------------------
# Lifting a radial profile to the sphere


def _profile_value(w, r):
    if hasattr(w, "eval"):
        return w.eval(r)
    return w(r)


def radius_of(family: IsoparametricFamily, split, x) -> np.ndarray | float:
    """``arccos f(x)`` with a clamp for values within ``CLAMP_TOL`` of +-1."""
    f = np.asarray(cartan_munzner_f(family, split, x), dtype=float)
    if np.any(np.abs(f) > 1 + CLAMP_TOL):
        raise ValueError(f"f(x) outside [-1, 1]: max |f| = {np.max(np.abs(f))!r}")
    r = np.arccos(np.clip(f, -1.0, 1.0))
    return float(r) if r.ndim == 0 else r


def sphere_eval(w, family: IsoparametricFamily, split, x):
    """Value of ``u = w(arccos f)`` at one point (or an array of points)."""
    r = radius_of(family, split, x)
    val = np.asarray(_profile_value(w, r), dtype=float)
    return float(val) if val.ndim == 0 else val


def lifted(w, family: IsoparametricFamily, split) -> Callable[[np.ndarray], np.ndarray]:
    """Sphere function ``x -> w(arccos f(x))`` accepting arrays of points."""
    split = check_split(family, split)

    def u(x):
        x = np.asarray(x, dtype=float)
        f = _cm_raw(family, split, x)
        if np.any(np.abs(f) > 1 + CLAMP_TOL):
            raise ValueError(f"f(x) outside [-1, 1]: max |f| = {np.max(np.abs(f))!r}")
        val = np.asarray(_profile_value(w, np.arccos(np.clip(f, -1.0, 1.0))), dtype=float)
        return np.broadcast_to(val, f.shape).astype(float) if val.ndim == 0 else val

    return u


def focal_distance(family: IsoparametricFamily, split, x) -> float:
    """Geodesic distance from ``x`` to the nearer focal set ``f = +-1``."""
    r = radius_of(family, split, x)
    return min(r, math.pi - r) / family.ell


def pde_residual(w, family: IsoparametricFamily, split, lam: float, p: float, x, fd_step: float = 1e-3) -> float:
    """``-Lap u + lam u - lam |u|^(p-1) u`` at ``x`` for the lifted profile."""
    if not 1e-4 <= fd_step <= 1e-2:
        raise ValueError(f"fd_step must lie in [1e-4, 1e-2], got {fd_step}")
    x = check_unit(x)
    if focal_distance(family, split, x) < fd_step:
        warnings.warn("point lies within fd_step of a focal set; the stencil straddles it", RuntimeWarning)
    u = lifted(w, family, split)
    lap = sphere_laplacian(u, x, fd_step)
    u0 = float(u(x[None, :])[0])
    return -lap + lam * u0 - lam * abs(u0) ** (p - 1) * u0


def residual_rows(w, family, split, lam, p, points, fd_step=1e-3):
    """CSV-ready rows ``(index, f, u, residual)`` for a batch of sphere points."""
    rows = []
    for i, x in enumerate(points):
        f = cartan_munzner_f(family, split, x)
        rows.append((i, f, sphere_eval(w, family, split, x), pde_residual(w, family, split, lam, p, x, fd_step)))
    return rows


# --------------------------------------------------------------------------
# Circle action and the quotient


def circle_act(x, phase: float) -> np.ndarray:
    """Multiply every complex pair ``(x_{2k}, x_{2k+1})`` by ``exp(i phase)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise ValueError("circle action needs an even number of real coordinates")
    c, s = math.cos(phase), math.sin(phase)
    re = x[..., 0::2]
    im = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = c * re - s * im
    out[..., 1::2] = s * re + c * im
    return out


def orbit_deviation(u: Callable[[np.ndarray], np.ndarray], x, phases: Sequence[float] | int = 16) -> float:
    """Largest ``|u(zeta x) - u(x)|`` over the probed phases."""
    if isinstance(phases, int):
        phases = np.linspace(0.0, 2 * math.pi, phases, endpoint=False)
    x = np.asarray(x, dtype=float)
    orbit = np.stack([circle_act(x, ph) for ph in phases])
    vals = np.asarray(u(orbit), dtype=float)
    base = float(np.asarray(u(x[None, :]), dtype=float)[0])
    return float(np.max(np.abs(vals - base)))


def quotient_scale(mu: float, lam: float, p: float) -> float:
    """Factor ``(mu/lam)^(1/(p-1))`` relating ``u`` on the sphere to ``v`` on the quotient."""
    return (mu / lam) ** (1.0 / (p - 1.0))


def quotient_eval(u: Callable[[np.ndarray], np.ndarray], scale: float, x, phases: int = 16, tol: float = 1e-8) -> float:
    """Value at the orbit of ``x`` of the quotient function ``v = u / scale``."""
    x = check_unit(x)
    dev = orbit_deviation(u, x, phases)
    if dev > tol:
        raise InvarianceError(f"u is not circle-invariant at this orbit: worst deviation {dev:.3e} > {tol:.1e}", dev)
    return float(np.asarray(u(x[None, :]), dtype=float)[0]) / scale
