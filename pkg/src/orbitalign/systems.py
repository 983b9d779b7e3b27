"""Catalog of benchmark chaotic systems and their homotopy hybrids.

Each system is a 3-dimensional autonomous vector field with an analytic
Jacobian. Two systems of equal dimension can be joined into a hybrid family
``(1 - lam) * f + lam * g`` whose embedding parameter ``lam`` sweeps a
continuous path from one system to the other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import CatalogError, ConfigurationError

FieldFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemSpec:
    """A continuous-time vector field with parameters and analytic Jacobian.

    ``lambda_partial`` is present only for hybrids and evaluates the exact
    derivative of the field with respect to the embedding parameter, which
    for a convex combination is simply ``g(state) - f(state)``. ``lam``
    records the embedding value a hybrid was bound at (None otherwise).

    Instances are immutable and the evaluators are pure functions of their
    inputs, so specs can be shared freely between concurrent workers.
    """

    name: str
    dim: int
    params: Mapping[str, float]
    field: FieldFn
    jacobian: FieldFn
    lambda_partial: Optional[FieldFn] = None
    lam: Optional[float] = None


def chua_nonlinearity(x, m0, m1):
    """Piecewise-linear diode response: slope m0 on |x| < 1, slope m1 outside."""
    return m1 * x + 0.5 * (m0 - m1) * (abs(x + 1.0) - abs(x - 1.0))


def _chua_slope(x, m0, m1):
    # Closed-interval convention: the inner slope applies at the kinks |x| = 1.
    return m0 if abs(x) <= 1.0 else m1


def _build_lorenz(p):
    sigma, b, r = p["sigma"], p["b"], p["r"]

    def field(s):
        x, y, z = s
        return np.array([sigma * (y - x), -x * z + r * x - y, x * y - b * z])

    def jacobian(s):
        x, y, z = s
        return np.array([[-sigma, sigma, 0.0], [r - z, -1.0, -x], [y, x, -b]])

    return field, jacobian


def _build_chua(p):
    alpha, beta, m0, m1 = p["alpha"], p["beta"], p["m0"], p["m1"]

    def field(s):
        x, y, z = s
        return np.array(
            [alpha * (y - x - chua_nonlinearity(x, m0, m1)), x - y + z, -beta * y]
        )

    def jacobian(s):
        x = s[0]
        return np.array(
            [
                [-alpha * (1.0 + _chua_slope(x, m0, m1)), alpha, 0.0],
                [1.0, -1.0, 1.0],
                [0.0, -beta, 0.0],
            ]
        )

    return field, jacobian


def _build_rossler(p):
    a, b, c = p["a"], p["b"], p["c"]

    def field(s):
        x, y, z = s
        return np.array([-y - z, x + a * y, b + z * (x - c)])

    def jacobian(s):
        x, z = s[0], s[2]
        return np.array([[0.0, -1.0, -1.0], [1.0, a, 0.0], [z, 0.0, x - c]])

    return field, jacobian


def _build_chen(p):
    a, b, c = p["a"], p["b"], p["c"]

    def field(s):
        x, y, z = s
        return np.array([a * (y - x), (c - a) * x - x * z + c * y, x * y - b * z])

    def jacobian(s):
        x, y, z = s
        return np.array([[-a, a, 0.0], [c - a - z, c, -x], [y, x, -b]])

    return field, jacobian


def _build_lu(p):
    a, b, c, u = p["a"], p["b"], p["c"], p["u"]

    def field(s):
        x, y, z = s
        return np.array([a * (y - x), -x * z + c * y + u, x * y - b * z])

    def jacobian(s):
        x, y, z = s
        return np.array([[-a, a, 0.0], [-z, c, -x], [y, x, -b]])

    return field, jacobian


_CATALOG = {
    "lorenz": ({"sigma": 10.0, "b": 8.0 / 3.0, "r": 28.0}, _build_lorenz),
    "chua": ({"alpha": 10.0, "beta": 15.0, "m0": -1.2, "m1": -0.6}, _build_chua),
    "rossler": ({"a": 0.2, "b": 0.2, "c": 5.7}, _build_rossler),
    "chen": ({"a": 40.0, "b": 3.0, "c": 28.0}, _build_chen),
    "lu": ({"a": 36.0, "b": 3.0, "c": 20.0, "u": 0.0}, _build_lu),
}

CATALOG_NAMES = tuple(sorted(_CATALOG))


def make_system(name: str, overrides: Optional[Mapping[str, float]] = None) -> SystemSpec:
    """Build a catalog system, optionally overriding named parameters.

    The Chua circuit uses the sign convention alpha*(y - x - f(x)) in its
    first component (some of the literature carries +f(x) instead).
    The Lu system carries a constant control ``u`` added to its second
    component, defaulting to 0.
    """
    if name not in _CATALOG:
        raise CatalogError(f"unknown system {name!r}; catalog: {', '.join(CATALOG_NAMES)}")
    defaults, builder = _CATALOG[name]
    params = dict(defaults)
    for key, value in dict(overrides or {}).items():
        if key not in defaults:
            raise ConfigurationError(
                f"unknown parameter {key!r} for system {name!r}; "
                f"valid keys: {', '.join(sorted(defaults))}"
            )
        params[key] = float(value)
    field, jacobian = builder(params)
    return SystemSpec(name=name, dim=3, params=params, field=field, jacobian=jacobian)


@dataclass(frozen=True)
class HybridFamily:
    """Homotopy path ``(1 - lam) * f + lam * g`` between two systems.

    ``at(lam)`` binds the embedding parameter and returns a concrete
    SystemSpec. The endpoints reproduce the constituents exactly: at
    lam = 0 the evaluators of ``f`` are returned untouched, at lam = 1
    those of ``g``.
    """

    f_spec: SystemSpec
    g_spec: SystemSpec

    @property
    def name(self) -> str:
        return f"hybrid({self.f_spec.name},{self.g_spec.name})"

    @property
    def dim(self) -> int:
        return self.f_spec.dim

    def at(self, lam: float) -> SystemSpec:
        lam = float(lam)
        if not 0.0 <= lam <= 1.0:
            raise ConfigurationError(f"embedding parameter {lam} outside [0, 1]")
        f, g = self.f_spec, self.g_spec

        def lambda_partial(s, _ff=f.field, _gf=g.field):
            return _gf(s) - _ff(s)

        if lam == 0.0:
            field, jacobian = f.field, f.jacobian
        elif lam == 1.0:
            field, jacobian = g.field, g.jacobian
        else:
            w = 1.0 - lam

            def field(s, _ff=f.field, _gf=g.field, _w=w, _l=lam):
                return _w * _ff(s) + _l * _gf(s)

            def jacobian(s, _fj=f.jacobian, _gj=g.jacobian, _w=w, _l=lam):
                return _w * _fj(s) + _l * _gj(s)

        return SystemSpec(
            name=self.name,
            dim=f.dim,
            params={"lambda": lam},
            field=field,
            jacobian=jacobian,
            lambda_partial=lambda_partial,
            lam=lam,
        )


def make_hybrid(f_spec: SystemSpec, g_spec: SystemSpec) -> HybridFamily:
    """Join two equal-dimension systems into a homotopy family."""
    if f_spec.dim != g_spec.dim:
        raise ConfigurationError(
            f"dimension mismatch: {f_spec.name} is {f_spec.dim}-dimensional, "
            f"{g_spec.name} is {g_spec.dim}-dimensional"
        )
    return HybridFamily(f_spec=f_spec, g_spec=g_spec)
