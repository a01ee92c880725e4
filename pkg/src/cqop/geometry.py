"""Surface charts and curvature from scale factors.

A chart is three scale-factor expressions in orthogonal curvilinear
coordinates, with the confined coordinate q3 pinned to a constant value a.
Mean curvature, Gaussian curvature, and the geometric potential are derived
symbolically, so the constants for the built-in surfaces come out exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex

__all__ = [
    "PhysParams", "Domain", "Chart", "CurvatureData", "ChartError",
    "builtin_chart", "mean_curvature", "gaussian_curvature",
    "geometric_potential", "curvature_data", "load_chart", "chart_to_dict",
]


class ChartError(ValueError):
    pass


@dataclass(frozen=True)
class PhysParams:
    """hbar and mass, natural units by default."""

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.hbar <= 0 or self.mass <= 0:
            raise ChartError("hbar and mass must be strictly positive")


@dataclass(frozen=True)
class Domain:
    lo: float
    hi: float
    periodic: bool

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ChartError(f"empty domain [{self.lo}, {self.hi}]")

    @property
    def length(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class Chart:
    """Immutable surface definition.

    kind is 'sphere', 'cylinder', 'ring', or 'custom'; only the built-in
    kinds support grid construction and operator assembly, custom charts
    are limited to curvature evaluation.
    """

    kind: str
    coords: tuple  # (q1, q2, q3) names
    h: tuple       # (h1, h2, h3) Expr
    a: float       # fixed value of q3
    domains: tuple  # (Domain, Domain) for q1, q2
    params: PhysParams = field(default_factory=PhysParams)

    def __post_init__(self):
        if len(self.coords) != 3 or len(self.h) != 3 or len(self.domains) != 2:
            raise ChartError("chart needs 3 coordinates, 3 scale factors, 2 domains")
        _validate_on_samples(self)

    @property
    def radius(self):
        return self.a

    def sample_points(self, n=7, rng=None):
        """Interior (q1, q2) sample points used for validation and tests."""
        d1, d2 = self.domains
        u = np.linspace(0.08, 0.92, n)
        q1 = d1.lo + d1.length * u
        q2 = d2.lo + d2.length * u
        Q1, Q2 = np.meshgrid(q1, q2, indexing="ij")
        if rng is not None:
            Q1 = Q1 + rng.uniform(-0.02, 0.02, Q1.shape) * d1.length
            Q2 = Q2 + rng.uniform(-0.02, 0.02, Q2.shape) * d2.length
        return Q1.ravel(), Q2.ravel()

    def bindings(self, q1, q2, q3=None):
        return {
            self.coords[0]: q1,
            self.coords[1]: q2,
            self.coords[2]: self.a if q3 is None else q3,
        }


def _validate_on_samples(chart):
    q1, q2 = chart.sample_points()
    b = chart.bindings(q1, q2)
    h3 = np.asarray(ex.evaluate(chart.h[2], b), dtype=float)
    if not np.all(np.abs(h3 - 1.0) <= 1e-9):
        raise ChartError("h3 must evaluate to 1 on the surface (confined coordinate convention)")
    for i in (0, 1):
        hi = np.asarray(ex.evaluate(chart.h[i], b), dtype=float)
        if not np.all(hi > 0):
            raise ChartError(f"h{i + 1} must be strictly positive on the surface interior")


def builtin_chart(kind, R, Lz=None, params=None):
    """Construct a built-in chart: sphere, cylinder, or ring of radius R."""
    params = params or PhysParams()
    if R <= 0:
        raise ChartError("radius R must be positive")
    if kind == "sphere":
        return Chart(
            kind="sphere",
            coords=("theta", "phi", "r"),
            h=(ex.parse("r"), ex.parse("r*sin(theta)"), ex.parse("1")),
            a=float(R),
            domains=(Domain(0.0, math.pi, False), Domain(0.0, 2 * math.pi, True)),
            params=params,
        )
    if kind == "cylinder":
        if Lz is None or Lz <= 0:
            raise ChartError("cylinder needs an axial period Lz > 0")
        return Chart(
            kind="cylinder",
            coords=("theta", "z", "r"),
            h=(ex.parse("r"), ex.parse("1"), ex.parse("1")),
            a=float(R),
            domains=(Domain(0.0, 2 * math.pi, True), Domain(0.0, float(Lz), True)),
            params=params,
        )
    if kind == "ring":
        # cylinder chart with the axial coordinate removed; the dummy second
        # coordinate has unit extent so the measure integrates to 2*pi*R
        return Chart(
            kind="ring",
            coords=("theta", "w", "r"),
            h=(ex.parse("r"), ex.parse("1"), ex.parse("1")),
            a=float(R),
            domains=(Domain(0.0, 2 * math.pi, True), Domain(0.0, 1.0, True)),
            params=params,
        )
    raise ChartError(f"unknown built-in chart kind '{kind}'")


@dataclass(frozen=True)
class CurvatureData:
    """Mean curvature M, Gaussian curvature K, geometric potential Vgeo,
    all as expressions in (q1, q2) with q3 already fixed to a."""

    M: ex.Expr
    K: ex.Expr
    Vgeo: ex.Expr
    W: ex.Expr  # the curvature bracket K - M^2, kept for consistency checks


def _h1h2(chart):
    return ex.Mul(chart.h[0], chart.h[1])


def mean_curvature(chart):
    """M = -d3(h1 h2) / (2 h1 h2), evaluated on the surface q3 = a."""
    q3 = chart.coords[2]
    hh = _h1h2(chart)
    m = ex.neg(ex.div(ex.differentiate(hh, q3), ex.mul(ex.Num(2.0), hh)))
    return ex.substitute(m, q3, chart.a)


def _curvature_bracket(chart):
    """W = d3^2(h1 h2)/(2 h1 h2) - (d3(h1 h2))^2/(2 h1 h2)^2 on the surface.

    This is the bracket whose value is K - M^2; the Gaussian curvature is
    recovered as K = M^2 + W, staying inside the same identity that defines
    the geometric kinetic energy.
    """
    q3 = chart.coords[2]
    hh = _h1h2(chart)
    d1 = ex.differentiate(hh, q3)
    d2 = ex.differentiate(d1, q3)
    two_hh = ex.mul(ex.Num(2.0), hh)
    w = ex.sub(ex.div(d2, two_hh), ex.div(ex.power(d1, 2), ex.power(two_hh, 2)))
    return ex.substitute(w, q3, chart.a)


def gaussian_curvature(chart):
    """K = M^2 + W on the surface."""
    m = mean_curvature(chart)
    return ex.add(ex.power(m, 2), _curvature_bracket(chart))


def geometric_potential(chart):
    """Vgeo = -(hbar^2 / 2m) (M^2 - K), energy units per chart params."""
    coef = chart.params.hbar ** 2 / (2.0 * chart.params.mass)
    m = mean_curvature(chart)
    k = gaussian_curvature(chart)
    return ex.mul(ex.Num(-coef), ex.sub(ex.power(m, 2), k))


def curvature_data(chart):
    return CurvatureData(
        M=mean_curvature(chart),
        K=gaussian_curvature(chart),
        Vgeo=geometric_potential(chart),
        W=_curvature_bracket(chart),
    )


def evaluate_curvature_constant(chart, e, tol=1e-10):
    """Evaluate a curvature expression; returns (value, is_constant) over samples."""
    q1, q2 = chart.sample_points()
    vals = np.asarray(ex.evaluate(e, chart.bindings(q1, q2)), dtype=float)
    vals = np.broadcast_to(vals, q1.shape)
    v0 = float(vals[len(vals) // 2])
    scale = 1.0 + abs(v0)
    return v0, bool(np.all(np.abs(vals - v0) <= tol * scale))


# ---------------------------------------------------------------------------
# chart JSON schema:
# {"coords":[q1,q2,q3], "h":[expr,expr,expr], "a":real,
#  "domains":[{"min","max","periodic"} x2], "hbar":real, "mass":real}
# ---------------------------------------------------------------------------

def load_chart(source, kind="custom"):
    """Load a chart from a JSON file path, JSON string, or dict."""
    if isinstance(source, dict):
        data = source
    else:
        text = source
        if "\n" not in str(source) and not str(source).lstrip().startswith("{"):
            with open(source, "r", encoding="utf-8") as f:
                text = f.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ChartError(f"chart JSON parse error: {err}") from err
    try:
        coords = tuple(str(c) for c in data["coords"])
        h = tuple(ex.parse(str(s)) for s in data["h"])
        a = float(data["a"])
        domains = tuple(
            Domain(float(d["min"]), float(d["max"]), bool(d["periodic"]))
            for d in data["domains"]
        )
        params = PhysParams(float(data.get("hbar", 1.0)), float(data.get("mass", 1.0)))
    except ex.ExprError as err:
        raise ChartError(f"chart expression error: {err}") from err
    except (KeyError, TypeError, ValueError) as err:
        raise ChartError(f"malformed chart JSON: {err}") from err
    return Chart(kind=kind, coords=coords, h=h, a=a, domains=domains, params=params)


def chart_to_dict(chart):
    return {
        "coords": list(chart.coords),
        "h": [str(e) for e in chart.h],
        "a": chart.a,
        "domains": [
            {"min": d.lo, "max": d.hi, "periodic": d.periodic} for d in chart.domains
        ],
        "hbar": chart.params.hbar,
        "mass": chart.params.mass,
    }
