"""Two-dimensional ordinary kriging.

The kriging system is written in variogram form::

    [ G  1 ] [w ]   [g0]
    [ 1' 0 ] [mu] = [ 1]

where ``G[i, j] = gamma(|x_i - x_j|)`` (with ``gamma(0) = 0``) and ``g0`` holds
the semivariances between the samples and the query.  The prediction is
``w' z`` and the kriging variance ``w' g0 + mu``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist, pdist

from .raster_io import SamplePoint, ScalarField, samples_to_arrays

VARIOGRAM_KINDS = ("exponential", "spherical", "gaussian", "linear", "power", "hole-effect")
#: Kinds considered in the default benchmark; hole-effect is oscillatory and excluded.
STANDARD_KINDS = ("exponential", "spherical", "gaussian", "linear", "power")

JITTER = 1e-10


class KrigingError(ValueError):
    pass


class SingularSystemError(KrigingError):
    """The kriging system cannot be factorised, even after jitter."""


class DegenerateModelError(KrigingError):
    pass


@dataclass(frozen=True)
class VariogramModel:
    kind: str
    sill: float = 1.0
    range: float = 1.0
    nugget: float = 0.0
    exponent: float = 1.0  # power kind only
    slope: float = 1.0  # linear kind only
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("sill", "range", "nugget", "exponent", "slope"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "flags", tuple(self.flags))
        if self.kind not in VARIOGRAM_KINDS:
            raise ValueError(f"unknown variogram kind {self.kind!r}; expected one of {VARIOGRAM_KINDS}")
        if not (self.sill >= 0 and self.nugget >= 0 and self.range > 0):
            raise ValueError(f"invalid variogram parameters: {self}")
        if self.kind == "power" and not (0 < self.exponent < 2):
            raise ValueError("power exponent must lie in (0, 2)")
        if self.kind == "linear" and self.slope < 0:
            raise ValueError("linear slope must be >= 0")

    def __call__(self, lag):
        return semivariance(self, lag)

    def scaled(self, factor: float) -> "VariogramModel":
        """Same model with every variance parameter multiplied by ``factor``."""
        return replace(self, sill=self.sill * factor, nugget=self.nugget * factor, slope=self.slope * factor)

    def to_text(self, extra: dict | None = None) -> str:
        lines = [
            f"kind = {self.kind}",
            f"sill = {self.sill!r}",
            f"range = {self.range!r}",
            f"nugget = {self.nugget!r}",
            f"exponent = {self.exponent!r}",
            f"slope = {self.slope!r}",
            f"flags = {','.join(self.flags)}",
        ]
        for key, value in (extra or {}).items():
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VariogramModel":
        return cls(**_model_kwargs(parse_key_values(text)))


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed line {raw!r}; expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _model_kwargs(kv: dict[str, str]) -> dict:
    if "kind" not in kv:
        raise ValueError("model text block lacks 'kind'")
    kwargs: dict = {"kind": kv["kind"]}
    for key in ("sill", "range", "nugget", "exponent", "slope"):
        if key in kv:
            kwargs[key] = float(kv[key])
    flags = kv.get("flags", "")
    kwargs["flags"] = tuple(f for f in flags.split(",") if f)
    return kwargs


def semivariance(model: VariogramModel, lag):
    """Evaluate the variogram at ``lag`` (scalar or array); ``gamma(0) = 0``."""
    h = np.asarray(lag, dtype=np.float64)
    scalar = h.ndim == 0
    h = np.atleast_1d(h)
    if h.size and h.min() < 0:
        raise ValueError("lag must be non-negative")
    kind = model.kind
    a = model.range
    # in-place arithmetic keeps large grid evaluations to a few passes
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "exponential":
            g = np.multiply(h, -1.0 / a)
            np.exp(g, out=g)
            g *= -model.sill
            g += model.sill
        elif kind == "spherical":
            r = np.minimum(h / a, 1.0)
            g = model.sill * (1.5 * r - 0.5 * r**3)
        elif kind == "gaussian":
            g = np.multiply(h, 1.0 / a)
            np.square(g, out=g)
            np.negative(g, out=g)
            np.exp(g, out=g)
            g *= -model.sill
            g += model.sill
        elif kind == "linear":
            g = model.slope * h
        elif kind == "power":
            g = model.sill * h**model.exponent
        else:  # hole-effect
            t = np.pi * h / a
            g = model.sill * (1.0 - np.where(t == 0, 1.0, np.sin(t) / np.where(t == 0, 1.0, t)))
    g = np.asarray(g, dtype=np.float64)
    if model.nugget:
        g += model.nugget
    g[h == 0] = 0.0
    return float(g[0]) if scalar else g


def _xy(samples: Sequence[SamplePoint]):
    xs, ys, vs = samples_to_arrays(samples)
    return np.column_stack([xs, ys]), vs


def _bin_pairs(samples: Sequence[SamplePoint], n_lags: int):
    """Per-bin (centre, mean pair distance, mean semivariance, count) arrays."""
    if n_lags < 1:
        raise ValueError("n_lags must be >= 1")
    if len(samples) < 2:
        raise KrigingError("need at least 2 samples")
    pts, vs = _xy(samples)
    d = pdist(pts)
    dmax = float(d.max())
    if dmax == 0.0:
        raise KrigingError("all samples are co-located")
    half_sq = 0.5 * pdist(vs[:, None], "sqeuclidean")
    edges = np.linspace(0.0, dmax, n_lags + 1)
    idx = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, n_lags - 1)
    counts = np.bincount(idx, minlength=n_lags)
    sums = np.bincount(idx, weights=half_sq, minlength=n_lags)
    dsums = np.bincount(idx, weights=d, minlength=n_lags)
    centres = 0.5 * (edges[:-1] + edges[1:])
    gamma = np.divide(sums, counts, out=np.zeros(n_lags), where=counts > 0)
    mean_d = np.divide(dsums, counts, out=centres.copy(), where=counts > 0)
    return centres, mean_d, gamma, counts


def empirical_variogram(samples: Sequence[SamplePoint], n_lags: int = 20):
    """Bin half squared differences by pair distance.

    Returns a list of ``(lag_centre, mean_semivariance, pair_count)`` over
    ``n_lags`` equal-width bins spanning ``[0, max pairwise distance]``.  A
    pair falls in bin ``k`` when ``edge_k <= d < edge_{k+1}``; the last bin is
    closed.  Empty bins report semivariance 0 and count 0.
    """
    centres, _, gamma, counts = _bin_pairs(samples, n_lags)
    return [(float(c), float(g), int(n)) for c, g, n in zip(centres, gamma, counts)]


def _distinct_locations(samples: Sequence[SamplePoint]) -> int:
    return len({(p.x, p.y) for p in samples})


def _kind_params(kind: str):
    """(parameter names, lower bounds) for the free parameters of ``kind``."""
    if kind == "linear":
        return ("slope", "nugget"), (0.0, 0.0)
    if kind == "power":
        return ("sill", "exponent", "nugget"), (0.0, 1e-3, 0.0)
    return ("sill", "range", "nugget"), (0.0, 1e-9, 0.0)


def fit_variogram(
    samples: Sequence[SamplePoint],
    kind: str = "exponential",
    n_lags: int = 20,
    max_lag_fraction: float = 0.5,
    max_nfev: int = 2000,
) -> VariogramModel:
    """Weighted least-squares variogram fit on the binned empirical variogram.

    ``n_lags`` equal-width bins cover ``[0, max_lag_fraction * d_max]``, where
    ``d_max`` is the largest pair distance; longer lags are few and
    unreliable and are ignored.  Each bin is fitted at the mean distance of
    its pairs rather than its centre, which matters at short lags where pairs
    crowd the upper edge.  Residuals are weighted by pair count.  The returned
    model carries ``flags``:
    ``"degenerate"`` for constant data, ``"not-converged"`` when the optimiser
    stops on its evaluation budget (best parameters found are still returned).
    """
    if kind not in VARIOGRAM_KINDS:
        raise ValueError(f"unknown variogram kind {kind!r}")
    if _distinct_locations(samples) < 3:
        raise KrigingError("need at least 3 distinct sample locations")
    if not 0 < max_lag_fraction <= 1:
        raise ValueError("max_lag_fraction must lie in (0, 1]")
    # same bin width as empirical_variogram over the full distance span, but
    # n_lags bins fall inside the fitted reach
    total = max(n_lags, int(round(n_lags / max_lag_fraction)))
    _, lags, gam, cnt = _bin_pairs(samples, total)
    cnt = cnt.astype(np.float64)
    keep = (cnt > 0) & (np.arange(total) < n_lags)
    if keep.sum() < 2:
        keep = cnt > 0
    lags, gam, cnt = lags[keep], gam[keep], cnt[keep]
    reach = float(lags.max())

    vs = np.array([p.value for p in samples])
    if np.ptp(vs) == 0.0:
        base = {"sill": 0.0, "range": reach, "nugget": 0.0, "slope": 0.0}
        if kind == "power":
            base["exponent"] = 1.0
        return VariogramModel(kind, flags=("degenerate",), **base)

    names, lower = _kind_params(kind)
    upper = [np.inf] * len(names)
    if kind == "power":
        upper[1] = 1.999
    w = np.sqrt(cnt)
    gmax = float(gam.max())

    def build(params):
        kw = dict(zip(names, params))
        return VariogramModel(kind, **kw)

    def residuals(params):
        return w * (semivariance(build(params), lags) - gam)

    if kind == "linear":
        starts = [(gmax / reach, 0.0)]
    elif kind == "power":
        starts = [(gmax / reach**e, e, 0.0) for e in (0.5, 1.0, 1.5)]
    else:
        starts = [(gmax, f * reach, 0.0) for f in (0.1, 0.3, 1.0)]

    best = None
    for x0 in starts:
        x0 = np.clip(np.asarray(x0, dtype=np.float64), np.asarray(lower) + 1e-12, np.asarray(upper) - 1e-12)
        res = optimize.least_squares(residuals, x0, bounds=(lower, upper), max_nfev=max_nfev, method="trf")
        if best is None or res.cost < best.cost:
            best = res
    model = build(best.x)
    if best.status == 0:
        model = replace(model, flags=("not-converged",))
    return model


def average_duplicates(samples: Sequence[SamplePoint]) -> list[SamplePoint]:
    """Merge samples sharing a location into one point carrying their mean value."""
    groups: dict[tuple[float, float], list[float]] = {}
    for p in samples:
        groups.setdefault((float(p.x), float(p.y)), []).append(float(p.value))
    return [SamplePoint(x, y, math.fsum(v) / len(v)) for (x, y), v in groups.items()]


class KrigingModel:
    """Ordinary kriging over a fixed sample set and variogram.

    Duplicate sample locations are averaged.  The augmented system is
    LU-factorised once; if it is singular a ``1e-10`` covariance jitter is
    applied to the diagonal once before giving up.
    """

    def __init__(self, samples: Sequence[SamplePoint], variogram: VariogramModel, extent=None):
        merged = average_duplicates(samples)
        if len(merged) < 2:
            raise KrigingError("kriging needs at least 2 distinct sample locations")
        self.samples = merged
        self.variogram = variogram
        self._pts, self._z = _xy(merged)
        if extent is None:
            extent = (
                max(1.0, math.ceil(float(self._pts[:, 0].max()))),
                max(1.0, math.ceil(float(self._pts[:, 1].max()))),
            )
        self.extent = (float(extent[0]), float(extent[1]))
        n = len(merged)
        a = np.zeros((n + 1, n + 1))
        a[:n, :n] = semivariance(variogram, cdist(self._pts, self._pts))
        a[:n, n] = 1.0
        a[n, :n] = 1.0
        self.jittered = False
        self._lu = self._factorise(a)
        if self._lu is None:
            a[np.arange(n), np.arange(n)] -= JITTER
            self.jittered = True
            self._lu = self._factorise(a)
            if self._lu is None:
                raise SingularSystemError("kriging system is singular")
        self._system = a
        rhs = np.append(self._z, 0.0)
        self._dual = linalg.lu_solve(self._lu, rhs)

    @staticmethod
    def _factorise(a):
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            try:
                lu, piv = linalg.lu_factor(a, check_finite=True)
            except (linalg.LinAlgWarning, linalg.LinAlgError, ValueError):
                return None
        diag = np.abs(np.diag(lu))
        if diag.min() <= 1e-13 * max(diag.max(), 1.0):
            return None
        return lu, piv

    @property
    def n(self) -> int:
        return len(self.samples)

    def _g0(self, xs, ys):
        q = np.column_stack([np.ravel(xs), np.ravel(ys)])
        return semivariance(self.variogram, cdist(self._pts, q))

    def solve_weights(self, xs, ys):
        """Kriging weights ``(n, m)`` and Lagrange multipliers ``(m,)`` for ``m`` queries."""
        g0 = self._g0(xs, ys)
        rhs = np.vstack([g0, np.ones((1, g0.shape[1]))])
        sol = linalg.lu_solve(self._lu, rhs)
        return sol[:-1], sol[-1], g0

    def weights(self, x: float, y: float) -> np.ndarray:
        w, _, _ = self.solve_weights([x], [y])
        return w[:, 0]

    def predict_mean(self, xs, ys) -> np.ndarray:
        """Kriging mean via the dual form ``g0' a + a_n`` (no per-query solve)."""
        g0 = self._g0(xs, ys)
        return g0.T @ self._dual[:-1] + self._dual[-1]

    def predict(self, xs, ys):
        """Mean and variance arrays for the query points."""
        w, mu, g0 = self.solve_weights(xs, ys)
        mean = g0.T @ self._dual[:-1] + self._dual[-1]
        var = np.einsum("ij,ij->j", w, g0) + mu
        return mean, var


def krige_predict(model: KrigingModel, x: float, y: float) -> tuple[float, float]:
    mean, var = model.predict([x], [y])
    return float(mean[0]), float(var[0])


@dataclass(frozen=True)
class QStats:
    q1: float
    q2: float
    cr: float


def loo_residuals(model: KrigingModel):
    """Leave-one-out errors ``z_i - zhat_{-i}`` and kriging variances.

    Uses the closed form on the inverse ``B`` of the augmented system:
    ``e_i = (B [z; 0])_i / B_ii`` and ``sigma2_i = -1 / B_ii`` (variogram form).
    """
    n = model.n
    binv = linalg.lu_solve(model._lu, np.eye(n + 1))
    diag = np.diag(binv)[:n]
    err = model._dual[:n] / diag
    var = -1.0 / diag
    return err, var


def cross_validate(model: KrigingModel) -> QStats:
    """Q1, Q2 and cR from standardised leave-one-out residuals.

    ``Q1 = mean(eps)``, ``Q2 = mean(eps**2)`` and
    ``cR = Q2 * exp(mean(log sigma2))`` with ``eps = e / sigma``.
    """
    if model.n < 3:
        raise KrigingError("cross-validation needs at least 3 samples")
    err, var = loo_residuals(model)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise DegenerateModelError("zero or negative leave-one-out kriging variance")
    eps = err / np.sqrt(var)
    q1 = float(np.mean(eps))
    q2 = float(np.mean(eps**2))
    cr = float(q2 * np.exp(np.mean(np.log(var))))
    return QStats(q1, q2, cr)


def grid_shape(extent, long_side: int = 1024) -> tuple[int, int]:
    """(width, height) of a grid whose long side has ``long_side`` cells, aspect preserved."""
    ew, eh = float(extent[0]), float(extent[1])
    if ew >= eh:
        return long_side, max(1, int(round(long_side * eh / ew)))
    return max(1, int(round(long_side * ew / eh))), long_side


def cell_centres(width: int, height: int, extent):
    """Model-space coordinates of grid cell centres, each of shape ``(height, width)``."""
    sx = float(extent[0]) / width
    sy = float(extent[1]) / height
    xs = (np.arange(width) + 0.5) * sx
    ys = (np.arange(height) + 0.5) * sy
    return np.meshgrid(xs, ys)


def render_field(model: KrigingModel, width: int, height: int, extent=None, chunk_cells: int = 1 << 22) -> ScalarField:
    """Evaluate the kriging mean at every cell centre, clamped to ``[0, 1]``."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    extent = model.extent if extent is None else extent
    gx, gy = cell_centres(width, height, extent)
    rows_per_chunk = max(1, chunk_cells // max(1, model.n * width))
    out = np.empty((height, width))
    for r0 in range(0, height, rows_per_chunk):
        r1 = min(height, r0 + rows_per_chunk)
        out[r0:r1] = model.predict_mean(gx[r0:r1], gy[r0:r1]).reshape(r1 - r0, width)
    return ScalarField.clamped(out)


def model_from_text(text: str, samples: Sequence[SamplePoint]) -> KrigingModel:
    kv = parse_key_values(text)
    vario = VariogramModel(**_model_kwargs(kv))
    extent = None
    if "extent_width" in kv and "extent_height" in kv:
        extent = (float(kv["extent_width"]), float(kv["extent_height"]))
    return KrigingModel(samples, vario, extent=extent)
