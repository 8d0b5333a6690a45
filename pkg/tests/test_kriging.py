import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from krigrid.kriging import (
    STANDARD_KINDS,
    DegenerateModelError,
    KrigingError,
    KrigingModel,
    SingularSystemError,
    VariogramModel,
    cell_centres,
    cross_validate,
    empirical_variogram,
    fit_variogram,
    grid_shape,
    krige_predict,
    loo_residuals,
    model_from_text,
    render_field,
    semivariance,
)
from krigrid.raster_io import SamplePoint
from krigrid.synthetic import gp_samples


def random_samples(n, seed, side=100.0):
    rng = np.random.default_rng(seed)
    xy = rng.random((n, 2)) * side
    v = rng.random(n)
    return [SamplePoint(float(x), float(y), float(z)) for (x, y), z in zip(xy, v)]


# --- semivariance ---------------------------------------------------------

def test_exponential_at_zero_lag():
    assert semivariance(VariogramModel("exponential", 1, 1, 0), 0.0) == 0.0


def test_exponential_at_unit_lag():
    assert semivariance(VariogramModel("exponential", 1, 1, 0), 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert semivariance(VariogramModel("exponential", 1, 1, 0), 1.0) == pytest.approx(0.63212, abs=1e-5)


def test_spherical_plateau_beyond_range():
    assert semivariance(VariogramModel("spherical", 1, 2, 0), 5.0) == pytest.approx(1.0)


@pytest.mark.parametrize("kind,lag,expected", [
    ("spherical", 1.0, 0.1 + 2 * (1.5 * 0.5 - 0.5 * 0.125)),
    ("gaussian", 2.0, 0.1 + 2 * (1 - math.exp(-1))),
    ("linear", 3.0, 0.1 + 0.5 * 3),
    ("power", 4.0, 0.1 + 2 * 4**1.5),
    ("hole-effect", 1.0, 0.1 + 2 * (1 - math.sin(math.pi / 2) / (math.pi / 2))),
])
def test_closed_forms_with_nugget(kind, lag, expected):
    m = VariogramModel(kind, sill=2.0, range=2.0, nugget=0.1, exponent=1.5, slope=0.5)
    assert semivariance(m, lag) == pytest.approx(expected, rel=1e-12)


def test_nugget_discontinuity():
    m = VariogramModel("exponential", 1, 10, 0.3)
    assert semivariance(m, 0.0) == 0.0
    assert semivariance(m, 1e-12) == pytest.approx(0.3, abs=1e-9)


def test_negative_lag_rejected():
    with pytest.raises(ValueError):
        semivariance(VariogramModel("exponential"), -1.0)


@pytest.mark.parametrize("kind", STANDARD_KINDS)
def test_monotone_in_lag(kind):
    m = VariogramModel(kind, sill=1.3, range=7.0, nugget=0.2, exponent=0.7, slope=0.4)
    g = semivariance(m, np.linspace(0, 60, 2001))
    assert np.all(np.diff(g) >= 0)


def test_hole_effect_oscillates():
    g = semivariance(VariogramModel("hole-effect", 1, 5, 0), np.linspace(0.1, 40, 400))
    assert np.any(np.diff(g) < 0)


@pytest.mark.parametrize("bad", [
    dict(kind="exponential", sill=-1), dict(kind="exponential", range=0), dict(kind="exponential", nugget=-0.1),
    dict(kind="power", exponent=2.0), dict(kind="linear", slope=-1), dict(kind="cubic"),
])
def test_model_invariants(bad):
    with pytest.raises(ValueError):
        VariogramModel(**bad)


def test_model_text_round_trip():
    m = VariogramModel("power", sill=0.123456789, range=3.5, nugget=1e-7, exponent=1.25, flags=("not-converged",))
    assert VariogramModel.from_text(m.to_text()) == m


# --- empirical variogram ----------------------------------------------------

def test_two_samples_single_pair():
    bins = empirical_variogram([SamplePoint(0, 0, 0.0), SamplePoint(3, 4, 1.0)], n_lags=1)
    assert bins == [(2.5, 0.5, 1)]


def test_constant_samples_give_zero_bins():
    pts = [SamplePoint(x, y, 0.4) for x, y in [(0, 0), (1, 5), (7, 2), (3, 3)]]
    assert all(g == 0.0 for _, g, _ in empirical_variogram(pts, 5))


def test_empirical_matches_brute_force():
    pts = random_samples(20, 1)
    n_lags = 7
    dmax = max(math.dist((a.x, a.y), (b.x, b.y)) for a in pts for b in pts)
    width = dmax / n_lags
    sums = [0.0] * n_lags
    counts = [0] * n_lags
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = math.dist((pts[i].x, pts[i].y), (pts[j].x, pts[j].y))
            k = min(int(d // width), n_lags - 1)
            sums[k] += 0.5 * (pts[i].value - pts[j].value) ** 2
            counts[k] += 1
    got = empirical_variogram(pts, n_lags)
    assert [c for _, _, c in got] == counts
    for (centre, g, c), s, k in zip(got, sums, range(n_lags)):
        assert centre == pytest.approx((k + 0.5) * width)
        assert g == pytest.approx(s / c if c else 0.0, rel=1e-12)


def test_empirical_errors():
    with pytest.raises(KrigingError):
        empirical_variogram([SamplePoint(1, 1, 0.0), SamplePoint(1, 1, 1.0)])
    with pytest.raises(ValueError):
        empirical_variogram(random_samples(5, 0), n_lags=0)


# --- fitting ---------------------------------------------------------------

def test_fit_constant_is_degenerate():
    pts = [SamplePoint(p.x, p.y, 0.5) for p in random_samples(30, 2)]
    m = fit_variogram(pts, "exponential")
    assert "degenerate" in m.flags
    assert m.sill == 0.0


def test_fit_needs_three_locations():
    with pytest.raises(KrigingError):
        fit_variogram([SamplePoint(0, 0, 0.0), SamplePoint(1, 1, 1.0), SamplePoint(1, 1, 0.5)])


@pytest.mark.parametrize("kind", STANDARD_KINDS)
def test_fit_respects_invariants(kind):
    m = fit_variogram(gp_samples(150, 200, seed=3), kind)
    assert m.kind == kind
    assert m.sill >= 0 and m.nugget >= 0 and m.range > 0
    if kind == "power":
        assert 0 < m.exponent < 2


def test_fit_is_least_squares_optimum():
    # nudging any fitted parameter must not lower the weighted residual
    s = gp_samples(300, 300, seed=4)
    m = fit_variogram(s, "exponential")
    # 40 bins over the full span, the first 20 inside the fitted reach, each at
    # the mean distance of its pairs
    pts = np.array([(p.x, p.y) for p in s])
    vals = np.array([p.value for p in s])
    d = pdist(pts)
    half_sq = 0.5 * pdist(vals[:, None], "sqeuclidean")
    k = np.minimum((d / d.max() * 40).astype(int), 39)
    sel = k < 20
    cnt = np.bincount(k[sel], minlength=20).astype(float)
    lags = np.bincount(k[sel], weights=d[sel], minlength=20) / cnt
    gam = np.bincount(k[sel], weights=half_sq[sel], minlength=20) / cnt

    def cost(vm):
        return float(np.sum(cnt * (semivariance(vm, lags) - gam) ** 2))

    base = cost(m)
    for name in ("sill", "range"):
        for f in (0.95, 1.05):
            kw = dict(sill=m.sill, range=m.range, nugget=m.nugget)
            kw[name] *= f
            assert cost(VariogramModel("exponential", **kw)) >= base * (1 - 1e-9)


# --- prediction --------------------------------------------------------------

def test_exactness_at_samples():
    pts = random_samples(50, 5)
    model = KrigingModel(pts, VariogramModel("exponential", 1, 20, 0))
    xs = [p.x for p in pts]
    ys = [p.y for p in pts]
    mean, var = model.predict(xs, ys)
    np.testing.assert_allclose(mean, [p.value for p in pts], atol=1e-6)
    np.testing.assert_allclose(var, 0.0, atol=1e-6)


def test_weights_sum_to_one_and_variance_nonnegative():
    pts = random_samples(40, 6)
    model = KrigingModel(pts, VariogramModel("spherical", 0.5, 30, 0.01))
    rng = np.random.default_rng(0)
    q = rng.random((200, 2)) * 120 - 10
    w, _, _ = model.solve_weights(q[:, 0], q[:, 1])
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-9)
    _, var = model.predict(q[:, 0], q[:, 1])
    assert var.min() >= -1e-9


def test_duplicated_equal_value_is_constant():
    pts = [SamplePoint(x, y, 0.7) for x, y in [(0, 0), (10, 0), (3, 8), (3, 8)]]
    model = KrigingModel(pts, VariogramModel("exponential", 1, 5, 0))
    mean, _ = model.predict([1, 50, -20], [2, 50, 7])
    np.testing.assert_allclose(mean, 0.7, atol=1e-12)


def test_symmetric_midpoint():
    pts = [SamplePoint(0, 0, 0.2), SamplePoint(10, 0, 0.9)]
    mean, _ = krige_predict(KrigingModel(pts, VariogramModel("gaussian", 1, 4, 0)), 5, 3)
    assert mean == pytest.approx(0.55, abs=1e-12)


def test_three_sample_hand_solve():
    pts = [SamplePoint(0, 0, 1.0), SamplePoint(4, 0, 3.0), SamplePoint(0, 3, 2.0)]
    vm = VariogramModel("exponential", 2.0, 5.0, 0.0)
    gamma = lambda h: 0.0 if h == 0 else 2.0 * (1 - math.exp(-h / 5.0))
    q = (1.0, 1.0)
    a = np.zeros((4, 4))
    for i, p in enumerate(pts):
        for j, r in enumerate(pts):
            a[i, j] = gamma(math.dist((p.x, p.y), (r.x, r.y)))
        a[i, 3] = a[3, i] = 1.0
    b = np.array([gamma(math.dist((p.x, p.y), q)) for p in pts] + [1.0])
    sol = np.linalg.solve(a, b)
    want_mean = float(sol[:3] @ [p.value for p in pts])
    want_var = float(sol[:3] @ b[:3] + sol[3])
    mean, var = krige_predict(KrigingModel(pts, vm), *q)
    assert mean == pytest.approx(want_mean, abs=1e-12)
    assert var == pytest.approx(want_var, abs=1e-12)


def test_duplicates_are_averaged():
    pts = [SamplePoint(0, 0, 0.0), SamplePoint(5, 5, 0.2), SamplePoint(5, 5, 0.6), SamplePoint(9, 1, 1.0)]
    model = KrigingModel(pts, VariogramModel("exponential", 1, 5, 0))
    assert model.n == 3
    assert krige_predict(model, 5, 5)[0] == pytest.approx(0.4, abs=1e-9)


def test_jitter_rescues_flat_system():
    # zero slope makes the variogram block all zeros; the diagonal jitter restores a solvable system
    pts = random_samples(4, 7)
    model = KrigingModel(pts, VariogramModel("linear", slope=0.0))
    assert model.jittered
    w, _, _ = model.solve_weights([50.0], [50.0])
    assert w.sum() == pytest.approx(1.0, abs=1e-9)


def test_singular_system_raises(monkeypatch):
    monkeypatch.setattr(KrigingModel, "_factorise", staticmethod(lambda a: None))
    with pytest.raises(SingularSystemError):
        KrigingModel(random_samples(4, 7), VariogramModel("exponential"))


def test_needs_two_locations():
    with pytest.raises(KrigingError):
        KrigingModel([SamplePoint(1, 1, 0.5)], VariogramModel("exponential"))


# --- cross-validation ------------------------------------------------------

def test_loo_matches_brute_force():
    pts = random_samples(25, 8)
    vm = VariogramModel("exponential", 0.2, 15, 0.01)
    err, var = loo_residuals(KrigingModel(pts, vm))
    for i in range(len(pts)):
        rest = pts[:i] + pts[i + 1:]
        m, v = krige_predict(KrigingModel(rest, vm), pts[i].x, pts[i].y)
        assert err[i] == pytest.approx(pts[i].value - m, abs=1e-9)
        assert var[i] == pytest.approx(v, rel=1e-8)


def test_q_stats_formulas():
    pts = random_samples(30, 9)
    model = KrigingModel(pts, VariogramModel("spherical", 0.1, 40, 0.02))
    err, var = loo_residuals(model)
    eps = err / np.sqrt(var)
    q = cross_validate(model)
    assert q.q1 == pytest.approx(eps.mean())
    assert q.q2 == pytest.approx((eps**2).mean())
    assert q.cr == pytest.approx((eps**2).mean() * math.exp(np.log(var).mean()))


def test_inflated_sill_scales_q2():
    pts = gp_samples(200, 300, seed=11)
    vm = VariogramModel("exponential", 1.0, 30.0, 0.0)
    q = cross_validate(KrigingModel(pts, vm))
    q4 = cross_validate(KrigingModel(pts, vm.scaled(4.0)))
    assert q4.q2 == pytest.approx(q.q2 / 4, rel=1e-6)
    assert q4.cr == pytest.approx(q.cr, rel=1e-6)


def test_well_specified_model_q_stats():
    n = 200
    q1s, q2s = [], []
    for seed in range(20):
        pts = gp_samples(n, 300, seed=seed)
        q = cross_validate(KrigingModel(pts, VariogramModel("exponential", 1.0, 30.0, 0.0)))
        q1s.append(q.q1)
        q2s.append(q.q2)
    assert abs(np.mean(q1s)) < 3 / math.sqrt(n)
    assert abs(np.mean(q2s) - 1) <= 0.3


def test_cross_validate_needs_three():
    model = KrigingModel([SamplePoint(0, 0, 0.0), SamplePoint(1, 0, 1.0)], VariogramModel("exponential"))
    with pytest.raises(KrigingError):
        cross_validate(model)


def test_zero_variance_is_degenerate(monkeypatch):
    import krigrid.kriging as kr

    model = KrigingModel(random_samples(5, 12), VariogramModel("exponential", 1, 20, 0))
    monkeypatch.setattr(kr, "loo_residuals", lambda m: (np.zeros(m.n), np.zeros(m.n)))
    with pytest.raises(DegenerateModelError):
        cross_validate(model)


# --- rendering ---------------------------------------------------------------

def test_grid_shape_keeps_aspect():
    assert grid_shape((1200, 900), 1024) == (1024, 768)
    assert grid_shape((300, 600), 100) == (50, 100)


def test_render_matches_pointwise():
    pts = random_samples(30, 13, side=64)
    model = KrigingModel(pts, VariogramModel("exponential", 0.1, 10, 0.0), extent=(64, 64))
    field = render_field(model, 64, 64)
    gx, gy = cell_centres(64, 64, (64, 64))
    for r in range(0, 64, 7):
        for c in range(64):
            m, _ = krige_predict(model, gx[r, c], gy[r, c])
            assert field.values[r, c] == pytest.approx(min(1.0, max(0.0, m)), abs=1e-12)


def test_render_chunking_is_exact():
    pts = random_samples(30, 14, side=64)
    model = KrigingModel(pts, VariogramModel("exponential", 0.1, 10, 0.0), extent=(64, 64))
    a = render_field(model, 40, 33)
    b = render_field(model, 40, 33, chunk_cells=97)
    np.testing.assert_array_equal(a.values, b.values)


def test_render_single_cell():
    pts = random_samples(10, 15, side=10)
    model = KrigingModel(pts, VariogramModel("exponential", 0.1, 3, 0.0), extent=(10, 10))
    f = render_field(model, 1, 1)
    m, _ = krige_predict(model, 5, 5)
    assert f.values[0, 0] == pytest.approx(min(1.0, max(0.0, m)), abs=1e-12)


def test_render_constant_samples():
    pts = [SamplePoint(p.x, p.y, 0.3) for p in random_samples(12, 16)]
    f = render_field(KrigingModel(pts, VariogramModel("exponential", 1, 5, 0)), 20, 10)
    np.testing.assert_allclose(f.values, 0.3, atol=1e-9)


def test_render_clamps():
    pts = [SamplePoint(0, 0, 1.0), SamplePoint(1, 0, 1.0), SamplePoint(2, 0, 0.0)]
    f = render_field(KrigingModel(pts, VariogramModel("linear", slope=1.0)), 16, 16, extent=(8, 8))
    assert f.values.min() >= 0 and f.values.max() <= 1


def test_render_rejects_empty_grid():
    model = KrigingModel(random_samples(5, 17), VariogramModel("exponential"))
    with pytest.raises(ValueError):
        render_field(model, 0, 4)


def test_model_text_carries_extent():
    pts = random_samples(8, 18)
    vm = VariogramModel("gaussian", 0.3, 12, 0.0)
    model = model_from_text(vm.to_text({"extent_width": 120.0, "extent_height": 80.0}), pts)
    assert model.extent == (120.0, 80.0)
    assert model.variogram == vm


def test_predict_is_pure_of_batching():
    pts = random_samples(20, 19)
    model = KrigingModel(pts, VariogramModel("exponential", 0.5, 25, 0.05))
    q = np.random.default_rng(1).random((50, 2)) * 100
    full, _ = model.predict(q[:, 0], q[:, 1])
    single = [krige_predict(model, x, y)[0] for x, y in q]
    np.testing.assert_allclose(full, single, atol=1e-13)
