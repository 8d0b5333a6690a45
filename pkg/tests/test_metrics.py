import csv

import numpy as np
import pytest
from conftest import random_field
from hypothesis import given, settings
from hypothesis import strategies as st

from krigrid.metrics import (
    HASH_BITS,
    METRIC_COLUMNS,
    MetricError,
    evaluate,
    evaluate_encoded,
    hamming,
    mse,
    phash,
    read_metrics_csv,
    ssim,
)
from krigrid.raster_io import ScalarField, quantise
from krigrid.representations import build, serialize_repr
from krigrid.synthetic import blob_field, smooth_noise_field

C1 = (0.01 * 255) ** 2


def test_ssim_identity():
    f = random_field(40, 50, seed=1)
    assert ssim(f, f) == 1.0


def test_ssim_constant_extremes():
    a = ScalarField(np.zeros((32, 32)))
    b = ScalarField(np.ones((32, 32)))
    # sigma terms vanish, leaving C1 / (255**2 + C1)
    assert ssim(a, b) == pytest.approx(C1 / (255.0**2 + C1), rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_skimage(seed):
    from skimage.metrics import structural_similarity

    a = smooth_noise_field(64, 48, seed=seed)
    b = random_field(48, 64, seed=seed + 10)
    qa, qb = quantise(a.values).astype(float), quantise(b.values).astype(float)
    ref = structural_similarity(qa, qb, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                data_range=255.0)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-4)


def test_ssim_symmetric():
    a, b = random_field(30, 30, 1), blob_field(30, 30, seed=2)
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12


def test_ssim_dimension_mismatch():
    with pytest.raises(MetricError):
        ssim(random_field(4, 5), random_field(5, 4))


def test_phash_length_and_identity():
    f = blob_field(90, 70, seed=3)
    h = phash(f)
    assert h.shape == (HASH_BITS,) and h.dtype == bool
    assert hamming(h, phash(f)) == 0
    assert not h[-1]


def test_phash_gain_invariance():
    dists = []
    for seed in range(20):
        f = random_field(96, 96, seed)
        g = ScalarField(f.values * 0.9)
        dists.append(hamming(phash(f), phash(g)))
    assert max(dists) <= 0.05 * HASH_BITS


def test_phash_independent_fields():
    dists = [hamming(phash(random_field(128, 128, 2 * s)), phash(random_field(128, 128, 2 * s + 1)))
             for s in range(10)]
    assert all(abs(d - 2048) <= 200 for d in dists)


def test_phash_sub_quantum_shift():
    base = np.floor(random_field(64, 64, 4).values * 200) / 255.0
    f = ScalarField(base)
    g = ScalarField(base + 0.4 / 255.0)
    assert hamming(phash(f), phash(g)) == 0


def test_hamming_examples():
    assert hamming([1, 0, 1, 0], [0, 0, 1, 1]) == 2
    h = phash(random_field(32, 32, 5))
    assert hamming(h, ~h) == HASH_BITS
    with pytest.raises(MetricError):
        hamming([1, 0], [1, 0, 1])


bits = st.lists(st.booleans(), min_size=64, max_size=64)


@settings(max_examples=300, deadline=None)
@given(bits, bits, bits)
def test_hamming_is_a_metric(a, b, c):
    assert hamming(a, b) == hamming(b, a) >= 0
    assert hamming(a, a) == 0
    assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


def test_mse_examples():
    z = ScalarField(np.zeros((5, 7)))
    o = ScalarField(np.ones((5, 7)))
    assert mse(z, z) == 0.0
    assert mse(z, o) == 65025.0


def test_mse_double_loop_oracle():
    a, b = random_field(13, 17, 6), random_field(13, 17, 7)
    qa, qb = quantise(a.values), quantise(b.values)
    total = 0
    for r in range(13):
        for c in range(17):
            total += (int(qa[r, c]) - int(qb[r, c])) ** 2
    assert mse(a, b) == total / (13 * 17)


def test_mse_zero_iff_same_quantisation():
    a = random_field(20, 20, 8)
    near = ScalarField(np.clip(a.values + 1e-4, 0, 1))
    assert (mse(a, near) == 0) == np.array_equal(quantise(a.values), quantise(near.values))
    far = ScalarField(np.clip(a.values + 0.01, 0, 1))
    assert mse(a, far) > 0


def test_evaluate_lossless_repr():
    f = random_field(16, 16, 9)
    rep = build("quadtree", ScalarField(quantise(f.values) / 255.0), hom_thresh=0)
    ref = ScalarField(quantise(f.values) / 255.0)
    r = evaluate(rep, ref)
    assert (r.one_minus_ssim, r.hamming, r.mse) == (0.0, 0, 0.0)
    assert r.size_bytes == len(serialize_repr(rep))
    assert r.leaf_count == rep.leaf_count


def test_evaluate_report_ranges():
    f = blob_field(80, 60, seed=10)
    rep = build("hexmap", f)
    r = evaluate(rep, f)
    assert 0 <= r.one_minus_ssim <= 2 and 0 <= r.hamming <= HASH_BITS and r.mse >= 0
    assert r.build_time == rep.build_time


def test_evaluate_encoded_equals_evaluate():
    f = blob_field(70, 50, seed=11)
    rep = build("bsp-region", f)
    a = evaluate(rep, f)
    b = evaluate_encoded(serialize_repr(rep), f, rep.build_time)
    assert a == b


def test_evaluate_dimension_mismatch():
    rep = build("quadtree", random_field(8, 8))
    with pytest.raises(MetricError):
        evaluate(rep, random_field(8, 9))


def test_metric_rows_round_trip(tmp_path):
    f = blob_field(40, 40, seed=12)
    r = evaluate(build("quadtree", f), f)
    path = tmp_path / "m.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        w.writerow(r.row("000", "quadtree", 3))
    (row,) = read_metrics_csv(path)
    assert row["map"] == "000" and row["trial"] == 3
    assert row["one_minus_ssim_e4"] == r.one_minus_ssim * 1e4
    assert row["mse"] == r.mse and row["hamming"] == r.hamming


def test_metrics_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(MetricError):
        read_metrics_csv(path)
