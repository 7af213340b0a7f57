import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from caranet import metrics as M

import oracles as O

masks16 = arrays(np.bool_, (16, 16))


def random_pair(rng, size=16):
    kind = rng.integers(4)
    if kind == 0:
        g = rng.random((size, size)) < rng.uniform(0.05, 0.6)
    else:
        g = np.zeros((size, size), bool)
        r0, c0 = rng.integers(0, size - 4, size=2)
        g[r0:r0 + rng.integers(2, 9), c0:c0 + rng.integers(2, 9)] = True
    if rng.random() < 0.5:
        p = rng.random((size, size))
    else:
        p = np.clip(g + rng.normal(0, 0.35, size=g.shape), 0, 1)
    return p, g


def blob16():
    g = np.zeros((16, 16), bool)
    g[4:11, 3:12] = True
    return g


# -- dice / iou / mae ----------------------------------------------------------------

def test_dice_iou_examples():
    g = blob16()
    assert M.dice(g, g) == M.iou(g, g) == 1.0
    far = np.zeros_like(g)
    far[13:, 13:] = True
    assert M.dice(far, g) == M.iou(far, g) == 0.0
    a = np.zeros((4, 4), bool)
    b = np.zeros((4, 4), bool)
    a[0, :4] = True
    b[0, 2:] = True
    b[1, :2] = True
    assert M.dice(a, b) == 0.5 and M.iou(a, b) == pytest.approx(1 / 3)
    empty = np.zeros((3, 3), bool)
    assert M.dice(empty, empty) == M.iou(empty, empty) == 1.0


@given(masks16, masks16)
def test_counts_match_oracle(p, g):
    assert M.dice(p, g) == O.dice_counts(p, g)
    assert M.iou(p, g) == O.iou_counts(p, g)
    assert M.dice(p, g) >= M.iou(p, g)
    if M.dice(p, g) not in (0.0, 1.0):
        assert M.dice(p, g) > M.iou(p, g)


@given(masks16, st.integers(0, 255))
def test_flipping_away_never_helps(g, flip):
    p = g.copy()
    before = (M.dice(p, g), M.iou(p, g))
    r, c = divmod(flip, 16)
    p[r, c] = not g[r, c]
    assert M.dice(p, g) <= before[0] and M.iou(p, g) <= before[1]


def test_dice_threshold_and_dims():
    g = blob16()
    assert M.dice(g * 0.5, g) == 1.0  # 0.5 binarises to foreground
    with pytest.raises(ValueError):
        M.dice(np.zeros((4, 4)), np.zeros((5, 5), bool))


@given(arrays(np.float64, (16, 16), elements=st.floats(0, 1)), masks16)
def test_mae_matches_loop(p, g):
    assert M.mae(p, g) == pytest.approx(O.mae_loop(p, g), abs=1e-12)


def test_mae_examples():
    g = blob16()
    assert M.mae(g.astype(float), g) == 0.0
    assert M.mae(1.0 - g, g) == 1.0
    assert M.mae(np.full(g.shape, 0.5), g) == 0.5


# -- weighted F ------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(arrays(np.bool_, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_nearest_foreground_matches_brute_force(g):
    if not g.any():
        g[0, 0] = True
    dist, rows, cols = M.nearest_foreground(g)
    want_d, want_idx = O.nearest_fg_brute(g)
    np.testing.assert_array_equal(dist, want_d)
    np.testing.assert_array_equal(rows, want_idx[..., 0])
    np.testing.assert_array_equal(cols, want_idx[..., 1])


def test_f_beta_w_examples():
    g = blob16()
    assert M.f_beta_w(g.astype(float), g) == 1.0
    assert M.f_beta_w(np.zeros(g.shape), g) == 0.0
    empty = np.zeros_like(g)
    assert M.f_beta_w(np.zeros(g.shape), empty) == 1.0
    assert M.f_beta_w(g.astype(float), empty) == 0.0


def test_f_beta_w_one_pixel_shift():
    g = np.zeros((8, 8), bool)
    g[2:6, 2:5] = True
    p = np.roll(g, 1, axis=1).astype(float)
    got = M.f_beta_w(p, g)
    assert 0 < got < 1
    assert got == pytest.approx(O.f_beta_w_direct(p, g), abs=1e-9)


def test_gaussian_kernel_normalised_and_symmetric():
    k = M.gaussian_kernel()
    assert k.shape == (7, 7) and k.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(k, k.T) and np.array_equal(k, k[::-1])


# -- S-measure -------------------------------------------------------------------------

def test_s_alpha_examples():
    g = blob16()
    assert M.s_alpha(g.astype(float), g) == pytest.approx(1.0, abs=1e-9)
    assert M.s_alpha(1.0 - g, g) < 0.25
    empty = np.zeros_like(g)
    assert M.s_alpha(np.zeros(g.shape), empty) == 1.0
    assert M.s_alpha(np.ones(g.shape), ~empty) == 1.0


def test_centroid_is_one_based():
    g = np.zeros((5, 7), bool)
    g[0, 0] = True
    assert M.centroid(g) == (1, 1)
    g[4, 6] = True
    assert M.centroid(g) == (4, 3)


# -- E-measure -------------------------------------------------------------------------

def test_e_phi_examples():
    g = blob16()
    assert M.e_phi_max(g.astype(float), g) == 1.0
    curve = M.e_phi_curve(g.astype(float), g)
    assert curve.shape == (256,) and curve[128] == 1.0


def test_e_phi_of_inverse_is_quarter():
    # at t = 0 every pixel is foreground, a constant map that always scores 1/4 against a
    # non-degenerate mask; every other threshold reproduces the exact inverse, which scores 0
    g = blob16()
    curve = M.e_phi_curve(1.0 - g, g)
    assert curve[0] == pytest.approx(0.25, abs=1e-15)
    assert np.all(curve[1:] == 0.0)
    assert M.e_phi_max(1.0 - g, g) == pytest.approx(0.25, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(masks16, st.integers(0, 2 ** 31))
def test_e_phi_constant_map_scores_quarter(g, seed):
    if g.all() or not g.any():
        return
    assert M.e_phi_curve(np.ones((16, 16)), g)[0] == pytest.approx(0.25, abs=1e-14)


def test_thresholds():
    t = M.thresholds()
    assert t[0] == 0.0 and t[-1] == 1.0 and len(t) == 256


# -- oracle agreement ----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(4))
def test_continuous_metrics_match_direct_formulas(seed):
    rng = np.random.default_rng(seed)
    for _ in range(10):
        p, g = random_pair(rng)
        assert M.f_beta_w(p, g) == pytest.approx(O.f_beta_w_direct(p, g), abs=1e-9)
        assert M.s_alpha(p, g) == pytest.approx(O.s_alpha_direct(p, g), abs=1e-9)
        assert M.e_phi_max(p, g) == pytest.approx(O.e_phi_max_direct(p, g), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (12, 12), elements=st.floats(0, 1)), arrays(np.bool_, (12, 12)))
def test_metric_ranges(p, g):
    row = M.evaluate_pair("x", p, g)
    for v in row.values():
        assert 0.0 <= v <= 1.0


# -- reports ---------------------------------------------------------------------------

def test_report_means_and_csv(tmp_path):
    g = blob16()
    far = np.zeros_like(g)
    far[14:, 14:] = True
    report = M.evaluate_dataset([("a", g.astype(float), g), ("b", far.astype(float), g)])
    assert report.means["dice"] == 0.5
    perfect = M.evaluate_dataset([("a", g.astype(float), g)]).means
    assert perfect == {"dice": 1.0, "iou": 1.0, "fbw": 1.0, "salpha": perfect["salpha"], "ephimax": 1.0,
                       "mae": 0.0, "size_ratio": g.mean()}
    assert perfect["salpha"] == pytest.approx(1.0, abs=1e-9)
    path = tmp_path / "m.csv"
    report.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "id,dice,iou,fbw,salpha,ephimax,mae,size_ratio"
    assert lines[-1].startswith("MEAN,0.5,")
    back = M.MetricReport.from_csv(path)
    assert [r.values() for r in back.rows] == [r.values() for r in report.rows]


def test_evaluate_errors_name_the_image():
    with pytest.raises(ValueError, match="bad"):
        M.evaluate_dataset([("bad", np.zeros((4, 4)), np.zeros((5, 5), bool))])
    with pytest.raises(ValueError):
        M.evaluate_dataset([])
