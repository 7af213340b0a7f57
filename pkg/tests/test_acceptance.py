"""The ten acceptance criteria, one test each. Every test prints a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the verdict lines bypass output capture).
"""

import math
import time

import numpy as np
import pytest

from caranet import checkpoint
from caranet import metrics as M
from caranet.ara import AxialAttention, ara_combine, reverse
from caranet.cfp import hff_fuse, hff_levels
from caranet.cli import main
from caranet.data import make_blob_dataset, write_dataset
from caranet.gradcheck import MODEL_TOLERANCE, OP_TOLERANCE, run_suite
from caranet.model import CaraNet, ModelConfig
from caranet.size_analysis import SizeSample, build_curve, difference_curve, filter_small
from caranet.tensor import Tensor
from caranet.train import TrainConfig, Trainer, train_until

import oracles as O

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def emit(number, checks, detail=""):
        failed = [name for name, ok in checks if not ok]
        line = f"criterion {number:2d}: {'PASS' if not failed else 'FAIL'}"
        if failed:
            line += f"  failed: {', '.join(failed)}"
        if detail:
            line += f"  ({detail})"
        with capsys.disabled():
            print("\n" + line)
        assert not failed, line
    return emit


def test_1_gradient_suite(verdict):
    start = time.perf_counter()
    reports = run_suite(seed=0, include_model=True)
    elapsed = time.perf_counter() - start
    ops, model = reports[:-1], reports[-1]
    worst_op = max(r.max_error for r in ops)
    verdict(1, [("per-op", all(r.max_error < OP_TOLERANCE for r in ops) and OP_TOLERANCE == 1e-4),
                ("end-to-end", model.max_error < MODEL_TOLERANCE and MODEL_TOLERANCE == 1e-3),
                ("runtime", elapsed < 300)],
            f"{len(ops)} op cases, worst {worst_op:.1e}; model {model.max_error:.1e}; {elapsed:.0f}s")


def test_2_shape_pipeline(verdict):
    model = CaraNet(ModelConfig(), seed=0)
    checks = []
    for size in (352, 256):
        out = model(Tensor(np.random.default_rng(size).random((1, 3, size, size))))
        c = size // 32
        checks += [(f"{size} S_g", out.global_map.shape[2:] == (4 * c, 4 * c)),
                   (f"{size} sides", [m.shape[2:] for m in (out.s5, out.s4, out.s3)]
                    == [(c, c), (2 * c, 2 * c), (4 * c, 4 * c)]),
                   (f"{size} prediction", out.prediction.shape[2:] == (size, size)),
                   (f"{size} open interval", bool(np.all((out.prediction.data > 0) & (out.prediction.data < 1))))]
    verdict(2, checks, "S_g 44, sides 11/22/44 at 352; 32, 8/16/32 at 256")


def test_3_attention_oracle(verdict):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        h, w, c = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 5)
        att = AxialAttention(rng, c)
        for p in att.parameters():
            p.data = rng.normal(size=p.shape)
        x = rng.normal(size=(1, c, h, w))
        mid = att.height(Tensor(x)).data
        out = att(Tensor(x)).data
        for got, src, p, axis in ((mid, x, att.height, 2), (out, mid, att.width, 3)):
            want = O.attention_pass_loops(src, p.query.weight.data, p.query.bias.data, p.key.weight.data,
                                          p.key.bias.data, p.value.weight.data, p.value.bias.data, axis)
            worst = max(worst, float(np.abs(got - want).max()))
    verdict(3, [("within 1e-9", worst <= 1e-9)], f"max abs diff {worst:.1e} over 100 trials")


def test_4_hff_exactness(verdict):
    rng = np.random.default_rng(0)
    exact = True
    for _ in range(100):
        k = int(rng.integers(2, 7))
        shape = (1, int(rng.integers(1, 4)), 5, 4)
        outs = [rng.normal(size=shape) for _ in range(k)]
        running, want = None, []
        for o in outs:
            running = o if running is None else running + o
            want.append(running)
        exact &= np.array_equal(hff_fuse([Tensor(o) for o in outs]).data, np.concatenate(want, axis=1))
    x = rng.normal(size=(1, 3, 4, 4))
    levels = [lv.data for lv in hff_levels([Tensor(x)] * 4)]
    uniform = all(np.array_equal(lv, m * x) for lv, m in zip(levels, (1, 2, 3, 4)))
    verdict(4, [("prefix sums bitwise", exact), ("uniform X,2X,3X,4X", uniform)])


def test_5_reverse_attention(verdict):
    s = np.linspace(-100, 100, 200001).reshape(1, 1, 1, -1)
    r = reverse(Tensor(s)).data
    rng = np.random.default_rng(0)
    aa = rng.normal(size=(2, 4, 6, 6))
    aa[:, :, 2:4] = 0
    aa[:, 1] = 0
    gated = ara_combine(Tensor(aa), reverse(Tensor(rng.normal(0, 30, size=(2, 1, 6, 6))))).data
    verdict(5, [("open interval", bool(np.all((r > 0) & (r < 1)))),
                ("zero where AA is zero", not gated[aa == 0].any()),
                ("R(0) = 0.5", reverse(Tensor(np.zeros((1, 1, 1, 1)))).item() == 0.5)])


def test_6_toy_overfit(verdict):
    data = make_blob_dataset(8, 64, seed=0)
    trainer = Trainer(CaraNet(ModelConfig(), seed=0),
                      TrainConfig(scales=(1.0,), batch_size=8, input_size=64, lr=1e-4))
    start = time.perf_counter()
    losses, score = train_until(trainer, data, target_dice=0.95, max_steps=500)
    elapsed = time.perf_counter() - start
    smooth = np.convolve(losses, np.ones(20) / 20, mode="valid")
    rises = int(np.sum(np.diff(smooth) > 0))
    verdict(6, [("dice >= 0.95", score >= 0.95), ("steps <= 500", len(losses) <= 500),
                ("smoothed loss non-increasing", rises == 0), ("runtime", elapsed < 600)],
            f"dice {score:.3f} after {len(losses)} steps, {rises} smoothed rises, {elapsed:.0f}s")


def _pairs(n=200, size=16, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        if rng.random() < 0.5:
            g = rng.random((size, size)) < rng.uniform(0.05, 0.6)
        else:
            g = np.zeros((size, size), bool)
            r0, c0 = rng.integers(0, size - 4, size=2)
            g[r0:r0 + rng.integers(2, 9), c0:c0 + rng.integers(2, 9)] = True
        p = rng.random((size, size)) if rng.random() < 0.5 else np.clip(g + rng.normal(0, 0.35, g.shape), 0, 1)
        out.append((p, g))
    return out


def test_7_metric_oracles(verdict):
    counts_exact, worst = True, 0.0
    for p, g in _pairs():
        hard = p >= 0.5
        counts_exact &= M.dice(hard, g) == O.dice_counts(hard, g) and M.iou(hard, g) == O.iou_counts(hard, g)
        counts_exact &= abs(M.mae(p, g) - O.mae_loop(p, g)) <= 1e-12  # summation order only
        for fn, oracle in ((M.f_beta_w, O.f_beta_w_direct), (M.s_alpha, O.s_alpha_direct),
                           (M.e_phi_max, O.e_phi_max_direct)):
            worst = max(worst, abs(fn(p, g) - oracle(p, g)))
    g = np.zeros((16, 16), bool)
    g[4:11, 3:12] = True
    far = np.zeros_like(g)
    far[13:, 13:] = True
    a, b = np.zeros((4, 4), bool), np.zeros((4, 4), bool)
    a[0] = True
    b[0, 2:] = b[1, :2] = True
    gf, inv = g.astype(float), 1.0 - g
    e_inv = M.e_phi_max(inv, g)
    verdict(7, [("count metrics exact", counts_exact), ("continuous within 1e-9", worst <= 1e-9),
                ("dice/iou identity", M.dice(g, g) == M.iou(g, g) == 1.0),
                ("dice/iou disjoint", M.dice(far, g) == M.iou(far, g) == 0.0),
                ("dice/iou overlap", M.dice(a, b) == 0.5 and math.isclose(M.iou(a, b), 1 / 3)),
                ("mae", M.mae(gf, g) == 0.0 and M.mae(inv, g) == 1.0 and M.mae(np.full(g.shape, 0.5), g) == 0.5),
                ("fbw", M.f_beta_w(gf, g) == 1.0 and M.f_beta_w(np.zeros(g.shape), g) == 0.0),
                ("s_alpha", abs(M.s_alpha(gf, g) - 1) <= 1e-9 and M.s_alpha(inv, g) < 0.25),
                ("e_phi identity", M.e_phi_max(gf, g) == 1.0),
                ("e_phi inverse < 0.1", e_inv < 0.1)],
            f"oracle max diff {worst:.1e}; E_phi_max(1-G) = {e_inv:.4f}")


def test_8_size_analysis_oracles(verdict):
    rng = np.random.default_rng(0)
    samples = [SizeSample(f"s{i}", float(rng.uniform(0, 0.05)), float(rng.random())) for i in range(1000)]
    curve = build_curve(samples, 0.005)
    naive = [(b.start, b.end, b.mean_dice, b.count) for b in curve.bins] == O.naive_bins(samples, 0.005)
    weighted = math.fsum(b.mean_dice * b.count for b in curve.occupied()) / len(samples)
    overall = math.fsum(s.dice for s in samples) / len(samples)
    other = build_curve([SizeSample(f"t{i}", float(rng.uniform(0, 0.05)), float(rng.random()))
                         for i in range(700)], 0.005)
    ab, ba = difference_curve(curve, other), difference_curve(other, curve)
    edge = [SizeSample("under", 0.0499, 1.0), SizeSample("at", 0.05, 1.0)]
    verdict(8, [("naive oracle", naive), ("global mean", abs(weighted - overall) <= 1e-12),
                ("antisymmetry", ab.positive_sum == ba.negative_sum and ab.negative_sum == ba.positive_sum),
                ("strict 5% filter", [s.id for s in filter_small(edge, 0.05)] == ["under"])])


def _train(data, out):
    return main(["train", "--data", str(data), "--out", str(out), "--epochs", "2", "--batch-size", "2",
                 "--input-size", "64", "--seed", "3"])


def test_9_determinism(verdict, tmp_path):
    data = write_dataset(tmp_path / "data", make_blob_dataset(5, 64, seed=4))
    codes = (_train(data, tmp_path / "a"), _train(data, tmp_path / "b"))
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("epochs.csv", "model.ckpt", "config.txt")}
    checkpoint.save(tmp_path / "again.ckpt", checkpoint.load(tmp_path / "a" / "model.ckpt"))
    round_trip = (tmp_path / "again.ckpt").read_bytes() == (tmp_path / "a" / "model.ckpt").read_bytes()
    verdict(9, [("exit 0", codes == (0, 0)), ("epoch CSV", same["epochs.csv"]),
                ("checkpoint", same["model.ckpt"]), ("round trip", round_trip)])


def test_10_cli_end_to_end(verdict, tmp_path):
    # small blobs keep every size ratio under the default 5% cutoff
    data = write_dataset(tmp_path / "data", make_blob_dataset(10, 64, seed=5, radius=(4.0, 7.0)))
    codes = []
    for name, epochs in (("model", "3"), ("baseline", "0")):
        run = tmp_path / name
        codes.append(main(["train", "--data", str(data), "--out", str(run), "--epochs", epochs,
                           "--batch-size", "4", "--input-size", "64", "--scales", "0.75,1.0,1.25", "--lr", "1e-4"]))
        codes.append(main(["predict", "--checkpoint", str(run / "model.ckpt"), "--data", str(data),
                           "--out", str(run / "pred"), "--split", "all", "--input-size", "64", "--exact"]))
        codes.append(main(["eval", "--pred", str(run / "pred"), "--data", str(data), "--split", "all",
                           "--out", str(run / "metrics.csv")]))
    codes.append(main(["size-analysis", "--report", str(tmp_path / "model" / "metrics.csv"),
                       "--baseline", str(tmp_path / "baseline" / "metrics.csv"), "--small-threshold", "0.05",
                       "--interval-width", "0.005", "--out", str(tmp_path / "sizes"), "--svg"]))

    def head(path):
        return path.read_text().splitlines()[0] if path.is_file() else None

    diff = (tmp_path / "sizes" / "difference.csv")
    trailer = diff.read_text().splitlines()[-2] if diff.is_file() else None
    verdict(10, [("exit codes", codes == [0] * 7),
                 ("epoch header", head(tmp_path / "model" / "epochs.csv") == "epoch,mean_loss,mean_dice"),
                 ("metric header", head(tmp_path / "model" / "metrics.csv")
                  == "id,dice,iou,fbw,salpha,ephimax,mae,size_ratio"),
                 ("curve header", head(tmp_path / "sizes" / "curve.csv") == "bin_start,bin_end,mean_dice,count"),
                 ("difference header", head(diff) == "bin_start,bin_end,mean_dice,count,diff"),
                 ("difference trailer", trailer == "POS_SUM,NEG_SUM"),
                 ("svg", (tmp_path / "sizes" / "difference.svg").is_file())])
