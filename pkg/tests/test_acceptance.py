"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

The two training criteria execute the full protocol (3-seed 32px runs and
the 64px strike-off task) and respect the stated wall-clock budgets; run
with `pytest tests/test_acceptance.py -v -s` to watch the lines appear.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np
import pytest

import freqgan.tensor as T
from freqgan import data as dio
from freqgan import divergence as dv
from freqgan import freqrep as F
from freqgan import lne
from freqgan import metrics as mt
from freqgan import models as md
from freqgan import training as tr
from freqgan.tensor import Tensor

from conftest import finite_diff_check
from test_freqrep import box_filter_oracle, off_lattice
from test_metrics import ssim_oracle
from test_tensor import _op_cases


@contextmanager
def criterion(num, label):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {num}: {label}")
        raise
    print(f"[PASS] criterion {num}: {label}")


def spearman(values):
    x = np.argsort(np.argsort(np.arange(len(values))))
    y = np.argsort(np.argsort(values))
    d2 = float(((x - y) ** 2).sum())
    n = len(values)
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


# ---------------------------------------------------------------------------
# criterion 1: paper-scale numbers are out of scope; substitutes follow


def test_criterion_1_paper_scale_out_of_scope():
    with criterion(1, "paper-scale benchmark runs substituted by property-based checks"):
        preset = md.get_preset("paper")
        # the full-size architecture exists and matches its published shape,
        # but 200-epoch GPU benchmark numbers are explicitly not reproduced
        assert preset.image_size == 256
        assert preset.resnet_blocks == 9
        assert md.discriminator_receptive_field(preset) == 70


# ---------------------------------------------------------------------------
# criterion 2: divergence suite, runtime < 1 s


def test_criterion_2_divergence_suite():
    with criterion(2, "divergence identities and reference value, < 1 s"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.uniform(0.05, 1, 8)
            p = v / v.sum()
            assert dv.kl(p, p).item() == pytest.approx(0.0, abs=1e-6)
        for _ in range(100):
            va, vb = rng.uniform(0.05, 1, (2, 8))
            p, q = va / va.sum(), vb / vb.sum()
            j, jr = dv.jsd(p, q).item(), dv.jsd(q, p).item()
            assert 0.0 <= j <= 1.0
            assert abs(j - jr) <= 1e-12
        fwd = dv.kl([0.5, 0.5], [0.25, 0.75]).item()
        rev = dv.kl([0.25, 0.75], [0.5, 0.5]).item()
        assert abs(fwd - rev) > 1e-3  # asymmetry demonstrated
        brute = 0.5 * np.log2(0.5 / 0.25) + 0.5 * np.log2(0.5 / 0.75)
        assert fwd == pytest.approx(0.20752, abs=1e-4)
        assert fwd == pytest.approx(brute, abs=1e-4)
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0, f"divergence suite took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# criterion 3: gradient checks, every op and composition, >= 20 seeds, < 2 min


def test_criterion_3_gradient_checks():
    with criterion(3, "finite-difference checks: all ops + soft FD pipelines, < 2 min"):
        t0 = time.perf_counter()
        checked = set()
        for seed in range(20):
            rng = np.random.default_rng(seed)
            for name, (build, tensors) in _op_cases(rng).items():
                worst = finite_diff_check(build, tensors)
                assert worst < 1e-3, f"op {name} seed {seed}: {worst:.2e}"
                checked.add(name)
        assert checked == set(T.registered_ops())
        def draw(seed):
            rng = np.random.default_rng(seed)
            real = Tensor(off_lattice(rng.uniform(-0.9, 0.9, (1, 1, 4, 4)).astype(np.float32), 5))
            rec = Tensor(
                off_lattice(rng.uniform(-0.9, 0.9, (1, 1, 4, 4)).astype(np.float32), 5),
                requires_grad=True,
            )
            return real, rec

        for seed in range(20):
            for fd_id in (1, 2, 3, 4, 5):
                spec = F.FreqSpec(fd_id, bins=5, kernel=3, patch=4, tau=1.0)
                for kind in ("KLD", "JSD", "LOG", "L1"):
                    # the L1 metric has measure-zero |.| kinks; when a draw
                    # lands within the probe step of one, redraw rather than
                    # mistake the kink for a wrong gradient (a genuine bug
                    # fails at every draw)
                    for attempt in range(3):
                        real, rec = draw(1000 + seed + 101 * attempt)
                        worst = finite_diff_check(
                            lambda: dv.freq_distance(real, rec, spec, dv.DistanceKind(kind)),
                            [rec],
                        )
                        if worst < 1e-3:
                            break
                    assert worst < 1e-3, f"fd {fd_id} {kind} seed {seed}: {worst:.2e}"
        elapsed = time.perf_counter() - t0
        assert elapsed < 120.0, f"gradient checks took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# criterion 4: LNE suite, < 30 s


def test_criterion_4_lne_suite():
    with criterion(4, "neighborhood encoding invariants, < 30 s"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        for kernel, uniform in ((3, 1 / 8), (5, 1 / 24)):
            cfg = lne.LneConfig(kernel, 0.3)
            flat = np.full((10, 10, 3), 0.25, dtype=np.float32)
            nw = lne.normalize_weights(lne.gaussian_weights(flat, cfg), kernel)
            assert np.allclose(nw.weights, uniform, atol=1e-6)
        cfg = lne.LneConfig(3, 0.3)
        for _ in range(10):
            img = rng.uniform(-1, 1, (10, 10, 3)).astype(np.float32)
            nw = lne.normalize_weights(lne.gaussian_weights(img, cfg), 3)
            assert np.abs(nw.weights.sum(axis=-1) - 1.0).max() < 1e-6
            win = lne._windows(img, 3)
            d2 = ((win.reshape(10, 10, 3, 9) - img[..., None]) ** 2).sum(axis=2)
            d2 = lne._drop_center(d2, 3)
            order = np.argsort(d2, axis=-1)
            sorted_p = np.take_along_axis(nw.weights, order, axis=-1)
            assert np.all(np.diff(sorted_p, axis=-1) <= 1e-6)  # monotone in distance
            out = lne.encode(img, cfg)
            vals = lne._drop_center(win.reshape(10, 10, 3, 9), 3)
            assert np.all(out <= vals.max(axis=-1) + 1e-5)
            assert np.all(out >= vals.min(axis=-1) - 1e-5)

        def tv(img):
            return np.abs(np.diff(img, axis=0)).sum() + np.abs(np.diff(img, axis=1)).sum()

        wins = sum(
            tv(lne.encode(im, cfg)) <= tv(im)
            for im in (rng.uniform(-1, 1, (12, 12, 3)).astype(np.float32) for _ in range(100))
        )
        assert wins >= 95, f"smoothing held on only {wins}/100 noise images"
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"LNE suite took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# criterion 5: FD suite, < 1 min


def test_criterion_5_fd_suite():
    with criterion(5, "frequency representation invariants and oracles, < 1 min"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(3)
        img = rng.uniform(-0.95, 0.95, (2, 8, 8)).astype(np.float32)
        xt = Tensor(img[None])
        reps = {
            "hist": (F.histogram_local_soft(xt, 3, 16, 1.0), 2),
            "whist": (F.weighted_histogram_local_soft(xt, 3, 16, 1.0), 2),
            "cat": (F.categorical_global_soft(xt, 16, 1.0), 2),
            "patch": (F.categorical_patch_soft(xt, 4, 16, 1.0), 3),
        }
        reps["hard_hist"] = (Tensor(F.histogram_local_hard(img, 3, 16)), 1)
        reps["hard_cat"] = (Tensor(F.categorical_global_hard(img, 16)), 1)
        for name, (rep, ax) in reps.items():
            data = rep.data if isinstance(rep, Tensor) else rep
            assert np.abs(data.sum(axis=ax) - 1).max() < 1e-6, name
            assert data.min() >= -1e-7, name
        # soft -> hard convergence off bin edges
        clean = off_lattice(img, 16, margin=8e-3)
        hard = F.histogram_local_hard(clean, 3, 16)
        gap = np.abs(F.histogram_local_soft(Tensor(clean[None]), 3, 16, 0.01).data[0] - hard).max()
        assert gap < 0.02, f"soft-hard gap {gap:.4f} at tau 0.01"
        # patch aggregation identity, exact in hard mode
        big = rng.uniform(-1, 1, (3, 16, 16)).astype(np.float32)
        glob = F.categorical_global_hard(big, 16)
        agg = F.categorical_patch_hard(big, 8, 16).reshape(3, -1, 16).mean(axis=1)
        assert np.abs(glob - agg).max() < 1e-7
        # window mean equals the brute-force box filter
        mu, _ = F.gauss_local_hard(big, 3)
        assert np.abs(mu - box_filter_oracle(big, 3)).max() < 1e-5
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"FD suite took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# criterion 6: ablation equality, bitwise


def test_criterion_6_ablation_equality(tmp_path):
    with criterion(6, "config 1,4 with zeroed coefficients equals config Or bitwise"):
        root = tmp_path / "ds"
        dio.generate(dio.SyntheticDomainPair("stripes_checkers", 32, (4, 4, 2, 2), 11), root)
        ds = dio.load_dataset(root, 32)
        preset = md.get_preset("toy")
        base = tr.get_experiment("Or", seed=3)
        ablated = tr.get_experiment("1,4", seed=3)
        ablated.fd_coeffs = [0.0, 0.0]
        tr.train_run(base, ds, preset, tmp_path / "or", steps=3)
        tr.train_run(ablated, ds, preset, tmp_path / "ab", steps=3)
        import csv

        def rows(p):
            with open(p / "log.csv") as f:
                return list(csv.DictReader(f))

        for r_or, r_ab in zip(rows(tmp_path / "or"), rows(tmp_path / "ab")):
            for col in ("loss_G", "loss_D", "adv", "cyc", "id"):
                assert r_or[col] == r_ab[col], f"step {r_or['step']} col {col} differs"
            assert float(r_ab["fd_1"]) == 0.0 and float(r_ab["fd_4"]) == 0.0


# ---------------------------------------------------------------------------
# criteria 7 and 8: training protocols (heavy; parallel across 2 workers)


def _train_job(args):
    data_root, preset_name, name, seed, steps, every = args
    ds = dio.load_dataset(data_root)
    preset = md.get_preset(preset_name)
    cfg = tr.get_experiment(name, seed=seed)
    import tempfile

    out = tempfile.mkdtemp(prefix=f"accept_{preset_name}_")
    _, rep = tr.train_run(cfg, ds, preset, out, steps=steps, checkpoint_every=every)
    return name, seed, rep


@pytest.fixture(scope="module")
def toy_translation_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("c7ds")
    dio.generate(dio.SyntheticDomainPair("stripes_checkers", 32, (16, 16, 6, 6), 42), root)
    jobs = [(root, "toy", name, seed, 2000, 500) for name in ("Or", "jsd_wt") for seed in (0, 1, 2)]
    t0 = time.perf_counter()
    results = {}
    with ProcessPoolExecutor(2) as ex:
        for name, seed, rep in ex.map(_train_job, jobs):
            results.setdefault(name, []).append(rep)
    return results, time.perf_counter() - t0


def test_criterion_7_toy_training_progress(toy_translation_runs):
    with criterion(7, "32px translation: +6 dB cycle PSNR and monotone JSD trend, < 45 min"):
        results, elapsed = toy_translation_runs
        for name in ("Or", "jsd_wt"):
            trends = [r["trend"] for r in results[name]]
            start = float(np.mean([t[0]["cycle_psnr"] for t in trends]))
            end = float(np.mean([t[-1]["cycle_psnr"] for t in trends]))
            gain = end - start
            print(f"  {name}: cycle PSNR {start:.2f} -> {end:.2f} dB (gain {gain:.2f})")
            assert gain >= 6.0, f"{name}: gain {gain:.2f} dB < 6"
        jsd_curve = np.mean(
            [[p["hist_jsd_to_target"] for p in t["trend"]] for t in results["jsd_wt"]], axis=0
        )
        rho = spearman(jsd_curve)
        print(f"  jsd_wt: JSD curve {np.round(jsd_curve, 4)} spearman {rho:.2f}")
        assert len(jsd_curve) == 5
        assert rho < -0.8, f"spearman {rho:.2f} not < -0.8"
        assert elapsed < 45 * 60, f"criterion 7 runs took {elapsed/60:.1f} min"


@pytest.fixture(scope="module")
def strike_off_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("c8ds")
    dio.generate(dio.SyntheticDomainPair("glyphs", 64, (16, 16, 6, 6), 42), root)
    jobs = [(root, "toy64", name, 11, 2000, 500) for name in ("1,4", "log")]
    t0 = time.perf_counter()
    results = {}
    with ProcessPoolExecutor(2) as ex:
        for name, _, rep in ex.map(_train_job, jobs):
            results[name] = rep
    return results, time.perf_counter() - t0


def test_criterion_8_strike_off_task(strike_off_runs):
    with criterion(8, "64px strike-off: F1 >= 0.7 for an Fd config, all improve, < 60 min"):
        results, elapsed = strike_off_runs
        finals = {}
        for name, rep in results.items():
            f1_start = rep["trend"][0]["f1_unstrike"]
            f1_end = rep["trend"][-1]["f1_unstrike"]
            finals[name] = f1_end
            print(f"  {name}: F1 {f1_start:.3f} -> {f1_end:.3f}")
            assert f1_end > f1_start, f"{name}: F1 did not improve over step 0"
        assert max(finals.values()) >= 0.7, f"no config reached F1 0.7: {finals}"
        assert elapsed < 60 * 60, f"criterion 8 runs took {elapsed/60:.1f} min"


# ---------------------------------------------------------------------------
# criterion 9: determinism and checkpointing


def test_criterion_9_determinism_and_checkpointing(tmp_path):
    with criterion(9, "bitwise-identical 100-step logs; save/load keeps step 51 identical"):
        root = tmp_path / "ds"
        dio.generate(dio.SyntheticDomainPair("stripes_checkers", 32, (4, 4, 2, 2), 5), root)
        ds = dio.load_dataset(root, 32)
        preset = md.get_preset("toy")
        cfg = tr.get_experiment("Or", seed=8)
        tr.train_run(cfg, ds, preset, tmp_path / "r1", steps=100)
        tr.train_run(cfg, ds, preset, tmp_path / "r2", steps=100)
        import csv

        def loss_rows(p):
            with open(p / "log.csv") as f:
                return [{k: v for k, v in r.items() if k != "wall_ms"} for r in csv.DictReader(f)]

        full = loss_rows(tmp_path / "r1")
        assert full == loss_rows(tmp_path / "r2"), "100-step logs differ between runs"
        tr.train_run(cfg, ds, preset, tmp_path / "half", steps=50, checkpoint_every=50)
        tr.train_run(
            cfg, ds, preset, tmp_path / "res", steps=51,
            resume_from=tmp_path / "half" / "ckpt_000050.fdcg",
        )
        resumed = loss_rows(tmp_path / "res")
        assert resumed[0] == full[50], "step 51 loss differs after save/load at step 50"


# ---------------------------------------------------------------------------
# criterion 10: metric oracles


def test_criterion_10_metric_oracles():
    with criterion(10, "SSIM matches direct-definition oracle to 1e-6; PSNR analytic exact"):
        rng = np.random.default_rng(77)
        for i in range(8):
            a = rng.uniform(-1, 1, (14, 14, 3))
            b = np.clip(a + rng.normal(0, 0.25, a.shape), -1, 1)
            assert mt.ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-6), f"pair {i}"
        a = np.zeros((16, 16, 3))
        assert mt.psnr(a, a + 0.02) == pytest.approx(40.0, abs=1e-6)
