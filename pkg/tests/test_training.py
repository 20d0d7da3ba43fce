"""Training loop: loss assembly, ablation equality, determinism, checkpoints."""

import csv

import numpy as np
import pytest

import freqgan.tensor as T
from freqgan import data as dio
from freqgan import models as md
from freqgan import training as tr
from freqgan.divergence import ConfigError
from freqgan.tensor import Tensor
from freqgan.training import ExperimentConfig, TrainingDiverged, assemble_generator_loss


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    pair = dio.SyntheticDomainPair("stripes_checkers", 32, (4, 4, 2, 2), seed=9)
    dio.generate(pair, root)
    return dio.load_dataset(root, 32)


def preset():
    return md.get_preset("toy")


def read_log(path, drop_wall=True):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    if drop_wall:
        rows = [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]
    return rows


# ---------------------------------------------------------------------------
# config validation


def test_config_invariants():
    with pytest.raises(ConfigError):
        ExperimentConfig(loss="KLD", cycleloss_flag=0, fd_ids=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(loss="HINGE")
    with pytest.raises(ConfigError):
        ExperimentConfig(fd_ids=[1, 9])
    with pytest.raises(ConfigError):
        ExperimentConfig(fd_ids=[1], fd_coeffs=[1.0, 2.0])
    with pytest.raises(ConfigError):
        ExperimentConfig(kernel=4)
    cfg = ExperimentConfig(loss="jsd", fd_ids=[2], cycleloss_flag=0)
    assert cfg.loss == "JSD"


def test_matrix_contains_reporting_rows():
    names = [c.name for c in tr.experiment_matrix()]
    for want in ("Or", "Or_wt", "1,log", "1,4", "1,4,log", "1,4,L1", "2,4", "3,4",
                 "log", "log_k3_wt", "log_k5_wt", "kld", "jsd", "kld_wt", "jsd_wt"):
        assert want in names
    for cfg in tr.experiment_matrix():
        cfg.validate()


def test_unknown_config_field_rejected():
    with pytest.raises(ConfigError, match="nosuch"):
        tr.config_from_dict({"name": "x", "nosuch": 1})


# ---------------------------------------------------------------------------
# loss assembly


def _fake_forward_results(rng, cfg, perfect=False):
    shape = (1, 3, 8, 8)
    x = Tensor(rng.uniform(-0.9, 0.9, shape).astype(np.float32))
    y = Tensor(rng.uniform(-0.9, 0.9, shape).astype(np.float32))
    if perfect:
        rec_x, rec_y, idt_x, idt_y = x, y, x, y
    else:
        rec_x = Tensor(rng.uniform(-0.9, 0.9, shape).astype(np.float32), requires_grad=True)
        rec_y = Tensor(rng.uniform(-0.9, 0.9, shape).astype(np.float32), requires_grad=True)
        idt_x = Tensor(rng.uniform(-0.9, 0.9, shape).astype(np.float32))
        idt_y = Tensor(rng.uniform(-0.9, 0.9, shape).astype(np.float32))
    d_fy = Tensor(rng.normal(0, 1, (1, 1, 3, 3)).astype(np.float32))
    d_fx = Tensor(rng.normal(0, 1, (1, 1, 3, 3)).astype(np.float32))
    return x, y, rec_x, rec_y, idt_x, idt_y, d_fy, d_fx


def test_or_components_are_exactly_adv_cyc_id(rng):
    cfg = tr.get_experiment("Or")
    x, y, rx, ry, ix, iy, dfy, dfx = _fake_forward_results(rng, cfg)
    total, comps = assemble_generator_loss(cfg, x, y, x, y, rx, ry, ix, iy, dfy, dfx)
    assert set(comps) == {"adv", "cyc", "id"}


def test_perfect_generators_zero_cycle_and_identity(rng):
    cfg = tr.get_experiment("Or")
    x, y, rx, ry, ix, iy, dfy, dfx = _fake_forward_results(rng, cfg, perfect=True)
    total, comps = assemble_generator_loss(cfg, x, y, x, y, rx, ry, ix, iy, dfy, dfx)
    assert comps["cyc"].item() == 0.0
    assert comps["id"].item() == 0.0


def test_component_additivity(rng):
    for name in ("Or", "1,4", "jsd_wt", "1,log", "log"):
        cfg = tr.get_experiment(name)
        x, y, rx, ry, ix, iy, dfy, dfx = _fake_forward_results(rng, cfg)
        total, comps = assemble_generator_loss(cfg, x, y, x, y, rx, ry, ix, iy, dfy, dfx)
        sum_parts = sum(v.item() for v in comps.values())
        assert total.item() == pytest.approx(sum_parts, abs=1e-5 * max(1, abs(sum_parts)))


def test_fd_components_present_for_fd_configs(rng):
    cfg = tr.get_experiment("1,4")
    x, y, rx, ry, ix, iy, dfy, dfx = _fake_forward_results(rng, cfg)
    _, comps = assemble_generator_loss(cfg, x, y, x, y, rx, ry, ix, iy, dfy, dfx)
    assert {"adv", "cyc", "id", "fd_1", "fd_4"} == set(comps)


def test_zeroed_coefficients_reproduce_plain_config_bitwise(rng):
    """Config 1,4 with zero coefficients equals config Or exactly."""
    base = tr.get_experiment("Or")
    ablated = tr.get_experiment("1,4")
    ablated.fd_coeffs = [0.0, 0.0]
    x, y, rx, ry, ix, iy, dfy, dfx = _fake_forward_results(rng, base)
    t_or, _ = assemble_generator_loss(base, x, y, x, y, rx, ry, ix, iy, dfy, dfx)
    t_ab, comps = assemble_generator_loss(ablated, x, y, x, y, rx, ry, ix, iy, dfy, dfx)
    assert t_or.item() == t_ab.item()  # bitwise
    assert comps["fd_1"].item() == 0.0 and comps["fd_4"].item() == 0.0


# ---------------------------------------------------------------------------
# stepping


def test_zero_learning_rate_leaves_params_unchanged(dataset):
    cfg = tr.get_experiment("Or", seed=0)
    cfg.lr = 0.0
    state = tr.init_state(cfg, preset())
    before = {k: v.data.copy() for k, v in state.G_xy.items()}
    batch = (dataset.images["trainA"][0], dataset.images["trainB"][0],
             dataset.images["trainA"][0], dataset.images["trainB"][0])
    tr.train_step(state, batch, cfg)
    for k in before:
        assert np.array_equal(state.G_xy[k].data, before[k]), k


def test_discriminator_update_does_not_touch_generators(dataset):
    cfg = tr.get_experiment("Or", seed=0)
    state = tr.init_state(cfg, preset())
    p = preset()
    x_in = Tensor(dio.to_chw(dataset.images["trainA"][0])[None])
    y_in = Tensor(dio.to_chw(dataset.images["trainB"][0])[None])
    fake_y = md.generator_forward(state.G_xy, x_in, p).detach()
    d_loss = tr.gan_discriminator_loss(
        md.discriminator_forward(state.D_y, y_in, p),
        md.discriminator_forward(state.D_y, fake_y, p),
        cfg.adv_form,
    )
    d_loss.backward()
    for k, t in state.G_xy.items():
        assert t.grad is None, f"generator grad leaked through D update: {k}"
    assert any(t.grad is not None for t in state.D_y.values())


def test_divergence_abort_carries_diagnostics(dataset):
    cfg = tr.get_experiment("Or", seed=0)
    state = tr.init_state(cfg, preset())
    state.G_xy["head.w"].data[:] = np.nan
    batch = (dataset.images["trainA"][0], dataset.images["trainB"][0],
             dataset.images["trainA"][0], dataset.images["trainB"][0])
    with pytest.raises(TrainingDiverged):
        tr.train_step(state, batch, cfg)


def test_two_runs_same_seed_identical_logs(dataset, tmp_path):
    cfg = tr.get_experiment("Or", seed=5)
    tr.train_run(cfg, dataset, preset(), tmp_path / "a", steps=5)
    tr.train_run(cfg, dataset, preset(), tmp_path / "b", steps=5)
    assert read_log(tmp_path / "a/log.csv") == read_log(tmp_path / "b/log.csv")


def test_checkpoint_resume_matches_uninterrupted(dataset, tmp_path):
    cfg = tr.get_experiment("Or", seed=6)
    tr.train_run(cfg, dataset, preset(), tmp_path / "full", steps=6)
    tr.train_run(cfg, dataset, preset(), tmp_path / "half", steps=4, checkpoint_every=4)
    tr.train_run(
        cfg, dataset, preset(), tmp_path / "rest", steps=6,
        resume_from=tmp_path / "half/ckpt_000004.fdcg",
    )
    full = read_log(tmp_path / "full/log.csv")
    rest = read_log(tmp_path / "rest/log.csv")
    assert rest == full[4:6]


def test_epochs_zero_returns_baseline(dataset, tmp_path):
    cfg = tr.get_experiment("Or", seed=1)
    cfg.epochs = 0
    state, report = tr.train_run(cfg, dataset, preset(), tmp_path / "z")
    assert state.step == 0
    assert np.isfinite(report["final"]["cycle_psnr"])


def test_grid_runner_covers_matrix(dataset, tmp_path):
    rows = []
    for cfg in tr.experiment_matrix(seed=0):
        out = tmp_path / cfg.name.replace(",", "_")
        state, rep = tr.train_run(cfg, dataset, preset(), out, steps=1)
        log = read_log(out / "log.csv", drop_wall=False)
        assert len(log) == 1
        assert list(log[0].keys()) == tr.CSV_HEADER
        rows.append(rep["name"])
    assert len(rows) == len(tr.experiment_matrix())


def test_translate_directions_and_wt_consistency(dataset, tmp_path):
    cfg = tr.get_experiment("Or_wt", seed=2)
    state = tr.init_state(cfg, preset())
    img = dataset.images["testA"][0]
    out = tr.translate(state, img, "A2B")
    assert out.shape == img.shape and np.all(np.isfinite(out))
    with pytest.raises(ConfigError):
        tr.translate(state, img, "sideways")
    # wt mode must encode before the generator: result differs from raw feed
    raw_state = tr.init_state(tr.get_experiment("Or", seed=2), preset())
    for k in raw_state.G_xy:
        raw_state.G_xy[k].data[:] = state.G_xy[k].data
    out_raw = tr.translate(raw_state, img, "A2B")
    assert not np.allclose(out, out_raw)


def test_smoke_200_steps_losses_finite_discriminator_alive(dataset, tmp_path):
    cfg = tr.get_experiment("Or", seed=3)
    state, _ = tr.train_run(cfg, dataset, preset(), tmp_path / "smoke", steps=200)
    log = read_log(tmp_path / "smoke/log.csv", drop_wall=False)
    assert len(log) == 200
    for r in log:
        assert np.isfinite(float(r["loss_G"])) and np.isfinite(float(r["loss_D"]))
    tail_d = [float(r["loss_D"]) for r in log[-50:]]
    assert np.mean(tail_d) > 0.05  # discriminator has not collapsed to zero loss


def test_lsgan_adv_form_hand_values():
    d_real = Tensor(np.full((1, 1, 2, 2), 0.6, np.float32))
    d_fake = Tensor(np.full((1, 1, 2, 2), -0.2, np.float32))
    d = tr.gan_discriminator_loss(d_real, d_fake, "lsgan").item()
    assert d == pytest.approx(0.5 * ((0.6 - 1) ** 2 + (-0.2) ** 2), abs=1e-6)
    g = tr.gan_generator_loss(d_fake, "lsgan").item()
    assert g == pytest.approx((-0.2 - 1) ** 2, abs=1e-5)


def test_replay_buffer_fills_and_resumes_bitwise(dataset, tmp_path):
    cfg = tr.get_experiment("Or", seed=12)
    cfg.replay_buffer = True
    tr.train_run(cfg, dataset, preset(), tmp_path / "full", steps=8)
    state, _ = tr.train_run(cfg, dataset, preset(), tmp_path / "half", steps=4, checkpoint_every=4)
    assert len(state.pool_y.items) == 4
    tr.train_run(
        cfg, dataset, preset(), tmp_path / "rest", steps=8,
        resume_from=tmp_path / "half/ckpt_000004.fdcg",
    )
    assert read_log(tmp_path / "rest/log.csv") == read_log(tmp_path / "full/log.csv")[4:8]
