"""Configuration, checkpoint persistence, and the command-line commands."""

import json
import subprocess
import sys

import numpy as np
import pytest

from kmrecon.cli import (
    CheckpointError,
    ConfigError,
    load_checkpoint,
    parse_config_text,
    restore_params,
    save_checkpoint,
)
from kmrecon.cli.main import main
from kmrecon.meta import build_optimizer
from kmrecon.model import ModelConfig, init_params
from kmrecon.meta.config import TrainConfig

FAST_CONFIG = """
contrasts = T1,T2
images_per_contrast = 4
image_size = 32
mask_types = cartesian
accelerations = 4
epochs = 2
channels = 2,2,3
bottleneck_channels = 4
kernel_size = 1
embed_dim = 4
hyper_bottleneck = 3
ce_channels = 2,2
support_batch = 2
query_batch = 2
save_interval = 1
seed = 3
"""


_CONFIG_COUNTER = [0]


def _write_config(tmp_path, text=FAST_CONFIG, extra=""):
    _CONFIG_COUNTER[0] += 1
    path = tmp_path / f"run{_CONFIG_COUNTER[0]}.cfg"
    path.write_text(text + extra)
    return str(path)


# --- config -----------------------------------------------------------------

def test_config_defaults_and_parsing():
    cfg = parse_config_text("epochs = 5\ncontrasts = T1, PD\n")
    assert cfg.epochs == 5
    assert cfg.contrasts == ("T1", "PD")
    assert cfg.embed_dim == 256  # untouched default


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="no_such_key"):
        parse_config_text("no_such_key = 1\n")


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError, match="strategy"):
        parse_config_text("strategy = sgd\n")
    with pytest.raises(ConfigError, match="split_ratio"):
        parse_config_text("split_ratio = 1.5\n")
    with pytest.raises(ConfigError, match="channels"):
        parse_config_text("channels = 8,16\n")


def test_config_comments_and_blank_lines():
    cfg = parse_config_text("# comment\n\nepochs = 7  # trailing\n")
    assert cfg.epochs == 7


def test_config_roundtrip_via_render():
    cfg = parse_config_text("epochs = 9\naccelerations = 4,6\ndf_lambda = inf\n")
    again = parse_config_text(cfg.text)
    assert again.values == cfg.values


# --- checkpointing ----------------------------------------------------------

def _small_params():
    from kmrecon.model import BaseNetConfig, ContextEncoderConfig, HyperNetConfig
    cfg = ModelConfig(
        base=BaseNetConfig(levels=3, channels=(2, 2, 3),
                           bottleneck_channels=4, kernel_size=1),
        hyper=HyperNetConfig(embed_dim=4, bottleneck=3, rank=1),
        ce=ContextEncoderConfig(channels=(2, 2), kernel_size=1))
    return cfg, init_params("km_maml", cfg, seed=4, dtype=np.float32)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    cfg, params = _small_params()
    rng = np.random.default_rng(0)
    for _, t in params.named_tensors():
        t.data = rng.normal(size=t.shape).astype(np.float32)
    opt = build_optimizer(params, TrainConfig(strategy="km_maml", seed=0))
    for _, t in params.named_tensors():
        t.grad = rng.normal(size=t.shape).astype(np.float32)
    opt.step()
    path = tmp_path / "model.kmck"
    save_checkpoint(path, params, opt, "km_maml", "epochs = 1\n", epoch=1)

    strategy, config_text, arrays, epoch = load_checkpoint(path)
    assert strategy == "km_maml" and epoch == 1
    assert config_text == "epochs = 1\n"
    for name, tensor in params.named_tensors():
        assert np.array_equal(arrays[name], tensor.data), name
    for name, moment in opt.state_tensors().items():
        if name == "adam/t":
            continue
        assert np.array_equal(arrays[name], moment), name

    _, restored = _small_params()
    restore_params(restored, arrays, np.float32)
    for (name, a), (_, b) in zip(params.named_tensors(),
                                 restored.named_tensors()):
        assert np.array_equal(a.data, b.data), name
    opt2 = build_optimizer(restored, TrainConfig(strategy="km_maml", seed=0))
    opt2.load_state(arrays)
    assert opt2.t == opt.t
    for name in opt.m:
        assert np.array_equal(opt.m[name], opt2.m[name])
        assert np.array_equal(opt.v[name], opt2.v[name])


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.kmck"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_rejects_version_mismatch(tmp_path):
    cfg, params = _small_params()
    path = tmp_path / "model.kmck"
    save_checkpoint(path, params, None, "km_maml", "", epoch=0)
    raw = bytearray(path.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_restore_rejects_shape_mismatch(tmp_path):
    cfg, params = _small_params()
    path = tmp_path / "model.kmck"
    save_checkpoint(path, params, None, "km_maml", "", epoch=0)
    _, _, arrays, _ = load_checkpoint(path)
    arrays["theta/enc0/w"] = arrays["theta/enc0/w"][:1]
    with pytest.raises(CheckpointError, match="enc0/w"):
        restore_params(params, arrays)


# --- commands ---------------------------------------------------------------

def test_gen_data_outputs_and_determinism(tmp_path):
    cfg_path = _write_config(tmp_path)
    out_a = tmp_path / "data_a"
    out_b = tmp_path / "data_b"
    assert main(["--config", cfg_path, "--out", str(out_a), "gen-data"]) == 0
    assert main(["--config", cfg_path, "--out", str(out_b), "gen-data"]) == 0
    manifest = json.loads((out_a / "manifest.json").read_text())
    assert manifest["contrasts"] == ["T1", "T2"]
    rasters = sorted(p.name for p in out_a.glob("*.kmr1"))
    assert len(rasters) == 8  # 2 contrasts x 4 images
    for name in rasters + ["manifest.json"]:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_train_eval_adapt_cka_pipeline(tmp_path):
    cfg_path = _write_config(tmp_path)
    data_dir = tmp_path / "data"
    out_dir = tmp_path / "run"
    assert main(["--config", cfg_path, "--out", str(data_dir), "gen-data"]) == 0
    cfg_train = _write_config(tmp_path, FAST_CONFIG,
                              f"data_dir = {data_dir}\n")
    assert main(["--config", cfg_train, "--deterministic", "--out",
                 str(out_dir), "train"]) == 0
    log = (out_dir / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,task,support_loss,query_loss,wall_ms"
    assert len(log) - 1 == 2 * 2  # epochs x tasks per epoch
    ckpt = out_dir / "model.kmck"
    assert ckpt.exists()

    eval_dir = tmp_path / "eval"
    assert main(["--config", cfg_train, "--deterministic", "--out",
                 str(eval_dir), "eval", str(ckpt)]) == 0
    rows = (eval_dir / "metrics.csv").read_text().splitlines()
    assert rows[0] == "task,sample,psnr,ssim,zf_psnr,zf_ssim"
    summary = json.loads((eval_dir / "summary.json").read_text())
    task_name = rows[1].split(",")[0]
    assert task_name in summary
    # summary means recomputable from the CSV
    psnrs = [float(r.split(",")[2]) for r in rows[1:]
             if r.split(",")[0] == task_name]
    assert abs(summary[task_name]["psnr_mean"] - np.mean(psnrs)) < 1e-5
    assert "zero_filled" in summary[task_name]

    # eval twice -> identical bytes
    eval_dir2 = tmp_path / "eval2"
    assert main(["--config", cfg_train, "--deterministic", "--out",
                 str(eval_dir2), "eval", str(ckpt)]) == 0
    assert (eval_dir / "metrics.csv").read_bytes() == \
        (eval_dir2 / "metrics.csv").read_bytes()
    assert (eval_dir / "summary.json").read_bytes() == \
        (eval_dir2 / "summary.json").read_bytes()

    # adapt with zero steps equals on-the-fly output
    adapt_dir = tmp_path / "adapt0"
    cfg_adapt = _write_config(tmp_path, FAST_CONFIG,
                              f"data_dir = {data_dir}\n"
                              "adapt_mode = adapt_base\nadapt_steps = 0\n")
    assert main(["--config", cfg_adapt, "--deterministic", "--out",
                 str(adapt_dir), "adapt", str(ckpt)]) == 0
    assert (adapt_dir / "metrics.csv").read_bytes() == \
        (eval_dir / "metrics.csv").read_bytes()

    # adapt with steps runs and writes the same schema
    adapt_dir2 = tmp_path / "adapt2"
    cfg_adapt2 = _write_config(tmp_path, FAST_CONFIG,
                               f"data_dir = {data_dir}\n"
                               "adapt_mode = adapt_hypernet\nadapt_steps = 2\n")
    assert main(["--config", cfg_adapt2, "--deterministic", "--out",
                 str(adapt_dir2), "adapt", str(ckpt)]) == 0
    assert (adapt_dir2 / "metrics.csv").read_text().startswith("task,sample")

    # similarity profile: 7 rows in encoder->bottleneck->decoder order
    cka_dir = tmp_path / "cka"
    assert main(["--config", cfg_train, "--deterministic", "--out",
                 str(cka_dir), "analyze-cka", str(ckpt)]) == 0
    cka_rows = (cka_dir / "cka_profile.csv").read_text().splitlines()
    assert cka_rows[0] == "layer,mean_cka,std_cka"
    layers = [r.split(",")[0] for r in cka_rows[1:]]
    assert layers == ["enc0", "enc1", "enc2", "bottleneck",
                      "dec2", "dec1", "dec0"]
    for row in cka_rows[1:]:
        value = float(row.split(",")[1])
        assert 0.0 <= value <= 1.0


def test_train_resume_continues_identically(tmp_path):
    cfg_path = _write_config(tmp_path)
    data_dir = tmp_path / "data"
    assert main(["--config", cfg_path, "--out", str(data_dir), "gen-data"]) == 0

    # uninterrupted: 2 epochs
    full_dir = tmp_path / "full"
    cfg_full = _write_config(tmp_path, FAST_CONFIG, f"data_dir = {data_dir}\n")
    assert main(["--config", cfg_full, "--deterministic", "--out",
                 str(full_dir), "train"]) == 0

    # interrupted: 1 epoch, then resume to 2
    part_dir = tmp_path / "part"
    cfg_part = _write_config(tmp_path, FAST_CONFIG.replace("epochs = 2", "epochs = 1"),
                             f"data_dir = {data_dir}\n")
    assert main(["--config", cfg_part, "--deterministic", "--out",
                 str(part_dir), "train"]) == 0
    resume_dir = tmp_path / "resumed"
    assert main(["--config", cfg_full, "--deterministic", "--out",
                 str(resume_dir), "train",
                 "--resume", str(part_dir / "model.kmck")]) == 0

    _, _, full_arrays, _ = load_checkpoint(full_dir / "model.kmck")
    _, _, resumed_arrays, _ = load_checkpoint(resume_dir / "model.kmck")
    for name in full_arrays:
        assert np.array_equal(full_arrays[name], resumed_arrays[name]), name


def test_train_byte_reproducible(tmp_path):
    cfg_path = _write_config(tmp_path)
    data_dir = tmp_path / "data"
    assert main(["--config", cfg_path, "--out", str(data_dir), "gen-data"]) == 0
    cfg_train = _write_config(tmp_path, FAST_CONFIG, f"data_dir = {data_dir}\n")
    runs = []
    for sub in ("r1", "r2"):
        out = tmp_path / sub
        assert main(["--config", cfg_train, "--deterministic", "--out",
                     str(out), "train"]) == 0
        runs.append(out)
    assert (runs[0] / "train_log.csv").read_bytes() == \
        (runs[1] / "train_log.csv").read_bytes()
    assert (runs[0] / "model.kmck").read_bytes() == \
        (runs[1] / "model.kmck").read_bytes()


def test_epochs_zero_checkpoint_is_initialization(tmp_path):
    cfg_path = _write_config(tmp_path)
    data_dir = tmp_path / "data"
    assert main(["--config", cfg_path, "--out", str(data_dir), "gen-data"]) == 0
    out = tmp_path / "run0"
    cfg0 = _write_config(tmp_path, FAST_CONFIG.replace("epochs = 2", "epochs = 0"),
                         f"data_dir = {data_dir}\n")
    assert main(["--config", cfg0, "--deterministic", "--out", str(out),
                 "train"]) == 0
    _, _, arrays, epoch = load_checkpoint(out / "model.kmck")
    assert epoch == 0
    fresh = init_params("km_maml", parse_config_text(
        FAST_CONFIG).model_config(), seed=3, dtype=np.float32)
    for name, tensor in fresh.named_tensors():
        assert np.array_equal(arrays[name], tensor.data), name


def test_cli_exit_codes(tmp_path):
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("unknown_key = 1\n")
    assert main(["--config", str(bad_cfg), "--out", str(tmp_path),
                 "gen-data"]) == 1
    # missing dataset -> validation error
    cfg_path = _write_config(tmp_path, FAST_CONFIG,
                             f"data_dir = {tmp_path}/missing\n")
    assert main(["--config", cfg_path, "--out", str(tmp_path / "x"),
                 "train"]) == 1


def test_numeric_abort_exit_code_and_checkpoint_retained(tmp_path):
    cfg_path = _write_config(tmp_path)
    data_dir = tmp_path / "data"
    assert main(["--config", cfg_path, "--out", str(data_dir), "gen-data"]) == 0
    diverging = FAST_CONFIG.replace("epochs = 2", "epochs = 6") + \
        f"data_dir = {data_dir}\nouter_lr = 1e6\ninner_lr = 1e6\n"
    cfg_div = _write_config(tmp_path, diverging)
    out = tmp_path / "run"
    with np.errstate(all="ignore"):
        code = main(["--config", cfg_div, "--deterministic", "--out",
                     str(out), "train"])
    assert code == 2
    assert (out / "model.kmck").exists()  # last good checkpoint retained
    assert (out / "train_log.csv").exists()


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-c",
                           "from kmrecon.cli.main import main; main(['--help'])"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout
