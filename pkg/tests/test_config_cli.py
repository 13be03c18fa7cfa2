"""Config parsing, parameter initialisation, stage execution, and the
command-line surface (exit codes, outputs on disk, determinism)."""

import dataclasses
import os
import subprocess
import sys

import numpy as np
import pytest

import oracles as orc
from mgdfis import cli, pipeline
from mgdfis.config import RunConfig, apply_overrides, load_config, parse_config
from mgdfis.errors import ConfigError, ShapeError
from mgdfis.mgdt import read_tensor, write_tensor
from mgdfis.params import (all_tensors, init_mona, init_pipeline,
                           zeros_like_params)
from mgdfis.rng import stream

TINY = """
# tiny smoke configuration
seed = 5
f1_shape = 1x4x6x6
f2_shape = 1x4x6x6
k = 2
heads = 2
head_dim = 2
seff_base_resolution = 4
stage = gmm
"""


def tiny_cfg(**over):
    cfg = parse_config(TINY)
    return dataclasses.replace(cfg, **over) if over else cfg


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_full_config():
    cfg = tiny_cfg()
    assert cfg.seed == 5
    assert cfg.f1_shape == (1, 4, 6, 6)
    assert cfg.k == 2 and cfg.heads == 2 and cfg.head_dim == 2
    assert cfg.stage == "gmm"
    assert cfg.tssa_pi_mode == "constant"  # default survives


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError, match=r"line 2: unknown key 'colour'"):
        parse_config("seed = 1\ncolour = red\n")


def test_parse_rejects_duplicate_key():
    with pytest.raises(ConfigError, match=r"line 3: duplicate key 'seed'"):
        parse_config("seed = 1\n# note\nseed = 2\n")


def test_parse_rejects_bad_shape():
    with pytest.raises(ConfigError, match="dims like"):
        parse_config("f1_shape = 1x64x\n")


def test_parse_rejects_bad_int():
    with pytest.raises(ConfigError, match="expects an integer"):
        parse_config("heads = two\n")


def test_parse_rejects_bare_line():
    with pytest.raises(ConfigError, match="expected key = value"):
        parse_config("seedless\n")


def test_validate_stage_and_pi_mode():
    with pytest.raises(ConfigError, match="stage must be one of"):
        tiny_cfg(stage="warp").validate()
    with pytest.raises(ConfigError, match="tssa_pi_mode"):
        tiny_cfg(tssa_pi_mode="sometimes").validate()


def test_validate_k_divides_channels():
    with pytest.raises(ConfigError, match="divide"):
        tiny_cfg(k=3).validate()


def test_validate_seed_range():
    with pytest.raises(ConfigError, match="64-bit"):
        tiny_cfg(seed=-1).validate()
    with pytest.raises(ConfigError, match="64-bit"):
        tiny_cfg(seed=1 << 64).validate()


def test_apply_overrides():
    cfg = apply_overrides(tiny_cfg(), seed=9, stage="full", out_dir="elsewhere")
    assert (cfg.seed, cfg.stage, cfg.out_dir) == (9, "full", "elsewhere")
    same = apply_overrides(cfg, seed=None, stage=None, out_dir=None)
    assert same == cfg


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config("/nonexistent/path.cfg")


# ---------------------------------------------------------------------------
# parameter initialisation
# ---------------------------------------------------------------------------

def test_init_same_seed_reproduces_every_tensor():
    a = init_pipeline(5, 4, 4, 6, 6, k=2, heads=2, head_dim=2, seff_base=4)
    b = init_pipeline(5, 4, 4, 6, 6, k=2, heads=2, head_dim=2, seff_base=4)
    ta, tb = dict(all_tensors(a)), dict(all_tensors(b))
    assert ta.keys() == tb.keys()
    for name in ta:
        assert np.array_equal(ta[name], tb[name]), name


def test_init_different_seeds_differ():
    a = dict(all_tensors(init_pipeline(5, 4, 4, 6, 6, k=2, heads=2,
                                       head_dim=2, seff_base=4)))
    b = dict(all_tensors(init_pipeline(6, 4, 4, 6, 6, k=2, heads=2,
                                       head_dim=2, seff_base=4)))
    assert any(not np.array_equal(a[n], b[n]) for n in a)


def test_init_skip_scale_starts_tiny():
    assert init_mona(1, "m", 8).skip_scale == 1e-6


def test_init_fan_in_bound():
    # fan-in 16 implies weights drawn from [-0.25, 0.25)
    p = init_mona(2, "m", 16)
    w = p.down_weight  # fan_in = c = 16
    assert np.max(np.abs(w)) <= 0.25
    assert np.max(np.abs(w)) > 0.2  # the draw actually fills the band


# ---------------------------------------------------------------------------
# stage execution
# ---------------------------------------------------------------------------

def test_run_writes_stage_tensor_and_summary(tmp_path):
    cfg = tiny_cfg(stage="full", out_dir=str(tmp_path / "out"))
    res = pipeline.run(cfg)
    assert res.output.shape == (1, 4, 6, 6)
    assert os.path.exists(res.out_path)
    assert np.array_equal(read_tensor(res.out_path), res.output)
    text = open(res.summary_path).read()
    assert "stage = full" in text
    assert "seed = 5" in text
    assert "output_shape = 1x4x6x6" in text
    assert "timing" in text  # excluded from the determinism contract


def test_run_is_deterministic_in_process(tmp_path):
    cfg = tiny_cfg(stage="full", out_dir=str(tmp_path / "a"))
    r1 = pipeline.run(cfg)
    r2 = pipeline.run(dataclasses.replace(cfg, out_dir=str(tmp_path / "b")))
    assert np.array_equal(r1.output, r2.output)


def test_run_stage_dpam_zero_rig_gives_flat_map(tmp_path, monkeypatch):
    # zeroed map-head weights force sigmoid(0): the stage output must be
    # exactly 0.5 everywhere
    real = pipeline.build_params

    def rigged(cfg):
        p = real(cfg)
        return dataclasses.replace(p, dpam=zeros_like_params(p.dpam))

    monkeypatch.setattr(pipeline, "build_params", rigged)
    cfg = tiny_cfg(stage="dpam", out_dir=str(tmp_path / "out"))
    res = pipeline.run(cfg)
    assert np.array_equal(res.output, np.full((1, 4, 6, 6), 0.5))


def test_run_stage_gdim_matches_reference(tmp_path):
    cfg = tiny_cfg(stage="gdim", out_dir=str(tmp_path / "out"))
    res = pipeline.run(cfg)
    params = pipeline.build_params(cfg)
    f1 = stream(cfg.seed, "input.f1").uniform(cfg.f1_shape, -1.0, 1.0)
    f2 = stream(cfg.seed, "input.f2").uniform(cfg.f2_shape, -1.0, 1.0)
    want = orc.gdim_ref(f1, f2, params.gmm, params.dmm, params.agg)
    assert np.max(np.abs(res.output - want)) < 1e-9


def test_run_stage_ftssa_uses_primary_input_only(tmp_path):
    cfg = tiny_cfg(stage="ftssa", out_dir=str(tmp_path / "out"))
    res = pipeline.run(cfg)
    params = pipeline.build_params(cfg)
    f1 = stream(cfg.seed, "input.f1").uniform(cfg.f1_shape, -1.0, 1.0)
    from mgdfis.ftssa import ftssa
    assert np.array_equal(res.output, ftssa(f1, params.dmm.ftssa))


def test_run_loads_input_files(tmp_path):
    f1 = stream(99, "alt.f1").uniform((1, 4, 6, 6), -1.0, 1.0)
    path = tmp_path / "f1.mgdt"
    write_tensor(path, f1)
    cfg = tiny_cfg(stage="ftssa", out_dir=str(tmp_path / "out"),
                   f1_path=str(path))
    res = pipeline.run(cfg)
    from mgdfis.ftssa import ftssa
    params = pipeline.build_params(cfg)
    assert np.array_equal(res.output, ftssa(f1, params.dmm.ftssa))


def test_run_rejects_input_with_wrong_dims(tmp_path):
    path = tmp_path / "f1.mgdt"
    write_tensor(path, np.zeros((1, 4, 5, 6)))
    cfg = tiny_cfg(stage="ftssa", out_dir=str(tmp_path / "out"),
                   f1_path=str(path))
    with pytest.raises(ShapeError, match="input"):
        pipeline.run(cfg)


def test_batch_thread_pool_matches_serial(tmp_path, monkeypatch):
    cfg = tiny_cfg(stage="full", out_dir=str(tmp_path / "a"),
                   f1_shape=(3, 4, 6, 6), f2_shape=(3, 4, 6, 6))
    serial = pipeline.run(cfg).output
    monkeypatch.setenv("MGDFIS_THREADS", "3")
    threaded = pipeline.run(dataclasses.replace(
        cfg, out_dir=str(tmp_path / "b"))).output
    assert np.array_equal(serial, threaded)


def test_dump_params_writes_manifest(tmp_path):
    cfg = tiny_cfg(out_dir=str(tmp_path / "out"))
    pdir = pipeline.dump_params(cfg)
    manifest = open(os.path.join(pdir, "manifest.txt")).read()
    assert "seed = 5" in manifest
    assert "[tensors]" in manifest and "[constants]" in manifest
    files = [f for f in os.listdir(pdir) if f.endswith(".mgdt")]
    assert files
    one = read_tensor(os.path.join(pdir, files[0]))
    assert np.all(np.isfinite(one))


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _write_cfg(tmp_path, text=TINY):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_cli_run_roundtrip(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    code = cli.main(["run", "--config", cfg_path, "--stage", "gmm",
                     "--out", out])
    assert code == 0
    assert "stage gmm" in capsys.readouterr().out
    assert os.path.exists(os.path.join(out, "gmm.mgdt"))
    assert os.path.exists(os.path.join(out, "summary.txt"))


def test_cli_seed_override_changes_output(tmp_path):
    cfg_path = _write_cfg(tmp_path)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(["run", "--config", cfg_path, "--out", a]) == 0
    assert cli.main(["run", "--config", cfg_path, "--out", b,
                     "--seed", "77"]) == 0
    ta = read_tensor(os.path.join(a, "gmm.mgdt"))
    tb = read_tensor(os.path.join(b, "gmm.mgdt"))
    assert not np.array_equal(ta, tb)


def test_cli_bad_config_exits_one(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path, "stage = warp\n")
    assert cli.main(["run", "--config", cfg_path]) == 1
    assert "stage" in capsys.readouterr().err


def test_cli_missing_config_exits_two(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1
    # load failures surface as configuration errors, not raw I/O
    assert "cannot read config" in capsys.readouterr().err


def test_cli_corrupt_input_tensor_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.mgdt"
    bad.write_bytes(b"XXXX\x01\x00\x00")
    cfg_path = _write_cfg(tmp_path, TINY + f"f1_path = {bad}\n")
    assert cli.main(["run", "--config", cfg_path]) == 2
    assert "magic" in capsys.readouterr().err


def test_cli_wrong_input_dims_exit_three(tmp_path, capsys):
    alt = tmp_path / "alt.mgdt"
    write_tensor(alt, np.zeros((1, 4, 5, 6)))
    cfg_path = _write_cfg(tmp_path, TINY + f"f1_path = {alt}\n")
    assert cli.main(["run", "--config", cfg_path]) == 3
    capsys.readouterr()


def test_cli_usage_error_exits_one(capsys):
    assert cli.main(["run", "--config"]) == 1
    assert cli.main(["no-such-command"]) == 1
    capsys.readouterr()


def test_cli_bench_small_counts(capsys):
    assert cli.main(["bench-tssa", "--tokens", "64,128"]) == 0
    out = capsys.readouterr().out
    assert "tokens" in out and "64" in out and "128" in out


def test_cli_bench_single_count_prints_no_ratio(capsys):
    assert cli.main(["bench-tssa", "--tokens", "64"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert any("-" in l for l in lines[1:])  # ratio column shows a dash


def test_cli_bench_rejects_bad_tokens(capsys):
    assert cli.main(["bench-tssa", "--tokens", "64,abc"]) == 1
    assert "comma-separated" in capsys.readouterr().err


def test_cli_flops_reports_totals(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert cli.main(["flops", "--config", cfg_path]) == 0
    out = capsys.readouterr().out
    assert "total" in out
    assert "ablation totals" in out
    assert "+dpam" in out


def test_cli_dump_params(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert cli.main(["dump-params", "--config", cfg_path, "--out", out]) == 0
    assert "manifest" in capsys.readouterr().out


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "mgdfis.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "bench-tssa" in proc.stdout
