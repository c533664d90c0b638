import csv
import hashlib
from dataclasses import replace

import numpy as np
import pytest

from cvsdl.metrics import psnr
from cvsdl.pipeline import (PLOT_SCRIPT, PipelineConfig, bench, config_hash, decode, desk_config,
                            dict_compare, encode, quality_rows, write_rows)
from cvsdl.synthetic import moving_sequence, piecewise_frame
from cvsdl.video import VideoSequence

FAST = dict(k_max=2)


def _fast(**kw):
    cfg = desk_config(**kw)
    learn = replace(cfg.key.learn, iterations=3)
    return replace(cfg, key=replace(cfg.key, learn=learn, **FAST),
                   nonkey=replace(cfg.nonkey, learn=learn, refine_rounds=2, **FAST))


def test_config_hash_stable_and_sensitive():
    assert config_hash(desk_config()) == config_hash(desk_config())
    assert config_hash(desk_config()) != config_hash(desk_config(mr_key=0.5))
    assert config_hash(desk_config(threads=4)) == config_hash(desk_config())


def test_mismatched_layouts_rejected():
    cfg = desk_config()
    with pytest.raises(ValueError):
        replace(cfg, nonkey=replace(cfg.nonkey, stride=2))


def test_encode_roles_and_seeds():
    seq = moving_sequence(7, seed=1)
    ms = encode(seq, desk_config(gop_size=3, seed=4))
    assert ms.roles == ["key", "non-key", "non-key"] * 2 + ["key"]
    assert ms.seed_key == 4 and ms.seed_nonkey != 4
    assert ms.measurements[1].shape == (4, 307)


def test_zero_sequence_decodes_to_zero():
    seq = VideoSequence(np.zeros((3, 64, 64)))
    cfg = _fast(gop_size=3)
    res = decode(encode(seq, cfg), cfg)
    assert all(not r.frame.any() for r in res)
    rows = quality_rows(res, seq, cfg)
    assert [r["psnr"] for r in rows] == ["inf"] * 3


def test_full_rate_sequence():
    data = pytest.importorskip("skimage.data")
    cam = data.camera().astype(float)
    seq = VideoSequence(np.stack([cam[96 + 2 * t:224 + 2 * t, 160:288] for t in range(3)]))
    cfg = PipelineConfig(mr_key=1.0, mr_nonkey=1.0, gop_size=3)
    for r in decode(encode(seq, cfg), cfg):
        assert psnr(seq.frames[r.index], r.frame) >= 40, r.role


def test_decode_deterministic_and_parallel(monkeypatch):
    seq = moving_sequence(4, seed=2)
    cfg = _fast(gop_size=2)
    ms = encode(seq, cfg)
    a = [r.frame for r in decode(ms, cfg)]
    b = [r.frame for r in decode(ms, cfg)]
    monkeypatch.setenv("CVS_THREADS", "2")
    c = [r.frame for r in decode(ms, cfg)]
    for x, y, z in zip(a, b, c):
        assert np.array_equal(x, y) and np.array_equal(x, z)


def test_context_resets_at_key_frames():
    seq = moving_sequence(4, seed=3)
    cfg = _fast(gop_size=2)
    res = decode(encode(seq, cfg), cfg)
    assert [r.role for r in res] == ["key", "non-key"] * 2
    assert all(r.outer_iters >= 1 for r in res)


def test_csv_schema(tmp_path):
    seq = moving_sequence(2, seed=0)
    cfg = _fast(gop_size=2)
    rows = quality_rows(decode(encode(seq, cfg), cfg), seq, cfg)
    write_rows(rows, tmp_path / "q.csv")
    with open(tmp_path / "q.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["frame", "role", "psnr", "ssim", "outer_iters", "wall_ms", "config_hash"]


def test_bench_scenarios_coincide_at_endpoint():
    seq = moving_sequence(2, seed=0)
    cfg = _fast(gop_size=2)
    eq = bench(seq, cfg, [0.5], "equal", trials=1)
    fk = bench(seq, cfg, [0.5], "fixed-key", trials=1, fixed_key_mr=0.5)
    assert eq[0]["mean_psnr"] == fk[0]["mean_psnr"]
    with pytest.raises(ValueError):
        bench(seq, cfg, [0.5], "other", trials=1)


def test_bench_deterministic(tmp_path):
    seq = moving_sequence(2, seed=0)
    cfg = _fast(gop_size=2)
    for name in ("a.csv", "b.csv"):
        write_rows(bench(seq, cfg, [0.3], trials=1), tmp_path / name)
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert digest(tmp_path / "a.csv") == digest(tmp_path / "b.csv")


def test_plot_script_renders_template():
    src = PLOT_SCRIPT.format(csv_name="bench.csv")
    compile(src, "plot.py", "exec")
    assert "bench.csv" in src


def test_dict_compare_rows_and_early_monotonicity():
    frame = piecewise_frame(64, 64, seed=1)
    cfg = desk_config()
    rows = dict_compare(frame, cfg, mr_key=0.3, outer_iters=3)
    assert len(rows) == 9
    for method in ("ksvd", "mod", "mdu"):
        p = [r["psnr"] for r in rows if r["method"] == method]
        assert p == sorted(p)
        assert rows[[r["method"] for r in rows].index(method)]["mean_update_s"] > 0
