import csv
import json

import numpy as np
import pytest

from critmf import cli
from critmf.config import ConfigError, ExperimentConfig, load_config, parse_grid
from critmf.pipeline import run

SMALL = dict(kind="CM_r", g=[0.1], sizes=[32, 48, 64], q=[-1.0, -0.5, 0.0, 0.5, 1.5, 2.0],
             realizations=3, master_seed=11)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_parse_grid_forms():
    assert parse_grid([1, 2], "g") == [1.0, 2.0]
    assert parse_grid(0.5, "g") == [0.5]
    assert parse_grid({"start": -1, "stop": 1, "step": 0.5}, "q") == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert parse_grid({"start": 1, "stop": 100, "num": 3, "log": True}, "g") == pytest.approx([1, 10, 100])
    with pytest.raises(ConfigError):
        parse_grid([], "g")
    with pytest.raises(ConfigError):
        parse_grid({"start": 0}, "g")


def test_config_validation():
    with pytest.raises(ConfigError, match=">= 3 sizes"):
        ExperimentConfig.from_mapping({"sizes": [256, 512]})
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_mapping({"colour": 1})
    with pytest.raises(ConfigError, match="requires mu"):
        ExperimentConfig.from_mapping({"kind": "CM_t"})
    with pytest.raises(ConfigError, match=">= 2 realizations"):
        ExperimentConfig.from_mapping({"realizations": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"mode": "solvable", "g": [1.0]})


def test_realization_budget():
    cfg = ExperimentConfig.from_mapping({"kind": "CM_r"})
    assert cfg.sizes == [256, 512, 1024, 2048, 4096]
    assert cfg.realizations(256) == 2560 and cfg.realizations(4096) == 160
    cfg = ExperimentConfig.from_mapping({"realizations": {"r0": 2560, "n0": 256, "per_n": {4096: 80}}})
    assert cfg.realizations(4096) == 80 and cfg.realizations(512) == 1280
    assert ExperimentConfig.from_mapping({"realizations": 7}).realizations(4096) == 7


def test_intermediate_sizes_rounded():
    cfg = ExperimentConfig.from_mapping({"kind": "IntermediateMap", "a": [1 / 3], "sizes": [128, 256, 512]})
    assert cfg.sizes == [130, 256, 514]
    assert all(n % 3 == 1 for n in cfg.sizes)


def test_load_config_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("kind: CM_t\nmu: 2pi/N\ng: {start: 0.001, stop: 0.004, num: 3, log: true}\n"
                 "q: [0.05, 0.25]\nsizes: [257, 513, 1025]\nseed: 9\n")
    cfg = load_config(p)
    assert cfg.mu == "2pi/N" and cfg.master_seed == 9 and len(cfg.g) == 3
    p.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_run_outputs_and_manifest(tmp_path):
    cfg = ExperimentConfig.from_mapping(dict(SMALL, output=str(tmp_path / "o")))
    res = run(cfg)
    assert res.exit_code == 0
    out = tmp_path / "o"
    for name in ("moments.csv", "dimensions.csv", "symmetry.csv", "theory.csv", "manifest.json"):
        assert (out / name).exists()
    m = json.loads((out / "manifest.json").read_text())
    assert m["master_seed"] == 11 and m["config_hash"] == cfg.config_hash()
    assert m["software"]["version"] and m["wall_seconds"] >= 0
    assert [c["status"] for c in m["cells"]] == ["computed"] * 3
    # every moments row traces back to a recorded cell
    cells = {(c["g"], c["N"]) for c in m["cells"]}
    assert {(float(r["g"]), int(r["N"])) for r in _rows(out / "moments.csv")} <= cells
    d0 = [r for r in _rows(out / "dimensions.csv") if float(r["q"]) == 0.0][0]
    assert float(d0["Dq"]) == pytest.approx(1.0, abs=1e-9)
    sym = _rows(out / "symmetry.csv")
    assert len(sym) == 7  # q = 1 supplied with Delta_1 = 0


def test_rerun_is_cached_and_identical(tmp_path):
    cfg = ExperimentConfig.from_mapping(dict(SMALL, output=str(tmp_path / "o")))
    run(cfg)
    first = (tmp_path / "o" / "moments.csv").read_bytes()
    dims = (tmp_path / "o" / "dimensions.csv").read_bytes()
    run(cfg)
    assert (tmp_path / "o" / "moments.csv").read_bytes() == first
    assert (tmp_path / "o" / "dimensions.csv").read_bytes() == dims
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert all(c["status"] == "cached" for c in m["cells"])


def test_workers_do_not_change_outputs(tmp_path):
    a = run(ExperimentConfig.from_mapping(dict(SMALL, output=str(tmp_path / "a"))), workers=1)
    b = run(ExperimentConfig.from_mapping(dict(SMALL, output=str(tmp_path / "b"))), workers=2)
    for name in ("moments.csv", "dimensions.csv", "symmetry.csv"):
        assert (a.directory / name).read_bytes() == (b.directory / name).read_bytes()


def test_eigen_cache_gives_same_fit(tmp_path):
    a = run(ExperimentConfig.from_mapping(dict(SMALL, output=str(tmp_path / "a"))))
    cached = dict(SMALL, output=str(tmp_path / "b"), cache_eigensystems=True)
    run(ExperimentConfig.from_mapping(cached))
    assert any((tmp_path / "b" / "eigen-cache").iterdir())
    # drop the cell tables so the second pass refits from cached eigensystems
    for p in (tmp_path / "b" / "cells").iterdir():
        p.unlink()
    run(ExperimentConfig.from_mapping(cached))
    for name in ("moments.csv", "dimensions.csv"):
        assert (a.directory / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_failed_cell_recorded(tmp_path, monkeypatch):
    from critmf import pipeline

    orig = pipeline._realization_job

    def flaky(args):
        if args[2] == 48:
            raise RuntimeError("boom")
        return orig(args)

    monkeypatch.setattr(pipeline, "_realization_job", flaky)
    res = run(ExperimentConfig.from_mapping(dict(SMALL, output=str(tmp_path / "o"))))
    assert res.exit_code == 1
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert [c["status"] for c in m["cells"]] == ["computed", "failed", "computed"]
    assert "boom" in m["failures"][0]


def test_solvable_mode_dimensions(tmp_path):
    rc = cli.main(["solvable", "--g", "0.5", "--sizes", "256,512,1024,2048,4096", "--q=-2,-1,2,4",
                   "--out", str(tmp_path / "s")])
    assert rc == 0
    d = {float(r["q"]): float(r["Dq"]) for r in _rows(tmp_path / "s" / "dimensions.csv")}
    assert d[-2.0] == pytest.approx(5 / 3, abs=0.05) and d[-1.0] == pytest.approx(1.5, abs=0.05)
    assert abs(d[2.0]) < 0.05 and abs(d[4.0]) < 0.05
    th = _rows(tmp_path / "s" / "theory.csv")
    assert {r["regime"] for r in th} == {"solvable"}


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--kind", "CM_r", "--sizes", "32,64", "--out", str(tmp_path / "x")]) == 2
    assert ">= 3 sizes" in capsys.readouterr().err
    assert cli.main(["run", "--kind", "CM_t", "--sizes", "32,48,64", "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["theory", "--regime", "strong_first_order", "--kind", "CM_r", "--g", "0.1", "--q", "0.5",
                     "--out", str(tmp_path / "t.csv")]) == 2
    assert "singular" in capsys.readouterr().err
    assert not (tmp_path / "t.csv").exists()


def test_cli_theory_examples(tmp_path):
    p = tmp_path / "z.csv"
    assert cli.main(["theory", "--regime", "zero_order", "--kind", "CM_r", "--q=-1", "--out", str(p)]) == 0
    assert float(_rows(p)[0]["Dq_theory"]) == 1.5
    assert cli.main(["theory", "--regime", "weak", "--kind", "RS", "--g", "0.9", "--q=-1:2:1", "--out", str(p)]) == 0
    for r in _rows(p):
        assert float(r["Dq_theory"]) == pytest.approx(1 - 0.1 ** 2 * float(r["q"]))


def test_cli_run_fit_report(tmp_path):
    out = tmp_path / "r"
    args = ["run", "--kind", "CM_r", "--g", "0.1", "--sizes", "32,48,64", "--q=-1:2:0.5", "--realizations", "3",
            "--seed", "4", "--out", str(out)]
    assert cli.main(args) == 0
    assert cli.main(["fit", str(out / "moments.csv"), "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "dimensions.csv").read_bytes() == (out / "dimensions.csv").read_bytes()
    assert cli.main(["report", str(out)]) == 0
    rows = _rows(out / "report.csv")
    assert "Dq_zero_order" in rows[0] and len(rows) == 6
    zero = [r for r in rows if float(r["q"]) == -1.0][0]
    assert float(zero["Dq_zero_order"]) == 1.5


def test_cli_config_file_with_override(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("kind: CM_r\ng: [0.1]\nsizes: [32, 48, 64]\nq: [0.0, 2.0]\nrealizations: 2\nseed: 1\n"
                 f"output: {tmp_path / 'ignored'}\n")
    assert cli.main(["run", "--config", str(p), "--seed", "2", "--out", str(tmp_path / "o")]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["master_seed"] == 2
    assert not (tmp_path / "ignored").exists()


def test_g_slope_outputs(tmp_path):
    cfg = ExperimentConfig.from_mapping(dict(kind="CM_t", mu="2pi/N", g=list(np.geomspace(1e-4, 1e-3, 3)),
                                             sizes=[65, 97, 129], q=[0.05, 0.25, 0.45], realizations=2,
                                             g_slope=True, window_fraction=0.25, output=str(tmp_path / "o")))
    run(cfg)
    rows = _rows(tmp_path / "o" / "gslopes.csv")
    assert len(rows) == 9
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert set(m["g_slope_vs_q"]) == {"65", "97", "129"}
