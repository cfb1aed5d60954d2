# Copyright 2026 The fleming-viot Authors.
# SPDX-License-Identifier: Apache-2.0
"""Drives the fvsim binary: exit codes, error.json, and schema round trips."""
import csv
import json
import math
import os
import pathlib
import subprocess

import jsonschema
import pytest
from referencing import Registry, Resource

FVSIM = os.environ.get("FVSIM", "build/fvsim")
ROOT = pathlib.Path(os.environ.get("FV_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
SCHEMAS = ROOT / "schemas"


def _registry():
    reg = Registry()
    for p in SCHEMAS.glob("*.schema.json"):
        reg = reg.with_resource(p.name, Resource.from_contents(json.loads(p.read_text())))
    return reg


REGISTRY = _registry()


def validate(doc, name):
    schema = json.loads((SCHEMAS / name).read_text())
    jsonschema.Draft202012Validator(schema, registry=REGISTRY).validate(doc)


def fvsim(*args, env=None):
    return subprocess.run([FVSIM, *map(str, args)], capture_output=True, text=True, env=env, timeout=600)


def write_config(tmp_path, doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def single_state(N=50, R=20, **extra):
    doc = {
        "model": {"type": "chain", "generator": [[-1.0]]},
        "N": N, "T": 1.0, "R": R,
        "observables": [{"name": "one", "kind": "indicator_f"}],
        "master_seed": 1,
    }
    doc.update(extra)
    return doc


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.json")))
def test_bundled_configs_validate(name):
    validate(json.loads((ROOT / "configs" / name).read_text()), "config.schema.json")


@pytest.mark.parametrize("name", ["single_state.json", "two_state.json", "brownian.json", "drift_diffusion.json"])
def test_run_outputs_validate(tmp_path, name):
    out = tmp_path / "out"
    res = fvsim("--output-dir", out, "run", ROOT / "configs" / name)
    assert res.returncode == 0, res.stderr
    stats = json.loads((out / "stats.json").read_text())
    validate(stats, "stats.schema.json")
    cfg = stats["config"]
    # the echoed config is itself a valid, runnable config
    validate(cfg, "config.schema.json")
    with open(out / "replicas.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == cfg["R"]
    for row in rows:
        p = float(row["p_est"])
        k = int(row["n_branchings"])
        if stats["ensembles"][0]["mode"] == "fv":
            assert p == pytest.approx(math.exp(k * math.log1p(-1.0 / cfg["N"])), rel=1e-15)
    if (out / "oracle.json").exists():
        validate(json.loads((out / "oracle.json").read_text()), "oracle.schema.json")
    else:
        assert name == "drift_diffusion.json"


def test_single_state_sigma2(tmp_path):
    out = tmp_path / "out"
    assert fvsim("--output-dir", out, "run", ROOT / "configs" / "single_state.json").returncode == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["oracle"]["observables"][0]["sigma2_var2"] == pytest.approx(0.135335, abs=1e-6)


def test_population_of_one(tmp_path):
    out = tmp_path / "out"
    res = fvsim("--output-dir", out, "run", write_config(tmp_path, single_state(N=1)))
    assert res.returncode == 2
    err = json.loads((out / "error.json").read_text())
    validate(err, "error.schema.json")
    assert err["reason"] == "population must be ≥ 2"


def test_branch_cap(tmp_path):
    out = tmp_path / "out"
    doc = single_state(N=10, R=4, branch_cap=1)
    doc["model"]["generator"] = [[-40.0]]
    res = fvsim("--output-dir", out, "run", write_config(tmp_path, doc))
    assert res.returncode == 3
    err = json.loads((out / "error.json").read_text())
    validate(err, "error.schema.json")
    assert err["kind"] == "ExplosionGuard"


def test_diffusion_oracle_unsupported(tmp_path):
    out = tmp_path / "out"
    res = fvsim("--output-dir", out, "oracle", ROOT / "configs" / "drift_diffusion.json")
    assert res.returncode == 4
    validate(json.loads((out / "error.json").read_text()), "error.schema.json")


def _images_survival(x, t):
    # P(BM from x stays in (0, 1) up to t), alternating images of the two walls
    s = 0.0
    for k in range(-30, 31):
        for y, sign in ((x + 2 * k, 1.0), (-x + 2 * k, -1.0)):
            s += sign * 0.5 * (math.erfc(-(1 - y) / math.sqrt(2 * t)) - math.erfc(y / math.sqrt(2 * t)))
    return s


def test_brownian_oracle(tmp_path):
    out = tmp_path / "out"
    assert fvsim("--output-dir", out, "oracle", ROOT / "configs" / "brownian.json").returncode == 0
    rep = json.loads((out / "oracle.json").read_text())
    validate(rep, "oracle.schema.json")
    assert rep["p_T"] == pytest.approx(_images_survival(0.5, 0.1), abs=1e-12)
    for o in rep["observables"]:
        v1, v2 = o["sigma2_var1"]["value"], o["sigma2_var2"]["value"]
        assert abs(v1 - v2) <= 1e-8 * max(1.0, v2)


def test_bad_json_is_a_validation_error(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{ not json")
    out = tmp_path / "out"
    res = fvsim("--output-dir", out, "run", path)
    assert res.returncode == 2
    validate(json.loads((out / "error.json").read_text()), "error.schema.json")


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path, single_state())
    a, b = tmp_path / "a", tmp_path / "b"
    assert fvsim("--output-dir", a, "run", cfg).returncode == 0
    env = dict(os.environ, FV_SEED_OVERRIDE="99")
    assert fvsim("--output-dir", b, "run", cfg, env=env).returncode == 0
    assert (a / "replicas.csv").read_bytes() != (b / "replicas.csv").read_bytes()
    assert json.loads((b / "stats.json").read_text())["config"]["master_seed"] == 99


def test_quick_acceptance_artifacts(tmp_path):
    out = tmp_path / "out"
    res = fvsim("--output-dir", out, "acceptance", "--quick", "--only", "AC1", "--only", "AC5")
    assert res.returncode == 0, res.stdout
    doc = json.loads((out / "acceptance.json").read_text())
    validate(doc, "acceptance.schema.json")
    assert [c["id"] for c in doc] == ["AC1", "AC5"]
