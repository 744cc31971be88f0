import json
import math
import os
import subprocess

import numpy as np
import pytest

import vtrack


def test_sphere_graph_shapes():
    g = vtrack.SphereGraph.build(2)
    assert len(g) == 162
    nodes = g.nodes
    assert nodes.shape == (162, 3)
    assert np.allclose(np.linalg.norm(nodes, axis=1), 1.0)
    assert len(g.edges) == 480
    assert all(5 <= len(g.neighbors(i)) <= 6 for i in range(len(g)))
    with pytest.raises(IndexError):
        g.neighbors(1000)


def test_haversine_and_local_maxima():
    g = vtrack.SphereGraph.build(1)
    x = g.nearest_node([1.0, 0.0, 0.0])
    y = g.nearest_node([0.0, 1.0, 0.0])
    assert g.haversine(x, y) == pytest.approx(math.pi / 2)
    assert vtrack.haversine([0, 0, 1], [0, 0, -1]) == pytest.approx(math.pi)
    field = [0.0] * len(g)
    field[x] = 0.9
    assert g.local_maxima(field) == [x]
    with pytest.raises(ValueError):
        g.local_maxima([0.0, 1.0])


def test_volume_round_trip(tmp_path):
    data = np.random.default_rng(0).random((4, 5, 6), dtype=np.float32)
    v = vtrack.VolumeGrid(data, spacing=[0.5, 1.0, 2.0])
    assert tuple(v.dims) == (6, 5, 4)
    assert np.array_equal(v.array(), data)
    # Array order is [z, y, x]; points are (x, y, z) in mm.
    assert v.sample([1.0, 2.0, 6.0]) == pytest.approx(float(data[3, 2, 2]))
    vtrack.write_volr(v, str(tmp_path / "v.volr"))
    assert np.array_equal(vtrack.read_volume(str(tmp_path / "v.volr")).array(), data)


def test_phantom_oracle_tracking_scores_well():
    ph = vtrack.generate_phantom("thin", seed=4, branches=4)
    skel = ph["skeleton"]
    assert ph["volume"].array().shape == (96, 96, 96)
    assert vtrack.betti_numbers(len(skel["points"]), skel["edges"]) == (1, 0)
    pred = vtrack.track_phantom(ph)
    assert pred["status"] == "completed"
    report = vtrack.score(pred, skel)
    assert report["ov"] > 0.95
    assert report["beta1_err"] == 0
    assert len(report["recall_by_radius_group"]) == 5


def test_targets_and_weights():
    ph = vtrack.generate_phantom("thin", seed=4, branches=1)
    g = vtrack.SphereGraph.build(2)
    labels, radius, in_lumen = vtrack.direction_target(ph["default_seed"], graph=g, **vtrack.skeleton_args(ph["skeleton"]))
    assert in_lumen and radius > 0
    assert sum(labels) == 2
    w = vtrack.geometry_weights(labels, g)
    assert all(wi == 10.0 for wi, li in zip(w, labels) if li == 1.0)
    assert all(0.0 < wi < 1.0 for wi, li in zip(w, labels) if li == 0.0)
    feats = vtrack.sample_multiscale(ph["volume"], ph["default_seed"], [1.0, 2.0], g, ray_samples=8)
    assert len(feats) == 2 and feats[0].shape == (162, 8)


def test_betti_numbers():
    assert vtrack.betti_numbers(4, [[0, 1], [1, 2], [2, 0]]) == (2, 1)
    assert vtrack.betti_numbers(0, []) == (0, 0)


def test_cli_in_process_and_executable(tmp_path):
    code, out, _ = vtrack.run_cli(["--version"])
    assert code == 0 and out.strip() == vtrack.__version__
    code, _, err = vtrack.run_cli(["gen-phantom", "--out", str(tmp_path / "p"), "--branches", "2", "--preset", "thin"])
    assert code == 0, err
    code, _, err = vtrack.run_cli(
        ["track", "--phantom", str(tmp_path / "p"), "--oracle", "--out", str(tmp_path / "pred.json")]
    )
    assert code == 0, err
    code, out, err = vtrack.run_cli(
        ["eval", "--pred", str(tmp_path / "pred.json"), "--ref", str(tmp_path / "p" / "skeleton.json")]
    )
    assert code == 0, err
    assert json.loads(out)["beta1_err"] == 0
    assert vtrack.run_cli(["bogus"])[0] == 1

    exe = os.environ.get("VTRACK_EXE")
    if exe:
        proc = subprocess.run([exe, "--version"], capture_output=True, text=True, check=False)
        assert proc.returncode == 0 and proc.stdout.strip() == vtrack.__version__
