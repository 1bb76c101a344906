"""Synthetic generators and the command-line front end."""

import numpy as np
import pytest

from pixood.cli import main
from pixood.core import read_points
from pixood.synth import (
    SyntheticSpec,
    default_spec,
    ood_probe,
    segmentation3,
    toy_outliers,
    xor_gaussians,
)


def test_toy_outliers_shape_and_outlier_margin():
    spec = default_spec("toy_outliers")
    data = toy_outliers(spec)
    assert data.points.shape == (spec.clusters * spec.per_cluster + spec.outliers, 2)
    assert data.labels is None
    # outliers sit >= 4 sigma from every cluster center while cluster points
    # reach 3.5 sigma, leaving at least ~0.5 sigma of clearance
    body = data.points[: -spec.outliers]
    tail = data.points[-spec.outliers :]
    for p in tail:
        d = np.linalg.norm(body - p, axis=1)
        assert d.min() > 0.4 * spec.spread


def test_toy_outliers_deterministic():
    a = toy_outliers(default_spec("toy_outliers"))
    b = toy_outliers(default_spec("toy_outliers"))
    np.testing.assert_array_equal(a.points, b.points)


def test_xor_gaussians_layout():
    data = xor_gaussians(default_spec("xor_gaussians"))
    assert data.class_count == 2
    assert set(np.unique(data.labels)) == {0, 1}
    # same-label blobs sit on opposite corners: class means nearly coincide,
    # which is exactly what defeats an affine probe
    m0 = data.points[data.labels == 0].mean(axis=0)
    m1 = data.points[data.labels == 1].mean(axis=0)
    assert np.linalg.norm(m0 - m1) < 0.5


def test_segmentation3_split():
    id_data, ood_data = segmentation3(default_spec("segmentation3"))
    assert id_data.class_count == 3
    assert ood_data.labels is None
    # OOD cluster is far from every ID point
    dmin = min(
        np.linalg.norm(id_data.points - p, axis=1).min() for p in ood_data.points[:50]
    )
    assert dmin > 3.0


def test_ood_probe_matches_id_distribution_support():
    id_data, far = ood_probe(default_spec("ood_probe"))
    seg_id, _ = segmentation3(default_spec("segmentation3"))
    # probe ID points live inside the training support, far points do not
    for p in id_data.points[:50]:
        assert np.linalg.norm(seg_id.points - p, axis=1).min() < 2.0
    for p in far.points[:50]:
        assert np.linalg.norm(seg_id.points - p, axis=1).min() > 3.0


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(generator="nope")
    with pytest.raises(ValueError):
        SyntheticSpec(per_cluster=-1)
    with pytest.raises(ValueError):
        SyntheticSpec(spread=0.0)


def test_cli_synth_writes_expected_files(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--generator", "toy_outliers", "--out", str(out)]) == 0
    data = read_points(out / "toy_outliers.pts")
    assert data.points.shape[1] == 2
    assert main(["synth", "--generator", "segmentation3", "--out", str(out)]) == 0
    labeled = read_points(out / "segmentation3_id.pts")
    assert labeled.labels is not None
    assert (out / "segmentation3_ood.pts").exists()


def test_cli_condense_and_em_fit(tmp_path):
    out = tmp_path / "w"
    main(["synth", "--generator", "toy_outliers", "--out", str(out)])
    src = str(out / "toy_outliers.pts")
    assert main(["condense", "--in", src, "--k", "8", "--seed", "1", "--out", str(out)]) == 0
    text = (out / "etalons.csv").read_text()
    assert text.splitlines()[0] == "k,c_0,c_1,beta,support"
    assert len(text.splitlines()) == 9
    assert main(["em-fit", "--in", src, "--k", "5", "--seed", "2", "--out", str(out)]) == 0
    assert (out / "mixture.csv").exists()


def test_cli_config_file_overrides(tmp_path):
    out = tmp_path / "w"
    main(["synth", "--generator", "toy_outliers", "--out", str(out)])
    cfg = tmp_path / "run.cfg"
    cfg.write_text("budget = 4\nepochs = 6\nvariant = soft_kmedians\n")
    code = main(
        [
            "condense",
            "--in", str(out / "toy_outliers.pts"),
            "--config", str(cfg),
            "--out", str(out),
        ]
    )
    assert code == 0
    assert len((out / "etalons.csv").read_text().splitlines()) == 5
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 3\n")
    code = main(
        [
            "condense",
            "--in", str(out / "toy_outliers.pts"),
            "--config", str(bad),
            "--out", str(out),
        ]
    )
    assert code == 1


def test_cli_train_score_calib_chain(tmp_path, capsys):
    out = tmp_path / "w"
    main(["synth", "--generator", "segmentation3", "--out", str(out)])
    main(["synth", "--generator", "ood_probe", "--out", str(out)])
    model = str(tmp_path / "model")
    assert main(["train", "--in", str(out / "segmentation3_id.pts"), "--seed", "0", "--out", model]) == 0
    scored = str(tmp_path / "scored")
    code = main(
        [
            "score",
            "--model", model,
            "--in", str(out / "segmentation3_ood.pts"),
            "--id-probe", str(out / "ood_probe_id.pts"),
            "--out", scored,
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "auroc = " in printed
    assert float(printed.split("auroc = ")[1].split()[0]) > 0.99
    header = (tmp_path / "scored" / "scores.csv").read_text().splitlines()[0]
    assert header == "index,class,ood_score"
    assert (tmp_path / "scored" / "scores.png").exists()
    assert main(["calib-dump", "--model", model, "--class-id", "2", "--out", scored]) == 0
    assert (tmp_path / "scored" / "calibration_2.csv").exists()


def test_cli_error_exit_codes(tmp_path):
    # missing input file -> runtime error, not a traceback
    assert main(["condense", "--in", str(tmp_path / "nope.pts"), "--out", str(tmp_path)]) == 1
    assert main(["calib-dump", "--model", str(tmp_path / "nomodel"), "--class-id", "0", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--generator", "unknown", "--out", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_cli_eval_toy_report(tmp_path, capsys):
    out = tmp_path / "w"
    main(["synth", "--generator", "toy_outliers", "--out", str(out)])
    cfg = tmp_path / "small.cfg"
    cfg.write_text("budget = 10\nepochs = 12\nbatch_size = 64\n")
    code = main(
        [
            "eval-toy",
            "--in", str(out / "toy_outliers.pts"),
            "--seeds", "0,1",
            "--config", str(cfg),
            "--out", str(tmp_path / "rep"),
        ]
    )
    assert code == 0
    report = (tmp_path / "rep" / "toy_report.csv").read_text().splitlines()
    assert report[0] == "variant,seed,useful_count,final_loss"
    assert len(report) == 1 + 4 * 2  # four variants, two seeds
    assert (tmp_path / "rep" / "toy_report.png").exists()
    assert "condensation_reinit" in capsys.readouterr().out
