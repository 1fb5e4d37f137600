"""Config parsing, CSV/measure-file round trips, SVG emission."""

import numpy as np
import pytest

import limset
from limset import _io
from limset.measure import AtomicMeasure

# ---------------------------------------------------------------------------
# experiment configs
# ---------------------------------------------------------------------------

FULL_CONFIG = """
# full config exercising every section
[run]
seed = 7
threads = 2

[group]
file = groups/ref.group

[delta]
n_max = 10
tol = 1e-7

[measure]
epsilon = 0.02
n_max = 9
window = 0.5

[fourier]
shell_min = 2
shell_max = 128
samples_per_shell = 8
grid_step = 0.125
grid_max = 32

[nonconc]
samples = 50
r_min = 0.25
epsilons = 0.1 0.2 0.4

[output]
dir = results
svg = true
"""


def test_config_defaults(tmp_path):
    path = tmp_path / "min.cfg"
    path.write_text("[group]\nfile = a.group\n")
    cfg = _io.parse_experiment_config(path)
    assert cfg.group_file == "a.group"
    assert cfg.seed == 0 and cfg.threads == 1
    assert cfg.delta_n_max == 12 and cfg.measure_epsilon == 0.05
    assert cfg.out_dir == "out" and cfg.svg is False
    assert len(cfg.sha256) == 64


def test_config_full_round(tmp_path):
    path = tmp_path / "full.cfg"
    path.write_text(FULL_CONFIG)
    cfg = _io.parse_experiment_config(path)
    assert cfg.seed == 7 and cfg.threads == 2
    assert cfg.delta_n_max == 10 and cfg.delta_tol == 1e-7
    assert cfg.measure_epsilon == 0.02 and cfg.measure_window == 0.5
    assert cfg.fourier_shell_max == 128 and cfg.fourier_grid_step == 0.125
    assert cfg.nonconc_samples == 50 and cfg.nonconc_epsilons == (0.1, 0.2, 0.4)
    assert cfg.out_dir == "results" and cfg.svg is True


def test_config_hash_tracks_bytes(tmp_path):
    a = tmp_path / "a.cfg"
    b = tmp_path / "b.cfg"
    a.write_text("[run]\nseed = 1\n")
    b.write_text("[run]\nseed = 2\n")
    ha = _io.parse_experiment_config(a).sha256
    hb = _io.parse_experiment_config(b).sha256
    assert ha != hb
    b.write_text("[run]\nseed = 1\n")
    assert _io.parse_experiment_config(b).sha256 == ha


def test_config_unknown_key_has_line_number(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[run]\nseed = 1\nbogus = 3\n")
    with pytest.raises(_io.GroupFileError) as err:
        _io.parse_experiment_config(path)
    assert err.value.line == 3


def test_config_epsilons_validated(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[nonconc]\nepsilons = 0.2 1.5\n")
    with pytest.raises(_io.GroupFileError):
        _io.parse_experiment_config(path)


def test_config_svg_must_be_boolean(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[output]\nsvg = yes\n")
    with pytest.raises(_io.GroupFileError):
        _io.parse_experiment_config(path)


def test_config_resolves_relative_to_its_directory(tmp_path):
    sub = tmp_path / "sub"
    sub.mkdir()
    path = sub / "c.cfg"
    path.write_text("[group]\nfile = g.group\n")
    cfg = _io.parse_experiment_config(path)
    assert cfg.resolve("g.group") == str(sub / "g.group")
    assert cfg.resolve("/abs/g.group") == "/abs/g.group"


def test_config_missing_file_raises_io(tmp_path):
    with pytest.raises(FileNotFoundError):
        _io.parse_experiment_config(tmp_path / "nope.cfg")


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def test_csv_round_trip_is_lossless(tmp_path):
    path = tmp_path / "t.csv"
    rng = np.random.default_rng(3)
    vals = np.concatenate([rng.standard_normal(50) * 10.0 ** rng.integers(-12, 12, 50),
                           [0.0, 1.0, -1.0, 2.0 ** -1022]])
    rows = [(i, v) for i, v in enumerate(vals)]
    _io.write_csv(path, ["i", "v"], rows, {"seed": 0})
    meta, cols, data = _io.read_csv(path)
    assert cols == ["i", "v"]
    assert meta["seed"] == "0"
    assert np.array_equal(data[:, 1], vals)   # %.17g round-trips float64 exactly


def test_csv_meta_sorted_and_commented(tmp_path):
    path = tmp_path / "t.csv"
    _io.write_csv(path, ["x"], [(1.0,)], {"zeta": "z", "alpha": 1, "flag": True})
    lines = path.read_text().splitlines()
    assert lines[0] == "# alpha=1"
    assert lines[1] == "# flag=True"
    assert lines[2] == "# zeta=z"
    assert lines[3] == "x"


def test_csv_cell_types(tmp_path):
    path = tmp_path / "t.csv"
    _io.write_csv(path, ["a", "b", "c", "d"],
                  [(np.int64(3), np.float64(0.5), True, "word")], {})
    assert path.read_text().splitlines()[1] == "3,0.5,true,word"


# ---------------------------------------------------------------------------
# measure files
# ---------------------------------------------------------------------------

def test_measure_file_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    mu = AtomicMeasure(points=rng.standard_normal((40, 2)),
                       weights=rng.uniform(0.1, 1.0, 40))
    path = tmp_path / "m.csv"
    _io.write_measure_file(path, mu, {"delta": _io.fmt(0.5), "seed": 0})
    mu2, meta = _io.read_measure_file(path)
    assert np.array_equal(mu.points, mu2.points)
    assert np.array_equal(mu.weights, mu2.weights)
    assert meta["d"] == "2" and meta["count"] == "40"
    assert float(meta["mass"]) == mu.mass
    assert float(meta["delta"]) == 0.5


def test_measure_file_header_mismatch_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("# count=3\n# d=1\nx1,weight\n0,1\n0.5,1\n")
    with pytest.raises(_io.GroupFileError):
        _io.read_measure_file(path)
    path.write_text("# count=2\n# d=2\nx1,weight\n0,1\n0.5,1\n")
    with pytest.raises(_io.GroupFileError):
        _io.read_measure_file(path)


# ---------------------------------------------------------------------------
# group file parse errors carry line numbers
# ---------------------------------------------------------------------------

def test_group_parse_bad_matrix_length_line():
    text = "[model]\nd = 1\n\n[generator.1]\nmatrix = 1 2 3\n\n[balls.1]\n" \
           "minus_center = -4\nminus_radius = 3\nplus_center = 2\nplus_radius = 0.7\n"
    with pytest.raises(_io.GroupFileError) as err:
        _io.parse_group_text(text)
    assert err.value.line == 5
    assert "9" in str(err.value)   # expected d+2 squared entries


def test_group_parse_duplicate_key_line():
    with pytest.raises(_io.GroupFileError) as err:
        _io.parse_group_text("[model]\nd = 1\nd = 2\n")
    assert err.value.line == 3


def test_group_parse_key_outside_section():
    with pytest.raises(_io.GroupFileError) as err:
        _io.parse_group_text("d = 1\n")
    assert err.value.line == 1


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------

def test_svg_deterministic_and_well_formed(tmp_path):
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    ys = np.array([1.0, 0.5, 0.25, 0.125])
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    _io.write_loglog_svg(a, xs, ys, "t", "x", "y")
    _io.write_loglog_svg(b, xs, ys, "t", "x", "y")
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert "polyline" in text and text.count("<circle") == 4


def test_svg_drops_nonpositive_points(tmp_path):
    path = tmp_path / "c.svg"
    _io.write_loglog_svg(path, [1.0, -2.0, 4.0], [1.0, 3.0, 0.0], "t", "x", "y")
    assert path.read_text().count("<circle") == 1
