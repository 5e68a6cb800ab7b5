import json
import math

import pytest

from app import EXIT_CONFIG, EXIT_FAILED, EXIT_IO, EXIT_OK, main
from config.settings import RESULTS_DIR
from src.cli.commands import (
    RED, cmd_rate, cmd_series, cmd_simulate, cmd_tail, default_output_path,
    render_table
)
from src.cli.config_loader import (
    apply_overrides, load_config, parse_config, parse_grid, parse_overrides,
    resolved_overrides
)
from src.utilities.errors import ConfigError
from src.utilities.numerics import normal_tail
from src.utilities.report_store import parse_stochastic_note

BERNOULLI = {"family": "centered_bernoulli", "p": 0.3}
EXPONENTIAL = {"family": "centered_exponential", "rate": 1.0}
GAUSSIAN = {"family": "gaussian", "sigma": 1.0}


def write_config(tmp_path, document, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return str(path)


def json_lines(text):
    return [json.loads(line) for line in text.splitlines()
            if line.startswith("{")]


def by_method(manifest, method):
    return [row for row in manifest.rows if row.method == method]


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------

def test_grids():
    assert parse_grid(2, "c") == (2.0,)
    assert parse_grid([0.5, 1], "c") == (0.5, 1.0)
    assert parse_grid({"start": 0, "stop": 1, "count": 3}, "c") == \
        (0.0, 0.5, 1.0)
    points = parse_grid({"start": 1, "stop": 100, "count": 3,
                         "spacing": "log"}, "c")
    assert points == pytest.approx((1.0, 10.0, 100.0))


@pytest.mark.parametrize("value,field", [
    ([], "c"),
    (["a"], "c[0]"),
    ({"start": 0, "stop": 1}, "c.count"),
    ({"start": 0, "stop": 1, "count": 3, "spacing": "cubic"}, "c.spacing"),
    ({"start": 0, "stop": 1, "count": 3, "spacing": "log"}, "c"),
    ("fast", "c"),
])
def test_grid_errors(value, field):
    with pytest.raises(ConfigError) as error:
        parse_grid(value, "c")
    assert error.value.field == field


def test_log_spaced_n_snaps_to_integers():
    config = parse_config({
        "distribution": EXPONENTIAL,
        "tail": {"n": {"start": 10, "stop": 1000, "count": 3,
                       "spacing": "log"}, "c": 1.0},
    }, "tail")
    assert config.sweep.horizons == (10.0, 100.0, 1000.0)
    assert config.sweep.methods == ("thm6",)
    assert config.sweep.seeds == (0,)


def test_overrides():
    tokens = ["--tail.n", "[100]", "--seed=3", "--output.path", "out.csv"]
    assert parse_overrides(tokens) == {"tail.n": [100], "seed": 3,
                                       "output.path": "out.csv"}
    document = {"tail": {"n": [10], "c": 1.0}}
    patched = apply_overrides(document, {"tail.n": [100], "seed": 3})
    assert patched == {"tail": {"n": [100], "c": 1.0}, "seed": 3}
    assert document["tail"]["n"] == [10]

    with pytest.raises(ConfigError):
        parse_overrides(["--seed"])
    with pytest.raises(ConfigError):
        parse_overrides(["stray"])
    with pytest.raises(ConfigError) as error:
        apply_overrides({"seed": 1}, {"seed.value": 2})
    assert error.value.field == "seed"


def test_resolved_overrides():
    assert resolved_overrides(4, None, "a.json", None) == {
        "seed": 4, "output.path": "a.json"}


@pytest.mark.parametrize("document,command,field", [
    ({"distribution": EXPONENTIAL, "rate": {"c": 1}, "colour": 1}, "rate",
     "colour"),
    ({"distribution": EXPONENTIAL, "process": {"sigma0_sq": 1.0},
      "rate": {"c": 1}}, "rate", "distribution"),
    ({"distribution": EXPONENTIAL}, "rate", "rate"),
    ({"distribution": EXPONENTIAL, "rate": {"c": 1, "n": 2}}, "rate",
     "rate.n"),
    ({"distribution": EXPONENTIAL, "tail": {"t": [1], "c": 1}}, "tail",
     "tail.t"),
    ({"distribution": EXPONENTIAL, "tail": {"n": [10], "c": 1, "x": 2}},
     "tail", "tail"),
    ({"distribution": EXPONENTIAL,
      "tail": {"n": [10], "c": 1, "methods": ["thm6", "thm9"]}}, "tail",
     "tail.methods[1]"),
    ({"distribution": EXPONENTIAL,
      "simulate": {"n": [10], "c": 1, "methods": ["thm6"]}}, "simulate",
     "simulate.methods[0]"),
    ({"distribution": EXPONENTIAL,
      "simulate": {"n": [10], "c": 1, "samples": 50}}, "simulate",
     "simulate.samples"),
    ({"distribution": EXPONENTIAL, "tail": {"n": [2.5], "c": 1}}, "tail",
     "tail.n[0]"),
    ({"distribution": {"family": "cauchy"}, "rate": {"c": 1}}, "rate",
     "distribution.family"),
    ({"distribution": EXPONENTIAL, "rate": {"c": 1}, "seed": -1}, "rate",
     "seed"),
    ({"distribution": EXPONENTIAL, "rate": {"c": 1},
      "output": {"format": "xml"}}, "rate", "output.format"),
])
def test_config_errors(document, command, field):
    with pytest.raises(ConfigError) as error:
        parse_config(document, command)
    assert error.value.field == field


def test_load_config(tmp_path):
    path = write_config(tmp_path, {"distribution": BERNOULLI,
                                   "rate": {"c": [0.5]}})
    config = load_config(path, "rate", {"rate.c": [0.25, 0.5], "seed": 7})
    assert config.grid == (0.25, 0.5)
    assert config.seed == 7
    assert not config.is_process

    with pytest.raises(ConfigError) as error:
        load_config(tmp_path / "missing.json", "rate")
    assert error.value.field == "--config"

    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json", "rate")


def test_default_output_path():
    config = parse_config({"distribution": BERNOULLI, "rate": {"c": 0.5}},
                          "rate")
    assert default_output_path(config) == \
        RESULTS_DIR / f"rate-{config.digest[:12]}.csv"
    config = parse_config({"distribution": BERNOULLI, "rate": {"c": 0.5},
                           "output": {"path": "out/r.json"}}, "rate")
    assert str(default_output_path(config)) == "out/r.json"


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def test_rate_exponential():
    manifest = cmd_rate(parse_config({"distribution": EXPONENTIAL,
                                      "rate": {"c": [0.5, 1.0, 2.0]}},
                                     "rate"))
    assert [row.method for row in manifest.rows[:4]] == \
        ["saddle_h", "alpha", "lambda", "b0"]
    for row in by_method(manifest, "alpha"):
        assert row.value == pytest.approx(row.x_or_c - math.log1p(row.x_or_c),
                                          abs=1e-10)
    for row in by_method(manifest, "saddle_h"):
        assert row.value == pytest.approx(row.x_or_c / (1 + row.x_or_c))
        assert row.error_note.startswith("residual=")


def test_rate_gaussian():
    manifest = cmd_rate(parse_config({"distribution": GAUSSIAN,
                                      "rate": {"c": [0.5, 2.0]}}, "rate"))
    alphas = [row.value for row in by_method(manifest, "alpha")]
    assert alphas == pytest.approx([0.125, 2.0], abs=1e-12)
    assert all(abs(row.value) < 1e-12 for row in by_method(manifest, "lambda"))


def test_rate_flags_unreachable_targets():
    manifest = cmd_rate(parse_config({"distribution": BERNOULLI,
                                      "rate": {"c": [0.5, 2.0]}}, "rate"))
    computed, flagged = manifest.rows[:4], manifest.rows[4:]
    assert not any(row.failed for row in computed)
    assert all(row.failed for row in flagged)
    assert all(row.error_note.startswith("TARGET_OUT_OF_RANGE")
               for row in flagged)
    assert len(manifest.failed_rows) == 4


def test_rate_at_zero_flags_b0_only():
    manifest = cmd_rate(parse_config({"distribution": EXPONENTIAL,
                                      "rate": {"c": 0}}, "rate"))
    assert [row.method for row in manifest.failed_rows] == ["b0"]
    assert manifest.failed_rows[0].error_note.startswith("DEGENERATE")


def test_tail_gaussian_thm1_is_exact():
    manifest = cmd_tail(parse_config({
        "distribution": GAUSSIAN,
        "tail": {"n": [10, 100], "x": [2.0, 3.0],
                 "methods": ["thm1", "normal", "exact"]},
    }, "tail"))
    assert len(manifest.rows) == 12
    for row in by_method(manifest, "thm1"):
        assert row.value == pytest.approx(normal_tail(row.x_or_c), rel=1e-12)
        assert row.ratio_to_exact == pytest.approx(1.0, rel=1e-12)
    for row in by_method(manifest, "normal"):
        assert row.ratio_to_exact == pytest.approx(1.0, rel=1e-12)
    assert all(row.exact is None for row in by_method(manifest, "exact"))


def test_tail_bernoulli_references():
    manifest = cmd_tail(parse_config({
        "distribution": BERNOULLI,
        "seed": 0,
        "tail": {"n": [100], "threshold": 20.0,
                 "methods": ["thm6", "is", "exact"], "samples": 100_000},
    }, "tail"))
    thm6, is_row, exact = manifest.rows
    assert thm6.exact == exact.value
    # lattice law: the density-type display overshoots by (e^h - 1)/h
    assert 1.35 <= thm6.ratio_to_exact <= 1.8
    assert "missing_condition_b" in thm6.error_note
    se, seed = parse_stochastic_note(is_row.error_note)
    assert seed == 0
    assert abs(is_row.value - exact.value) <= 4 * se


def test_tail_exponential_thm6_improves_with_n():
    manifest = cmd_tail(parse_config({
        "distribution": EXPONENTIAL,
        "tail": {"n": [50, 100, 200], "c": 1.0,
                 "methods": ["thm6", "exact"]},
    }, "tail"))
    errors = [abs(row.ratio_to_exact - 1) for row in by_method(manifest,
                                                               "thm6")]
    assert errors == sorted(errors, reverse=True)
    assert errors[-1] < 8 / 200


def test_tail_thm6_needs_a_threshold_above_the_mean():
    manifest = cmd_tail(parse_config({
        "distribution": EXPONENTIAL,
        "tail": {"n": [50], "c": -0.5, "methods": ["thm6"]},
    }, "tail"))
    assert manifest.rows[0].failed
    assert manifest.rows[0].error_note.startswith("UNSUPPORTED")


def test_tail_for_a_process():
    manifest = cmd_tail(parse_config({
        "process": {"sigma0_sq": 0.0, "jump_rate": 1.0,
                    "jump_law": {"family": "lattice", "atoms": [[1, 1]]}},
        "tail": {"t": [30.0], "c": 1.0, "methods": ["thm6", "exact"]},
    }, "tail"))
    thm6, exact = manifest.rows
    assert not thm6.failed and not exact.failed
    assert thm6.family.startswith("process(")
    assert 1.0 < thm6.ratio_to_exact < 2.0


def test_series_gaussian_vanishes():
    manifest = cmd_series(parse_config({"distribution": GAUSSIAN,
                                        "series": {"z": [-1.0, 1e-4, 0.5]}},
                                       "series"))
    assert [row.method for row in manifest.rows] == \
        ["c0", "c1", "lambda", "lambda", "lambda"]
    assert all(abs(row.value) < 1e-12 for row in manifest.rows)
    assert manifest.rows[3].error_note == "series blend"


def test_series_exponential():
    manifest = cmd_series(parse_config({"distribution": EXPONENTIAL,
                                        "series": {"z": [0.0, 0.5, 2.0]}},
                                       "series"))
    c0, c1, at_zero, *rows = manifest.rows
    assert c0.value == pytest.approx(1 / 3, abs=1e-10)
    assert c1.value == pytest.approx(-1 / 4, abs=1e-10)
    assert at_zero.value == pytest.approx(c0.value)
    for row in rows:
        z = row.x_or_c
        assert row.value == pytest.approx(
            (z**2 / 2 - z + math.log1p(z)) / z**3, rel=1e-8)


def test_simulate_seeds_agree():
    manifest = cmd_simulate(parse_config({
        "distribution": BERNOULLI,
        "simulate": {"n": [100], "threshold": 20.0, "samples": 20_000,
                     "seeds": [1, 2]},
    }, "simulate"))
    first, second = manifest.rows
    assert first.exact == second.exact is not None
    (se1, seed1), (se2, seed2) = (parse_stochastic_note(row.error_note)
                                  for row in manifest.rows)
    assert (seed1, seed2) == (1, 2)
    assert abs(first.value - second.value) <= 6 * math.hypot(se1, se2)


def test_simulate_without_exact_comparator():
    manifest = cmd_simulate(parse_config({
        "process": {"sigma0_sq": 0.5, "jump_rate": 1.0,
                    "jump_law": {"family": "exponential", "rate": 2.0}},
        "simulate": {"t": [5.0], "c": 0.5, "samples": 1_000,
                     "methods": ["mc", "is"]},
    }, "simulate"))
    assert [row.method for row in manifest.rows] == ["mc", "is"]
    assert all(row.exact is None for row in manifest.rows)
    assert all(row.ratio_to_exact is None for row in manifest.rows)


def test_rows_name_the_estimator_that_ran():
    manifest = cmd_simulate(parse_config({
        "process": {"sigma0_sq": 0.0, "jump_rate": 1.0,
                    "jump_law": {"family": "lattice", "atoms": [[1, 1]]}},
        "simulate": {"t": [10.0], "c": -0.5, "samples": 1_000,
                     "methods": ["is"]},
    }, "simulate"))
    assert [row.method for row in manifest.rows] == ["mc"]
    assert not manifest.rows[0].failed

    manifest = cmd_tail(parse_config({
        "distribution": EXPONENTIAL,
        "tail": {"n": [10], "c": -0.1, "samples": 1_000,
                 "methods": ["is", "exact"]},
    }, "tail"))
    assert [row.method for row in manifest.rows] == ["mc", "exact"]


def test_render_table_colors_failed_rows():
    manifest = cmd_rate(parse_config({"distribution": BERNOULLI,
                                      "rate": {"c": [0.5, 2.0]}}, "rate"))
    plain = render_table(manifest)
    assert "\033[" not in plain
    colored = render_table(manifest, color=True).splitlines()
    assert not colored[1].startswith(RED)
    assert all(line.startswith(RED) for line in colored[5:9])


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

@pytest.fixture
def tail_config(tmp_path):
    return write_config(tmp_path, {
        "distribution": EXPONENTIAL,
        "tail": {"n": [50, 100], "c": [0.5, 1.0],
                 "methods": ["thm6", "normal", "exact"]},
    })


def test_main_is_reproducible(tmp_path, tail_config, capsys):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["tail", "--config", tail_config, "--out", str(first)]) == \
        EXIT_OK
    assert main(["tail", "--config", tail_config, "--out", str(second)]) == \
        EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    assert f"wrote {second}" in capsys.readouterr().out


def test_main_compare(tmp_path, tail_config, capsys):
    golden, candidate = tmp_path / "golden.json", tmp_path / "new.csv"
    main(["tail", "--config", tail_config, "--out", str(golden)])
    main(["tail", "--config", tail_config, "--out", str(candidate)])
    capsys.readouterr()

    assert main(["compare", "--candidate", str(candidate),
                 "--baseline", str(golden)]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out

    main(["tail", "--config", tail_config, "--out", str(candidate),
          "--tail.c=[0.5, 1.5]"])
    capsys.readouterr()
    assert main(["compare", "--candidate", str(candidate),
                 "--baseline", str(golden)]) == EXIT_FAILED
    assert "FAIL" in capsys.readouterr().out


def test_main_unknown_key(tmp_path, capsys):
    path = write_config(tmp_path, {"distribution": EXPONENTIAL,
                                   "rate": {"c": 1.0}, "colour": "red"})
    assert main(["rate", "--config", path,
                 "--out", str(tmp_path / "r.csv")]) == EXIT_CONFIG
    errors = json_lines(capsys.readouterr().err)
    assert errors[-1] == {"error": "CONFIG_INVALID",
                          "message": "unknown key 'colour'",
                          "field": "colour"}
    assert not (tmp_path / "r.csv").exists()


def test_main_override_and_failed_rows(tmp_path, capsys):
    path = write_config(tmp_path, {"distribution": BERNOULLI,
                                   "rate": {"c": 0.5}})
    out = tmp_path / "rate.json"
    code = main(["rate", "--config", path, "--out", str(out),
                 "--rate.c=[0.5, 2.0]"])
    assert code == EXIT_FAILED
    errors = json_lines(capsys.readouterr().err)
    assert [e["row"] for e in errors] == [4, 5, 6, 7]
    assert all(e["error"] == "TARGET_OUT_OF_RANGE" for e in errors)

    document = json.loads(out.read_text())
    assert len(document["rows"]) == 8
    assert document["rows"][4]["value"] is None


def test_main_io_error(tmp_path, tail_config, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code = main(["tail", "--config", tail_config,
                 "--out", str(blocker / "tail.csv")])
    assert code == EXIT_IO
    assert json_lines(capsys.readouterr().err)[-1]["error"] == "IO_ERROR"


def test_main_missing_config(tmp_path, capsys):
    code = main(["rate", "--config", str(tmp_path / "nope.json")])
    assert code == EXIT_CONFIG
    assert json_lines(capsys.readouterr().err)[-1]["field"] == "--config"


def test_main_json_is_byte_identical(tmp_path, tail_config, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["tail", "--config", tail_config, "--out", str(first)]) == \
        EXIT_OK
    assert main(["tail", "--config", tail_config, "--out", str(second)]) == \
        EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text())["header"]["timestamp"] is None


def test_main_tail_far_beyond_sqrt_n(tmp_path, capsys):
    path = write_config(tmp_path, {
        "distribution": EXPONENTIAL,
        "tail": {"n": [100], "x": 50.0, "methods": ["thm1"]},
    })
    out = tmp_path / "far.json"
    assert main(["tail", "--config", path, "--out", str(out)]) == EXIT_OK
    row = json.loads(out.read_text())["rows"][0]
    # the ratio alone is ~e^929; the tail itself is ~e^-326
    assert 0 < row["value"] < 1e-140
    assert "x_gt_sqrt_n" in row["error_note"]
