"""Config parsing, precedence, auto resolution, manifests."""

import os

import pytest

from kernelpath.config import (
    AUTO,
    DEFAULT_OUTDIR,
    ENV_OUTDIR,
    REGISTRY,
    ConfigError,
    build_model_schedule,
    default_outdir,
    manifest_text,
    parse_config_file,
    parse_config_text,
    resolve,
    window_from,
    write_manifest,
)


def test_registry_keys_frozen():
    assert tuple(REGISTRY) == (
        "modes", "mu_decay", "source_decay", "r", "sigma", "seed",
        "a", "b", "theta", "t0", "T", "replicates", "representation",
        "delta", "threads", "window_lo", "window_hi",
    )


class TestParsing:
    def test_basic(self):
        vals = parse_config_text("modes = 32\nr = 1.5 # comment\n\n# full comment\nseed=7\n")
        assert vals == {"modes": 32, "r": 1.5, "seed": 7}

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match="config:3: unknown key 'granularity'"):
            parse_config_text("modes = 8\n\ngranularity = 2\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="config:1: malformed"):
            parse_config_text("just some words\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="first set on line 1"):
            parse_config_text("modes = 8\nmodes = 9\n")

    def test_empty_value(self):
        with pytest.raises(ConfigError, match="empty value"):
            parse_config_text("modes =\n")

    def test_typed_value_errors_carry_position(self):
        with pytest.raises(ConfigError, match="config:2: key 'modes'"):
            parse_config_text("seed = 1\nmodes = 2.5\n")
        with pytest.raises(ConfigError):
            parse_config_text("delta = 1.5\n")
        with pytest.raises(ConfigError):
            parse_config_text("representation = dense\n")

    def test_auto_values_allowed(self):
        vals = parse_config_text("b = auto\ntheta = auto\nt0 = auto\n")
        assert vals == {"b": AUTO, "theta": AUTO, "t0": AUTO}

    def test_file_source_in_message(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("modes = x\n")
        with pytest.raises(ConfigError, match="exp.cfg:1"):
            parse_config_file(str(p))


class TestResolve:
    def test_defaults(self):
        vals = resolve()
        assert vals["modes"] == 256
        assert vals["r"] == 1.0
        assert vals["a"] == 4.0
        assert vals["b"] == 0.25          # auto -> 1/a
        assert vals["theta"] == pytest.approx(2.0 / 3.0)  # auto -> 2r/(2r+1)
        assert vals["T"] == 131072
        assert vals["replicates"] == 20
        assert vals["threads"] == (os.cpu_count() or 1)
        assert vals["t0"] == AUTO          # resolved later, needs kappa

    def test_precedence(self):
        vals = resolve({"a": 2.0, "seed": 3}, {"seed": 9, "T": None})
        assert vals["a"] == 2.0
        assert vals["seed"] == 9           # override beats file
        assert vals["T"] == 131072         # None means not supplied

    def test_auto_b_tracks_alpha(self):
        assert resolve({"a": 8.0})["b"] == 0.125

    def test_auto_theta_tracks_r(self):
        assert resolve({"r": 1.5})["theta"] == pytest.approx(0.75)

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            resolve(None, {"granularity": 2})


class TestBuildModelSchedule:
    def test_reference_resolution(self):
        model, schedule, resolved = build_model_schedule(resolve())
        assert model.modes == 256
        assert resolved["t0"] == 650.0
        assert schedule.t0 == 650.0
        assert schedule.flags.b2_ok

    def test_small_model(self):
        model, schedule, resolved = build_model_schedule(resolve({"modes": 64}))
        assert resolved["t0"] == 641.0

    def test_explicit_t0_kept(self):
        _, schedule, resolved = build_model_schedule(resolve({"t0": 1000.0}))
        assert schedule.t0 == 1000.0


class TestWindow:
    def test_auto_is_none(self):
        assert window_from(resolve()) is None

    def test_numeric(self):
        vals = resolve({"window_lo": 64.0, "window_hi": 4096.0})
        assert window_from(vals) == (64.0, 4096.0)

    def test_half_auto_rejected(self):
        with pytest.raises(ConfigError):
            window_from(resolve({"window_lo": 64.0}))

    def test_ordering(self):
        with pytest.raises(ConfigError):
            window_from(resolve({"window_lo": 64.0, "window_hi": 64.0}))


class TestManifest:
    def test_round_trip_identity(self):
        vals = resolve({"modes": 64, "r": 1.0})
        _model, _schedule, resolved = build_model_schedule(vals)
        text = manifest_text(resolved, header_comments=["command: rates"])
        reparsed = parse_config_text(text, source="manifest")
        merged = resolve(reparsed)
        assert merged == resolved
        # and the re-rendered text is byte-identical
        assert manifest_text(merged, header_comments=["command: rates"]) == text

    def test_seventeen_digit_floats(self):
        vals = resolve()
        text = manifest_text(build_model_schedule(vals)[2])
        assert "theta = 0.66666666666666663" in text

    def test_write_manifest(self, tmp_path):
        path = write_manifest(str(tmp_path / "out"), resolve({"t0": 650.0}))
        assert path.endswith("manifest.txt")
        assert os.path.exists(path)


def test_default_outdir_env(monkeypatch):
    monkeypatch.delenv(ENV_OUTDIR, raising=False)
    assert default_outdir() == DEFAULT_OUTDIR
    monkeypatch.setenv(ENV_OUTDIR, "/tmp/elsewhere")
    assert default_outdir() == "/tmp/elsewhere"


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)
