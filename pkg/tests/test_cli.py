import numpy as np
import pytest
from click.testing import CliRunner

from polartcl.cli import main
from polartcl.config import ConfigError, parse_config


MINI_CONFIG = """
[system]
source = model
seed = 3
n_occ = 2
n_virt = 2
scale = 0.1

[bath]
temperature = 300 K
mode = 0.35 | 0.07 0.16 0.12 -0.07

[propagation]
mode = transformed
t_final = 40
output_dt = 2
rk_tolerance = 1e-7

[observables]
kick = x

[output]
directory = {out}
"""


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, text=None):
    cfg = tmp_path / "run.ini"
    cfg.write_text((text or MINI_CONFIG).format(out=tmp_path / "out"))
    return cfg


def test_terms_deterministic(runner):
    a = runner.invoke(main, ["terms"])
    b = runner.invoke(main, ["terms"])
    assert a.exit_code == 0
    assert a.output == b.output
    assert "second-order terms" in a.output


def test_terms_untransformed(runner):
    out = runner.invoke(main, ["terms", "--untransformed", "--no-hermitize"])
    assert out.exit_code == 0
    assert "rank=1" in out.output


def test_transform_reports_shifts(runner, tmp_path):
    cfg = write_config(tmp_path)
    out = runner.invoke(main, ["transform", str(cfg)])
    assert out.exit_code == 0
    assert "lambda" in out.output
    assert "max |V_tilde - V|" in out.output


def test_propagate_and_spectrum(runner, tmp_path):
    cfg = write_config(tmp_path)
    out = runner.invoke(main, ["propagate", str(cfg)])
    assert out.exit_code == 0, out.output
    traj_file = tmp_path / "out" / "trajectory_x.txt"
    assert traj_file.exists()
    assert (tmp_path / "out" / "manifest.txt").exists()

    out = runner.invoke(main, ["spectrum", str(cfg)])
    assert out.exit_code == 0, out.output
    spec_file = tmp_path / "out" / "spectrum_x.txt"
    data = np.loadtxt(spec_file)
    assert data.shape[1] == 6

    # determinism: identical config -> bit-identical artifacts
    first = spec_file.read_bytes()
    out = runner.invoke(main, ["spectrum", str(cfg)])
    assert out.exit_code == 0
    assert spec_file.read_bytes() == first


def test_rates_subcommand(runner, tmp_path):
    cfg = write_config(tmp_path)
    out = runner.invoke(main, ["rates", str(cfg)])
    assert out.exit_code == 0, out.output
    text = (tmp_path / "out" / "rates.txt").read_text()
    assert "growth_rate" in text


def test_spectrum_markov_poles(runner, tmp_path):
    cfg = write_config(tmp_path)
    out = runner.invoke(main, ["spectrum", str(cfg), "--markov"])
    assert out.exit_code == 0, out.output
    assert (tmp_path / "out" / "poles.txt").exists()


def test_validate_subcommand(runner, tmp_path):
    cfg = write_config(tmp_path)
    out = runner.invoke(main, ["validate", str(cfg)])
    assert out.exit_code == 0, out.output
    assert "all checks passed" in out.output


def test_parse_error_exit_code(runner, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nsource = model\nbogus_key = 1\n")
    out = runner.invoke(main, ["transform", str(bad)])
    assert out.exit_code == 2


def test_missing_bath_in_transformed_mode(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[system]\nsource = model\nseed = 1\n"
                   "[propagation]\nmode = transformed\nt_final = 10\n")
    with pytest.raises(ConfigError) as err:
        parse_config(cfg)
    assert "bath" in str(err.value)


def test_unknown_section_rejected(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[system]\nsource = model\n[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config(cfg)


def test_config_units_and_preset(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[system]\nsource = preset\npreset = vibronic\n"
                   "[propagation]\nmode = transformed\nt_final = 10\n")
    run = parse_config(cfg)
    assert run.system.n_orb == 4
    assert run.bath.modes  # preset bath carried through
