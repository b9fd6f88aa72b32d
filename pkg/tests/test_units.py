import numpy as np
import pytest

from polartcl.units import (UnknownUnitError, beta_from_temperature,
                            convert_units, parse_quantity)


def test_wavenumber_conversion():
    assert convert_units(1600, "cm-1") == pytest.approx(0.0072902, abs=2e-7)


def test_ev_round_trip():
    assert convert_units(27.211386, "ev") == pytest.approx(1.0, rel=1e-9)


def test_temperature_to_beta():
    beta = beta_from_temperature(273.0)
    assert beta == pytest.approx(1 / (3.166811e-6 * 273), rel=1e-9)
    assert beta == pytest.approx(1157.0, abs=0.5)
    assert beta_from_temperature(0.0) == np.inf


def test_unknown_tag():
    with pytest.raises(UnknownUnitError):
        convert_units(1.0, "furlongs")


def test_parse_quantity():
    assert parse_quantity("0.25") == 0.25
    assert parse_quantity("2831 cm-1") == pytest.approx(2831 / 219474.63)
    assert parse_quantity("1 hartree") == 1.0
