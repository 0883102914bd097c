import numpy as np
import pytest

from tvrir.errors import ConfigError
from tvrir.ririo import (
    read_excitation_csv, read_observation_csv, read_rir_binary, read_rir_csv, read_rirs,
    write_excitation_csv, write_observation_csv, write_rir_binary, write_rir_csv,
)

RIRS = np.random.default_rng(0).standard_normal((4, 7))


def test_rir_csv_roundtrip(tmp_path):
    write_rir_csv(tmp_path / "r.csv", RIRS, 16000)
    back, fs = read_rir_csv(tmp_path / "r.csv")
    assert fs == 16000.0
    np.testing.assert_array_equal(back, RIRS)


def test_rir_binary_roundtrip(tmp_path):
    write_rir_binary(tmp_path / "r.f64", RIRS, 8000)
    back, fs = read_rirs(tmp_path / "r.f64")
    assert fs == 8000.0
    np.testing.assert_array_equal(back, RIRS)
    assert (tmp_path / "r.f64").stat().st_size == RIRS.size * 8


def test_rir_csv_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_rir_csv(tmp_path / "missing.csv")
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        read_rir_csv(tmp_path / "bad.csv")
    (tmp_path / "short.csv").write_text("fs,N,L\n16000,3,2\n1,2,3\n")
    with pytest.raises(ConfigError):
        read_rir_csv(tmp_path / "short.csv")


def test_binary_size_mismatch(tmp_path):
    write_rir_binary(tmp_path / "r.f64", RIRS, 8000)
    (tmp_path / "r.f64").write_bytes(b"\0" * 16)
    with pytest.raises(ConfigError):
        read_rir_binary(tmp_path / "r.f64")


def test_signal_csvs(tmp_path):
    y = np.array([0.1, -0.2, 0.3])
    write_observation_csv(tmp_path / "y.csv", y, 8)
    back, omega = read_observation_csv(tmp_path / "y.csv")
    assert omega == 8
    np.testing.assert_array_equal(back, y)
    x = np.random.default_rng(1).standard_normal(20)
    write_excitation_csv(tmp_path / "x.csv", x)
    np.testing.assert_array_equal(read_excitation_csv(tmp_path / "x.csv"), x)
