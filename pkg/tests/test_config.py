import pytest

from cartan_kill.config import Settings, settings


def test_numerical_defaults():
    """Defaults without CARTAN_* variables"""
    defaults = Settings()
    assert defaults.TOL_ODE == 1e-10
    assert defaults.TOL_RANK == 1e-5
    assert defaults.TOL_ZERO == 1e-6
    assert defaults.TOL_ANGLE == 1e-4
    assert defaults.TOL_FEAS == 1e-5
    assert defaults.M_MAX == 4
    assert defaults.WORKERS == 1
    assert defaults.SEED == 0


def test_snapshot_round_trip():
    """update restores what snapshot captured"""
    before = settings.snapshot()
    assert "TOL_RANK" in before and "LOG_LEVEL" in before
    assert all(key.isupper() for key in before)
    try:
        settings.update({"TOL_RANK": 1e-7, "TOL_ANGLE": 1e-6})
        assert settings.TOL_RANK == 1e-7
        assert settings.snapshot()["TOL_ANGLE"] == 1e-6
    finally:
        settings.update(before)
    assert settings.snapshot() == before


def test_update_rejects_unknown_keys():
    with pytest.raises(KeyError):
        settings.update({"TOL_MISSING": 1.0})
    with pytest.raises(KeyError):
        settings.update({"snapshot": None})
