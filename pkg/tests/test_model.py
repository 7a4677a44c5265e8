import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optosync import model
from optosync.errors import ConfigError
from optosync.model import SystemParams, build_diffusion_matrix, build_drift_matrix, modulation_factor

ZERO = dict(omega_m=0.0, delta_m=0.0, delta=0.0, kappa=0.0, gamma_m1=0.0, gamma_m2=0.0,
            g=0.0, drive_e=0.0, mod_omega=0.0, mod_eps=0.0)


@pytest.mark.parametrize("t, expected", [(0.0, 1.0), (math.pi, 1.5), (math.pi / 2, 1.25)])
def test_modulation_factor_examples(t, expected):
    p = SystemParams(mod_eps=0.5, mod_omega=0.5)
    assert modulation_factor(p, t) == pytest.approx(expected, abs=1e-15)


@given(t=st.floats(0, 200), eps=st.floats(0, 3), omega=st.floats(0.05, 5))
def test_modulation_factor_bounds_and_period(t, eps, omega):
    p = SystemParams(mod_eps=eps, mod_omega=omega)
    f = modulation_factor(p, t)
    assert 1.0 - 1e-12 <= f <= 1.0 + eps + 1e-12
    assert modulation_factor(p, t + math.pi / omega) == pytest.approx(f, abs=1e-9 * (1 + eps) * (1 + t))


def test_drift_zero_coupling_limit():
    p = SystemParams(**{**ZERO, "kappa": 1.0})
    A = build_drift_matrix(p, 0.0, 0.0)
    assert np.array_equal(A, np.diag([-1.0, -1.0, 0, 0, 0, 0]))


def test_drift_modulated_entry(params, operating_point):
    _, G = operating_point
    assert build_drift_matrix(params, G, 0.0)[3, 2] == -1.0
    t = (math.pi / 2) / params.mod_omega
    assert build_drift_matrix(params, G, t)[3, 2] == pytest.approx(-1.5, abs=1e-15)


def test_drift_entries_follow_fluctuation_equations():
    p = SystemParams(delta=0.7, kappa=0.2, delta_m=0.05, gamma_m1=0.01, gamma_m2=0.02,
                     mechanical_damping="momentum")
    G = 0.3
    A = build_drift_matrix(p, G, 0.0)
    expected = np.array([
        [-0.2, 0.7, 0, 0, 0, 0],
        [-0.7, -0.2, G, 0, G, 0],
        [0, 0, 0, 1.0, 0, 0],
        [G, 0, -1.0, -0.01, 0, 0],
        [0, 0, 0, 0, 0, 1.05],
        [G, 0, 0, 0, -1.05, -0.02],
    ])
    assert np.allclose(A, expected, atol=1e-15)
    assert np.count_nonzero(A) == 14


def test_symmetric_damping_adds_position_damping():
    p = SystemParams(gamma_m1=0.01, gamma_m2=0.02)
    A = build_drift_matrix(p, 0.3, 0.0)
    assert A[2, 2] == -0.01 and A[4, 4] == -0.02
    assert np.count_nonzero(A) == 16


@settings(max_examples=30)
@given(t1=st.floats(0, 100), t2=st.floats(0, 100))
def test_unmodulated_drift_is_time_independent(t1, t2):
    p = SystemParams(mod_eps=0.0)
    assert np.array_equal(build_drift_matrix(p, 0.15, t1), build_drift_matrix(p, 0.15, t2))


def test_only_one_entry_depends_on_time(params):
    diff = build_drift_matrix(params, 0.15, 0.0) != build_drift_matrix(params, 0.15, 1.3)
    assert list(zip(*np.nonzero(diff))) == [(3, 2)]


def test_diffusion_momentum_only_form():
    p = SystemParams(mechanical_damping="momentum")
    assert np.allclose(np.diag(build_diffusion_matrix(p)), [0.1, 0.1, 0, 0.001, 0, 0.001], atol=1e-15)


def test_diffusion_symmetric_form():
    D = build_diffusion_matrix(SystemParams())
    assert np.allclose(np.diag(D), [0.1, 0.1, 0.001, 0.001, 0.001, 0.001], atol=1e-15)


def test_diffusion_zero_and_thermal():
    assert not build_diffusion_matrix(SystemParams(**ZERO)).any()
    p = SystemParams(kappa=0.1, n_ph=1.0, gamma_m1=0.0, gamma_m2=0.0)
    assert np.allclose(np.diag(build_diffusion_matrix(p)), [0.3, 0.3, 0, 0, 0, 0])


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 1), st.floats(0, 1))
def test_diffusion_is_psd(n_ph, n1, n2, k, g):
    D = build_diffusion_matrix(SystemParams(n_ph=n_ph, n_m1=n1, n_m2=n2, kappa=k, gamma_m1=g))
    assert np.array_equal(D, D.T)
    assert np.linalg.eigvalsh(D).min() >= 0


@pytest.mark.parametrize("bad", [
    dict(kappa=0.0), dict(gamma_m1=-1.0), dict(omega_m=0.0), dict(delta_m=-1.0),
    dict(mod_eps=-0.1), dict(n_m2=-0.5),
])
def test_validate_rejects(bad):
    with pytest.raises(ConfigError):
        SystemParams(**bad).validate()


def test_construction_rejects_non_numbers():
    with pytest.raises(ConfigError):
        SystemParams(kappa=float("nan"))
    with pytest.raises(ConfigError):
        SystemParams(mechanical_damping="viscous")


def test_read_config_key_value(tmp_path):
    f = tmp_path / "p.cfg"
    f.write_text("# comment\nkappa = 0.2\n\ndelta_m=0.05  # detuned\nmechanical_damping = momentum\n")
    p = model.load_params(f)
    assert p.kappa == 0.2 and p.delta_m == 0.05 and p.mechanical_damping == "momentum"
    assert p.g == SystemParams().g


def test_read_config_json(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"mod_eps": 0.0, "drive_e": 1}))
    p = model.load_params(f)
    assert p.mod_eps == 0.0 and p.drive_e == 1.0


@pytest.mark.parametrize("text", ["kappa 0.2\n", '{"kappa": [1, 2]}', "{not json"])
def test_read_config_malformed(tmp_path, text):
    f = tmp_path / "bad.cfg"
    f.write_text(text)
    with pytest.raises(ConfigError):
        model.read_config(f)


def test_unknown_parameter():
    with pytest.raises(ConfigError, match="unknown"):
        model.params_from_mapping({"kapa": 1.0})


def test_defaults_are_reference_point():
    p = SystemParams()
    assert (p.omega_m, p.delta, p.kappa, p.gamma_m1, p.gamma_m2, p.g, p.mod_omega, p.mod_eps, p.drive_e,
            p.delta_m) == (1, 1, 0.1, 0.001, 0.001, 0.05, 0.5, 0.5, 2.1, 0)
    assert p.tau == pytest.approx(4 * math.pi)
    assert p.mod_period == pytest.approx(2 * math.pi)
