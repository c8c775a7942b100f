import math

import numpy as np
import pytest

from malcal.noise import NoiseValidationError, binary_noise, custom_noise, noise_from_config, sample
from malcal.rng import stream


def test_binary_symmetric_atoms():
    spec = binary_noise(1)
    assert spec.atoms == [(-1.0, 0.5), (1.0, 0.5)]


def test_binary_b2_atoms():
    spec = binary_noise(2)
    assert spec.values == (-0.5, 2.0)
    assert spec.probs == pytest.approx((0.8, 0.2), abs=1e-15)


@pytest.mark.parametrize("b", [0.3, 1.0, 2.0, 7.5])
def test_binary_moments(b):
    spec = binary_noise(b)
    v, p = spec.values_array(), spec.probs_array()
    assert abs(p.sum() - 1) < 1e-12
    assert abs(p @ v) < 1e-12
    assert abs(p @ v**2 - 1) < 1e-12
    # xi^2 = 1 + (b - 1/b) xi at both atoms
    assert np.allclose(v**2, 1 + (b - 1 / b) * v, atol=1e-12)


@pytest.mark.parametrize("b", [0.0, -1.0, math.inf, math.nan])
def test_binary_rejects_bad_b(b):
    with pytest.raises(NoiseValidationError):
        binary_noise(b)


def test_custom_valid():
    spec = custom_noise([(-1, 0.5), (1, 0.5)])
    assert spec.size == 2


def test_custom_mean_violation_named():
    with pytest.raises(NoiseValidationError, match="mean"):
        custom_noise([(-1, 0.5), (2, 0.5)])


def test_custom_variance_violation_named():
    with pytest.raises(NoiseValidationError, match="variance"):
        custom_noise([(-2, 0.5), (2, 0.5)])


def test_three_atom_valid():
    r = math.sqrt(2)
    spec = custom_noise([(-r, 0.25), (0, 0.5), (r, 0.25)])
    assert spec.size == 3 and not spec.is_binary


@pytest.mark.parametrize("atoms", [
    [(1.0, 1.0)],
    [(-1, 0.5), (-1, 0.5)],
    [(-1, 0.6), (1, 0.6)],
    [(-1, 0.0), (1, 1.0)],
])
def test_custom_structural_errors(atoms):
    with pytest.raises(NoiseValidationError):
        custom_noise(atoms)


def test_no_silent_renormalization():
    with pytest.raises(NoiseValidationError, match="sum"):
        custom_noise([(-1, 0.5 + 1e-9), (1, 0.5)])


def test_config_parsing():
    assert noise_from_config({"kind": "binary", "b": 2.0}).b == 2.0
    spec = noise_from_config({"kind": "atoms", "atoms": [[-1, 0.5], [1, 0.5]]})
    assert spec.values == (-1.0, 1.0)
    with pytest.raises(NoiseValidationError):
        noise_from_config({"kind": "gaussian"})


def test_sample_reproducible():
    a = sample(binary_noise(1), stream(3, 0), 100)
    b = sample(binary_noise(1), stream(3, 0), 100)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {-1.0, 1.0}


def test_sample_moments_binary2():
    x = sample(binary_noise(2), stream(11, 0), 10**6)
    assert abs(x.mean()) < 4e-3
    assert abs(x.var() - 1) < 0.02


def test_sample_three_atoms():
    r = math.sqrt(2)
    spec = custom_noise([(-r, 0.25), (0, 0.5), (r, 0.25)])
    x = sample(spec, stream(1, 0), 10**5)
    assert set(np.unique(x)) <= set(spec.values)
    assert abs(np.mean(x == 0) - 0.5) < 0.01
