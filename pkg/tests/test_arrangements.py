import numpy as np
import pytest

from src.core.arrangements import (ActivationPattern, ArrangementSet, adaptive_flip, enumerate_exact,
                                   harvest_patterns, region_count_bound, sample_patterns, validate_witness)
from src.core.errors import ShapeError
from src.core.network import TwoLayerReLUNet
from tests.oracles import angular_sweep_patterns


@pytest.mark.parametrize("n,r,expected", [(5, 2, 10), (6, 3, 32), (1, 1, 2)])
def test_region_count_bound(n, r, expected):
    assert region_count_bound(n, r) == expected


def test_region_count_bound_rejects_rank_above_n():
    with pytest.raises(ShapeError):
        region_count_bound(3, 4)


def test_pattern_string_roundtrip():
    pattern = ActivationPattern.from_string("10110")
    assert pattern.to_string() == "10110"
    assert np.array_equal(pattern.signs, [1, -1, 1, 1, -1])
    with pytest.raises(ShapeError):
        ActivationPattern.from_string("10a")


def test_enumerate_toy_matrix(toy_data):
    X, _ = toy_data
    patterns = enumerate_exact(X)
    assert len(patterns) == 10
    assert patterns.exact
    assert patterns.validate(X)
    found = {p.mask for p in patterns.patterns}
    assert found == angular_sweep_patterns(X)


def test_enumerate_single_row():
    patterns = enumerate_exact(np.array([[1.0]]))
    assert {p.mask for p in patterns.patterns} == {(True,), (False,)}


def test_enumerate_general_position(general_position):
    X = general_position(6, 3, seed=7)
    patterns = enumerate_exact(X)
    assert len(patterns) == region_count_bound(6, 3) == 32
    assert patterns.validate(X)

    # every direction lands in some enumerated region
    U = np.random.default_rng(0).standard_normal((3, 20000))
    sampled = {tuple(bool(b) for b in col) for col in (X @ U >= 0).T}
    assert sampled <= {p.mask for p in patterns.patterns}


@pytest.mark.parametrize("n, d, seed", [(5, 2, 0), (6, 3, 1), (7, 3, 2), (8, 2, 3)])
def test_enumerate_commutes_with_row_permutation(general_position, n, d, seed):
    X = general_position(n, d, seed)
    perm = np.random.default_rng(seed).permutation(n)
    original = {p.mask for p in enumerate_exact(X).patterns}
    permuted = enumerate_exact(X[perm])
    # row k of the permuted data is row perm[k] of the original
    assert {tuple(mask[i] for i in perm) for mask in original} == {p.mask for p in permuted.patterns}
    assert permuted.validate(X[perm])


@pytest.mark.parametrize("n, d, seed", [(5, 2, 0), (6, 3, 1), (7, 3, 2), (8, 2, 3)])
def test_enumerate_ignores_positive_row_scaling(general_position, n, d, seed):
    X = general_position(n, d, seed)
    scales = np.random.default_rng(seed + 10).uniform(0.2, 5.0, n)
    original = enumerate_exact(X)
    scaled = enumerate_exact(scales[:, None] * X)
    assert {p.mask for p in scaled.patterns} == {p.mask for p in original.patterns}
    assert len(scaled) == len(original)
    assert scaled.validate(scales[:, None] * X)


def test_enumerate_rank_deficient():
    # columns are colinear, so this is a 1-D arrangement of 4 hyperplanes
    x = np.array([1.0, -2.0, 3.0, 0.5])
    X = np.column_stack([x, 2 * x, -x])
    patterns = enumerate_exact(X)
    assert len(patterns) == 2
    assert patterns.validate(X)


def test_sample_patterns(toy_data):
    X, _ = toy_data
    single = sample_patterns(X, 1, seed=3)
    assert len(single) == 1
    assert single.validate(X)

    many = sample_patterns(X, 1000, seed=3)
    assert {p.mask for p in many.patterns} == {p.mask for p in enumerate_exact(X).patterns}
    assert not many.exact


def test_sample_patterns_deterministic(toy_data):
    X, _ = toy_data
    assert sample_patterns(X, 20, seed=5).to_dict() == sample_patterns(X, 20, seed=5).to_dict()


def test_harvest_patterns(toy_data):
    X, _ = toy_data
    net = TwoLayerReLUNet(np.array([[1.0], [0.0]]), np.array([1.0]))
    assert harvest_patterns(X, net).patterns[0].to_string() == "00111"

    twin = TwoLayerReLUNet(np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([1.0, -2.0]))
    assert len(harvest_patterns(X, twin)) == 1

    dead = TwoLayerReLUNet(np.zeros((2, 1)), np.array([1.0]))
    assert harvest_patterns(X, dead).patterns[0].to_string() == "11111"


def test_adaptive_flip(toy_data):
    X, _ = toy_data
    net = TwoLayerReLUNet(np.array([[1.0, -0.3], [0.2, 1.0]]), np.array([1.0, -1.0]))
    base = harvest_patterns(X, net)

    # k = floor(0.1 * 5) = 0 flips nothing
    assert adaptive_flip(X, net, 0.1).to_dict()["patterns"] == base.to_dict()["patterns"]

    flipped = adaptive_flip(X, net, 0.4)
    assert {p.mask for p in base.patterns} <= {p.mask for p in flipped.patterns}
    assert flipped.validate(X)
    assert len(flipped) > len(base)


@pytest.mark.parametrize("quantile", [0.0, 1.0, -0.5])
def test_adaptive_flip_rejects_quantile(toy_data, quantile):
    X, _ = toy_data
    net = TwoLayerReLUNet(np.ones((2, 1)), np.ones(1))
    with pytest.raises(ShapeError):
        adaptive_flip(X, net, quantile)


def test_arrangement_set_add_and_union(toy_data):
    X, _ = toy_data
    patterns = enumerate_exact(X)
    half = patterns.subset(range(5))
    assert not half.exact
    merged = half.union(patterns.subset(range(3, 10)))
    assert len(merged) == 10
    assert not merged.add(patterns.patterns[0], patterns.witnesses[0])
    with pytest.raises(ShapeError):
        merged.add(ActivationPattern.from_string("101"), np.zeros(2))


def test_arrangement_json_roundtrip(toy_data):
    X, _ = toy_data
    patterns = enumerate_exact(X)
    restored = ArrangementSet.from_dict(patterns.to_dict())
    assert restored.to_dict() == patterns.to_dict()
    assert restored.validate(X)


def test_validate_witness_detects_wrong_sign(toy_data):
    X, _ = toy_data
    pattern = ActivationPattern.from_string("00111")
    assert validate_witness(X, pattern, np.array([1.0, 0.0]))
    assert not validate_witness(X, pattern, np.array([-1.0, 0.0]))
