import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ordfri.data import DataError, Dataset, LupiDataset, Relevance
from ordfri.datagen import (GenSpec, LupiMode, generate, generate_lupi_clean, generate_lupi_noise_priv,
                            generate_semantic_scenario, preset, preset_names)

TABLE = {"set1": (150, 6, 0, 6), "set2": (150, 0, 6, 6), "set3": (150, 3, 4, 3),
         "set4": (256, 6, 6, 6), "set5": (512, 1, 2, 11)}


@pytest.mark.parametrize("name", sorted(TABLE))
def test_regular_presets_shapes_and_truth(name):
    m, s, w, i = TABLE[name]
    data, truth = generate(preset(name, seed=3))
    assert isinstance(data, Dataset)
    assert (data.m, data.n, data.l) == (m, s + w + i, 5)
    assert truth.regular == (Relevance.STRONG,) * s + (Relevance.WEAK,) * w + (Relevance.IRRELEVANT,) * i
    assert np.allclose(data.X.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(data.X.std(axis=0), 1.0)


def test_all_presets_generate():
    for name in preset_names():
        data, truth = generate(preset(name, seed=0))
        assert len(truth.regular) == data.n
        if isinstance(data, LupiDataset):
            assert len(truth.privileged) == data.n_star


@given(st.integers(0, 2 ** 31), st.floats(0.0, 2.0))
@settings(max_examples=10)
def test_generation_is_deterministic(seed, sigma):
    a, _ = generate(preset("set3", seed, sigma))
    b, _ = generate(preset("set3", seed, sigma))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    c, _ = generate(preset("set3", seed + 1, sigma))
    assert not np.array_equal(a.X, c.X)


@pytest.mark.parametrize("name", ["set1", "set4", "set5"])
def test_bins_equal_frequency(name):
    data, _ = generate(preset(name, seed=1))
    counts = data.bin_counts
    assert counts.max() - counts.min() <= 1


def test_weak_columns_are_exact_substitutes():
    data, truth = generate(preset("set3", seed=4))
    weak = [j for j, t in enumerate(truth.regular) if t is Relevance.WEAK]
    corr = np.corrcoef(data.X[:, weak].T)
    # groups are pairs; members of a pair are perfectly correlated
    for a in range(0, len(weak), 2):
        assert abs(corr[a, a + 1]) == pytest.approx(1.0, abs=1e-12)
    assert abs(corr[0, 2]) < 0.5


def test_odd_weak_count_forms_a_triple():
    data, truth = generate(GenSpec(100, 1, 3, 0, seed=0))
    corr = np.corrcoef(data.X[:, 1:].T)
    assert np.allclose(np.abs(corr), 1.0)


def test_noise_perturbs_features_not_labels():
    clean, _ = generate(preset("set1", seed=5))
    noisy, _ = generate(preset("set1", seed=5, noise_sigma=0.5))
    assert np.array_equal(clean.y, noisy.y)
    assert not np.allclose(clean.X[:, :6], noisy.X[:, :6])
    assert np.array_equal(clean.X[:, 6:], noisy.X[:, 6:])


def test_lupi_clean_correlation():
    data, truth = generate(preset("lupi-set1", seed=0))
    assert data.n == data.n_star == 9
    assert truth.privileged == truth.regular
    r = [np.corrcoef(data.X[:, j], data.X_star[:, j])[0, 1] for j in range(data.n)]
    assert np.mean(r) == pytest.approx(1 / np.sqrt(2), abs=0.05)


def test_lupi_noise_privileged_block():
    data, truth = generate(preset("lupi-set7", seed=0))
    assert data.n_star == 3 and set(truth.privileged) == {Relevance.IRRELEVANT}
    assert np.allclose(data.X_star.std(axis=0), 1.0)
    assert max(abs(np.corrcoef(data.X_star[:, k], data.y)[0, 1]) for k in range(3)) < 0.3


def test_semantic_scenario_structure():
    data, truth = generate_semantic_scenario(0)
    assert (data.m, data.n, data.n_star, data.l) == (400, 6, 3, 5)
    for g in range(3):
        outside = np.ones(400, bool)
        outside[g * 100:(g + 1) * 100] = False
        assert np.all(data.X_star[outside, g] == 0.0)
        assert np.mean(data.X_star[:, g] ** 2) == pytest.approx(1.0)
    assert truth.regular == (Relevance.STRONG,) * 3 + (Relevance.IRRELEVANT,) * 3
    assert truth.privileged == (Relevance.STRONG,) * 3


def test_spec_validation():
    with pytest.raises(DataError, match="unknown preset"):
        preset("set99")
    with pytest.raises(DataError):
        GenSpec(100, 1, 1, 0)
    with pytest.raises(DataError):
        GenSpec(100, 0, 0, 5)
    with pytest.raises(DataError):
        GenSpec(3, 1, 0, 0)
    with pytest.raises(DataError):
        GenSpec(100, 1, 0, 0, noise_sigma=-1)
    with pytest.raises(DataError):
        generate_lupi_clean(GenSpec(100, 1, 0, 0))
    with pytest.raises(DataError):
        generate_lupi_noise_priv(GenSpec(100, 1, 0, 0, lupi_mode=LupiMode.NOISE))


def test_spec_json():
    d = preset("lupi-set7", seed=2).to_json()
    assert d["lupi_mode"] == "noise" and d["n_priv_irrelevant"] == 3 and d["seed"] == 2
