"""Measurement and Gram matrix construction tests."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given
from hypothesis import strategies as st

from .error_handling import (
    ConfigError,
    DetectorErrorHandler,
    SingularGramError,
    UndefinedCoherenceError,
    UnsupportedDimensionError,
)
from .matrix_factory import (
    MatrixRecipe,
    SpectrumSpec,
    build_matrix,
    coherence,
    coherence_search,
    gen_gaussian,
    gen_kerdock,
    gen_partial_dft,
    generate_candidate,
    gram_from_spectrum,
    gram_gold,
    kerdock_order,
    load_matrix,
    random_orthogonal,
    subselect_columns,
    welch_bound,
)
from .storage import MatrixStore, write_matrix
from .theory_bounds import dft_coherence_bound
from . import matrix_factory


def _brute_coherence(values):
    gram = np.abs(values.conj().T @ values)
    np.fill_diagonal(gram, 0.0)
    return gram.max()


def test_kerdock_16_is_a_tight_frame_with_optimal_coherence():
    A = gen_kerdock(16)
    assert (A.M, A.N) == (16, 256)
    npt.assert_allclose(np.linalg.norm(A.values, axis=0), 1.0, atol=1e-12)
    npt.assert_allclose(A.values @ A.values.conj().T, 16 * np.eye(16), atol=1e-10)
    npt.assert_allclose(coherence(A), 0.25, atol=1e-12)
    npt.assert_allclose(welch_bound(16, 256), 0.24253562503633297, rtol=1e-12)


def test_kerdock_entries_are_quarter_turns():
    A = gen_kerdock(16)
    scaled = A.values * 4.0
    npt.assert_allclose(np.abs(scaled), 1.0, atol=1e-12)
    assert np.all(np.isclose(scaled.real, np.round(scaled.real)))
    assert np.all(np.isclose(scaled.imag, np.round(scaled.imag)))


def test_kerdock_bases_are_orthonormal():
    A = gen_kerdock(16).values
    for a in range(16):
        block = A[:, a * 16:(a + 1) * 16]
        npt.assert_allclose(block.conj().T @ block, np.eye(16), atol=1e-10)


def test_kerdock_column_subset_matches_subselection():
    subset = gen_kerdock(16, 32, seed=5)
    reference = subselect_columns(gen_kerdock(16), 32, seed=5)
    npt.assert_array_equal(subset.values, reference.values)
    assert coherence(subset) <= 0.25 + 1e-12


@pytest.mark.slow
def test_kerdock_64():
    A = gen_kerdock(64)
    npt.assert_allclose(coherence(A), 1 / 8, atol=1e-12)


@pytest.mark.parametrize("M", [2, 8, 32, 3])
def test_kerdock_unsupported_sizes(M):
    with pytest.raises(UnsupportedDimensionError):
        kerdock_order(M)


def test_partial_dft_rows_and_unitary_limit():
    A = gen_partial_dft(100, 100, seed=3)
    npt.assert_allclose(A.values.conj().T @ A.values, np.eye(100), atol=1e-10)
    assert coherence(A) < 1e-10

    B = gen_partial_dft(18, 100, seed=3, index=2)
    npt.assert_allclose(np.linalg.norm(B.values, axis=0), 1.0, atol=1e-12)
    assert np.allclose(B.values[:, 0], 1 / np.sqrt(18))


@given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10 ** 6))
def test_coherence_respects_welch_bound(M, seed):
    N = 3 * M
    for A in (gen_gaussian(M, N, seed), gen_partial_dft(M, N, seed)):
        mu = coherence(A)
        assert welch_bound(M, N) - 1e-12 <= mu <= 1.0


def test_blockwise_coherence_matches_brute_force():
    A = gen_gaussian(4, 2100, seed=9)
    npt.assert_allclose(coherence(A), _brute_coherence(A.values), rtol=1e-12)


def test_coherence_needs_two_columns():
    with pytest.raises(UndefinedCoherenceError):
        coherence(np.ones((3, 1)) / np.sqrt(3))


def test_gaussian_candidates_have_independent_streams():
    a = gen_gaussian(5, 20, seed=1, index=0).values
    npt.assert_array_equal(a, gen_gaussian(5, 20, seed=1, index=0).values)
    assert not np.array_equal(a, gen_gaussian(5, 20, seed=1, index=1).values)


def test_min_coherence_search_keeps_earliest_best():
    recipe = MatrixRecipe("partial-dft", 9, 100, seed=4, search_count=12)
    result = coherence_search(recipe)
    assert result.best_coherence == min(result.coherences)
    assert result.best_index == result.coherences.index(min(result.coherences))
    npt.assert_array_equal(result.best.values, generate_candidate(recipe, result.best_index).values)
    npt.assert_array_equal(build_matrix(recipe).values, result.best.values)


def test_min_coherence_search_is_worker_independent():
    recipe = MatrixRecipe("gaussian", 5, 40, seed=2, search_count=12)
    serial = coherence_search(recipe, workers=1)
    parallel = coherence_search(recipe, workers=2)
    assert serial.coherences == parallel.coherences
    assert serial.best_index == parallel.best_index


def test_recipe_validation():
    with pytest.raises(ConfigError):
        MatrixRecipe("partial-dft", 20, 10)
    with pytest.raises(ConfigError):
        MatrixRecipe("kerdock", 16, 300)
    with pytest.raises(UnsupportedDimensionError):
        MatrixRecipe("kerdock", 8, 32)
    with pytest.raises(ConfigError):
        MatrixRecipe("hadamard", 4, 8)


def test_load_matrix_normalization(tmp_path):
    path = write_matrix(tmp_path / "a.mat", np.array([[3.0, 0.0], [4.0, 2.0]]))
    with pytest.raises(ConfigError):
        load_matrix(path)
    A = load_matrix(path, normalize=True)
    npt.assert_allclose(A.values, [[0.6, 0.0], [0.8, 1.0]])


def test_gold_gram_limits():
    assert gram_gold(1023, L=1023).N == 1023
    # (L+1-N)/L is the smallest eigenvalue, so N = L+1 is singular
    with pytest.raises(SingularGramError):
        gram_gold(1024, L=1023)
    with pytest.raises(UnsupportedDimensionError):
        gram_gold(1026, L=1023)


def test_spectrum_gram():
    spec = SpectrumSpec.linear(100, 400, seed=1)
    G = gram_from_spectrum(spec)
    npt.assert_allclose(np.linalg.eigvalsh(G.values), np.arange(1, 101) / 400, atol=1e-12)
    npt.assert_allclose(G.lambda_max_inv, 400.0, rtol=1e-9)
    U = random_orthogonal(6, seed=2)
    npt.assert_allclose(U.T @ U, np.eye(6), atol=1e-12)


def test_welch_bound_edge_cases():
    assert welch_bound(8, 8) == 0.0
    assert welch_bound(8, 4) == 0.0
    with pytest.raises(ConfigError):
        welch_bound(0, 4)


@pytest.mark.parametrize("c", [1.0, 2.0])
def test_partial_dft_coherence_bound_holds_often_enough(c):
    bound, floor = dft_coherence_bound(48, 128, c)
    within = [coherence(gen_partial_dft(48, 128, seed=i)) <= bound for i in range(1000)]
    assert np.mean(within) >= floor


def test_build_matrix_saves_search_winner(tmp_path, monkeypatch):
    store = MatrixStore(tmp_path / "store")
    recipe = MatrixRecipe("partial-dft", 9, 100, seed=4, search_count=12)
    A = build_matrix(recipe, store=store)
    assert store.keys() == ["partial-dft-9x100-seed4-search12"]
    meta = store.metadata("partial-dft-9x100-seed4-search12")
    npt.assert_allclose(meta["mu"], A.coherence)
    assert meta["search_count"] == 12

    def no_search(*args, **kwargs):
        raise AssertionError("search ran again")

    monkeypatch.setattr(matrix_factory, "search_min_coherence", no_search)
    again = build_matrix(recipe, store=MatrixStore(tmp_path / "store"))
    npt.assert_allclose(again.values, A.values, atol=1e-15)
    assert again.kind == "partial-dft"


def test_build_matrix_keys_differ_by_recipe(tmp_path):
    store = MatrixStore(tmp_path)
    build_matrix(MatrixRecipe("gaussian", 4, 8, seed=1), store=store)
    build_matrix(MatrixRecipe("gaussian", 4, 8, seed=2), store=store)
    assert len(store.keys()) == 2


def test_error_handler_tallies_failures():
    handler = DetectorErrorHandler("rdd")

    def fail():
        raise ConfigError("bad K")

    assert handler.wrap(fail, {"trial": 3}) is None
    assert handler.wrap(lambda: 5) == 5
    assert handler.stats() == {"ConfigError": 1}
    assert handler.total_failures == 1
