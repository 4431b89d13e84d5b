"""Randomized invariants driven by hypothesis-chosen seeds and sizes."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import markov_cov, rel_frobenius

from cmseq.analysis import (
    assemble_precision,
    classify_sequence,
    covariance_split_residual,
    markov_joint_covariance,
    model_covariance,
)
from cmseq.blockmat import BlockMatrix, structure_classify
from cmseq.models import (
    check_markov_condition,
    check_reciprocal_condition,
    random_cml_model,
    random_cml_window_model,
    random_cmf_model,
    random_markov_model,
)
from cmseq.transforms import (
    classify_representation,
    construct_from_representation,
    decompose_to_representation,
    induce_cml_from_markov,
    markov_matching_boundary,
    recover_markov_from_reciprocal_cml,
)

seeds = st.integers(0, 2**32 - 1)
horizons = st.integers(3, 10)
dims = st.integers(1, 3)
fast = settings(max_examples=25, deadline=None)


@fast
@given(seeds, st.integers(2, 8), dims)
def test_cyclic_iff_both_forms(seed, N, d):
    rng = np.random.default_rng(seed)
    n = (N + 1) * d
    a = rng.standard_normal((n, n))
    J = a @ a.T + n * np.eye(n)
    # sparsify a random subset of off-band blocks so every pattern occurs
    for i in range(N + 1):
        for j in range(i + 2, N + 1):
            if rng.random() < 0.7:
                J[i * d:(i + 1) * d, j * d:(j + 1) * d] = 0
                J[j * d:(j + 1) * d, i * d:(i + 1) * d] = 0
    r = structure_classify(BlockMatrix(J, d, symmetric=True))
    assert r.is_cyclic_tridiagonal == (r.is_cml_form and r.is_cmf_form)
    assert (not r.is_tridiagonal) or r.is_cyclic_tridiagonal


@fast
@given(seeds, horizons, dims)
def test_induced_is_reciprocal(seed, N, d):
    m = induce_cml_from_markov(random_markov_model(np.random.default_rng(seed), N, d))
    assert check_reciprocal_condition(m).max_relative <= 1e-9


@fast
@given(seeds, horizons, dims)
def test_markov_round_trip(seed, N, d):
    mk = random_markov_model(np.random.default_rng(seed), N, d)
    m = induce_cml_from_markov(mk).with_boundary(markov_matching_boundary(mk))
    back = recover_markov_from_reciprocal_cml(m)
    assert rel_frobenius(markov_joint_covariance(back).data, markov_cov(mk)) <= 1e-8


@fast
@given(seeds, horizons, dims, st.sampled_from("LF"))
def test_representation_identity(seed, N, d, direction):
    rng = np.random.default_rng(seed)
    m = random_cml_model(rng, N, d) if direction == "L" else random_cmf_model(rng, N, d)
    r = decompose_to_representation(m)
    assert covariance_split_residual(model_covariance(m), r) <= 1e-10
    again = construct_from_representation(r)
    for k in m.coupling:
        assert np.max(np.abs(again.coupling_at(k) - m.coupling_at(k))) <= 1e-12


@fast
@given(seeds, horizons, dims, st.integers(0, 2))
def test_classification_coherence(seed, N, d, variant):
    rng = np.random.default_rng(seed)
    if variant == 0:
        m = random_cml_model(rng, N, d)
    elif variant == 1:
        m = random_cml_window_model(rng, N, d, 0)
    else:
        mk = random_markov_model(rng, N, d)
        m = induce_cml_from_markov(mk).with_boundary(markov_matching_boundary(mk))
    label = classify_representation(decompose_to_representation(m))
    assert (label == "markov") == bool(check_markov_condition(m))
    assert (label != "general_cm") == bool(check_reciprocal_condition(m))


@fast
@given(seeds, st.integers(3, 8), st.integers(1, 2))
def test_windows_consistency(seed, N, d):
    rng = np.random.default_rng(seed)
    for m in (random_cml_model(rng, N, d), random_cml_window_model(rng, N, d, int(rng.integers(0, N)))):
        c = classify_sequence(model_covariance(m))
        assert c.windows_consistent
        assert (not c.is_markov) or c.is_reciprocal
        assert (not c.is_reciprocal) or (c.is_cml and c.is_cmf)


@fast
@given(seeds, st.integers(3, 8), dims)
def test_precision_inverse_is_covariance(seed, N, d):
    m = random_cmf_model(np.random.default_rng(seed), N, d)
    J = assemble_precision(m).data
    C = model_covariance(m).data
    assert np.max(np.abs(J @ C - np.eye(len(C)))) <= 1e-8 * np.linalg.cond(C)
