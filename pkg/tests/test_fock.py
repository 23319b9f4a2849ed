import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightcone.fock import (BasisError, SectorBasis, SectorSum, SpeciesSpec, apply_hop,
                            enumerate_sector, hop_operator, ladder_operator, loss_closure)
from oracles import brute_force_sector, jw_fermion_ops, restrict


def test_species_caps():
    assert SpeciesSpec("fermion").n_max == 1
    assert SpeciesSpec("hardcore").n_max == 1
    assert SpeciesSpec("boson").n_max is None
    with pytest.raises(BasisError):
        SpeciesSpec("fermion", 2)
    with pytest.raises(BasisError):
        SpeciesSpec("anyon")


def test_smallest_sector():
    b = enumerate_sector(2, "boson", 1)
    assert [b.unrank(i) for i in range(b.dim)] == [(0, 1), (1, 0)]
    assert b.rank((0, 1)) == 0 and b.rank((1, 0)) == 1


def test_boson_dimension_against_brute_force():
    b = enumerate_sector(12, "boson", 3)
    assert b.dim == comb(14, 3) == 364
    assert [b.unrank(i) for i in range(b.dim)] == brute_force_sector(12, 3, 3)


def test_round_trip_exhaustive():
    b = enumerate_sector(12, "boson", 3)
    for i in range(b.dim):
        assert b.rank(b.unrank(i)) == i


def test_fermion_dimension():
    b = enumerate_sector(4, "fermion", 2)
    assert b.dim == comb(4, 2) == 6
    assert [b.unrank(i) for i in range(6)] == brute_force_sector(4, 2, 1)


def test_capped_bosons():
    b = SectorBasis(4, SpeciesSpec("boson", 2), 5)
    assert [b.unrank(i) for i in range(b.dim)] == brute_force_sector(4, 5, 2)


def test_sector_errors():
    with pytest.raises(BasisError):
        enumerate_sector(3, "fermion", 4)
    with pytest.raises(BasisError):
        enumerate_sector(3, "boson", -1)
    b = enumerate_sector(2, "boson", 1)
    with pytest.raises(BasisError):
        b.rank((2, 0))
    with pytest.raises(BasisError):
        b.unrank(2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 5), st.sampled_from(["boson", "fermion", "hardcore"]))
def test_enumeration_matches_brute_force(L, N, stats):
    cap = N if stats == "boson" else 1
    if stats != "boson" and N > L:
        return
    b = enumerate_sector(L, stats, N)
    expect = brute_force_sector(L, N, cap)
    assert [b.unrank(i) for i in range(b.dim)] == expect
    assert b.dim == (comb(N + L - 1, N) if stats == "boson" else comb(L, N))
    np.testing.assert_array_equal(b.lookup(b.states), np.arange(b.dim))


def test_multi_species_row_major():
    b = SectorBasis(3, ["boson", "fermion"], [1, 1])
    assert b.dim == 9
    flat = [tuple(itertools.chain(*b.unrank(i))) for i in range(b.dim)]
    assert flat == sorted(flat)
    assert b.rank(((0, 0, 1), (1, 0, 0))) == 0 * 3 + 2


def test_sector_sum_lookup():
    s = loss_closure(3, "boson", [(2,)])
    assert s.sector_keys == [(0,), (1,), (2,)]
    assert s.dim == 1 + 3 + 6
    np.testing.assert_array_equal(s.lookup(s.states), np.arange(s.dim))
    assert s.is_loss_closed()
    assert not SectorSum(3, "boson", [(1,), (2,)]).is_loss_closed()


def test_apply_hop_bosons():
    b = enumerate_sector(2, "boson", 1)
    tgt, amp = apply_hop(b, 0, 1, b.rank((1, 0)))
    assert b.unrank(tgt) == (0, 1) and amp == 1.0
    b3 = enumerate_sector(2, "boson", 3)
    tgt, amp = apply_hop(b3, 0, 1, b3.rank((2, 1)))
    # b_1^dag b_0 |2,1> = sqrt(2) sqrt(2) |1,2>
    assert b3.unrank(tgt) == (1, 2) and amp == 2.0


def test_apply_hop_annihilates():
    b = enumerate_sector(3, "hardcore", 2)
    assert apply_hop(b, 0, 1, b.rank((1, 1, 0))) == (None, 0.0)
    assert apply_hop(b, 2, 1, b.rank((1, 1, 0))) == (None, 0.0)
    tgt, amp = apply_hop(b, 1, 2, b.rank((1, 1, 0)))
    assert b.unrank(tgt) == (1, 0, 1) and amp == 1.0
    with pytest.raises(BasisError):
        apply_hop(b, 0, 3, 0)


def _jw_hop(L, j, k):
    c = jw_fermion_ops(L)
    return c[k].T @ c[j]


def test_apply_hop_fermion_sign_against_jw_matrix():
    # c_1^dag c_2 |1,0,1>: no occupied mode strictly between sites 1 and 2
    b = enumerate_sector(3, "fermion", 2)
    tgt, amp = apply_hop(b, 2, 1, b.rank((1, 0, 1)))
    assert b.unrank(tgt) == (1, 1, 0)
    ref = restrict(_jw_hop(3, 2, 1), [b.unrank(i) for i in range(b.dim)], 2)
    assert amp == ref[tgt, b.rank((1, 0, 1))] == 1.0
    # a string sign does appear across an occupied site
    tgt, amp = apply_hop(b, 0, 2, b.rank((1, 1, 0)))
    assert b.unrank(tgt) == (0, 1, 1) and amp == -1.0


@pytest.mark.parametrize("L", [2, 3, 4])
def test_fermion_hops_match_full_jordan_wigner(L):
    for N in range(L + 1):
        b = enumerate_sector(L, "fermion", N)
        states = [b.unrank(i) for i in range(b.dim)]
        for j, k in itertools.permutations(range(L), 2):
            ours = hop_operator(b, j, k).toarray()
            np.testing.assert_array_equal(ours, restrict(_jw_hop(L, j, k), states, 2))


@pytest.mark.parametrize("stats, N", [("boson", 3), ("fermion", 2), ("hardcore", 2)])
def test_hop_adjoint_symmetry(stats, N):
    b = enumerate_sector(4, stats, N)
    for j, k in itertools.permutations(range(4), 2):
        fwd = hop_operator(b, j, k)
        back = hop_operator(b, k, j)
        assert (fwd.T - back).count_nonzero() == 0


def test_hop_never_leaves_sector():
    b = enumerate_sector(5, "boson", 3)
    for idx in range(b.dim):
        for j, k in itertools.permutations(range(5), 2):
            tgt, amp = apply_hop(b, j, k, idx)
            if tgt is not None:
                assert sum(b.unrank(tgt)) == 3


def test_ladder_operator_drops_out_of_basis():
    b = enumerate_sector(2, "boson", 1)
    m = ladder_operator(b, [(1.0, [(0, 0, 0, 1)])])
    assert m.nnz == 0
