import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import FIRST_ORDER, order2_chain
from psimix.errors import CapExceeded, InconsistentLambda
from psimix.mixing import psi_markov
from psimix.process import (
    CylinderLaw,
    all_words,
    binary_symmetric_chain,
    block_process,
    encode,
    iid_source,
    marginal_PT,
)
from psimix.simulate import (
    SlotFlags,
    SlotLaws,
    build_schedule,
    draw_flags,
    exact_simulated_law,
    generate_codebook,
    read_codebook,
    simulate_sequence,
    write_codebook,
)


def _positions(bounds):
    return [list(range(a, b + 1)) for a, b in bounds]


def test_schedule_examples():
    s = build_schedule(2, 1, 2)
    assert _positions(s.a_bounds) == [[1, 2], [4, 5]]
    assert _positions(s.b_bounds) == [[3], [6]]
    s = build_schedule(1, 0, 3)
    assert _positions(s.a_bounds) == [[1], [2], [3]]
    assert all(p == [] for p in _positions(s.b_bounds))
    s = build_schedule(3, 2, 1)
    assert _positions(s.a_bounds) == [[1, 2, 3]] and _positions(s.b_bounds) == [[4, 5]]


@pytest.mark.parametrize("T, tau, k", [(1, 0, 1), (2, 1, 3), (3, 2, 4), (4, 0, 2)])
def test_schedule_partitions_time(T, tau, k):
    s = build_schedule(T, tau, k)
    cells = sum(_positions(s.a_bounds) + _positions(s.b_bounds), [])
    assert sorted(cells) == list(range(1, s.n + 1))
    assert all(len(p) == T for p in _positions(s.a_bounds))
    assert all(len(p) == tau for p in _positions(s.b_bounds))
    # the slice helpers index the same cells (0-based)
    x = np.arange(1, s.n + 1)
    for i in range(1, k + 1):
        assert list(x[s.a_slice(i)]) == _positions(s.a_bounds)[i - 1]
        assert list(x[s.b_slice(i)]) == _positions(s.b_bounds)[i - 1]


def test_generation_order():
    order = build_schedule(2, 1, 4).generation_order()
    assert order == [("A", 1), ("A", 2), ("B", 1), ("A", 3), ("B", 2), ("A", 4), ("B", 3), ("B", 4)]
    assert build_schedule(2, 0, 3).generation_order() == [("A", 1), ("A", 2), ("A", 3)]


def test_flags_extremes():
    assert draw_flags(6, 0.0, 1).flags == (1,) * 6
    assert draw_flags(6, 1.0, 1).flags == (1,) + (0,) * 5


def test_flags_frequency():
    k = 10_000
    f = draw_flags(k, 0.4, 11)
    frac = np.mean(f.flags[1:])
    assert abs(frac - 0.6) <= 3 * np.sqrt(0.24 / k)
    assert f.flags[0] == 1
    assert draw_flags(50, 0.4, 11) == draw_flags(50, 0.4, 11)


def test_golden_sequence(p03):
    sched = build_schedule(2, 1, 2)
    flags = draw_flags(2, psi_markov(p03, 1), 2024)
    assert simulate_sequence(p03, sched, flags, 2024).tolist() == [0, 0, 0, 1, 0, 0]


def test_determinism_and_independent_codewords(p03):
    sched = build_schedule(2, 1, 6)
    flags = draw_flags(6, psi_markov(p03, 1), 5)
    a = simulate_sequence(p03, sched, flags, 5, codeword=3)
    assert np.array_equal(a, simulate_sequence(p03, sched, flags, 5, codeword=3))
    book = generate_codebook(p03, sched, flags, 8, 5)
    assert book.shape == (8, sched.n)
    assert np.array_equal(book[3], a)
    assert len({tuple(r) for r in book}) > 1
    assert np.array_equal(generate_codebook(p03, sched, flags, 1, 5)[0], book[0])


def test_inconsistent_lambda(p03):
    sched = build_schedule(2, 1, 2)
    with pytest.raises(InconsistentLambda):
        simulate_sequence(p03, sched, SlotFlags((1, 0), 0.3), 0)


@pytest.mark.parametrize("T, tau, k", [(2, 1, 2), (1, 1, 3), (3, 1, 1), (2, 0, 3), (1, 2, 2), (2, 2, 2), (1, 0, 6)])
def test_exact_law_equals_source(chain, T, tau, k):
    sched = build_schedule(T, tau, k)
    law = exact_simulated_law(chain, sched)
    assert law.tv(marginal_PT(chain, sched.n)) <= 1e-10


def test_exact_law_iid_is_product():
    s = iid_source([0.3, 0.7])
    law = exact_simulated_law(s, build_schedule(2, 1, 2))
    words = all_words(6, 2)
    product = np.prod(np.where(words == 1, 0.7, 0.3), axis=1)
    assert np.allclose(law.probabilities, product, atol=1e-15)


def test_exact_law_blocked_order2():
    z = block_process(order2_chain(), 2)
    sched = build_schedule(1, 1, 2)
    assert exact_simulated_law(z, sched).tv(marginal_PT(z, sched.n)) <= 1e-10


def test_exact_law_bad_slots_exercised():
    # forcing every later slot bad still averages to the source law once
    # residuals absorb the dependence; with lam = 1 the residual is the conditional
    s = binary_symmetric_chain(0.3)
    sched = build_schedule(2, 1, 2)
    law = exact_simulated_law(s, sched, SlotFlags((1, 0), 1.0), lam=1.0)
    assert law.tv(marginal_PT(s, 6)) <= 1e-10


def test_exact_law_cap(p03):
    with pytest.raises(CapExceeded):
        exact_simulated_law(p03, build_schedule(4, 4, 4), cap=2**10)


@pytest.mark.parametrize("flags", [(1, 1, 1), (1, 0, 1), (1, 1, 0)])
def test_good_slots_are_iid_window_draws(p03, flags):
    sched = build_schedule(2, 1, 3)
    f = SlotFlags(flags, psi_markov(p03, 1))
    law = exact_simulated_law(p03, sched, f)
    good = f.good_slots()
    cols = np.concatenate([np.arange(sched.n)[sched.a_slice(i)] for i in good])
    words = all_words(sched.n, 2)
    K = 2
    codes = np.array([encode(w, K) for w in words[:, cols]])
    marg = np.bincount(codes, weights=law.probabilities, minlength=K ** cols.size)
    pt = marginal_PT(p03, 2).probabilities
    product = pt
    for _ in good[1:]:
        product = np.kron(product, pt)
    assert 0.5 * np.abs(marg - product).sum() <= 1e-10


def test_fixed_flags_law_differs_from_source(p03):
    # conditioning on all-good flags breaks dependence across slots
    sched = build_schedule(1, 0, 2)
    law = exact_simulated_law(p03, sched, SlotFlags((1, 1), psi_markov(p03, 0)))
    assert np.allclose(law.probabilities, 0.25)


def test_monte_carlo_matches_exact_law(p03):
    sched = build_schedule(2, 1, 2)
    lam = psi_markov(p03, 1)
    laws = SlotLaws(p03, sched, lam)
    n_draws = 6000
    counts = np.zeros(2**sched.n)
    for j in range(n_draws):
        f = draw_flags(2, lam, 1000 + j)
        counts[encode(simulate_sequence(p03, sched, f, 1000 + j, laws=laws), 2)] += 1
    expected = marginal_PT(p03, sched.n).probabilities * n_draws
    assert chisquare(counts, expected).pvalue > 1e-3


def test_iid_codebook_frequencies():
    s = iid_source([0.25, 0.75])
    sched = build_schedule(1, 0, 1)
    book = generate_codebook(s, sched, draw_flags(1, 0.0, 3), 1000, 3)
    freq = book.mean()
    assert abs(freq - 0.75) <= 3 * np.sqrt(0.75 * 0.25 / 1000)


def test_codebook_file_roundtrip(tmp_path, p03):
    sched = build_schedule(2, 1, 3)
    flags = draw_flags(3, psi_markov(p03, 1), 9)
    book = generate_codebook(p03, sched, flags, 4, 9)
    path = tmp_path / "book.txt"
    write_codebook(path, p03, sched, flags, 9, book)
    text = path.read_bytes()
    assert b"\r" not in text and text.startswith(b"# T=2 tau=1 k=3 ")
    header, back = read_codebook(path, p03)
    assert np.array_equal(back, book)
    assert header["flags"] == "".join(map(str, flags.flags))
    assert float(header["lambda"]) == flags.lam
