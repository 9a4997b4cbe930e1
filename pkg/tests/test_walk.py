import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_product, east_step_path
from uptri import east, noise, walk
from uptri.errors import DimensionError, ParameterError
from uptri.gf2 import BitVec, FqVec


def vec(values, q):
    values = np.asarray(values) % q
    return BitVec.from_bits(values) if q == 2 else FqVec(values.size, q, values)


def entries(v):
    return v.bits() if isinstance(v, BitVec) else v.entries


fields = st.builds(lambda n, T, q, s: noise.sample(n, T, q=q, seed=s),
                   st.integers(2, 24), st.floats(0.0, 4.0), st.sampled_from([2, 3, 5]), st.integers(0, 10**6))


def test_hand_built_three_by_three():
    # ring row 2 then row 1 then row 1 again
    omega = noise.NoiseField.from_events(3, 3.0, [(0.5, 2, 1), (1.0, 1, 1), (2.0, 1, 0)])
    M = walk.evolve(walk.UnitUpperMatrix.identity(3), omega, 3.0).final
    assert M.data.tolist() == [[1, 1, 1], [0, 1, 1], [0, 0, 1]]


@given(fields, st.data())
def test_primal_map_is_the_elementary_product(omega, data):
    n, q = omega.n, omega.q
    y = data.draw(st.lists(st.integers(0, q - 1), min_size=n, max_size=n))
    P = dense_product(n, omega.events(), q)
    assert entries(walk.primal_map(omega, vec(y, q))).tolist() == ((P @ np.array(y)) % q).tolist()


@given(fields, st.data())
def test_adjoint_map_is_the_row_action(omega, data):
    n, q = omega.n, omega.q
    z = data.draw(st.lists(st.integers(0, q - 1), min_size=n, max_size=n))
    P = dense_product(n, omega.events(), q)
    assert entries(walk.adjoint_map(omega, vec(z, q))).tolist() == ((np.array(z) @ P) % q).tolist()


@given(fields, st.floats(0.0, 4.0))
def test_adjoint_map_equals_forward_run_on_reversed_noise(omega, t):
    t = min(t, omega.horizon)
    star = noise.adjoint(omega, t)
    rng = np.random.default_rng(0)
    Z = vec(rng.integers(0, omega.q, size=omega.n), omega.q)
    back = walk.adjoint_map(noise.restrict(omega, span=(0.0, t)), Z)
    # forward on the adjoint field: column operations in increasing adjoint time
    z = entries(Z).astype(np.int64).tolist()
    for _, x, c in star.events():
        z[x] = (z[x] + c * z[x - 1]) % omega.q
    assert entries(back).tolist() == z


@given(fields, st.data())
def test_evolve_matches_dense_product(omega, data):
    n, q = omega.n, omega.q
    M0 = walk.UnitUpperMatrix.uniform(n, np.random.default_rng(data.draw(st.integers(0, 99))), q=q)
    M = walk.evolve(M0, omega, omega.horizon, check=True).final
    P = dense_product(n, omega.events(), q)
    assert np.array_equal(M.data, (P @ M0.data.astype(np.int64)) % q)


def test_sample_times_and_t_zero():
    omega = noise.sample(6, 5.0, seed=1)
    M0 = walk.UnitUpperMatrix.identity(6)
    traj = walk.evolve(M0, omega, 5.0, samples=[0.0, 2.0, 4.0])
    assert traj.times.tolist() == [0.0, 2.0, 4.0, 5.0]
    assert traj.states[0] == walk.evolve(M0, omega, 0.0).final
    for s, st_ in zip(traj.times, traj.states):
        assert st_ == walk.evolve(M0, omega, float(s)).final
    assert walk.evolve(M0, noise.NoiseField.from_events(6, 1.0, []), 1.0).final == M0


def test_block_validation():
    with pytest.raises(ParameterError):
        walk.ColumnBlock(4, (3, 2))
    with pytest.raises(ParameterError):
        walk.ColumnBlock(4, (2,), data=np.zeros((4, 1)))
    with pytest.raises(DimensionError):
        walk.evolve(walk.ColumnBlock.identity(4, (4,)), noise.sample(5, 1.0), 1.0)


@given(st.integers(2, 20), st.integers(0, 10**6), st.sampled_from([2, 3]))
def test_column_is_an_east_process(n, seed, q):
    omega = noise.sample(n, 3.0, q=q, seed=seed)
    i = n
    traj = walk.evolve(walk.ColumnBlock.identity(n, [i], q=q), omega, 3.0, samples=omega.times)
    cn = walk.column_noise(omega, i)
    path = east.trajectory(east.EastState.zeros(i - 1, q=q), cn, omega.times)
    marg = walk.column_marginal(traj, i)
    assert np.array_equal(marg.values[:-1], path.values)
    # with i = n every ring acts on the column, so the naive run lines up ring by ring
    ref = east_step_path([0] * (i - 1), 1, cn.events(), q)
    assert [tuple(int(v) for v in row) for row in path.values] == ref


def test_discrete_driver():
    M0 = walk.UnitUpperMatrix.identity(8)
    traj = walk.evolve_discrete(M0, 500, seed=3, samples=[0, 100])
    assert traj.times.tolist() == [0.0, 100.0, 500.0]
    assert traj.states[0] == M0
    again = walk.evolve_discrete(M0, 500, seed=3)
    assert again.final == traj.final
    traj.final.check()


@given(st.integers(3, 16), st.integers(0, 10**6), st.sampled_from([2, 3]))
def test_linear_decomposition_reconstructs(n, seed, q):
    omega = noise.sample(n, 4.0, q=q, seed=seed)
    rng = np.random.default_rng(seed)
    i = int(rng.integers(1, n - 1))
    cols = [c for c in (n - 1, n) if c > i + 1] or [n]
    block = walk.ColumnBlock.uniform(n, cols, rng, q=q)
    dec = walk.decompose_column(omega, i, (1.0, 3.0), block, 4.0)
    truth = walk.evolve(block, omega, 4.0).final.column(n)
    assert dec.reconstruct() == truth


def test_span_certificate_edge_cases():
    omega = noise.sample(6, 3.0, seed=0)
    assert walk.span_certificate(omega, (2, 4), [], 3.0) == (False, False)
    with pytest.raises(ParameterError):
        walk.span_certificate(omega, (2, 4), [0.123456], 3.0)


def test_duality_helper_reports_nothing():
    assert walk.duality_check(12, 300, seed=5) == []


def test_monte_carlo_sampler_shape_and_validity():
    M0 = walk.ColumnBlock.identity(5, (4, 5))
    out = walk.sample_states(M0, [1.0, 2.0], runs=20, seed=0)
    assert out.shape == (20, 2, 5, 2)
    for s in out.reshape(-1, 5, 2):
        walk.ColumnBlock(5, (4, 5), data=s)
