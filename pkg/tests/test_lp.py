import numpy as np
import pytest

from concolic_dnn.logic import gen_nbc, gen_nc, gen_ssc
from concolic_dnn.lp import (
    EPS_STRICT,
    EncodingError,
    add_chebyshev_objective,
    apply_nbc_branch,
    encode_pattern,
    lp_text,
    nbc_constraint,
    nc_target_pattern,
    solve,
    ssc_target_pattern,
    symbolic_lp,
)
from concolic_dnn.network import ActivationPattern, Dense, Network, forward, pattern_of
from concolic_dnn.simplex import solve_lp

from conftest import dense_net, identity_net


def check_bits(net, pattern, x, margin=EPS_STRICT / 2):
    """Re-run the LP solution concretely and check every constrained bit holds
    with the expected margin."""
    acts = forward(net, x)
    for (k, i), bit in pattern.bits.items():
        u = acts.u_flat(k)[i]
        assert (u >= 0) == bit, f"bit ({k},{i}) flipped: u={u} expected {bit}"
        assert abs(u) >= margin, f"bit ({k},{i}) margin too small: {u}"


class TestEncodePattern:
    def test_row_counts_single_hidden_layer(self):
        net = identity_net(2)
        pattern = ActivationPattern({(2, 0): True, (2, 1): False})
        p = encode_pattern(net, pattern, 2)
        # 2 affine rows + 2 v-definition rows; 2 sign inequalities; [0,1] box
        assert len(p.eq_rows) == 4
        assert len(p.ub_rows) == 2
        assert p.lower[: len(p.x_vars)] == [0.0, 0.0]
        assert p.upper[: len(p.x_vars)] == [1.0, 1.0]

    def test_all_true_identity_layer_feasible_region(self):
        net = identity_net(2)
        pattern = ActivationPattern({(2, 0): True, (2, 1): True})
        p = encode_pattern(net, pattern, 2)
        add_chebyshev_objective(p, np.zeros(2))
        out = solve(p)
        assert out.status == "optimal"
        x = [out.values[i] for i in p.x_vars]
        assert x == pytest.approx([EPS_STRICT, EPS_STRICT], abs=1e-9)

    def test_missing_neuron_below_top_rejected(self):
        net = dense_net([2, 3, 3, 2], seed=0)
        pattern = ActivationPattern({(2, 0): True, (2, 1): True, (3, 0): True})
        with pytest.raises(EncodingError):
            encode_pattern(net, pattern, 3)  # (2, 2) missing below the top layer

    def test_partial_top_layer_allowed(self):
        net = dense_net([2, 3, 3, 2], seed=0)
        src = pattern_of(forward(net, np.array([0.4, 0.6])))
        bits = {pos: val for pos, val in src.bits.items() if pos[0] == 2}
        bits[(3, 1)] = True
        p = encode_pattern(net, ActivationPattern(bits), 3)
        assert (3, 0) not in p.u_vars and (3, 2) not in p.u_vars
        assert (3, 1) in p.u_vars

    def test_solution_reproduces_bits(self):
        net = dense_net([3, 6, 4, 2], seed=1)
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(40):
            x = rng.uniform(0, 1, 3)
            src = pattern_of(forward(net, x))
            target, k_star = nc_target_pattern(src, (3, int(rng.integers(0, 4))))
            p = encode_pattern(net, target, k_star)
            add_chebyshev_objective(p, x)
            out = solve(p)
            if out.status != "optimal":
                continue
            sol = np.array([out.values[i] for i in p.x_vars])
            check_bits(net, target, sol)
            checked += 1
        assert checked >= 10


class TestChebyshevObjective:
    def test_anchor_inside_region_costs_zero(self):
        net = dense_net([2, 4, 2], seed=3)
        x = np.array([0.3, 0.8])
        src = pattern_of(forward(net, x))
        # margins at the anchor must clear the strictness slack for d = 0
        assert all(abs(u) > EPS_STRICT for u in forward(net, x).u_flat(2))
        p = encode_pattern(net, src, 2)
        add_chebyshev_objective(p, x)
        out = solve(p)
        assert out.status == "optimal"
        assert out.objective == pytest.approx(0.0, abs=1e-9)

    def test_one_dimensional_analytic_optimum(self):
        # hidden neuron u = x0 - 0.5; requiring activation forces x0 >= 0.5 (+ slack)
        net = Network(
            (1,),
            [
                Dense(np.array([[1.0]]), np.array([-0.5]), relu=True),
                Dense(np.array([[1.0, -1.0]]), np.zeros(2), relu=False),
            ],
        )
        pattern = ActivationPattern({(2, 0): True})
        p = encode_pattern(net, pattern, 2)
        add_chebyshev_objective(p, np.array([0.3]))
        out = solve(p)
        assert out.status == "optimal"
        assert out.objective == pytest.approx(0.2, abs=1e-5)
        assert out.values[p.x_vars[0]] == pytest.approx(0.5, abs=1e-5)

    def test_distance_row_count(self):
        net = dense_net([4, 5, 2], seed=4)
        src = pattern_of(forward(net, np.full(4, 0.5)))
        p = encode_pattern(net, src, 2)
        before = len(p.ub_rows)
        add_chebyshev_objective(p, np.full(4, 0.5))
        assert len(p.ub_rows) - before == 2 * 4

    def test_anchor_dimension_checked(self):
        net = dense_net([4, 5, 2], seed=4)
        src = pattern_of(forward(net, np.full(4, 0.5)))
        p = encode_pattern(net, src, 2)
        with pytest.raises(EncodingError):
            add_chebyshev_objective(p, np.zeros(3))


class TestTargetPatterns:
    def test_nc_negates_target_and_freezes_below(self, mid_net):
        x = np.random.default_rng(5).uniform(0, 1, 4)
        src = pattern_of(forward(mid_net, x))
        target, k_star = nc_target_pattern(src, (3, 2))
        assert k_star == 3
        assert target[(3, 2)] == (not src[(3, 2)])
        for (k, i), val in target.bits.items():
            if (k, i) != (3, 2):
                assert k < 3 and val == src[(k, i)]
        assert all(pos[0] <= 3 for pos in target.bits)
        assert (3, 0) not in target

    def test_ssc_negates_pair_freezes_rest(self, mid_net):
        x = np.random.default_rng(6).uniform(0, 1, 4)
        src = pattern_of(forward(mid_net, x))
        target, k_star = ssc_target_pattern(src, (2, 1), (3, 0))
        assert k_star == 3
        assert target[(2, 1)] == (not src[(2, 1)])
        assert target[(3, 0)] == (not src[(3, 0)])
        frozen = [i for i in range(8) if i != 1]
        for i in frozen:
            assert target[(2, i)] == src[(2, i)]
        assert all(pos == (3, 0) for pos in target.bits if pos[0] == 3)

    def test_ssc_pair_must_be_adjacent(self, mid_net):
        src = pattern_of(forward(mid_net, np.full(4, 0.5)))
        with pytest.raises(EncodingError):
            ssc_target_pattern(src, (2, 0), (4, 0))


class TestNbcBranch:
    def one_dim_net(self):
        return Network(
            (1,),
            [
                Dense(np.array([[1.0]]), np.zeros(1), relu=True),
                Dense(np.array([[1.0, -1.0]]), np.zeros(2), relu=False),
            ],
        )

    def test_closer_to_high_bound(self):
        net = self.one_dim_net()
        acts = forward(net, np.array([0.9]))
        branch = nbc_constraint(acts, (2, 0), 1.0, -1.0)
        assert branch.side == "hi"
        assert branch.threshold == pytest.approx(1.0 + EPS_STRICT)

    def test_equidistant_takes_low_branch(self):
        net = self.one_dim_net()
        acts = forward(net, np.array([0.0]))  # u = 0 = (h + l) / 2
        branch = nbc_constraint(acts, (2, 0), 1.0, -1.0)
        assert branch.side == "lo"

    def test_solution_crosses_bound(self):
        net = dense_net([3, 6, 2], seed=7)
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 1, 3)
        acts = forward(net, x)
        k, i = 2, 1
        u = acts.u_flat(2)[i]
        high, low = u + 0.05, u - 5.0  # high bound close above the current value
        branch = nbc_constraint(acts, (k, i), high, low)
        assert branch.side == "hi"
        p = encode_pattern(net, pattern_of(acts), net.num_layers - 1)
        apply_nbc_branch(p, branch)
        add_chebyshev_objective(p, x)
        out = solve(p)
        assert out.status == "optimal"
        sol = np.array([out.values[j] for j in p.x_vars])
        assert forward(net, sol).u_flat(k)[i] >= high


class TestSymbolicLp:
    def test_nc_flip_verified_by_forward(self, mid_net):
        rng = np.random.default_rng(9)
        x = rng.uniform(0, 1, 4)
        src = pattern_of(forward(mid_net, x))
        flipped = 0
        for r in gen_nc(mid_net):
            if src[(r.tag.layer, r.tag.neuron)]:
                continue  # already activated
            t_new = symbolic_lp(mid_net, x, r)
            if t_new is None:
                continue
            assert forward(mid_net, t_new).u_flat(r.tag.layer)[r.tag.neuron] >= 0
            flipped += 1
        assert flipped >= 1

    def test_dead_neuron_infeasible(self):
        w = np.array([[0.5], [-0.25]])
        dead_bias = -(np.abs(w).sum() + 1.0)
        net = Network(
            (2,),
            [
                Dense(w, np.array([dead_bias]), relu=True),
                Dense(np.array([[1.0, -1.0]]), np.zeros(2), relu=False),
            ],
        )
        r = gen_nc(net)[0]
        assert symbolic_lp(net, np.array([0.5, 0.5]), r) is None

    def test_distance_equals_objective(self, mid_net):
        rng = np.random.default_rng(10)
        x = rng.uniform(0, 1, 4)
        src = pattern_of(forward(mid_net, x))
        r = next(q for q in gen_nc(mid_net) if not src[(q.tag.layer, q.tag.neuron)])
        target, k_star = nc_target_pattern(src, (r.tag.layer, r.tag.neuron))
        p = encode_pattern(mid_net, target, k_star)
        add_chebyshev_objective(p, x)
        out = solve(p)
        assert out.status == "optimal"
        sol = np.array([out.values[j] for j in p.x_vars])
        assert np.max(np.abs(sol - x)) == pytest.approx(out.objective, abs=1e-7)

    def test_ssc_flips_exactly_the_pair(self, mid_net):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, 4)
        src = pattern_of(forward(mid_net, x))
        done = 0
        for r in gen_ssc(mid_net)[:40]:
            t_new = symbolic_lp(mid_net, x, r)
            if t_new is None:
                continue
            new_pat = pattern_of(forward(mid_net, t_new))
            k, i, j = r.tag.layer, r.tag.cond, r.tag.decision
            assert new_pat[(k, i)] != src[(k, i)]
            assert new_pat[(k + 1, j)] != src[(k + 1, j)]
            for l in range(mid_net.width(k)):
                if l != i:
                    assert new_pat[(k, l)] == src[(k, l)]
            done += 1
        assert done >= 3

    def test_nbc_synthesis_crosses_bound(self, mid_net):
        from concolic_dnn.engine import nbc_bounds_from_samples

        rng = np.random.default_rng(12)
        samples = [rng.uniform(0, 1, 4) for _ in range(100)]
        high, low = nbc_bounds_from_samples(mid_net, samples, widen=0.0)
        x = samples[0]
        done = 0
        for r in gen_nbc(mid_net, high, low)[:24]:
            t_new = symbolic_lp(mid_net, x, r)
            if t_new is None:
                continue
            u = forward(mid_net, t_new).u_flat(r.tag.layer)[r.tag.neuron]
            # the branch picks the nearer side for the source test, which may
            # not be the side this requirement asks for; crossing either bound
            # is a correct synthesis outcome
            assert u >= r.tag.high or u <= r.tag.low
            done += 1
        assert done >= 1

    def test_custom_solver_hook(self, mid_net):
        calls = []

        def spy_solver(*args, **kwargs):
            calls.append(1)
            return solve_lp(*args, **kwargs)

        rng = np.random.default_rng(13)
        x = rng.uniform(0, 1, 4)
        r = gen_nc(mid_net)[0]
        symbolic_lp(mid_net, x, r, solver=spy_solver)
        assert calls


class TestConvEncoding:
    def conv_net(self):
        rng = np.random.default_rng(14)
        from concolic_dnn.network import Conv2D, Flatten, MaxPool

        return Network(
            (4, 4, 1),
            [
                Conv2D(rng.normal(size=(2, 2, 1, 2)) * 0.8, rng.normal(size=2) * 0.1, relu=True),
                MaxPool((3, 3)),
                Flatten(),
                Dense(rng.normal(size=(2, 2)), np.zeros(2), relu=False),
            ],
        )

    def test_conv_pattern_synthesis_rechecked(self):
        net = self.conv_net()
        rng = np.random.default_rng(15)
        done = 0
        for _ in range(10):
            x = rng.uniform(0, 1, 16)
            acts = forward(net, x)
            src = pattern_of(acts)
            neuron = (2, int(rng.integers(0, 18)))
            target, k_star = nc_target_pattern(src, neuron)
            p = encode_pattern(net, target, k_star, acts.pool_winners)
            add_chebyshev_objective(p, x)
            out = solve(p)
            if out.status != "optimal":
                continue
            sol = np.array([out.values[i] for i in p.x_vars])
            check_bits(net, target, sol)
            done += 1
        assert done >= 5

    def test_pool_requires_winners(self):
        net = self.conv_net()
        x = np.random.default_rng(16).uniform(0, 1, 16)
        acts = forward(net, x)
        full = pattern_of(acts)
        with pytest.raises(EncodingError):
            encode_pattern(net, full, 4, pool_winners=None)

    def deep_conv_net(self):
        """ReLU conv, pool, flatten, ReLU dense, linear out: the pool sits
        inside the encoded range when a dense neuron is targeted."""
        rng = np.random.default_rng(17)
        from concolic_dnn.network import Conv2D, Flatten, MaxPool

        return Network(
            (4, 4, 1),
            [
                Conv2D(rng.normal(size=(2, 2, 1, 2)) * 0.8, rng.normal(size=2) * 0.1, relu=True),
                MaxPool((3, 3)),
                Flatten(),
                Dense(rng.normal(size=(2, 4)), rng.normal(size=4) * 0.1, relu=True),
                Dense(rng.normal(size=(4, 2)), np.zeros(2), relu=False),
            ],
        )

    def test_pool_rows_enter_the_encoding(self):
        net = self.deep_conv_net()
        x = np.random.default_rng(18).uniform(0, 1, 16)
        acts = forward(net, x)
        src = pattern_of(acts)
        target, k_star = nc_target_pattern(src, (5, 0))
        base_rows = len(encode_pattern(net, target, 2).ub_rows)
        p = encode_pattern(net, target, k_star, acts.pool_winners)
        # each 3x3 window contributes 8 winner-dominance inequalities per channel
        assert len(p.ub_rows) >= base_rows + 2 * 8

    def test_synthesis_through_pool_rechecked(self):
        net = self.deep_conv_net()
        rng = np.random.default_rng(19)
        done = 0
        for _ in range(30):
            x = rng.uniform(0, 1, 16)
            acts = forward(net, x)
            src = pattern_of(acts)
            target, k_star = nc_target_pattern(src, (5, int(rng.integers(0, 4))))
            p = encode_pattern(net, target, k_star, acts.pool_winners)
            add_chebyshev_objective(p, x)
            out = solve(p)
            if out.status != "optimal":
                continue
            sol = np.array([out.values[i] for i in p.x_vars])
            check_bits(net, target, sol)
            done += 1
        assert done >= 4


def test_lp_text_dump_is_readable(mid_net):
    x = np.full(4, 0.5)
    src = pattern_of(forward(mid_net, x))
    p = encode_pattern(mid_net, src, 2)
    add_chebyshev_objective(p, x)
    text = lp_text(p)
    assert text.startswith("Minimize")
    assert "Subject To" in text and "Bounds" in text and text.endswith("End\n")
