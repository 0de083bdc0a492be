import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defreach.dataflow import BitVec, compute_gen_kill, solve, trace
from defreach.parser import parse_function

from conftest import FIG1_SRC, brute_gen_kill, naive_solve, random_cfg

# Per-round OUT rows for statement nodes v1..v4 (graph ids 1..4).
TABLE2 = [
    ["000", "000", "000", "000"],
    ["100", "000", "010", "001"],
    ["100", "100", "010", "011"],
    ["100", "100", "010", "111"],
]


@pytest.fixture
def fig1_cfg():
    return parse_function(FIG1_SRC)


class TestBitVec:
    @given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
    @settings(max_examples=50)
    def test_union_laws(self, a, b, c):
        x, y, z = BitVec(8, a), BitVec(8, b), BitVec(8, c)
        assert x.union(y) == y.union(x)
        assert x.union(y).union(z) == x.union(y.union(z))
        assert x.union(x) == x

    def test_width_mismatch(self):
        with pytest.raises(ValueError, match="width mismatch"):
            BitVec(3).union(BitVec(4))

    def test_bits_rendering(self):
        v = BitVec.of(3, [0, 2])
        assert str(v) == "101" and v.bits() == [1, 0, 1]
        assert v.contains(0) and not v.contains(1)


class TestGenKill:
    def test_fig1(self, fig1_cfg):
        table, state = compute_gen_kill(fig1_cfg, deref_defines=True)
        assert [(d.node, d.variable) for d in table.entries[:2]] == [(1, "str"), (3, "str")]
        assert table.entries[2].node == 4  # anonymous definition at the dereference
        assert str(state.gen[1]) == "100" and str(state.kill[1]) == "010"
        assert str(state.gen[3]) == "010" and str(state.kill[3]) == "100"
        assert str(state.gen[4]) == "001" and str(state.kill[4]) == "000"
        assert state.gen[2].mask == 0 and state.kill[2].mask == 0

    def test_no_definitions(self):
        cfg = parse_function("void f(int n) { return; }")
        table, state = compute_gen_kill(cfg)
        assert table.width == 0
        assert all(v.mask == 0 for v in state.gen.values())
        assert all(v.mask == 0 for v in state.kill.values())

    def test_two_defs_same_variable(self):
        cfg = parse_function("void f() { int x = 1; int y = 2; x = 3; }")
        table, state = compute_gen_kill(cfg)
        x_defs = [d for d in table.entries if d.variable == "x"]
        assert len(x_defs) == 2
        for d in x_defs:
            other = next(e for e in x_defs if e is not d)
            assert state.kill[d.node] == BitVec.of(table.width, [other.def_id])
        (y_def,) = (d for d in table.entries if d.variable == "y")
        assert state.kill[y_def.node].mask == 0

    def test_matches_brute_force_grouping(self):
        rng = random.Random(5)
        for _ in range(50):
            cfg = random_cfg(rng)
            table, state = compute_gen_kill(cfg)
            defs, gen, kill = brute_gen_kill(cfg)
            assert [(d.def_id, d.node, d.variable) for d in table.entries] == defs
            for v in range(len(cfg.nodes)):
                assert set_of(state.gen[v]) == gen[v]
                assert set_of(state.kill[v]) == kill[v]


def set_of(bv: BitVec) -> frozenset:
    return frozenset(i for i in range(bv.width) if bv.contains(i))


class TestSolve:
    def test_fig1_fixpoint(self, fig1_cfg):
        table, state = compute_gen_kill(fig1_cfg, deref_defines=True)
        solve(fig1_cfg, state)
        assert [str(state.out[v]) for v in (1, 2, 3, 4)] == ["100", "100", "010", "111"]

    def test_no_definitions_all_zero(self):
        cfg = parse_function("void f(int n) { return; }")
        table, state = compute_gen_kill(cfg)
        solve(cfg, state)
        assert all(v.mask == 0 for v in state.inb.values())
        assert all(v.mask == 0 for v in state.out.values())

    def test_fixpoint_invariants(self, fig1_cfg):
        table, state = compute_gen_kill(fig1_cfg, deref_defines=True)
        solve(fig1_cfg, state)
        for v in range(len(fig1_cfg.nodes)):
            assert state.gen[v].is_subset(state.out[v])
            assert state.kill[v].intersect(state.out[v]).is_subset(state.gen[v])
            inb = BitVec(table.width)
            for u in fig1_cfg.predecessors(v):
                inb = inb.union(state.out[u])
            assert state.out[v] == state.gen[v].union(inb.minus(state.kill[v]))

    def test_200_random_cfgs_match_naive_oracle(self):
        rng = random.Random(42)
        for _ in range(200):
            cfg = random_cfg(rng, max_nodes=20, max_vars=8)
            table, state = compute_gen_kill(cfg)
            solve(cfg, state)
            _, gen, kill = brute_gen_kill(cfg)
            inb, out = naive_solve(cfg, gen, kill)
            for v in range(len(cfg.nodes)):
                assert set_of(state.out[v]) == out[v]
                assert set_of(state.inb[v]) == inb[v]


class TestTrace:
    def test_fig1_reproduces_golden_table(self, fig1_cfg):
        table, state = compute_gen_kill(fig1_cfg, deref_defines=True)
        snapshots = trace(fig1_cfg, state, 3)
        got = [[str(snap[v]) for v in (1, 2, 3, 4)] for snap in snapshots]
        assert got == TABLE2

    def test_zero_rounds(self, fig1_cfg):
        table, state = compute_gen_kill(fig1_cfg, deref_defines=True)
        (snap,) = trace(fig1_cfg, state, 0)
        assert all(v.mask == 0 for v in snap.values())

    def test_negative_rounds_rejected(self, fig1_cfg):
        table, state = compute_gen_kill(fig1_cfg, deref_defines=True)
        with pytest.raises(ValueError):
            trace(fig1_cfg, state, -1)

    def test_monotone_and_stable_and_matches_solve(self):
        rng = random.Random(3)
        for _ in range(60):
            cfg = random_cfg(rng)
            table, state = compute_gen_kill(cfg)
            rounds = len(cfg.nodes) + 2  # past worst-case convergence
            snaps = trace(cfg, state, rounds)
            for r in range(1, len(snaps)):
                for v in snaps[r]:
                    assert snaps[r - 1][v].is_subset(snaps[r][v])  # may-analysis grows
            assert snaps[-1] == snaps[-2]  # one sweep past the fixpoint changes nothing
            solve(cfg, state)
            assert snaps[-1] == state.out
