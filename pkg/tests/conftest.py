import random

import pytest

from defreach.cfg import Cfg, Statement

FIG1_SRC = """\
void f(int argc) {
    char *str = NULL;
    if (argc > 1) { str = malloc(10 * argc); }
    str[(10 * argc) - 1];
}
"""


@pytest.fixture
def fig1_src():
    return FIG1_SRC


def random_cfg(rng: random.Random, max_nodes: int = 20, max_vars: int = 8) -> Cfg:
    """Random structured CFG built directly (no parser): a chain guaranteeing
    the reachability invariants, plus random extra edges."""
    n_mid = rng.randint(1, max_nodes - 2)
    variables = [f"v{i}" for i in range(rng.randint(1, max_vars))]
    nodes = [Statement(kind="nop", code="<entry>")]
    for i in range(n_mid):
        r = rng.random()
        if r < 0.55:
            var = rng.choice(variables)
            nodes.append(
                Statement(kind="assign", code=f"{var} = {i}", target=var, constants=[str(i)])
            )
        elif r < 0.8:
            nodes.append(Statement(kind="condition", code="x > 0", uses={"x"}))
        else:
            nodes.append(Statement(kind="nop"))
    nodes.append(Statement(kind="nop", code="<exit>"))
    exit_id = n_mid + 1
    edges = {(i, i + 1) for i in range(exit_id)}
    for _ in range(rng.randint(0, 2 * n_mid)):
        a = rng.randrange(0, exit_id)
        b = rng.randrange(1, exit_id + 1)
        if a != b:
            edges.add((a, b))
    cfg = Cfg(function="rand", nodes=nodes, edges=edges, entry=0, exit=exit_id)
    cfg.validate()
    return cfg


def brute_gen_kill(cfg: Cfg, deref_defines: bool = False):
    """Independent per-variable-grouping oracle for GEN/KILL, using sets."""
    defs = []
    for node, stmt in enumerate(cfg.nodes):
        if stmt.is_definition():
            defs.append((len(defs), node, stmt.target))
        elif deref_defines and stmt.kind == "deref-use":
            defs.append((len(defs), node, f"<deref@{node}>"))
    gen = {v: set() for v in range(len(cfg.nodes))}
    kill = {v: set() for v in range(len(cfg.nodes))}
    for did, node, var in defs:
        gen[node] = {did}
        kill[node] = {d for d, _, v in defs if v == var and d != did}
    return defs, gen, kill


def naive_solve(cfg: Cfg, gen, kill):
    """Dense round-robin full sweeps with python sets, iterated to stability."""
    nodes = range(len(cfg.nodes))
    out = {v: frozenset() for v in nodes}
    while True:
        prev = out
        out = {}
        for v in nodes:
            inb = frozenset().union(*(prev[u] for u in cfg.predecessors(v)), frozenset())
            out[v] = frozenset(gen[v] | (inb - kill[v]))
        if out == prev:
            break
    inb = {
        v: frozenset().union(*(out[u] for u in cfg.predecessors(v)), frozenset()) for v in nodes
    }
    return inb, out
