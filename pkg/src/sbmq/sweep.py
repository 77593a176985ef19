"""Sweep q over a range and assemble the full per-network report.

One EM fit per q (best of restarts), all criteria per row, the two
spectral estimates, greedy summaries, and advisory per-criterion
selections. Deterministic given (graph, seed, config).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bp import EmResult, em_fit
from .criteria import CriteriaRecord, evaluate_all
from .graph import Graph
from .greedy import GreedySummary, greedy_stats
from .spectral import SpectralReport, modularity_eigs, nb_eigs

# criterion name -> optimization direction over q
CRITERIA_DIRECTIONS = {
    "bethe_f": "min",
    "modularity": "max",
    "mdl": "min",
    "e_bayes": "min",
    "e_gibbs": "min",
    "e_map": "min",
    "e_training": "min",
}

UNDETERMINED = "undetermined"


@dataclass
class SweepReport:
    n: int
    l: int
    source: str
    seed: int | None
    rows: list[CriteriaRecord]
    spectral: dict[str, SpectralReport]
    greedy: dict[str, GreedySummary]
    selections: dict
    marginals: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self, include_runs: bool = False) -> dict:
        return {
            "network": {"n": self.n, "l": self.l, "source": self.source,
                        "seed": self.seed},
            "rows": [r.to_dict() for r in self.rows],
            "spectral": {k: v.to_dict() for k, v in self.spectral.items()},
            "greedy": {k: v.to_dict(include_runs=include_runs)
                       for k, v in self.greedy.items()},
            "selections": self.selections,
        }

    def to_json(self, include_runs: bool = False) -> str:
        return json.dumps(self.to_dict(include_runs=include_runs),
                          sort_keys=True, indent=2, allow_nan=False)

    def rows_to_csv(self) -> str:
        lines = [CriteriaRecord.CSV_HEADER]
        lines += [r.to_csv_row() for r in self.rows]
        return "\n".join(lines) + "\n"


def _fit_one(g: Graph, q: int, restarts: int, seed: int,
             keep_marginals: bool, learn_params: bool,
             em_kwargs: dict) -> tuple[CriteriaRecord, EmResult | None]:
    try:
        result = em_fit(g, q, seed=seed, restarts=restarts,
                        learn_params=learn_params, **em_kwargs)
        record = evaluate_all(g, result)
        return record, (result if keep_marginals else None)
    except Exception as exc:  # per-q failures stay in-row
        nan = float("nan")
        record = CriteriaRecord(
            q_input=q, q_effective=0, bethe_f=nan, modularity=nan,
            mdl_two_level=nan, e_bayes=nan, e_gibbs=nan, e_map=nan,
            e_training=nan, alpha=nan, beta=nan, beta0_ref=nan,
            betastar_ref=nan, factorized=False,
            error=f"{type(exc).__name__}: {exc}")
        return record, None


def sweep(g: Graph, q_min: int = 1, q_max: int | None = None,
          restarts: int = 5, seed: int | None = None, jobs: int = 1,
          keep_marginals: bool = False, learn_params: bool = True,
          greedy_runs: int = 30, run_spectral: bool = True,
          run_greedy: bool = True, **em_kwargs) -> SweepReport:
    """Full assessment of one network across a q range."""
    if q_max is None:
        q_max = max(1, min(30, g.n // 10))
    if not (1 <= q_min <= q_max):
        raise ValueError("need 1 <= q_min <= q_max")
    qs = list(range(q_min, q_max + 1))
    root = np.random.SeedSequence(seed)
    q_seeds = {q: int(child.generate_state(1)[0])
               for q, child in zip(qs, root.spawn(len(qs)))}

    def work(q):
        return _fit_one(g, q, restarts, q_seeds[q], keep_marginals,
                        learn_params, em_kwargs)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, qs))
    else:
        outcomes = [work(q) for q in qs]

    rows = [rec for rec, _ in outcomes]
    marginals = {rec.q_input: res.marginals.psi
                 for rec, res in outcomes if res is not None}

    spectral = {}
    if run_spectral:
        k_hint = min(g.n // 2, 2 * q_max + 10) or None
        spectral["modularity"] = modularity_eigs(g, alpha=1.0, k=None if k_hint is None else None)
        spectral["non_backtracking"] = nb_eigs(g)

    greedy = {}
    if run_greedy:
        greedy_seed = int(root.spawn(1)[0].generate_state(1)[0]) % (2 ** 31)
        greedy["louvain"] = greedy_stats(g, "louvain", runs=greedy_runs,
                                         seed=greedy_seed)
        greedy["infomap"] = greedy_stats(g, "infomap", runs=greedy_runs,
                                         seed=greedy_seed)

    selections = {name: {
        "argopt": _sel_to_json(select_q(rows, name, "argopt")),
        "elbow": _sel_to_json(select_q(rows, name, "elbow")),
    } for name in CRITERIA_DIRECTIONS}

    return SweepReport(n=g.n, l=g.m, source=str(g.meta.get("source", "")),
                       seed=seed, rows=rows, spectral=spectral, greedy=greedy,
                       selections=selections, marginals=marginals)


@dataclass
class Selection:
    q: int | None
    at_boundary: bool = False

    def __eq__(self, other):
        if isinstance(other, int):
            return self.q == other and not self.at_boundary
        if isinstance(other, Selection):
            return (self.q, self.at_boundary) == (other.q, other.at_boundary)
        return NotImplemented


def _sel_to_json(sel: Selection):
    if sel.q is None:
        return UNDETERMINED
    return {"q": sel.q, "at_boundary": sel.at_boundary}


def _criterion_values(rows: list[CriteriaRecord], criterion: str):
    attr = {"mdl": "mdl_two_level"}.get(criterion, criterion)
    usable = []
    seen_factorized = False
    for row in rows:
        if row.error is not None:
            continue
        if row.factorized:
            if seen_factorized:
                continue  # only the first factorized row stays
            seen_factorized = True
        elif seen_factorized:
            usable.append(row)  # fresh restarts escaped the trivial state
            continue
        usable.append(row)
    vals = [(row.q_input, getattr(row, attr)) for row in usable]
    return [(q, v) for q, v in vals if v is not None and math.isfinite(v)]


def select_q(rows: list[CriteriaRecord], criterion: str,
             rule: str = "argopt", delta: float = 0.01) -> Selection:
    """Advisory q* from one criterion's curve.

    "argopt" returns the global optimum (min or max per criterion);
    "elbow" returns the smallest q whose relative improvement to q+1
    falls below delta. Factorized rows beyond the first are excluded.
    """
    if not rows:
        raise ValueError("no rows")
    if criterion not in CRITERIA_DIRECTIONS:
        raise ValueError(f"unknown criterion {criterion!r}")
    direction = CRITERIA_DIRECTIONS[criterion]
    vals = _criterion_values(rows, criterion)
    if not vals:
        return Selection(None)
    if rule == "argopt":
        if direction == "min":
            q_best = min(vals, key=lambda t: (t[1], t[0]))[0]
        else:
            q_best = max(vals, key=lambda t: (t[1], -t[0]))[0]
        return Selection(q_best, at_boundary=(q_best == vals[-1][0]))
    if rule != "elbow":
        raise ValueError(f"unknown rule {rule!r}")
    by_q = dict(vals)
    for q, v in vals:
        nxt = by_q.get(q + 1)
        if nxt is None:
            continue
        improvement = (v - nxt) if direction == "min" else (nxt - v)
        scale = abs(v) if v != 0 else 1.0
        if improvement / scale < delta:
            return Selection(q)
    return Selection(None)
