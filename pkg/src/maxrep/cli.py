"""Batch runner for the scenario registry and the finite-tree suite.

Exit codes: 0 when every check agrees with the expected verdict, 1 when some
check disagrees, 2 on a configuration or output error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import finite, scenarios
from .montecarlo import Check

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
FINITE_SUITE = "finite-suite"
MAX_PERIODS_GUARD = 5
CASES_PER_LEVEL = 3000
PAIRS_PER_CASE = 3


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    scenario: str
    n_paths: int | None = None
    seed: int = 0
    dt: float | None = None
    horizon: float | None = None
    tol: float | None = None
    out: str | None = None
    csv_dump: str | None = None
    threads: int = 1
    max_periods: int = 3
    branching: int = 2
    mutate: str | None = None

    def validate(self):
        if self.scenario != FINITE_SUITE and self.scenario not in scenarios.REGISTRY:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.n_paths is not None and self.n_paths < 1:
            raise ConfigError("--paths must be at least 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("--dt must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError("--horizon must be positive")
        if self.tol is not None and not self.tol >= 0:
            raise ConfigError("--tol must be non-negative")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if self.branching not in (2, 3):
            raise ConfigError("--branching must be 2 or 3")
        if not 1 <= self.max_periods <= MAX_PERIODS_GUARD:
            raise ConfigError(f"--max-periods must lie in 1..{MAX_PERIODS_GUARD}")
        if self.mutate not in (None, "zt"):
            raise ConfigError("--mutate accepts only 'zt'")


# -- finite suite -----------------------------------------------------------------

@dataclass
class FiniteSuiteReport:
    max_periods: int
    branching: int
    seed: int
    cases: int = 0
    counts: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)

    def record(self, name: str, ok: bool, witness=None):
        self.counts[name] = self.counts.get(name, 0) + 1
        if not ok:
            self.failures[name] = self.failures.get(name, 0) + 1
            if witness is not None and len(self.witnesses) < 20:
                self.witnesses.append({"check": name, **witness})

    @property
    def checks(self) -> list[Check]:
        out = []
        for name, n in self.counts.items():
            bad = self.failures.get(name, 0)
            out.append(Check(name, float(n - bad), 0.0, float(n), bad == 0))
        return out

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"scenario": FINITE_SUITE, "seed": self.seed, "n_paths": self.cases,
                "grid": {"max_periods": self.max_periods, "branching": self.branching},
                "checks": [c.to_dict() for c in self.checks], "witnesses": self.witnesses}


def _cases(n_periods: int, branching: int, rng, budget: int):
    """Exhaustive (tree, time) pairs when they fit the budget, else a sample."""
    if branching == 2:
        n_trees = 3 ** (2 ** n_periods - 1)
        n_out = 2 ** n_periods
        if n_trees * (n_periods + 1) ** n_out <= budget:
            for model in finite.binary_trees(n_periods):
                for rho in finite.random_times(model):
                    yield model, rho
            return
    # a third of the sample uses the last visit of the tree walk to its maximum,
    # an honest time by construction
    n_honest = budget // 3
    for i in range(budget):
        model = finite.random_tree(rng, n_periods, branching)
        if i < n_honest:
            rho = finite.last_visit_to_max(model, _walk_steps(n_periods, branching))
        else:
            rho = tuple(int(x) for x in rng.integers(0, n_periods + 1, model.n_outcomes))
        yield model, rho


def _walk_steps(n_periods: int, branching: int):
    """Moves of the walk along outcome ``w``: branch 0 is up, the last branch down."""
    move = {2: (1, -1), 3: (1, 0, -1)}[branching]

    def steps(w):
        digits = []
        for _ in range(n_periods):
            w, d = divmod(w, branching)
            digits.append(d)
        return [move[d] for d in reversed(digits)]
    return steps


def _fmt(proc_entry):
    return str(proc_entry)


def check_case(model, rho, report: FiniteSuiteReport, stop_times, rng, mutate=None):
    an = finite.azema_analysis(model, rho)
    N = model.periods
    W = range(model.n_outcomes)
    Zt = [list(r) for r in an.Zt]
    if mutate == "zt":
        Zt[0][N] += Fraction(1, 97)
    case = {"rho": list(rho), "probs": [str(p) for p in model.probs]}

    bad = next(((w, n) for w in W for n in range(1, N + 1)
                if Zt[w][n] != an.Z[w][n] + an.A[w][n] - an.A[w][n - 1]), None)
    report.record("Z~ = Z + dA", bad is None,
                  None if bad is None else {**case, "outcome": bad[0], "period": bad[1],
                                            "Z~": _fmt(Zt[bad[0]][bad[1]])})
    for name, proc in (("M = Z + A martingale", an.M), ("m = Z + a martingale", an.m)):
        d = finite.martingale_defect(model, proc)
        report.record(name, d == 0, None if d == 0 else {**case, "defect": str(d)})

    honest = all(Zt[w][rho[w]] == 1 for w in W)
    adapted_end = finite.end_of_adapted_set(model, rho) is not None
    report.record("honest <=> Z~_rho = 1", honest == adapted_end,
                  None if honest == adapted_end else {**case, "end_of_adapted_set": adapted_end})
    if model.n_outcomes <= 4:
        brute = finite.brute_force_end_of_adapted_set(model, rho)
        report.record("end-of-adapted-set search vs brute force", brute == adapted_end,
                      None if brute == adapted_end else case)
    report.record("Z = 0 after R", finite.zero_after_R(model, an), case)
    if honest and mutate is None:
        sc = finite.honest_support_checks(model, rho, an)
        report.record("dA support corollaries", sc.passed, {**case, "witness": str(sc.witnesses[:1])})
        for _ in range(PAIRS_PER_CASE):
            S = stop_times[rng.integers(len(stop_times))]
            T = stop_times[rng.integers(len(stop_times))]
            S, T = tuple(map(min, S, T)), tuple(map(max, S, T))
            if not (finite.is_stopping_time(model, S) and finite.is_stopping_time(model, T)):
                continue
            ok = finite.relative_martingale_check(model, rho, S, T, an)
            report.record("relative martingale identities", ok,
                          None if ok else {**case, "S": list(S), "T": list(T)})
    cert = finite.mmr_search(model, an.Z, an.A)
    infeasible = isinstance(cert, finite.InfeasibleCertificate)
    report.record("mmr_search infeasible", infeasible, None if infeasible else case)


def run_finite_suite(max_periods: int = 3, branching: int = 2, seed: int = 0,
                     mutate: str | None = None, budget: int = CASES_PER_LEVEL
                     ) -> FiniteSuiteReport:
    """Check the random-time identities exactly on every tree depth up to
    ``max_periods``; trees and times are enumerated when the count fits
    ``budget`` per depth and sampled otherwise."""
    if not 1 <= max_periods <= MAX_PERIODS_GUARD:
        raise ValueError(f"max_periods must lie in 1..{MAX_PERIODS_GUARD}")
    rng = np.random.default_rng(seed)
    report = FiniteSuiteReport(max_periods, branching, seed)
    for n in range(1, max_periods + 1):
        shape = finite.random_tree(rng, n, branching)
        # stopping times depend on the partitions only, shared by every tree of this shape
        stop_times = finite.stopping_times(shape) if shape.n_outcomes <= 16 else None
        for model, rho in _cases(n, branching, rng, budget):
            st = stop_times or [tuple(rho), tuple(rho)]
            check_case(model, rho, report, st, rng, mutate)
            report.cases += 1
            mutate = None  # the mutation targets a single case
    return report


# -- scenario runs ----------------------------------------------------------------

def _write(path: str, text: str):
    try:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def _dump_csv(directory: str, result, k: int = 5):
    ens = result.ensemble
    if ens is None:
        return
    for i, bundle in enumerate(ens.bundles[:k]):
        for name, path in bundle.items():
            _write(str(Path(directory) / f"{ens.scenario}_path{i}_{name}.csv"), path.to_csv())
    lines = [c.to_json(result.scenario, i) for i, c in enumerate(result.certificates)]
    _write(str(Path(directory) / f"{result.scenario}_certificates.jsonl"), "\n".join(lines) + "\n")


def run(config: RunConfig) -> int:
    try:
        config.validate()
        if config.out is not None:
            _write(config.out, "")  # fail early on unwritable output
        if config.scenario == FINITE_SUITE:
            report = run_finite_suite(config.max_periods, config.branching, config.seed,
                                      config.mutate)
            payload, ok, checks = report.to_dict(), report.passed, report.checks
        else:
            sc = scenarios.get(config.scenario)
            result = sc.run(config.n_paths, config.seed, config.dt, config.horizon,
                            config.tol, config.threads)
            payload, ok, checks = result.to_dict(), result.passed, result.checks
            if config.csv_dump:
                _dump_csv(config.csv_dump, result)
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if config.out:
            _write(config.out, text)
        for c in checks:
            mark = "PASS" if c.passed else "FAIL"
            print(f"{mark}  {c.name}: estimate={c.estimate:.6g} tol={c.tol:.3g}")
        print(f"{config.scenario}: {'all checks match expected verdicts' if ok else 'MISMATCH'}")
        return EXIT_OK if ok else EXIT_FAIL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def parse_args(argv=None) -> RunConfig:
    ap = argparse.ArgumentParser(prog="maxrep",
                                 description="Run a scenario or the finite-tree suite.")
    ap.add_argument("--scenario", required=True,
                    help=f"one of {', '.join(scenarios.REGISTRY)} or {FINITE_SUITE}")
    ap.add_argument("--paths", type=int, dest="n_paths")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--horizon", type=float)
    ap.add_argument("--tol", type=float, help="residual tolerance override")
    ap.add_argument("--out", help="report JSON path")
    ap.add_argument("--csv-dump", help="directory for per-path CSV and certificate dumps")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--max-periods", type=int, default=3)
    ap.add_argument("--branching", type=int, default=2)
    ap.add_argument("--mutate", help="finite suite only: 'zt' corrupts one Z~ entry")
    ns = ap.parse_args(argv)
    return RunConfig(**vars(ns))


def main(argv=None) -> int:
    try:
        config = parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
