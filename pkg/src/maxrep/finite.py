"""Exact finite-outcome, discrete-time engine for random times.

Filtrations are refining partitions of a finite outcome set with rational
probabilities.  Everything is computed in :class:`fractions.Fraction`, so
each identity below is checked with zero tolerance.

Discrete dictionary: optional means adapted, predictable at ``n`` means
``P_{n-1}``-measurable, dual optional increments are ``E[. | P_n]`` and dual
predictable increments are ``E[. | P_{n-1}]``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

Process = tuple  # tuple over outcomes of tuple over periods 0..N


@dataclass(frozen=True)
class FiniteProbModel:
    probs: tuple[Fraction, ...]
    partitions: tuple[tuple[tuple[int, ...], ...], ...]
    _cell_index: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = tuple(Fraction(p) for p in self.probs)
        if any(p <= 0 for p in probs):
            raise ValueError("probabilities must be positive")
        if sum(probs) != 1:
            raise ValueError("probabilities must sum to 1")
        parts = tuple(tuple(tuple(sorted(c)) for c in part) for part in self.partitions)
        n_out = len(probs)
        index = []
        for part in parts:
            owner = [-1] * n_out
            for k, cell in enumerate(part):
                for w in cell:
                    if owner[w] != -1:
                        raise ValueError("cells overlap")
                    owner[w] = k
            if -1 in owner:
                raise ValueError("partition does not cover the outcomes")
            index.append(tuple(owner))
        for n in range(1, len(parts)):
            for cell in parts[n]:
                if len({index[n - 1][w] for w in cell}) != 1:
                    raise ValueError(f"P_{n} does not refine P_{n - 1}")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "partitions", parts)
        object.__setattr__(self, "_cell_index", tuple(index))

    @property
    def periods(self) -> int:
        return len(self.partitions) - 1

    @property
    def n_outcomes(self) -> int:
        return len(self.probs)

    def cell(self, n: int, w: int) -> tuple[int, ...]:
        return self.partitions[n][self._cell_index[n][w]]

    def same_cell(self, n: int, w: int, v: int) -> bool:
        return self._cell_index[n][w] == self._cell_index[n][v]

    def prob(self, event: Iterable[int]) -> Fraction:
        return sum((self.probs[w] for w in event), Fraction(0))

    def expect(self, x: Sequence[Fraction]) -> Fraction:
        return sum((p * xi for p, xi in zip(self.probs, x)), Fraction(0))

    def cond_expect(self, x: Sequence, n: int) -> tuple[Fraction, ...]:
        """``E[x | P_n]`` as a function of the outcome."""
        out = [Fraction(0)] * self.n_outcomes
        for cell in self.partitions[n]:
            mass = sum(self.probs[w] for w in cell)
            val = sum(self.probs[w] * Fraction(x[w]) for w in cell) / mass
            for w in cell:
                out[w] = val
        return tuple(out)

    def is_measurable(self, x: Sequence, n: int) -> bool:
        return all(len({x[w] for w in cell}) == 1 for cell in self.partitions[n])

    def is_adapted(self, proc: Process) -> bool:
        return all(self.is_measurable([row[n] for row in proc], n)
                   for n in range(self.periods + 1))

    def column(self, proc: Process, n: int) -> tuple:
        return tuple(row[n] for row in proc)

    # -- trees ------------------------------------------------------------

    @classmethod
    def tree(cls, branch_probs: Sequence[Sequence[Sequence[Fraction]]]) -> "FiniteProbModel":
        """Recombining-free tree; ``branch_probs[n][node]`` are the child
        probabilities of the ``node``-th node at depth ``n`` (nodes ordered
        lexicographically)."""
        paths = [()]
        probs = [Fraction(1)]
        for level in branch_probs:
            if len(level) != len(paths):
                raise ValueError("one branching vector per node")
            new_paths, new_probs = [], []
            for node, (path, p) in enumerate(zip(paths, probs)):
                for k, q in enumerate(level[node]):
                    new_paths.append(path + (k,))
                    new_probs.append(p * Fraction(q))
            paths, probs = new_paths, new_probs
        n_periods = len(branch_probs)
        partitions = []
        for n in range(n_periods + 1):
            cells: dict[tuple, list[int]] = {}
            for w, path in enumerate(paths):
                cells.setdefault(path[:n], []).append(w)
            partitions.append(tuple(tuple(c) for c in cells.values()))
        return cls(tuple(probs), tuple(partitions))

    @classmethod
    def coins(cls, n_periods: int, p=Fraction(1, 2)) -> "FiniteProbModel":
        return cls.tree([[(p, 1 - p)] * (2 ** n) for n in range(n_periods)])

    # -- serialisation ------------------------------------------------------

    def to_json(self, processes: dict[str, Process] | None = None) -> str:
        doc = {
            "outcomes": [{"prob_num": p.numerator, "prob_den": p.denominator}
                         for p in self.probs],
            "partitions": [[list(c) for c in part] for part in self.partitions],
            "processes": {
                name: [[[Fraction(v).numerator, Fraction(v).denominator] for v in row]
                       for row in proc]
                for name, proc in (processes or {}).items()
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> tuple["FiniteProbModel", dict[str, Process]]:
        doc = json.loads(text)
        for o in doc["outcomes"]:
            if not isinstance(o["prob_num"], int) or not isinstance(o["prob_den"], int):
                raise ValueError("probabilities must be exact integers")
        model = cls(tuple(Fraction(o["prob_num"], o["prob_den"]) for o in doc["outcomes"]),
                    tuple(tuple(tuple(c) for c in part) for part in doc["partitions"]))
        procs = {name: tuple(tuple(Fraction(a, b) for a, b in row) for row in proc)
                 for name, proc in doc.get("processes", {}).items()}
        return model, procs


def _zeros(model: FiniteProbModel) -> list[list[Fraction]]:
    return [[Fraction(0)] * (model.periods + 1) for _ in range(model.n_outcomes)]


def _freeze(rows) -> Process:
    return tuple(tuple(r) for r in rows)


@dataclass(frozen=True)
class AzemaAnalysis:
    Z: Process
    Zt: Process   # the strong supermartingale Z~
    A: Process
    a: Process
    M: Process
    m: Process
    C: frozenset  # {(outcome, n) : Z~_n = 1}


def _check_time(model: FiniteProbModel, rho: Sequence[int]):
    if len(rho) != model.n_outcomes:
        raise ValueError("one value per outcome")
    if any(not 0 <= r <= model.periods for r in rho):
        raise ValueError("random time outside {0..N}")


def azema_analysis(model: FiniteProbModel, rho: Sequence[int]) -> AzemaAnalysis:
    _check_time(model, rho)
    N = model.periods
    Z, Zt, A, a = _zeros(model), _zeros(model), _zeros(model), _zeros(model)
    for n in range(N + 1):
        z = model.cond_expect([int(r > n) for r in rho], n)
        zt = model.cond_expect([int(r >= n) for r in rho], n)
        hit = [int(r == n and r > 0) for r in rho]
        dA = model.cond_expect(hit, n) if n > 0 else (Fraction(0),) * model.n_outcomes
        da = model.cond_expect(hit, n - 1) if n > 0 else (Fraction(0),) * model.n_outcomes
        for w in range(model.n_outcomes):
            Z[w][n], Zt[w][n] = z[w], zt[w]
            A[w][n] = (A[w][n - 1] if n else 0) + dA[w]
            a[w][n] = (a[w][n - 1] if n else 0) + da[w]
    M = [[Z[w][n] + A[w][n] for n in range(N + 1)] for w in range(model.n_outcomes)]
    m = [[Z[w][n] + a[w][n] for n in range(N + 1)] for w in range(model.n_outcomes)]
    C = frozenset((w, n) for w in range(model.n_outcomes) for n in range(N + 1)
                  if Zt[w][n] == 1)
    return AzemaAnalysis(_freeze(Z), _freeze(Zt), _freeze(A), _freeze(a),
                         _freeze(M), _freeze(m), C)


def increments(proc: Process, w: int, n: int) -> Fraction:
    return proc[w][n] - proc[w][n - 1]


def martingale_defect(model: FiniteProbModel, proc: Process) -> Fraction:
    """Largest ``|E[X_n - X_{n-1} | P_{n-1}]|``; zero iff ``proc`` is a martingale."""
    worst = Fraction(0)
    for n in range(1, model.periods + 1):
        d = model.cond_expect([increments(proc, w, n) for w in range(model.n_outcomes)], n - 1)
        worst = max(worst, max(abs(x) for x in d))
    return worst


# -- honest times ---------------------------------------------------------------

def is_honest(model: FiniteProbModel, rho: Sequence[int]) -> bool:
    """``Z~_rho = 1`` on every outcome."""
    an = azema_analysis(model, rho)
    return all(an.Zt[w][rho[w]] == 1 for w in range(model.n_outcomes))


def end_of_adapted_set(model: FiniteProbModel, rho: Sequence[int]) -> frozenset | None:
    """An adapted set ``O`` with ``rho = max O`` outcome-wise, or None.

    The constraint separates across periods: ``O_n`` must contain the outcomes
    with ``rho = n`` and avoid those with ``rho < n``, so the smallest
    candidate (cells meeting ``{rho = n}``) is tried per period.
    """
    _check_time(model, rho)
    out = set()
    for n in range(model.periods + 1):
        for cell in model.partitions[n]:
            if any(rho[w] == n for w in cell):
                if any(rho[w] < n for w in cell):
                    return None
                out.update((w, n) for w in cell)
    return frozenset(out)


def brute_force_end_of_adapted_set(model: FiniteProbModel, rho: Sequence[int]) -> bool:
    """Enumerate every adapted set ``O`` and test ``rho = max O``.  Exponential."""
    cells = [(n, cell) for n in range(model.periods + 1) for cell in model.partitions[n]]
    for choice in itertools.product((False, True), repeat=len(cells)):
        last = [-1] * model.n_outcomes
        for take, (n, cell) in zip(choice, cells):
            if take:
                for w in cell:
                    last[w] = max(last[w], n)
        if all(last[w] == rho[w] for w in range(model.n_outcomes)):
            return True
    return False


# -- stopping times -------------------------------------------------------------

def is_stopping_time(model: FiniteProbModel, T: Sequence[int]) -> bool:
    return all(model.is_measurable([int(t == n) for t in T], n)
               for n in range(model.periods + 1))


def is_predictable_time(model: FiniteProbModel, T: Sequence[int]) -> bool:
    if any(t == 0 for t in T) and not all(t == 0 for t in T):
        return False
    return all(model.is_measurable([int(t == n) for t in T], n - 1)
               for n in range(1, model.periods + 1))


def stopping_times(model: FiniteProbModel) -> list[tuple[int, ...]]:
    """All stopping times with values in ``{0..N}``."""
    N = model.periods

    def build(n, outcomes):
        # stop the whole block now, or refine into P_{n+1} cells and recurse
        options = [{w: n for w in outcomes}]
        if n < N:
            children = [c for c in model.partitions[n + 1] if c[0] in outcomes]
            subs = [build(n + 1, set(c)) for c in children]
            for combo in itertools.product(*subs):
                merged = {}
                for part in combo:
                    merged.update(part)
                options.append(merged)
        return options

    res = []
    for opt in build(0, set(range(model.n_outcomes))):
        res.append(tuple(opt[w] for w in range(model.n_outcomes)))
    return res


def last_sojourn(an: AzemaAnalysis, w: int, t: int) -> int:
    """``G_t = max{s <= t : (w, s) in C}`` (``C`` always contains time 0)."""
    return max(s for s in range(t + 1) if (w, s) in an.C)


def relative_martingale_check(model: FiniteProbModel, rho: Sequence[int],
                              S: Sequence[int], T: Sequence[int],
                              analysis: AzemaAnalysis | None = None) -> bool:
    """``1 - Z_S = E[(1 - Z_T) 1{G_T <= S} | P_S]`` and the strict variant with ``Z~``."""
    if any(s > t for s, t in zip(S, T)):
        raise ValueError("need S <= T")
    an = analysis or azema_analysis(model, rho)
    W = range(model.n_outcomes)
    lhs1 = [1 - an.Z[w][S[w]] for w in W]
    lhs2 = [1 - an.Zt[w][S[w]] for w in W]
    rhs1_raw = [(1 - an.Z[w][T[w]]) * (last_sojourn(an, w, T[w]) <= S[w]) for w in W]
    rhs2_raw = [(1 - an.Zt[w][T[w]]) * (last_sojourn(an, w, T[w]) < S[w]) for w in W]
    rhs1 = stopped_cond_expect(model, rhs1_raw, S)
    rhs2 = stopped_cond_expect(model, rhs2_raw, S)
    return all(lhs1[w] == rhs1[w] and lhs2[w] == rhs2[w] for w in W)


def stopped_cond_expect(model: FiniteProbModel, x: Sequence, S: Sequence[int]) -> list[Fraction]:
    """``E[x | P_S]`` for a stopping time ``S``."""
    out = [Fraction(0)] * model.n_outcomes
    for n in range(model.periods + 1):
        ce = model.cond_expect(x, n)
        for w in range(model.n_outcomes):
            if S[w] == n:
                out[w] = ce[w]
    return out


# -- honest support checks ----------------------------------------------------

@dataclass
class SupportChecks:
    dA_on_C: bool
    atoms_are_jumps_of_Zt: bool
    zminus_one_in_C: bool
    zminus_or_z_one_in_C: bool  # reported only
    zt_equals_z_off_C: bool
    zero_after_R: bool
    witnesses: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.dA_on_C and self.atoms_are_jumps_of_Zt and self.zminus_one_in_C
                and self.zt_equals_z_off_C and self.zero_after_R)


def zero_after_R(model: FiniteProbModel, an: AzemaAnalysis) -> bool:
    N = model.periods
    positives = [an.Z[w][n] for w in range(model.n_outcomes) for n in range(N + 1)
                 if an.Z[w][n] > 0]
    k_max = int(1 / min(positives)) + 1 if positives else 1
    for w in range(model.n_outcomes):
        R = 0
        for k in range(1, k_max + 1):
            hits = [n for n in range(N + 1) if an.Z[w][n] <= Fraction(1, k)]
            R = max(R, hits[0] if hits else N + 1)
        if any(an.Z[w][s] != 0 for s in range(R, N + 1)):
            return False
    return True


def honest_support_checks(model: FiniteProbModel, rho: Sequence[int],
                          analysis: AzemaAnalysis | None = None) -> SupportChecks:
    if not is_honest(model, rho):
        raise ValueError("precondition: rho is not honest")
    an = analysis or azema_analysis(model, rho)
    N = model.periods
    W = range(model.n_outcomes)
    wit = []
    dA_on_C = atoms = zm = zmz = off = True
    for w in W:
        for n in range(1, N + 1):
            dA = an.A[w][n] - an.A[w][n - 1]
            inC = (w, n) in an.C
            if dA > 0 and not inC:
                dA_on_C = False
                wit.append(("dA off C", w, n))
            if (dA > 0) != (an.Zt[w][n] > an.Z[w][n]):
                atoms = False
                wit.append(("atoms", w, n))
            if an.Z[w][n - 1] == 1 and not inC:
                zm = False
                wit.append(("Z_- = 1 outside C", w, n))
            if (an.Z[w][n - 1] == 1 or an.Z[w][n] == 1) and not inC:
                zmz = False
        for n in range(N + 1):
            if (w, n) not in an.C and an.Zt[w][n] != an.Z[w][n]:
                off = False
                wit.append(("Z~ != Z off C", w, n))
    return SupportChecks(dA_on_C, atoms, zm, zmz, off, zero_after_R(model, an), wit)


# -- martingale maximal representation search -------------------------------

@dataclass(frozen=True)
class InfeasibleCertificate:
    period: int
    cell: tuple[int, ...]
    required: Fraction  # E[dA_n | cell] that no admissible dgamma_n can match
    reason: str


def mmr_search(model: FiniteProbModel, Z: Process, A: Process):
    """Adapted ``dgamma_n >= 0`` vanishing off ``{Z_n = 1}`` with
    ``E[-dA_n + dgamma_n | P_{n-1}] = 0``, or an :class:`InfeasibleCertificate`."""
    N = model.periods
    W = range(model.n_outcomes)
    if any(Z[w][0] != 1 for w in W):
        return InfeasibleCertificate(0, tuple(W), Fraction(0), "Z_0 != 1")
    if any(Z[w][N] != 0 for w in W):
        return InfeasibleCertificate(N, tuple(W), Fraction(0), "Z_N != 0")
    gamma = _zeros(model)
    for n in range(1, N + 1):
        dA = [A[w][n] - A[w][n - 1] for w in W]
        dgam = [Fraction(0)] * model.n_outcomes
        for cell in model.partitions[n - 1]:
            mass = model.prob(cell)
            need = sum(model.probs[w] * dA[w] for w in cell) / mass
            if need == 0:
                continue
            ones = [w for w in cell if Z[w][n] == 1]
            if not ones:
                return InfeasibleCertificate(
                    n, cell, need, "E[dA_n | P_{n-1}] > 0 but Z_n < 1 on the whole cell")
            level = need * mass / model.prob(ones)
            for w in ones:
                dgam[w] = level
        for w in W:
            gamma[w][n] = gamma[w][n - 1] + dgam[w]
    return _freeze(gamma)


def mmr_construct(Z: Process, gamma: Process) -> tuple[Process, Process]:
    """``U_n = U_{n-1} + U*_{n-1} (dZ_n + dgamma_n)``, ``U_0 = 1``."""
    U_rows, S_rows = [], []
    for zr, gr in zip(Z, gamma):
        u, s = [Fraction(1)], [Fraction(1)]
        for n in range(1, len(zr)):
            nxt = u[-1] + s[-1] * (zr[n] - zr[n - 1] + gr[n] - gr[n - 1])
            if nxt < 0:
                raise ValueError(f"U < 0 at period {n}: gamma invalid for Z")
            u.append(nxt)
            s.append(max(s[-1], nxt))
        U_rows.append(tuple(u))
        S_rows.append(tuple(s))
    return tuple(U_rows), tuple(S_rows)


def modif_predictable(model: FiniteProbModel, A: Process, Z: Process, gamma: Process,
                      T: Sequence[int], xi: Sequence) -> Process:
    """Replace the jump of ``gamma`` at the predictable time ``T`` by ``xi``."""
    W = range(model.n_outcomes)
    N = model.periods
    if not is_predictable_time(model, T):
        raise ValueError("T must be predictable")
    if any(Fraction(x) < 0 for x in xi):
        raise ValueError("xi must be non-negative")
    dgT = [gamma[w][T[w]] - gamma[w][T[w] - 1] if T[w] > 0 else Fraction(0) for w in W]
    dAT = [A[w][T[w]] - A[w][T[w] - 1] if T[w] > 0 else Fraction(0) for w in W]
    raw = [-dAT[w] + Fraction(xi[w]) * (dgT[w] > 0) for w in W]
    # E[raw | P_{T-1}]
    prior = [max(t - 1, 0) for t in T]
    res = stopped_cond_expect(model, raw, prior)
    if any(r != 0 for r, t in zip(res, T) if t > 0):
        raise ValueError(f"precondition fails: residual {max(abs(r) for r in res)}")
    out = []
    for w in W:
        row = []
        for n in range(N + 1):
            v = gamma[w][n]
            if T[w] > 0 and n >= T[w]:
                v = v - dgT[w] + Fraction(xi[w]) * (dgT[w] > 0)
            row.append(v)
        out.append(tuple(row))
    gh = tuple(out)
    for w in W:
        for n in range(1, N + 1):
            d = gh[w][n] - gh[w][n - 1]
            if d < 0:
                raise ValueError("postcondition: gamma-hat decreases")
            if d > 0 and Z[w][n] != 1:
                raise ValueError("postcondition: d gamma-hat off {Z = 1}")
    diff = tuple(tuple(gh[w][n] - A[w][n] for n in range(N + 1)) for w in W)
    if martingale_defect(model, diff) != 0:
        raise ValueError("postcondition: -A + gamma-hat is not a martingale")
    return gh


# -- enumeration helpers -------------------------------------------------------

def random_times(model: FiniteProbModel, positive=False) -> Iterable[tuple[int, ...]]:
    low = 1 if positive else 0
    return itertools.product(range(low, model.periods + 1), repeat=model.n_outcomes)


def binary_trees(n_periods: int, choices=(Fraction(1, 2), Fraction(1, 3), Fraction(2, 3)),
                 ) -> Iterable[FiniteProbModel]:
    """Every binary tree of depth ``n_periods`` with up-probabilities from ``choices``."""
    n_nodes = 2 ** n_periods - 1
    for combo in itertools.product(choices, repeat=n_nodes):
        it = iter(combo)
        levels = [[(p, 1 - p) for p in (next(it) for _ in range(2 ** n))]
                  for n in range(n_periods)]
        yield FiniteProbModel.tree(levels)


def random_tree(rng, n_periods: int, branching: int = 2,
                choices=(Fraction(1, 2), Fraction(1, 3), Fraction(2, 3))) -> FiniteProbModel:
    levels = []
    for n in range(n_periods):
        level = []
        for _ in range(branching ** n):
            if branching == 2:
                p = choices[rng.integers(len(choices))]
                level.append((p, 1 - p))
            else:
                level.append(_ternary_choices[rng.integers(len(_ternary_choices))])
        levels.append(level)
    return FiniteProbModel.tree(levels)


_ternary_choices = [
    (Fraction(1, 3),) * 3,
    (Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)),
    (Fraction(1, 6), Fraction(1, 2), Fraction(1, 3)),
]


def last_visit_to_max(model: FiniteProbModel, steps: Callable[[int], Sequence[int]]) -> tuple[int, ...]:
    """Last time a walk sits at its running maximum; ``steps(w)`` gives the +-1 moves."""
    rho = []
    for w in range(model.n_outcomes):
        pos, best, last = 0, 0, 0
        for n, s in enumerate(steps(w), start=1):
            pos += s
            if pos >= best:
                best, last = pos, n
        rho.append(last)
    return tuple(rho)
