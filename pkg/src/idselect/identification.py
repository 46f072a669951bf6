"""Criterion certificates, enumeration of qualifying sets, and graphical dominance.

The three criteria are checked condition by condition so a certificate records
which part failed.  Dominance between two strategies is asserted from
d-separation statements alone; :func:`recommend` completes the order with
numeric variances when a covariance matrix is available.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from itertools import combinations

from .errors import IdSelectError, InvalidStrategyError, OverlappingSetsError
from .estimators import EstimateReport, estimate
from .graph import PathDiagram, d_separated, directed_paths, remove_incoming, remove_outgoing, varset
from .strategy import BACK_DOOR, CONDITIONAL_IV, FRONT_DOOR, Strategy, criterion_kind

__all__ = [
    "CriterionCertificate",
    "DominanceVerdict",
    "Rule",
    "Basis",
    "check_criterion",
    "check_back_door",
    "check_conditional_iv",
    "check_front_door",
    "enumerate_criterion",
    "graphical_dominance",
    "Recommendation",
    "recommend",
    "DEFAULT_MAX_SIZE",
]

DEFAULT_MAX_SIZE = 4
NUMERIC_TIE = 1e-12


class Rule(str, enum.Enum):
    # wire tokens are fixed by the report schema
    ADJUSTMENT_SETS = "lemma3"
    INSTRUMENTS = "prop1"
    BACK_DOOR_OVER_IV = "prop2"


class Basis(str, enum.Enum):
    ADJUSTMENT_SETS = "lemma3"
    INSTRUMENTS = "prop1"
    BACK_DOOR_OVER_IV = "prop2"
    NUMERIC = "numeric"
    INCOMPARABLE = "incomparable"

    @property
    def graphical(self) -> bool:
        return self not in (Basis.NUMERIC, Basis.INCOMPARABLE)


@dataclass(frozen=True)
class CriterionCertificate:
    """Outcome of checking one criterion, condition by condition.

    ``minimal`` is set by :func:`enumerate_criterion` (no valid proper subset).
    ``disjunctive_only`` marks conditional-IV checks that fail the strict
    reading of the nondescendant condition but would pass the looser "of X or
    of Y" reading.
    """

    kind: str
    treatment: str
    outcome: str
    primary_set: tuple[str, ...] = ()
    instrument: str | None = None
    conditioning_set: tuple[str, ...] | None = None
    conditions: tuple[tuple[str, bool], ...] = ()
    minimal: bool | None = None
    disjunctive_only: bool = False

    @property
    def valid(self) -> bool:
        return all(ok for _, ok in self.conditions)

    def strategy(self) -> Strategy:
        if self.kind == CONDITIONAL_IV:
            return Strategy.conditional_iv(self.treatment, self.outcome, self.instrument, self.conditioning_set)
        if self.kind == FRONT_DOOR:
            return Strategy.front_door(self.treatment, self.outcome, self.primary_set)
        return Strategy.back_door(self.treatment, self.outcome, self.primary_set)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "treatment": self.treatment,
            "outcome": self.outcome,
            "strategy": self.strategy().label,
            "sets": self.strategy().sets(),
            "valid": self.valid,
            "minimal": self.minimal,
            "disjunctive_only": self.disjunctive_only,
            "conditions": [{"label": lbl, "satisfied": ok} for lbl, ok in self.conditions],
        }


def _fmt(names) -> str:
    return "{" + ",".join(sorted(names)) + "}"


def _validate(G: PathDiagram, x, y, *groups):
    G.require(x, y)
    if x == y:
        raise IdSelectError("treatment and outcome must differ")
    seen = {x, y}
    for g in groups:
        G.require(*sorted(g))
        if seen & g:
            raise OverlappingSetsError(
                f"sets must be disjoint from each other and from {{{x}, {y}}}: {sorted(seen & g)}"
            )
        seen |= g


def claim(G: PathDiagram, A, B, Z=()) -> bool:
    """``Z`` d-separates ``A`` from ``B``, where members of ``Z`` are dropped from
    ``A`` and ``B`` first (conditioning on a variable separates it trivially)."""
    Z = varset(Z)
    A, B = varset(A) - Z, varset(B) - Z
    if not A or not B:
        return True
    if A & B:
        return False
    return d_separated(G, A, B, Z)


def check_back_door(G: PathDiagram, x: str, y: str, S=()) -> CriterionCertificate:
    S = varset(S)
    _validate(G, x, y, S)
    de_x = G.descendants(x)
    c1 = not (S & de_x)
    c2 = d_separated(remove_outgoing(G, {x}), {x}, {y}, S)
    return CriterionCertificate(
        BACK_DOOR,
        x,
        y,
        tuple(sorted(S)),
        conditions=(
            (f"no member of {_fmt(S)} is a descendant of {x}", c1),
            (f"{_fmt(S)} d-separates {x} from {y} once arrows out of {x} are removed", c2),
        ),
    )


def check_conditional_iv(G: PathDiagram, x: str, y: str, z: str, T=()) -> CriterionCertificate:
    T = varset(T)
    _validate(G, x, y, {z}, T)
    de_x, de_y = G.descendants(x), G.descendants(y)
    strict = not (T & (de_x | de_y))
    loose = all(t not in de_x or t not in de_y for t in T)
    Gx = remove_outgoing(G, {x})
    c_y = d_separated(Gx, {z}, {y}, T)
    c_x = not d_separated(Gx, {z}, {x}, T)
    # without this an instrument downstream of x picks up the confounded part of x
    c_z = z not in de_x
    conditions = (
        (f"{_fmt(T)} contains no descendant of {x} or of {y}", strict),
        (f"{z} is not a descendant of {x}", c_z),
        (f"{_fmt(T)} d-separates {z} from {y} once arrows out of {x} are removed", c_y),
        (f"{_fmt(T)} does not d-separate {z} from {x} once arrows out of {x} are removed", c_x),
    )
    return CriterionCertificate(
        CONDITIONAL_IV,
        x,
        y,
        (z,),
        instrument=z,
        conditioning_set=tuple(sorted(T)),
        conditions=conditions,
        disjunctive_only=(not strict) and loose and c_z and c_y and c_x,
    )


def check_front_door(G: PathDiagram, x: str, y: str, Z) -> CriterionCertificate:
    Z = varset(Z)
    _validate(G, x, y, Z)
    if not Z:
        raise IdSelectError("the front-door criterion needs a nonempty mediator set")
    c1 = d_separated(remove_incoming(G, {x}), {x}, {y}, Z)
    Gx = remove_outgoing(G, {x})
    c2 = all(d_separated(Gx, {x}, {z}, ()) for z in Z)
    Gz = remove_outgoing(G, Z)
    c3 = all(d_separated(Gz, {z}, {y}, {x}) for z in Z)
    return CriterionCertificate(
        FRONT_DOOR,
        x,
        y,
        tuple(sorted(Z)),
        conditions=(
            (f"{_fmt(Z)} d-separates {x} from {y} once arrows into {x} are removed", c1),
            (f"no open path from {x} into {_fmt(Z)} once arrows out of {x} are removed", c2),
            (f"{x} d-separates each member of {_fmt(Z)} from {y} once arrows out of {_fmt(Z)} are removed", c3),
        ),
    )


def check_criterion(G: PathDiagram, kind: str, x: str, y: str, *, S=None, z=None, T=None, Z=None):
    """Dispatch on ``kind`` (any spelling accepted by :func:`criterion_kind`)."""
    kind = criterion_kind(kind)
    if kind == BACK_DOOR:
        return check_back_door(G, x, y, S if S is not None else Z)
    if kind == CONDITIONAL_IV:
        if z is None:
            raise IdSelectError("conditional-IV check needs an instrument")
        return check_conditional_iv(G, x, y, z, T)
    return check_front_door(G, x, y, Z if Z is not None else S)


def check_strategy(G: PathDiagram, s: Strategy) -> CriterionCertificate:
    if s.kind == CONDITIONAL_IV:
        return check_conditional_iv(G, s.treatment, s.outcome, s.instrument, s.variables)
    if s.kind == FRONT_DOOR:
        return check_front_door(G, s.treatment, s.outcome, s.variables)
    return check_back_door(G, s.treatment, s.outcome, s.variables)


# --------------------------------------------------------------------------
# enumeration


def _subsets(pool, max_size, min_size=0):
    pool = sorted(pool)
    for k in range(min_size, min(max_size, len(pool)) + 1):
        yield from (frozenset(c) for c in combinations(pool, k))


def _flag_minimal(certs):
    sets = [frozenset(c.conditioning_set if c.kind == CONDITIONAL_IV else c.primary_set) for c in certs]
    out = []
    for cert, s in zip(certs, sets):
        same_group = [
            t
            for c, t in zip(certs, sets)
            if c.kind != CONDITIONAL_IV or c.instrument == cert.instrument
        ]
        minimal = not any(t < s for t in same_group)
        out.append(replace(cert, minimal=minimal))
    return out


def candidate_pool(G: PathDiagram, kind: str, x: str, y: str) -> frozenset[str]:
    """Vertices searched by :func:`enumerate_criterion` for ``kind``."""
    kind = criterion_kind(kind)
    others = frozenset(G.vertices) - {x, y}
    if kind == BACK_DOOR:
        return others - G.descendants(x)
    if kind == CONDITIONAL_IV:
        return others - G.descendants(x) - G.descendants(y)
    on_paths = set()
    for path in directed_paths(G, x, y):
        on_paths.update(path[1:-1])
    return frozenset(on_paths)


def enumerate_criterion(G: PathDiagram, kind: str, x: str, y: str, max_size: int = DEFAULT_MAX_SIZE):
    """All valid certificates with sets of size at most ``max_size``.

    Back-door sets range over nondescendants of ``x``; conditional-IV
    conditioning sets over vertices descending from neither ``x`` nor ``y``
    (every instrument other than ``x``, ``y`` is tried); front-door sets over
    vertices on directed paths from ``x`` to ``y``.  Results are sorted by set
    size, then by name, with minimal sets flagged.
    """
    if max_size < 0:
        raise IdSelectError("max_size must be nonnegative")
    kind = criterion_kind(kind)
    _validate(G, x, y)
    pool = candidate_pool(G, kind, x, y)
    found = []
    if kind == BACK_DOOR:
        for S in _subsets(pool, max_size):
            cert = check_back_door(G, x, y, S)
            if cert.valid:
                found.append(cert)
        found.sort(key=lambda c: (len(c.primary_set), c.primary_set))
    elif kind == CONDITIONAL_IV:
        for z in sorted(frozenset(G.vertices) - {x, y}):
            for T in _subsets(pool - {z}, max_size):
                cert = check_conditional_iv(G, x, y, z, T)
                if cert.valid:
                    found.append(cert)
        found.sort(key=lambda c: (len(c.conditioning_set), c.instrument, c.conditioning_set))
    else:
        for Z in _subsets(pool, max_size, min_size=1):
            cert = check_front_door(G, x, y, Z)
            if cert.valid:
                found.append(cert)
        found.sort(key=lambda c: (len(c.primary_set), c.primary_set))
    return _flag_minimal(found)


# --------------------------------------------------------------------------
# dominance


@dataclass(frozen=True)
class DominanceVerdict:
    """Ordering between two strategies.

    When ``basis`` is graphical or numeric, ``better`` has the smaller (or
    equal) asymptotic variance.  ``equivalent`` means the conditions hold in
    both directions, so the variances coincide and no strict order is implied.
    """

    better: Strategy
    worse: Strategy
    basis: Basis
    preconditions: tuple[tuple[str, bool], ...] = ()
    equivalent: bool = False

    @property
    def ordered(self) -> bool:
        return self.basis is not Basis.INCOMPARABLE

    def as_dict(self) -> dict:
        return {
            "better": self.better.label,
            "worse": self.worse.label,
            "basis": self.basis.value,
            "equivalent": self.equivalent,
            "preconditions": [{"statement": s, "holds": ok} for s, ok in self.preconditions],
        }


def _require_valid(cert: CriterionCertificate):
    if not cert.valid:
        failed = [lbl for lbl, ok in cert.conditions if not ok]
        raise InvalidStrategyError(f"{cert.strategy().label} is not valid: {'; '.join(failed)}")


def _covariate_conditions(G, x, y, S, T):
    """The two statements under which adjusting for ``S`` beats adjusting for ``T``."""
    return (
        (f"{_fmt(T)} d-separates {x} from {_fmt(S)}", claim(G, {x}, S, T)),
        (f"{_fmt(S | {x})} d-separates {_fmt(T)} from {y}", claim(G, T, {y}, S | {x})),
    )


def graphical_dominance(G: PathDiagram, rule, x: str, y: str, **args) -> DominanceVerdict:
    """Decide an ordering from the diagram alone.

    ``rule`` and its arguments:

    ``"lemma3"`` (``S``, ``T``): two back-door sets; ``S`` is better when
        ``T`` d-separates ``x`` from ``S`` and ``S | {x}`` d-separates ``T``
        from ``y``.
    ``"prop1"`` (``z1``, ``z2``, ``T``): two conditional IVs given the same
        ``T``; ``z1`` is better when ``{z1} | T`` d-separates ``x`` from ``z2``.
    ``"prop2"`` (``S``, ``z``, ``T``): back-door ``S`` against the conditional
        IV ``z`` given ``T``; the back-door estimator is better under the same
        two statements as ``"lemma3"``, and always when ``T == S``.

    Raises :class:`InvalidStrategyError` if a strategy does not satisfy its
    criterion.
    """
    rule = Rule(rule)
    if rule is Rule.ADJUSTMENT_SETS:
        S, T = varset(args["S"]), varset(args["T"])
        if S == T:
            raise IdSelectError("cannot compare a back-door set with itself")
        _require_valid(check_back_door(G, x, y, S))
        _require_valid(check_back_door(G, x, y, T))
        a, b = Strategy.back_door(x, y, S), Strategy.back_door(x, y, T)
        forward = _covariate_conditions(G, x, y, S, T)
        if all(ok for _, ok in forward):
            reverse = _covariate_conditions(G, x, y, T, S)
            equiv = all(ok for _, ok in reverse)
            return DominanceVerdict(a, b, Basis.ADJUSTMENT_SETS, forward, equivalent=equiv)
        return DominanceVerdict(a, b, Basis.INCOMPARABLE, forward)

    if rule is Rule.INSTRUMENTS:
        z1, z2, T = args["z1"], args["z2"], varset(args.get("T"))
        if z1 == z2:
            raise IdSelectError("cannot compare an instrument with itself")
        _require_valid(check_conditional_iv(G, x, y, z1, T))
        _require_valid(check_conditional_iv(G, x, y, z2, T))
        a, b = Strategy.conditional_iv(x, y, z1, T), Strategy.conditional_iv(x, y, z2, T)
        fwd = ((f"{_fmt(T | {z1})} d-separates {x} from {z2}", claim(G, {x}, {z2}, T | {z1})),)
        if fwd[0][1]:
            equiv = claim(G, {x}, {z1}, T | {z2})
            return DominanceVerdict(a, b, Basis.INSTRUMENTS, fwd, equivalent=equiv)
        return DominanceVerdict(a, b, Basis.INCOMPARABLE, fwd)

    S, z, T = varset(args["S"]), args["z"], varset(args.get("T"))
    _require_valid(check_back_door(G, x, y, S))
    _require_valid(check_conditional_iv(G, x, y, z, T))
    a, b = Strategy.back_door(x, y, S), Strategy.conditional_iv(x, y, z, T)
    if S == T:
        return DominanceVerdict(
            a, b, Basis.BACK_DOOR_OVER_IV, ((f"conditioning set equals {_fmt(S)}", True),)
        )
    conds = _covariate_conditions(G, x, y, S, T)
    basis = Basis.BACK_DOOR_OVER_IV if all(ok for _, ok in conds) else Basis.INCOMPARABLE
    return DominanceVerdict(a, b, basis, conds)


# --------------------------------------------------------------------------
# recommendation


@dataclass
class Recommendation:
    """Ranked strategies with the basis of every pairwise ordering."""

    treatment: str
    outcome: str
    certificates: list[CriterionCertificate]
    ranking: list[Strategy]
    verdicts: list[DominanceVerdict]
    estimates: dict[Strategy, EstimateReport] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def identifiable(self) -> bool:
        return bool(self.ranking)

    def verdict(self, a: Strategy, b: Strategy) -> DominanceVerdict | None:
        for v in self.verdicts:
            if {v.better, v.worse} == {a, b}:
                return v
        return None


def _graphical_pairs(G, x, y, back_doors, civs):
    out = []
    for a, b in combinations(back_doors, 2):
        va = graphical_dominance(G, Rule.ADJUSTMENT_SETS, x, y, S=a.variables, T=b.variables)
        if va.ordered:
            out.append(va)
            continue
        vb = graphical_dominance(G, Rule.ADJUSTMENT_SETS, x, y, S=b.variables, T=a.variables)
        out.append(vb if vb.ordered else va)
    for a, b in combinations(civs, 2):
        if a.variables != b.variables:
            continue
        va = graphical_dominance(G, Rule.INSTRUMENTS, x, y, z1=a.instrument, z2=b.instrument, T=a.variables)
        if va.ordered:
            out.append(va)
            continue
        vb = graphical_dominance(G, Rule.INSTRUMENTS, x, y, z1=b.instrument, z2=a.instrument, T=a.variables)
        out.append(vb if vb.ordered else va)
    for a in back_doors:
        for b in civs:
            out.append(graphical_dominance(G, Rule.BACK_DOOR_OVER_IV, x, y, S=a.variables, z=b.instrument, T=b.variables))
    return out


def recommend(
    G: PathDiagram,
    x: str,
    y: str,
    max_size: int = DEFAULT_MAX_SIZE,
    cov=None,
    n: int | None = None,
) -> Recommendation:
    """Enumerate every valid strategy and rank them.

    Graphical orderings are applied first; with ``cov`` and ``n`` the
    remaining pairs are ordered by asymptotic variance.  The ranking is a
    topological order of the strict graphical relation, choosing among the
    available strategies by smallest variance (when known), then set size,
    then name.  An empty ranking means the effect is not identifiable by these
    three criteria.
    """
    if cov is not None:
        missing = [v for v in G.vertices if v not in cov]
        if missing:
            raise IdSelectError(f"covariance lacks diagram variables: {', '.join(missing)}")
    certs = []
    for kind in (BACK_DOOR, CONDITIONAL_IV, FRONT_DOOR):
        certs.extend(enumerate_criterion(G, kind, x, y, max_size))
    strategies = [c.strategy() for c in certs]
    rec = Recommendation(x, y, certs, [], [])
    if not strategies:
        rec.warnings.append(f"total effect of {x} on {y} is not identifiable by these three criteria")
        return rec

    back_doors = [s for s in strategies if s.kind == BACK_DOOR]
    civs = [s for s in strategies if s.kind == CONDITIONAL_IV]
    verdicts = _graphical_pairs(G, x, y, back_doors, civs)

    if cov is not None and n is not None:
        for s in strategies:
            try:
                rec.estimates[s] = estimate(cov, s, n)
            except IdSelectError as exc:
                rec.warnings.append(f"{s.label}: {exc}")

    decided = {frozenset((v.better, v.worse)) for v in verdicts if v.ordered}
    for a, b in combinations(strategies, 2):
        key = frozenset((a, b))
        if key in decided:
            continue
        ea, eb = rec.estimates.get(a), rec.estimates.get(b)
        if ea is not None and eb is not None:
            diff = ea.n_times_avar - eb.n_times_avar
            better, worse = (a, b) if diff <= 0 else (b, a)
            verdicts.append(
                DominanceVerdict(better, worse, Basis.NUMERIC, equivalent=abs(diff) < NUMERIC_TIE)
            )
        elif not any(frozenset((v.better, v.worse)) == key for v in verdicts):
            verdicts.append(DominanceVerdict(a, b, Basis.INCOMPARABLE))
    # a numeric verdict supersedes the graphical "no rule applies"
    numeric = {frozenset((v.better, v.worse)) for v in verdicts if v.basis is Basis.NUMERIC}
    verdicts = [v for v in verdicts if v.ordered or frozenset((v.better, v.worse)) not in numeric]

    strict = [v for v in verdicts if v.basis.graphical and not v.equivalent]
    rec.ranking = _rank(strategies, strict, rec.estimates)
    rec.verdicts = sorted(
        verdicts, key=lambda v: (rec.ranking.index(v.better), rec.ranking.index(v.worse))
    )
    for s in strategies:
        notes = rec.estimates[s].warnings if s in rec.estimates else ()
        rec.warnings.extend(f"{s.label}: {w}" for w in notes)
    return rec


def _rank(strategies, strict_verdicts, estimates):
    preds = {s: set() for s in strategies}
    for v in strict_verdicts:
        preds[v.worse].add(v.better)

    def key(s):
        est = estimates.get(s)
        # round so that numeric ties fall through to size and name
        var = round(est.n_times_avar, 12) if est is not None else 0.0
        return (var, s.size, s.sort_key())

    ranking, placed = [], set()
    while len(ranking) < len(strategies):
        ready = [s for s in strategies if s not in placed and preds[s] <= placed]
        if not ready:
            # a cycle can only join strategies of equal variance
            ready = [s for s in strategies if s not in placed]
        nxt = min(ready, key=key)
        ranking.append(nxt)
        placed.add(nxt)
    return ranking
