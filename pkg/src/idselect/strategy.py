"""Descriptors for the three ways of identifying a total effect."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IdSelectError

BACK_DOOR = "back_door"
CONDITIONAL_IV = "conditional_iv"
FRONT_DOOR = "front_door"
KINDS = (BACK_DOOR, CONDITIONAL_IV, FRONT_DOOR)

_ALIASES = {
    "back-door": BACK_DOOR,
    "back_door": BACK_DOOR,
    "backdoor": BACK_DOOR,
    "bd": BACK_DOOR,
    "conditional-iv": CONDITIONAL_IV,
    "conditional_iv": CONDITIONAL_IV,
    "civ": CONDITIONAL_IV,
    "iv": CONDITIONAL_IV,
    "front-door": FRONT_DOOR,
    "front_door": FRONT_DOOR,
    "frontdoor": FRONT_DOOR,
    "fd": FRONT_DOOR,
}


def criterion_kind(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise IdSelectError(
            f"unknown criterion {name!r}; expected back-door, conditional-iv or front-door"
        ) from None


def split_names(text: str) -> tuple[str, ...]:
    """``"A,B"`` -> ``("A", "B")``; the empty string is the empty set."""
    return tuple(s.strip() for s in text.split(",") if s.strip())


@dataclass(frozen=True)
class Strategy:
    """One estimation strategy for the effect of ``treatment`` on ``outcome``.

    ``variables`` holds the back-door adjustment set, the conditioning set of a
    conditional IV, or the front-door mediators, stored sorted.
    """

    kind: str
    treatment: str
    outcome: str
    variables: tuple[str, ...] = ()
    instrument: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise IdSelectError(f"unknown strategy kind {self.kind!r}")
        object.__setattr__(self, "variables", tuple(sorted(set(self.variables))))
        if (self.kind == CONDITIONAL_IV) != (self.instrument is not None):
            raise IdSelectError("an instrument is given exactly for conditional-IV strategies")

    @classmethod
    def back_door(cls, x, y, S=()):
        return cls(BACK_DOOR, x, y, _names(S))

    @classmethod
    def conditional_iv(cls, x, y, z, T=()):
        return cls(CONDITIONAL_IV, x, y, _names(T), z)

    @classmethod
    def front_door(cls, x, y, Z):
        return cls(FRONT_DOOR, x, y, _names(Z))

    @classmethod
    def parse(cls, text: str, x: str, y: str) -> "Strategy":
        """Parse ``back-door:S1,S2``, ``civ:Z|T1,T2`` or ``front-door:M1,M2``."""
        if ":" not in text:
            raise IdSelectError(f"strategy {text!r} must look like kind:sets")
        head, body = text.split(":", 1)
        kind = criterion_kind(head)
        if kind == CONDITIONAL_IV:
            z, _, rest = body.partition("|")
            if not z.strip():
                raise IdSelectError(f"conditional-IV strategy {text!r} needs an instrument")
            return cls.conditional_iv(x, y, z.strip(), split_names(rest))
        if kind == FRONT_DOOR:
            return cls.front_door(x, y, split_names(body))
        return cls.back_door(x, y, split_names(body))

    @property
    def size(self) -> int:
        return len(self.variables)

    @property
    def spec(self) -> str:
        """Inverse of :meth:`parse`."""
        body = ",".join(self.variables)
        if self.kind == CONDITIONAL_IV:
            return f"civ:{self.instrument}|{body}"
        return f"{self.kind.replace('_', '-')}:{body}"

    @property
    def label(self) -> str:
        sets = "{" + ",".join(self.variables) + "}"
        if self.kind == CONDITIONAL_IV:
            return f"civ({self.instrument}|{sets})"
        return f"{self.kind.replace('_', '-')}{sets}"

    def sets(self) -> dict:
        if self.kind == BACK_DOOR:
            return {"adjust": list(self.variables)}
        if self.kind == CONDITIONAL_IV:
            return {"instrument": self.instrument, "given": list(self.variables)}
        return {"mediators": list(self.variables)}

    def sort_key(self):
        return (KINDS.index(self.kind), self.size, self.instrument or "", self.variables)

    def __str__(self):
        return self.label


def _names(v) -> tuple[str, ...]:
    if v is None:
        return ()
    if isinstance(v, str):
        return (v,)
    return tuple(v)
