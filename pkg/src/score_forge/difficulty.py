"""Per-domain difficulty formulas and bucket thresholds."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional, Sequence

from .errors import MissingFeature

BUCKETS = ("easy", "medium", "hard")

# (coefficient, feature) terms of each domain formula; mix is handled separately
FORMULAS = {
    "space": ((0.3, "nm"), (0.5, "pr"), (0.2, "al")),
    "time": ((0.02, "lc"), (0.2, "cg"), (0.25, "na"), (0.05, "dk"), (0.5, "dq"), (1.0, "dc")),
    "social": ((0.4, "cl"), (0.3, "nm"), (0.3, "ne")),
    "nature": ((0.4, "kl"), (0.3, "cl"), (0.5, "nm")),
}
MIX_FEATURES = ("level_nature", "level_space", "nm_q", "nm_a")
INDICATORS = ("pr", "al", "nm_q", "nm_a", "level_space")


@dataclass
class DifficultyFeatures:
    """Feature vector; only the fields used by the question's domain are set."""

    nm: Optional[float] = None
    pr: Optional[int] = None
    al: Optional[int] = None
    lc: Optional[int] = None
    cg: Optional[float] = None
    na: Optional[int] = None
    dk: Optional[float] = None
    dq: Optional[float] = None
    dc: Optional[float] = None
    cl: Optional[int] = None
    ne: Optional[int] = None
    kl: Optional[float] = None
    nm_q: Optional[int] = None
    nm_a: Optional[int] = None
    level_space: Optional[int] = None
    level_nature: Optional[float] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DifficultyFeatures":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def required_features(domain: str) -> tuple[str, ...]:
    if domain == "mix":
        return MIX_FEATURES
    if domain not in FORMULAS:
        raise MissingFeature(f"no difficulty formula for domain {domain!r}")
    return tuple(name for _, name in FORMULAS[domain])


def level(domain: str, features: DifficultyFeatures) -> float:
    values = features.as_dict()
    missing = [n for n in required_features(domain) if n not in values]
    if missing:
        raise MissingFeature(f"{domain} difficulty needs {missing}")
    if domain == "mix":
        return (0.4 * values["level_nature"] + values["level_space"]
                + (values["nm_q"] + values["nm_a"]) / 2)
    return sum(c * values[name] for c, name in FORMULAS[domain])


def bucket(score: float, thresholds: Sequence[float]) -> str:
    """easy if score <= t1, medium if score <= t2, hard otherwise."""
    t1, t2 = thresholds
    if score <= t1:
        return "easy"
    if score <= t2:
        return "medium"
    return "hard"


def fit_thresholds(scores: Sequence[float], targets: Sequence[float] = (1 / 6, 1 / 2)) -> list[float]:
    """Cut points between observed scores whose cumulative shares are closest to ``targets``.

    Scores are often discrete, so the cut is chosen among midpoints of
    consecutive distinct values (plus the extremes).
    """
    if not scores:
        raise ValueError("cannot calibrate on an empty sample")
    values = sorted(scores)
    distinct = sorted(set(values))
    cuts = [distinct[0] - 1.0] + [(a + b) / 2 for a, b in zip(distinct, distinct[1:])] + [distinct[-1]]
    n = len(values)

    def share(cut: float) -> float:
        return sum(1 for v in values if v <= cut) / n

    shares = [(share(c), c) for c in cuts]
    out = []
    for target in targets:
        _, best = min(shares, key=lambda sc: (abs(sc[0] - target), sc[1]))
        out.append(round(best, 6))
    if out[1] < out[0]:
        out[1] = out[0]
    return out
