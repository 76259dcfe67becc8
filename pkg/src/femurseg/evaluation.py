"""Delineation comparison metrics and survey tally arithmetic."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import (BadParam, DimMismatch, EmptyContour, EmptyVotes,
                     MixedVerdictDomain)

SURVEY_ONE_VERDICTS = ("both", "first", "second", "none")
SURVEY_TWO_VERDICTS = ("none_needed", "small", "medium", "large")


@dataclass(frozen=True)
class VoteRecord:
    survey: str    # "one" | "two"
    rater: str
    item: str
    region: str    # proximal | medial | distal
    source: str    # manual | automatic
    verdict: str

    def __post_init__(self):
        if self.survey not in ("one", "two"):
            raise BadParam(f"unknown survey {self.survey!r}")
        domain = SURVEY_ONE_VERDICTS if self.survey == "one" else SURVEY_TWO_VERDICTS
        if self.verdict not in domain:
            raise MixedVerdictDomain(
                f"verdict {self.verdict!r} not in survey-{self.survey} domain {domain}")


@dataclass(frozen=True)
class MetricReport:
    dice: float
    jaccard: float
    hausdorff_mm: float
    mean_surface_distance_mm: float

    def __post_init__(self):
        if self.jaccard > self.dice + 1e-12 or min(
                self.dice, self.jaccard, self.hausdorff_mm,
                self.mean_surface_distance_mm) < 0:
            raise BadParam("inconsistent metric report")


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A∩B| / (|A|+|B|); 1.0 when both masks are empty."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise DimMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 and nb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (na + nb)


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    d = dice(a, b)
    return d / (2.0 - d)


def _directed_distances(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = p[:, None, :] - q[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2)).min(axis=1)


def hausdorff(a: np.ndarray, b: np.ndarray, spacing: float = 1.0) -> float:
    """Symmetric Hausdorff distance between point sets, scaled to mm."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise EmptyContour("hausdorff needs non-empty point sets")
    d_ab = _directed_distances(a, b).max()
    d_ba = _directed_distances(b, a).max()
    return float(max(d_ab, d_ba) * spacing)


def mean_surface_distance(a: np.ndarray, b: np.ndarray, spacing: float = 1.0) -> float:
    """Average of both directed mean point-to-set distances, scaled to mm."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise EmptyContour("mean surface distance needs non-empty point sets")
    return float((_directed_distances(a, b).mean()
                  + _directed_distances(b, a).mean()) / 2.0 * spacing)


def compare_masks(pred: np.ndarray, truth: np.ndarray,
                  spacing: float = 1.0) -> MetricReport:
    d = dice(pred, truth)
    pa = np.argwhere(np.asarray(pred).astype(bool))
    ta = np.argwhere(np.asarray(truth).astype(bool))
    if len(pa) and len(ta):
        hd = hausdorff(pa, ta, spacing)
        msd = mean_surface_distance(pa, ta, spacing)
    else:
        hd = msd = 0.0 if d == 1.0 else float("inf")
    return MetricReport(dice=d, jaccard=jaccard(pred, truth),
                        hausdorff_mm=hd, mean_surface_distance_mm=msd)


def _percentages(bucket: dict[str, int]) -> dict[str, float]:
    """One-decimal percentages by largest remainder, so groups sum to 100."""
    total = sum(bucket.values())
    units = {v: 1000.0 * c / total for v, c in bucket.items()}  # tenths of %
    floored = {v: int(u) for v, u in units.items()}
    leftover = 1000 - sum(floored.values())
    order = sorted(bucket, key=lambda v: (-(units[v] - floored[v]),
                                          list(bucket).index(v)))
    for v in order[:leftover]:
        floored[v] += 1
    return {v: floored[v] / 10.0 for v in bucket}


def tally_survey(votes: list[VoteRecord]) -> dict:
    """Percentage breakdown of verdicts.

    Survey one groups by (survey, region); survey two groups by
    (survey, source).  Percentages within a group sum to 100 exactly
    (largest-remainder rounding at one decimal).
    """
    if not votes:
        raise EmptyVotes("no votes to tally")
    groups: dict[tuple, dict[str, int]] = {}
    for v in votes:
        domain = SURVEY_ONE_VERDICTS if v.survey == "one" else SURVEY_TWO_VERDICTS
        if v.verdict not in domain:
            raise MixedVerdictDomain(f"verdict {v.verdict!r} in survey {v.survey}")
        key = (v.survey, v.region) if v.survey == "one" else (v.survey, v.source)
        bucket = groups.setdefault(key, {verdict: 0 for verdict in domain})
        bucket[v.verdict] += 1
    return {"/".join(key): _percentages(bucket)
            for key, bucket in sorted(groups.items())}


def votes_from_csv(text: str) -> list[VoteRecord]:
    """Parse the votes CSV: survey,rater,item,region,source,verdict."""
    reader = csv.DictReader(io.StringIO(text))
    required = {"survey", "rater", "item", "region", "source", "verdict"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise BadParam(f"votes CSV must have columns {sorted(required)}")
    votes = []
    for row in reader:
        votes.append(VoteRecord(survey=row["survey"].strip(),
                                rater=row["rater"].strip(),
                                item=row["item"].strip(),
                                region=row["region"].strip(),
                                source=row["source"].strip(),
                                verdict=row["verdict"].strip()))
    if not votes:
        raise EmptyVotes("votes CSV has a header but no rows")
    return votes
