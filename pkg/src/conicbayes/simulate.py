"""Artificial-dataset generation with ground-truth bookkeeping.

Two protocols are provided.  ``sim1`` draws points over a fixed ellipse
(semi-axes 50 and 25, center (250, 250)) with Beta(3, 3)-distributed
standardized angles and additive Gaussian noise.  ``sim2`` draws a fresh
random conic per dataset -- semi-axes from normals, a uniform axis angle,
type-specific angle ranges over partial curves -- so that the conic type must
be inferred from the data.

Each dataset owns an independent RNG stream derived from (seed, index), so
generation is deterministic and embarrassingly parallel across datasets.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConicFD, ConicType, angle_support, conic_points, standard_to_fd

SIM1_SEMI_MAJOR = 50.0
SIM1_SEMI_MINOR = 25.0
SIM2_CENTER = (250.0, 250.0)
SIM2_A_MEAN, SIM2_A_SD = 50.0, 2.0
SIM2_B_MEAN, SIM2_B_SD = 25.0, 2.0
SIM2_PARABOLA_ANGLE = 2.0  # angles uniform on (-2, 2) radians

SIM2_TYPES = (ConicType.ELLIPSE, ConicType.PARABOLA, ConicType.HYPERBOLA)


class DatasetFormatError(ValueError):
    """A dataset file failed to parse or violated the schema."""


@dataclass(frozen=True)
class GroundTruth:
    conic: ConicFD
    angles: np.ndarray
    sigma: float


@dataclass(frozen=True)
class NoisyDataset:
    """Observed points plus optional generating truth."""

    points: np.ndarray
    truth: GroundTruth | None
    seed: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be (n, 2), got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        object.__setattr__(self, "points", pts)
        if self.truth is not None and len(self.truth.angles) != len(pts):
            raise ValueError("truth angles and points disagree in length")

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SimSpec:
    protocol: str  # "sim1" | "sim2"
    n_points: int
    n_datasets: int
    sigma: float = 2.0
    seed: int = 0
    conic_type: str = "random-balanced"  # sim2 only
    phi: float = math.pi  # sim1 rotation angle

    def __post_init__(self):
        if self.protocol not in ("sim1", "sim2"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.n_points < 5:
            raise ValueError(f"n_points must be >= 5, got {self.n_points}")
        if self.n_datasets < 1:
            raise ValueError(f"n_datasets must be >= 1, got {self.n_datasets}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        allowed = {"random-balanced"} | {t.value for t in SIM2_TYPES}
        if self.conic_type not in allowed:
            raise ValueError(f"conic_type must be one of {sorted(allowed)}")

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "n_points": self.n_points,
            "n_datasets": self.n_datasets,
            "sigma": self.sigma,
            "seed": self.seed,
            "conic_type": self.conic_type,
            "phi": self.phi,
        }


def _dataset_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def simulate_sim1(spec: SimSpec) -> list[NoisyDataset]:
    """Fixed-ellipse protocol: Beta(3, 3) standardized angles, Gaussian noise."""
    if spec.protocol != "sim1":
        raise ValueError("spec.protocol must be 'sim1'")
    conic = standard_to_fd(
        ConicType.ELLIPSE, SIM1_SEMI_MAJOR, SIM1_SEMI_MINOR, SIM2_CENTER, spec.phi
    )
    out = []
    for i in range(spec.n_datasets):
        rng = _dataset_rng(spec.seed, i)
        tstar = rng.beta(3.0, 3.0, size=spec.n_points)
        t = 2.0 * math.pi * tstar - math.pi
        pts = conic_points(conic, t) + rng.normal(0.0, spec.sigma, size=(spec.n_points, 2))
        out.append(NoisyDataset(pts, GroundTruth(conic, t, spec.sigma), spec.seed))
    return out


def sim2_type_schedule(n_datasets: int, conic_type: str) -> list[ConicType]:
    """Deterministic per-dataset type allocation (balanced thirds by default)."""
    if conic_type != "random-balanced":
        return [ConicType(conic_type)] * n_datasets
    base = n_datasets // 3
    extra = n_datasets % 3
    counts = [base + (1 if i < extra else 0) for i in range(3)]
    schedule: list[ConicType] = []
    for kind, cnt in zip(SIM2_TYPES, counts):
        schedule.extend([kind] * cnt)
    return schedule


def _positive_normal(rng, mean, sd):
    x = rng.normal(mean, sd)
    while x <= 0:
        x = rng.normal(mean, sd)
    return x


def _sim2_conic(rng, kind: ConicType) -> ConicFD:
    a = _positive_normal(rng, SIM2_A_MEAN, SIM2_A_SD)
    b = None if kind is ConicType.PARABOLA else _positive_normal(rng, SIM2_B_MEAN, SIM2_B_SD)
    phi = rng.uniform(-math.pi, math.pi)
    return standard_to_fd(kind, a, b, SIM2_CENTER, phi)


def _sim2_angles(rng, kind: ConicType, e: float, n: int) -> np.ndarray:
    if kind is ConicType.ELLIPSE:
        return rng.uniform(-math.pi / 2, math.pi / 2, size=n)
    if kind is ConicType.PARABOLA:
        return rng.uniform(-SIM2_PARABOLA_ANGLE, SIM2_PARABOLA_ANGLE, size=n)
    r_sup = angle_support(e)
    t = rng.uniform(-r_sup, r_sup, size=n)
    # guard the measure-zero boundary where the radius blows up
    while True:
        bad = 1.0 + e * np.cos(t) <= 1e-12
        if not np.any(bad):
            return t
        t[bad] = rng.uniform(-r_sup, r_sup, size=int(bad.sum()))


def simulate_sim2(spec: SimSpec) -> list[NoisyDataset]:
    """Random-conic protocol over partial ellipses, parabolas and hyperbolas."""
    if spec.protocol != "sim2":
        raise ValueError("spec.protocol must be 'sim2'")
    schedule = sim2_type_schedule(spec.n_datasets, spec.conic_type)
    out = []
    for i, kind in enumerate(schedule):
        rng = _dataset_rng(spec.seed, i)
        conic = _sim2_conic(rng, kind)
        t = _sim2_angles(rng, kind, conic.e, spec.n_points)
        pts = conic_points(conic, t) + rng.normal(0.0, spec.sigma, size=(spec.n_points, 2))
        out.append(NoisyDataset(pts, GroundTruth(conic, t, spec.sigma), spec.seed))
    return out


def simulate(spec: SimSpec) -> list[NoisyDataset]:
    return simulate_sim1(spec) if spec.protocol == "sim1" else simulate_sim2(spec)


# ---------------------------------------------------------------------------
# Dataset files.  JSON is the lossless format; CSV carries the points only.
# ---------------------------------------------------------------------------


def write_text_atomic(path, text: str) -> None:
    """Write via a temp file and rename, so failures never leave partials."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dataset_to_dict(ds: NoisyDataset) -> dict:
    truth = None
    if ds.truth is not None:
        c = ds.truth.conic
        truth = {
            "h": c.h,
            "k": c.k,
            "phi": c.phi,
            "l": c.l,
            "e": c.e,
            "sigma": ds.truth.sigma,
            "angles": [float(t) for t in ds.truth.angles],
        }
    return {
        "points": [[float(x), float(y)] for x, y in ds.points],
        "truth": truth,
        "seed": int(ds.seed),
    }


def dataset_from_dict(payload: dict) -> NoisyDataset:
    try:
        raw_pts = payload["points"]
    except (KeyError, TypeError) as ex:
        raise DatasetFormatError("missing 'points' field") from ex
    pts = []
    for idx, row in enumerate(raw_pts):
        if not isinstance(row, (list, tuple)) or len(row) != 2:
            raise DatasetFormatError(f"point {idx} is not an [x, y] pair: {row!r}")
        x, y = row
        if not (isinstance(x, (int, float)) and isinstance(y, (int, float))):
            raise DatasetFormatError(f"point {idx} has non-numeric coordinates: {row!r}")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DatasetFormatError(f"point {idx} has non-finite coordinate: {row!r}")
        pts.append((float(x), float(y)))
    truth = None
    raw_truth = payload.get("truth")
    if raw_truth is not None:
        try:
            conic = ConicFD(
                raw_truth["h"], raw_truth["k"], raw_truth["phi"], raw_truth["l"], raw_truth["e"]
            )
            angles = np.asarray(raw_truth["angles"], dtype=float)
            sigma = float(raw_truth["sigma"])
        except (KeyError, TypeError, ValueError) as ex:
            raise DatasetFormatError(f"malformed truth block: {ex}") from ex
        truth = GroundTruth(conic, angles, sigma)
    seed = payload.get("seed", 0)
    if not isinstance(seed, int):
        raise DatasetFormatError(f"seed must be an integer, got {seed!r}")
    try:
        return NoisyDataset(np.asarray(pts, dtype=float), truth, seed)
    except ValueError as ex:
        raise DatasetFormatError(str(ex)) from ex


def save_dataset(path, ds: NoisyDataset) -> None:
    path = os.fspath(path)
    if path.endswith(".csv"):
        lines = ["x,y"]
        lines += [f"{float(x)!r},{float(y)!r}" for x, y in ds.points]
        write_text_atomic(path, "\n".join(lines) + "\n")
        return
    write_text_atomic(path, json.dumps(dataset_to_dict(ds), sort_keys=True, indent=1) + "\n")


def load_dataset(path) -> NoisyDataset:
    path = os.fspath(path)
    if path.endswith(".csv"):
        pts = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip().lower() for h in header[:2]] != ["x", "y"]:
                raise DatasetFormatError(f"{path}: expected 'x,y' header, got {header!r}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    x, y = float(row[0]), float(row[1])
                except (ValueError, IndexError) as ex:
                    raise DatasetFormatError(f"{path}:{lineno}: bad row {row!r}") from ex
                if not (math.isfinite(x) and math.isfinite(y)):
                    raise DatasetFormatError(f"{path}:{lineno}: non-finite coordinate")
                pts.append((x, y))
        return NoisyDataset(np.asarray(pts, dtype=float), None, 0)
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as ex:
            raise DatasetFormatError(f"{path}: invalid JSON at line {ex.lineno}: {ex.msg}") from ex
    try:
        return dataset_from_dict(payload)
    except DatasetFormatError as ex:
        raise DatasetFormatError(f"{path}: {ex}") from ex
