"""Dataset files, observation masks, synthetic blob generation, zero-fill.

A dataset directory holds ``view1.csv .. viewV.csv`` (one instance per row,
comma-separated decimals, no header), ``labels.csv`` (one integer per line),
an optional ``mask.csv`` (0/1 per view column), and ``meta.json``. Floats are
serialized with their shortest round-trip representation, so save followed
by load is bit-exact.

Mask sampling uses the PCG64 generator; the algorithm name is echoed into
run manifests so masks can be regenerated from (seed, algorithm) alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, GenerationError, ParseError

MASK_PRNG = "pcg64"


@dataclass
class ViewSet:
    """Per-view feature matrices sharing one instance axis."""

    views: list

    def __post_init__(self):
        if not self.views:
            raise DataError("a ViewSet needs at least one view")
        n = self.views[0].shape[0]
        if any(v.shape[0] != n for v in self.views):
            raise DataError("views disagree on instance count")

    @property
    def n_instances(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list:
        return [v.shape[1] for v in self.views]


def _format_float(x: float) -> str:
    return repr(float(x))


def write_matrix(path: Path, matrix: np.ndarray, integer: bool = False):
    lines = []
    for row in np.atleast_2d(matrix):
        if integer:
            lines.append(",".join(str(int(v)) for v in row))
        else:
            lines.append(",".join(_format_float(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix(path: Path) -> np.ndarray:
    rows = []
    width = None
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise FormatError(f"{path.name}: line {lineno} has {len(cells)} cells, expected {width}")
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path.name}: line {lineno}, column {col}: {cell!r} is not numeric") from None
            rows.append(parsed)
    if not rows:
        raise FormatError(f"{path.name}: empty file")
    return np.array(rows, dtype=np.float64)


def minmax_scale(x: np.ndarray) -> np.ndarray:
    """Per-feature scaling to [0, 1]; constant features map to 0."""
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    span = np.where(span > 0, span, 1.0)
    return (x - lo) / span


def save_dataset(path, views: ViewSet, labels: np.ndarray, mask: np.ndarray | None = None):
    """Write the directory layout readable by :func:`load_dataset`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for v, matrix in enumerate(views.views, start=1):
        write_matrix(path / f"view{v}.csv", matrix)
    write_matrix(path / "labels.csv", np.asarray(labels).reshape(-1, 1), integer=True)
    if mask is not None:
        write_matrix(path / "mask.csv", np.asarray(mask).astype(int), integer=True)
    meta = {
        "n_instances": views.n_instances,
        "n_views": views.n_views,
        "n_clusters": int(np.max(labels)) + 1,
        "dims": views.dims,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_dataset(path, minmax: bool = False):
    """Read a dataset directory; returns (ViewSet, labels, mask or None).

    With ``minmax`` each view is feature-scaled to [0, 1] after reading.
    When a mask is present, missing rows are zero-filled on load (after any
    scaling, so placeholder zeros never leak into feature ranges).
    """
    path = Path(path)
    view_paths = sorted(path.glob("view*.csv"), key=lambda p: int(p.stem[4:]))
    if not view_paths:
        raise FormatError(f"{path}: no view files found")
    matrices = [read_matrix(p) for p in view_paths]
    n = matrices[0].shape[0]
    for p, m in zip(view_paths, matrices):
        if m.shape[0] != n:
            raise FormatError(f"{p.name}: {m.shape[0]} rows, expected {n}")

    labels_raw = read_matrix(path / "labels.csv")
    if labels_raw.shape[1] != 1:
        raise FormatError("labels.csv: expected one label per line")
    if labels_raw.shape[0] != n:
        raise FormatError(f"labels.csv: {labels_raw.shape[0]} rows, expected {n}")
    labels = labels_raw[:, 0].astype(np.int64)

    mask = None
    mask_path = path / "mask.csv"
    if mask_path.exists():
        raw = read_matrix(mask_path)
        if raw.shape != (n, len(matrices)):
            raise FormatError(f"mask.csv: shape {raw.shape}, expected ({n}, {len(matrices)})")
        if not np.isin(raw, (0.0, 1.0)).all():
            raise FormatError("mask.csv: entries must be 0 or 1")
        mask = raw.astype(bool)
        if not mask.any(axis=1).all():
            bad = int(np.where(~mask.any(axis=1))[0][0])
            raise DataError(f"mask.csv: instance {bad} is missing in every view")

    if minmax:
        matrices = [minmax_scale(m) for m in matrices]
    views = ViewSet(matrices)
    if mask is not None:
        views = zero_fill(views, mask)
    return views, labels, mask


def make_mask(n: int, n_views: int, eta: float, seed: int) -> np.ndarray:
    """Mark floor(eta * n) instances as missing exactly one view each."""
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"missing rate must lie in [0, 1], got {eta}")
    if n_views < 2:
        raise ConfigError("need at least 2 views to delete one")
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = np.ones((n, n_views), dtype=bool)
    # tolerate decimal eta values that land just below an integer product
    n_incomplete = int(np.floor(eta * n + 1e-9))
    rows = rng.choice(n, size=n_incomplete, replace=False)
    dropped = rng.integers(0, n_views, size=n_incomplete)
    mask[rows, dropped] = False
    return mask


def zero_fill(views: ViewSet, mask: np.ndarray) -> ViewSet:
    """Zero the rows of each view where the mask says the instance is missing."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (views.n_instances, views.n_views):
        raise DataError(f"mask shape {mask.shape} does not match views")
    filled = []
    for v, matrix in enumerate(views.views):
        out = matrix.copy()
        out[~mask[:, v]] = 0.0
        filled.append(out)
    return ViewSet(filled)


def _random_rotation(rng, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def synth_blobs(
    n: int,
    n_views: int,
    n_clusters: int,
    dim: int,
    noise_sigma: float,
    view_transforms: str = "rotation",
    seed: int = 0,
):
    """Cluster-consistent Gaussian blobs, one independent layout per view.

    Centers are redrawn (up to 100 times) until every pair is at least
    6 * noise_sigma apart; each view then applies its own random rotation so
    the views differ while sharing the label partition. Cluster sizes are
    balanced within one instance.
    """
    if n < n_clusters * n_views:
        raise ConfigError(f"need n >= clusters * views, got {n} < {n_clusters * n_views}")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be nonnegative")
    if view_transforms not in ("rotation", "none"):
        raise ConfigError(f"unknown view transform {view_transforms!r}")
    rng = np.random.Generator(np.random.PCG64(seed))

    counts = np.full(n_clusters, n // n_clusters)
    counts[: n % n_clusters] += 1
    labels = np.repeat(np.arange(n_clusters), counts)

    spread = max(1.0, 4.0 * noise_sigma)
    matrices = []
    for _ in range(n_views):
        centers = None
        for _attempt in range(100):
            candidate = rng.normal(size=(n_clusters, dim)) * spread
            diff = candidate[:, None, :] - candidate[None, :, :]
            dist = np.sqrt((diff**2).sum(axis=2))
            np.fill_diagonal(dist, np.inf)
            if dist.min() >= 6.0 * noise_sigma:
                centers = candidate
                break
        if centers is None:
            raise GenerationError("could not separate cluster centers; lower noise_sigma or raise dim")
        points = centers[labels] + noise_sigma * rng.normal(size=(n, dim))
        if view_transforms == "rotation":
            points = points @ _random_rotation(rng, dim)
        matrices.append(points)
    return ViewSet(matrices), labels
