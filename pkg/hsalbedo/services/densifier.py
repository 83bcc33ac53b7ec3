"""
Densification service: fill pixels without LiDAR albedo by spectral lookup.

A dictionary of (signature, albedo) pairs is built from measured pixels.
Every other pixel takes the mean linear-RGB albedo of the k entries with
the lowest hybrid score

    score(q, e) = ‖q − e‖₂ − α · cos(q, e)

Ties are broken by the entry's row-major source-pixel order. Signatures are
raw radiance, so α is in radiance units.
"""

import warnings
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial import cKDTree

from hsalbedo.logging_config import get_logger
from hsalbedo.models import (
    AlbedoMap,
    HsAlbedoError,
    Provenance,
    SpectralCube,
    SpectralSignature,
    WavelengthGrid,
)
from hsalbedo.services.spectral_core import require_same_grid

logger = get_logger(__name__)

DEFAULT_ALPHA = 1.0
DEFAULT_K_NEIGHBORS = 3
DEFAULT_CHUNK_SIZE = 64

# Relative slack on the ball-query radius so rounding never drops a candidate
_RADIUS_SLACK = 1e-9


class DictionaryError(HsAlbedoError, ValueError):
    """Raised when a spectral dictionary cannot be built or queried."""


class DegenerateSignatureWarning(UserWarning):
    """Emitted when a zero-norm signature makes the cosine term undefined."""


class DensifierConfig(BaseModel):
    """Hybrid-distance lookup settings."""

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={"example": {"alpha": 1.0, "k_neighbors": 3, "method": "brute"}},
    )

    alpha: float = Field(default=DEFAULT_ALPHA, ge=0, description="Cosine weight, radiance units")
    k_neighbors: int = Field(default=DEFAULT_K_NEIGHBORS, ge=1)
    method: Literal["brute", "kdtree"] = Field(
        default="brute", description="Linear scan, or exact k-d tree candidate pruning"
    )
    chunk_size: int = Field(default=DEFAULT_CHUNK_SIZE, ge=1, description="Queries per batch")


class SpectralDictionary(BaseModel):
    """Measured signatures with their albedos, in row-major source order."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: WavelengthGrid
    signatures: np.ndarray = Field(..., description="N×B radiance signatures")
    albedos: np.ndarray = Field(..., description="N×3 linear RGB")
    pixels: np.ndarray = Field(..., description="N×2 (u, v) source pixels")

    @property
    def size(self) -> int:
        return int(self.signatures.shape[0])

    def signature(self, index: int) -> SpectralSignature:
        return SpectralSignature(grid=self.grid, values=self.signatures[index])


class DensifyResult(BaseModel):
    """Diagnostics of a densify run."""

    dictionary_size: int
    requested_k: int
    effective_k: int
    alpha: float
    method: str
    filled: int = Field(default=0, description="Pixels assigned by lookup")
    measured: int = Field(default=0, description="Pixels passed through unchanged")
    degenerate_signatures: int = Field(default=0, description="Zero-norm queries or entries")
    warnings: List[str] = Field(default_factory=list)


def build_dictionary(cube: SpectralCube, sparse: AlbedoMap) -> SpectralDictionary:
    """
    Collect (signature, albedo) entries from measured pixels.

    Densified pixels never enter the dictionary.

    Raises:
        DictionaryError: If the frames differ or no pixel is measured
    """
    if (sparse.width, sparse.height) != (cube.width, cube.height):
        raise DictionaryError(
            f"Albedo frame {sparse.width}x{sparse.height} does not match "
            f"cube {cube.width}x{cube.height}"
        )
    rows, cols = np.nonzero(sparse.provenance == Provenance.MEASURED)
    if rows.size == 0:
        raise DictionaryError("No measured albedo pixels to build a dictionary from")

    signatures = cube.radiance[rows, cols, :].astype(np.float64)
    albedos = sparse.linear_rgb[rows, cols, :]
    pixels = np.stack([cols, rows], axis=-1).astype(np.int64)
    for array in (signatures, albedos, pixels):
        array.setflags(write=False)

    logger.info(f"Built spectral dictionary with {rows.size} entries")
    return SpectralDictionary(grid=cube.grid, signatures=signatures, albedos=albedos, pixels=pixels)


def _score_block(queries: np.ndarray, entries: np.ndarray, alpha: float) -> np.ndarray:
    """
    Hybrid scores for every (query, entry) pair, shape Q×N.

    Elementwise sums keep a pair's score independent of which other entries
    are in the block.
    """
    diff = queries[:, None, :] - entries[None, :, :]
    distance = np.sqrt(np.sum(diff * diff, axis=-1))
    dot = np.sum(queries[:, None, :] * entries[None, :, :], axis=-1)
    q_norm = np.sqrt(np.sum(queries * queries, axis=-1))
    e_norm = np.sqrt(np.sum(entries * entries, axis=-1))
    denom = q_norm[:, None] * e_norm[None, :]
    cosine = np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)
    return distance - alpha * cosine


def hybrid_distance(query: SpectralSignature, entry: SpectralSignature, alpha: float) -> float:
    """
    Hybrid dissimilarity between two signatures; lower is more similar.

    A zero-norm signature contributes a cosine of 0 and emits a
    DegenerateSignatureWarning.

    Raises:
        GridError: If the signatures are on different grids
    """
    require_same_grid(query.grid, entry.grid, "signature grids")
    q = query.values[None, :]
    e = entry.values[None, :]
    if not np.any(q) or not np.any(e):
        warnings.warn(
            "Zero-norm signature: cosine term set to 0", DegenerateSignatureWarning, stacklevel=2
        )
    return float(_score_block(q, e, alpha)[0, 0])


def _top_k(scores: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    # candidates ascend by entry index, so a stable sort breaks ties in row-major order
    order = np.argsort(scores, kind="stable")[:k]
    return candidates[order]


def query_neighbors(
    dictionary: SpectralDictionary,
    queries: np.ndarray,
    alpha: float,
    k: int,
    method: str = "brute",
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> np.ndarray:
    """
    Indices of the k lowest-score dictionary entries for each query.

    "brute" scans every entry. "kdtree" finds the Euclidean k-th neighbor
    distance d_k. Radiance signatures are nonnegative, so those k entries
    score at most d_k, and any entry scoring at or below d_k lies within
    d_k + α of the query. A ball query of that radius is rescored exactly.
    Both methods return identical indices.

    Args:
        dictionary: Spectral dictionary
        queries: Q×B query signatures
        alpha: Cosine weight
        k: Neighbors per query, at most the dictionary size
        method: "brute" or "kdtree"
        chunk_size: Queries scored per batch (brute)

    Returns:
        Q×k entry indices, best first
    """
    queries = np.asarray(queries, dtype=np.float64)
    entries = dictionary.signatures
    if queries.ndim != 2 or queries.shape[1] != entries.shape[1]:
        raise DictionaryError(
            f"Queries must be Q×{entries.shape[1]}, got shape {queries.shape}"
        )
    if not 1 <= k <= dictionary.size:
        raise DictionaryError(f"k={k} outside [1, {dictionary.size}]")

    result = np.empty((queries.shape[0], k), dtype=np.int64)
    all_entries = np.arange(dictionary.size)

    if method == "brute":
        for start in range(0, queries.shape[0], chunk_size):
            block = queries[start:start + chunk_size]
            scores = _score_block(block, entries, alpha)
            result[start:start + block.shape[0]] = np.argsort(scores, axis=1, kind="stable")[:, :k]
        return result

    if method != "kdtree":
        raise DictionaryError(f"Unknown neighbor search method '{method}'")

    tree = cKDTree(entries)
    euclid, _ = tree.query(queries, k=k)
    kth = euclid if k == 1 else euclid[:, -1]
    for i, query in enumerate(queries):
        radius = (kth[i] + alpha) * (1.0 + _RADIUS_SLACK) + _RADIUS_SLACK
        candidates = np.array(sorted(tree.query_ball_point(query, r=radius)), dtype=np.int64)
        if candidates.size < k:
            candidates = all_entries
        scores = _score_block(query[None, :], entries[candidates], alpha)[0]
        result[i] = _top_k(scores, candidates, k)
    return result


def densify(
    cube: SpectralCube, sparse: AlbedoMap, config: Optional[DensifierConfig] = None
) -> Tuple[AlbedoMap, DensifyResult]:
    """
    Fill every non-measured pixel from its nearest dictionary entries.

    Measured pixels pass through bit-identical; filled pixels are the mean
    linear-RGB of their k best entries and are tagged densified.

    Args:
        cube: Scene radiance the sparse map was recovered from
        sparse: Albedo map with measured pixels
        config: Lookup settings, defaults to DensifierConfig()

    Returns:
        (dense AlbedoMap with no invalid pixel, DensifyResult)

    Raises:
        DictionaryError: If no measured pixel exists
    """
    config = config or DensifierConfig()
    dictionary = build_dictionary(cube, sparse)

    result = DensifyResult(
        dictionary_size=dictionary.size,
        requested_k=config.k_neighbors,
        effective_k=min(config.k_neighbors, dictionary.size),
        alpha=config.alpha,
        method=config.method,
    )
    if result.effective_k < config.k_neighbors:
        message = (
            f"k_neighbors={config.k_neighbors} exceeds dictionary size {dictionary.size}; "
            f"using k={result.effective_k}"
        )
        result.warnings.append(message)
        logger.warning(message)

    measured = sparse.provenance == Provenance.MEASURED
    rows, cols = np.nonzero(~measured)
    queries = cube.radiance[rows, cols, :].astype(np.float64)

    degenerate = int(np.count_nonzero(~np.any(queries, axis=-1)))
    degenerate += int(np.count_nonzero(~np.any(dictionary.signatures, axis=-1)))
    if degenerate:
        result.degenerate_signatures = degenerate
        message = f"{degenerate} zero-norm signatures scored with cosine 0"
        result.warnings.append(message)
        logger.warning(message)

    linear = np.array(sparse.linear_rgb, copy=True)
    provenance = np.array(sparse.provenance, copy=True)
    if rows.size:
        neighbors = query_neighbors(
            dictionary,
            queries,
            config.alpha,
            result.effective_k,
            method=config.method,
            chunk_size=config.chunk_size,
        )
        linear[rows, cols] = dictionary.albedos[neighbors].mean(axis=1)
        provenance[rows, cols] = Provenance.DENSIFIED

    result.filled = int(rows.size)
    result.measured = int(np.count_nonzero(measured))
    logger.info(
        f"Densified {result.filled} pixels from {dictionary.size} entries "
        f"(k={result.effective_k}, alpha={config.alpha}, method={config.method})"
    )
    return AlbedoMap(linear_rgb=linear, provenance=provenance), result
