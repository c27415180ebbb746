"""Embedding-similarity hallucination profiling.

System outputs are compared with references by cosine similarity of sentence
embeddings; a shuffled-reference baseline (a seeded derangement, so no
reference is compared with itself) marks the similarity region where
hallucinations live. Both similarity samples are turned into kernel density
estimates on a shared grid and their overlap coefficient is reported: the
higher the overlap, the more the system's outputs look like shuffled text.

Embeddings come from any provider; the built-in one is a hashed
character-n-gram bag, deterministic and dependency-free, standing in for
real sentence encoders (which can be attached over the wire protocol).
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError
from .rng import stream

GRID_POINTS = 512


class EmbeddingProvider(ABC):
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def embed(self, sentence: str) -> np.ndarray: ...


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity clamped to [-1, 1]; zero vectors score 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InputError("vectors must share a dimension")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class HashedNgramEmbedder(EmbeddingProvider):
    """L2-normalized bag of hashed character n-grams.

    Identical sentences map to identical vectors; lexical overlap gives high
    cosine. Hashing uses blake2b, so vectors are stable across platforms and
    runs.
    """

    def __init__(self, dim: int = 256, char_order: int = 3):
        if dim < 8:
            raise ConfigError("embedding dimension must be at least 8")
        if char_order < 1:
            raise ConfigError("char_order must be at least 1")
        self.dim = dim
        self.char_order = char_order

    def dimension(self) -> int:
        return self.dim

    def embed(self, sentence: str) -> np.ndarray:
        text = " ".join(sentence.split())
        vec = np.zeros(self.dim)
        n = self.char_order
        padded = f" {text} "
        for i in range(max(len(padded) - n + 1, 0)):
            gram = padded[i:i + n]
            digest = hashlib.blake2b(gram.encode("utf-8"),
                                     digest_size=8).digest()
            vec[int.from_bytes(digest, "little") % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def builtin_embedder(dim: int = 256, char_order: int = 3) -> EmbeddingProvider:
    return HashedNgramEmbedder(dim=dim, char_order=char_order)


def seeded_derangement(n: int, seed: int) -> np.ndarray:
    """A permutation of range(n) with no fixed point, by seeded rejection."""
    if n < 2:
        raise InputError("a derangement needs at least two elements")
    rng = stream(seed)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule of thumb, floored so degenerate samples still
    produce a usable density."""
    n = len(values)
    std = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    scale = min(std, iqr / 1.34) if iqr > 0 else std
    h = 0.9 * scale * n ** (-0.2)
    return max(h, 1e-3)


def gaussian_kde_on_grid(values: np.ndarray, grid: np.ndarray,
                         bandwidth: float) -> np.ndarray:
    """Gaussian KDE evaluated on the grid, renormalized to integrate to 1
    over the grid by the trapezoid rule (mass outside the grid is folded
    back in, keeping overlap coefficients well-defined)."""
    z = (grid[:, None] - values[None, :]) / bandwidth
    density = np.exp(-0.5 * z * z).sum(axis=1) / (
        len(values) * bandwidth * np.sqrt(2.0 * np.pi))
    total = np.trapezoid(density, grid)
    return density / total if total > 0 else density


@dataclass
class HallucProfile:
    similarities: np.ndarray
    baseline_similarities: np.ndarray
    grid: np.ndarray
    density: np.ndarray
    baseline_density: np.ndarray
    overlap: float
    bandwidth: float
    bandwidth_baseline: float
    meta: dict

    def as_dict(self) -> dict:
        return {
            "overlap": self.overlap,
            "mean_similarity": float(np.mean(self.similarities)),
            "baseline_mean_similarity": float(
                np.mean(self.baseline_similarities)),
            "bandwidth": self.bandwidth,
            "bandwidth_baseline": self.bandwidth_baseline,
            "meta": self.meta,
        }


def hallucination_profile(outputs: Sequence[str], refs: Sequence[str],
                          provider: EmbeddingProvider | None = None,
                          kde_bandwidth: float | None = None,
                          seed: int = 0) -> HallucProfile:
    """Similarities of (output_i, ref_i) vs. a shuffled-reference baseline.

    The baseline pairs each reference with a deranged reference, simulating
    fluent-but-unrelated output. Densities use Silverman bandwidths unless a
    fixed ``kde_bandwidth`` is given; values are raw cosines in [-1, 1].
    """
    if len(outputs) != len(refs):
        raise InputError("outputs and references must align")
    if len(outputs) < 10:
        raise InputError("need at least 10 segments for a stable profile")
    provider = provider or builtin_embedder()
    ref_vecs = [provider.embed(r) for r in refs]
    out_vecs = [provider.embed(o) for o in outputs]
    sims = np.array([cosine(o, r) for o, r in zip(out_vecs, ref_vecs)])
    perm = seeded_derangement(len(refs), seed)
    base = np.array([cosine(ref_vecs[int(j)], ref_vecs[i])
                     for i, j in enumerate(perm)])
    grid = np.linspace(-1.0, 1.0, GRID_POINTS)
    bw_sys = kde_bandwidth or silverman_bandwidth(sims)
    bw_base = kde_bandwidth or silverman_bandwidth(base)
    density = gaussian_kde_on_grid(sims, grid, bw_sys)
    baseline_density = gaussian_kde_on_grid(base, grid, bw_base)
    overlap = float(np.trapezoid(np.minimum(density, baseline_density), grid))
    return HallucProfile(
        similarities=sims, baseline_similarities=base, grid=grid,
        density=density, baseline_density=baseline_density, overlap=overlap,
        bandwidth=bw_sys, bandwidth_baseline=bw_base,
        meta={"seed": seed, "n": len(outputs),
              "similarity_scale": "raw cosine in [-1, 1]"})
