"""Kernel squared-MMD scores, their avg/all aggregations, and the
generator-independent gap between the two.

For any kernel, the squared MMD between two sample sets is the squared
RKHS distance between their mean feature embeddings.  Because that
space is a Hilbert space, the weighted mean of per-client scores equals
the score against the pooled mixture plus a constant that does not
depend on the generator:

    avg(G) = all(G) + sum_i w_i MMD^2(mixture, client_i)

The identity is exact for the plug-in (``vstat``) estimator, which is
therefore the default; the unbiased ``ustat`` estimator is provided for
parity with standard tooling but satisfies the identity only
approximately.

Gram matrices are computed in full (no block subsampling), with sample
counts capped at 20000 per side to keep memory bounded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, SampleCountError
from .statkit import ClientSet, as_embeddings

VSTAT_CLAMP = 1e-10
MAX_GRAM_SIDE = 20000


@dataclass
class KernelSpec:
    """Kernel configuration.

    ``polynomial``: ``(scale * <x, y> + offset) ** degree`` with
    ``scale`` defaulting to ``1/d`` at evaluation time.
    ``rbf``: ``exp(-||x - y||^2 / (2 sigma^2))`` with ``sigma``
    defaulting to ``sqrt(d)``.
    """

    kind: str = "polynomial"
    degree: int = 3
    scale: float | None = None
    offset: float = 1.0
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("polynomial", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError(f"polynomial degree must be an integer >= 1, got {self.degree}")
            self.degree = int(self.degree)
            if self.scale is not None and self.scale <= 0:
                raise ValueError(f"kernel scale must be positive, got {self.scale}")
        if self.kind == "rbf" and self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError(f"rbf bandwidth must be positive, got {self.bandwidth}")

    def resolved_scale(self, dim: int) -> float:
        return self.scale if self.scale is not None else 1.0 / dim

    def resolved_bandwidth(self, dim: int) -> float:
        return self.bandwidth if self.bandwidth is not None else float(np.sqrt(dim))

    def to_json_dict(self) -> dict:
        if self.kind == "polynomial":
            return {
                "kind": "polynomial",
                "degree": self.degree,
                "scale": self.scale,
                "offset": self.offset,
            }
        return {"kind": "rbf", "bandwidth": self.bandwidth}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "KernelSpec":
        kind = obj.get("kind", "polynomial")
        if kind == "polynomial":
            return cls(
                kind="polynomial",
                degree=obj.get("degree", 3),
                scale=obj.get("scale"),
                offset=obj.get("offset", 1.0),
            )
        return cls(kind="rbf", bandwidth=obj.get("bandwidth"))


def load_kernel_spec(path) -> KernelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return KernelSpec.from_json_dict(json.load(fh))


def gram(spec: KernelSpec, x, y) -> np.ndarray:
    """Full kernel Gram matrix between the rows of ``x`` and ``y``."""
    x = as_embeddings(x)
    y = as_embeddings(y)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if x.shape[0] > MAX_GRAM_SIDE or y.shape[0] > MAX_GRAM_SIDE:
        raise ValueError(f"sample count exceeds the {MAX_GRAM_SIDE}-sample Gram cap")
    d = x.shape[1]
    if spec.kind == "polynomial":
        return (spec.resolved_scale(d) * (x @ y.T) + spec.offset) ** spec.degree
    sigma = spec.resolved_bandwidth(d)
    sq = (
        np.sum(x**2, axis=1)[:, None]
        + np.sum(y**2, axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    np.clip(sq, 0.0, None, out=sq)
    return np.exp(-sq / (2.0 * sigma**2))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Kernel value for a single pair of vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    return float(gram(spec, x[None, :], y[None, :])[0, 0])


@dataclass
class MmdResult:
    """Squared MMD with its three kernel-mean blocks."""

    value: float
    within_ref: float
    within_gen: float
    cross: float
    estimator: str

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "within_ref": self.within_ref,
            "within_gen": self.within_gen,
            "cross": self.cross,
            "estimator": self.estimator,
        }


def _within_mean(k: np.ndarray, estimator: str, label: str) -> float:
    n = k.shape[0]
    if estimator == "vstat":
        return float(k.mean())
    if n < 2:
        raise SampleCountError(f"ustat requires >= 2 samples in {label}")
    return float((k.sum() - np.trace(k)) / (n * (n - 1)))


def mmd2(spec: KernelSpec, ref, gen, estimator: str = "vstat") -> MmdResult:
    """Squared MMD between two sample sets.

    ``vstat`` is the plug-in estimator (all pairs, diagonal included);
    ``ustat`` excludes the diagonal in the within blocks and is the
    standard unbiased estimator.
    """
    if estimator not in ("vstat", "ustat"):
        raise ValueError(f"unknown estimator {estimator!r}")
    ref = as_embeddings(ref)
    gen = as_embeddings(gen)
    within_ref = _within_mean(gram(spec, ref, ref), estimator, "ref")
    within_gen = _within_mean(gram(spec, gen, gen), estimator, "gen")
    cross = float(gram(spec, ref, gen).mean())
    value = within_ref + within_gen - 2.0 * cross
    if estimator == "vstat" and value < 0.0:
        if value < -VSTAT_CLAMP:
            raise NumericalError(f"vstat MMD {value!r} below clamp threshold")
        value = 0.0
    return MmdResult(
        value=value,
        within_ref=within_ref,
        within_gen=within_gen,
        cross=cross,
        estimator=estimator,
    )


def _client_matrices(clients: ClientSet) -> list[np.ndarray]:
    mats = []
    for c in clients:
        if c.embeddings is None:
            raise ValueError(f"client {c.id!r} carries no raw embeddings")
        mats.append(c.embeddings)
    return mats


def _block_means(spec: KernelSpec, mats: list[np.ndarray], gen: np.ndarray | None):
    """Mean-kernel blocks between clients (and optionally a generator set).

    Returns ``(b, b_gen, gen_gen)`` where ``b[i, j]`` is the mean kernel
    value between the samples of clients ``i`` and ``j``.
    """
    k = len(mats)
    pooled = np.concatenate(mats, axis=0)
    offsets = np.cumsum([0] + [m.shape[0] for m in mats])
    full = gram(spec, pooled, pooled)
    b = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            b[i, j] = full[offsets[i] : offsets[i + 1], offsets[j] : offsets[j + 1]].mean()
    b_gen = None
    gen_gen = None
    if gen is not None:
        cross = gram(spec, pooled, gen)
        b_gen = np.array(
            [cross[offsets[i] : offsets[i + 1], :].mean() for i in range(k)]
        )
        gen_gen = float(gram(spec, gen, gen).mean())
    return b, b_gen, gen_gen


@dataclass
class KidAvgResult:
    """Weighted mean of per-client squared-MMD scores."""

    value: float
    per_client: list[MmdResult]


def kid_avg(
    clients: ClientSet, gen, spec: KernelSpec | None = None, estimator: str = "vstat"
) -> KidAvgResult:
    """Weighted mean of per-client scores against ``gen`` (clients in id order)."""
    spec = spec or KernelSpec()
    gen = as_embeddings(gen)
    per_client = [
        mmd2(spec, m, gen, estimator=estimator) for m in _client_matrices(clients)
    ]
    values = np.array([r.value for r in per_client])
    return KidAvgResult(value=float(clients.weights @ values), per_client=per_client)


def kid_all(
    clients: ClientSet, gen, spec: KernelSpec | None = None, estimator: str = "vstat"
) -> float:
    """Squared MMD between the weighted client mixture and ``gen``.

    For ``vstat`` the score is computed in the weighted mean-embedding
    form, which reduces to the plug-in MMD of the concatenated samples
    when the weights are the sample-count fractions.  ``ustat`` is only
    defined for sample-count weights and uses the pooled matrix.
    """
    spec = spec or KernelSpec()
    gen = as_embeddings(gen)
    mats = _client_matrices(clients)
    if estimator == "ustat":
        if not clients.has_natural_weights():
            raise ValueError("ustat pooled score requires weights n_i / n")
        return mmd2(spec, np.concatenate(mats, axis=0), gen, estimator="ustat").value
    if estimator != "vstat":
        raise ValueError(f"unknown estimator {estimator!r}")
    w = clients.weights
    b, b_gen, gen_gen = _block_means(spec, mats, gen)
    value = float(w @ b @ w) + gen_gen - 2.0 * float(w @ b_gen)
    if value < 0.0:
        if value < -VSTAT_CLAMP:
            raise NumericalError(f"vstat MMD {value!r} below clamp threshold")
        value = 0.0
    return value


def kid_constant_gap(clients: ClientSet, spec: KernelSpec | None = None) -> float:
    """Weighted mean squared MMD between the client mixture and each client.

    This is the generator-independent offset between the avg and all
    aggregations: for every generator, ``avg - all`` equals this value
    under the plug-in estimator.
    """
    spec = spec or KernelSpec()
    mats = _client_matrices(clients)
    w = clients.weights
    b, _, _ = _block_means(spec, mats, None)
    mix_mix = float(w @ b @ w)
    gap = 0.0
    for i, w_i in enumerate(w):
        gap += w_i * (mix_mix + b[i, i] - 2.0 * float(w @ b[:, i]))
    return float(gap)
