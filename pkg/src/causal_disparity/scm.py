"""Synthetic data from fully specified structural causal models, with exact
ground-truth effect decompositions.

All models share the graph X -> S, X -> M, X -> Y, S -> M, S -> Y, M -> Y.
Group ``s = 0`` is s1 (the baseline) and ``s = 1`` is s2.

Discrete tables are indexed as::

    p_x[x]                  P(X = x)
    p_s_given_x[x]          P(S = s2 | X = x)
    p_m_given_sx[s, x, m]   P(M = m | S = s, X = x)
    p_y_given_smx[s, m, x]  P(Y = 1 | S = s, M = m, X = x)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.special import expit, logit
from scipy.stats import norm

from .rng import substream
from .tabular import CATEGORICAL, CONTINUOUS, ColumnSpec, Dataset, RoleSchema

MAX_CONFOUNDER_STATES = 64
BLOCK_ROWS = 1 << 16
QUADRATURE_POINTS = 129


class ScmError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruth:
    tv: float
    ctf_de: float
    ctf_ie: float
    ctf_se: float
    nde: float
    nie: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _check_simplex(p: np.ndarray, what: str) -> None:
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ScmError(f"{what}: probabilities must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-12):
        raise ScmError(f"{what}: distribution does not sum to 1")


@dataclass(frozen=True)
class DiscreteScm:
    p_x: np.ndarray
    p_s_given_x: np.ndarray
    p_m_given_sx: np.ndarray
    p_y_given_smx: np.ndarray

    def __post_init__(self):
        for name in ("p_x", "p_s_given_x", "p_m_given_sx", "p_y_given_smx"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        k = self.p_x.shape[0] if self.p_x.ndim == 1 else 0
        if k < 1:
            raise ScmError("p_x must be a non-empty vector")
        if k > MAX_CONFOUNDER_STATES:
            raise ScmError(f"at most {MAX_CONFOUNDER_STATES} confounder states are supported")
        if self.p_m_given_sx.ndim != 3 or self.p_m_given_sx.shape[:2] != (2, k) or self.p_m_given_sx.shape[2] < 1:
            raise ScmError(f"p_m_given_sx must have shape (2, {k}, n_mediator_states)")
        n_m = self.p_m_given_sx.shape[2]
        if self.p_s_given_x.shape != (k,):
            raise ScmError(f"p_s_given_x must have shape ({k},)")
        if self.p_y_given_smx.shape != (2, n_m, k):
            raise ScmError(f"p_y_given_smx must have shape (2, {n_m}, {k})")
        _check_simplex(self.p_x, "p_x")
        _check_simplex(self.p_m_given_sx, "p_m_given_sx")
        for name, p in (("p_s_given_x", self.p_s_given_x), ("p_y_given_smx", self.p_y_given_smx)):
            if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
                raise ScmError(f"{name}: probabilities must lie in [0, 1]")

    @property
    def n_x(self) -> int:
        return len(self.p_x)

    @property
    def n_m(self) -> int:
        return self.p_m_given_sx.shape[2]

    def swapped(self) -> "DiscreteScm":
        """The same model with the labels of s1 and s2 exchanged."""
        return DiscreteScm(self.p_x, 1.0 - self.p_s_given_x, self.p_m_given_sx[::-1], self.p_y_given_smx[::-1])

    def to_dict(self) -> dict:
        return {"discrete": {k: getattr(self, k).tolist()
                             for k in ("p_x", "p_s_given_x", "p_m_given_sx", "p_y_given_smx")}}

    @classmethod
    def random(cls, rng: np.random.Generator, n_x: int = 2, n_m: int = 2,
               s_range: tuple[float, float] = (0.2, 0.8), y_range: tuple[float, float] = (0.1, 0.9)) -> "DiscreteScm":
        """Draw a random model; probabilities stay inside the given ranges."""
        p_x = rng.dirichlet(np.full(n_x, 2.0))
        p_m = rng.dirichlet(np.full(n_m, 2.0), size=(2, n_x))
        p_x = p_x / p_x.sum()
        p_m = p_m / p_m.sum(axis=-1, keepdims=True)
        return cls(
            p_x=p_x,
            p_s_given_x=rng.uniform(*s_range, size=n_x),
            p_m_given_sx=p_m,
            p_y_given_smx=rng.uniform(*y_range, size=(2, n_m, n_x)),
        )


@dataclass(frozen=True)
class LinearScm:
    """Gaussian linear model with an optional logistic confounding link.

    x ~ N(0, I); P(S = s2 | x) = expit(logit(p_s2) + s_link . x);
    m = a s + g . x + sigma_m e_m;  y* = b s + d m + t . x + sigma_y e_y.
    In ``"binary"`` mode the outcome is 1{y* > cut}.
    """

    a: float
    b: float
    d: float
    x_dim: int = 1
    g: tuple[float, ...] = ()
    t: tuple[float, ...] = ()
    p_s2: float = 0.5
    s_link: tuple[float, ...] | None = None
    sigma_m: float = 1.0
    sigma_y: float = 1.0
    mode: str = "continuous"
    cut: float = 0.0

    def __post_init__(self):
        if self.x_dim < 1:
            raise ScmError("x_dim must be at least 1")
        for name in ("g", "t"):
            v = tuple(float(c) for c in getattr(self, name)) or (0.0,) * self.x_dim
            object.__setattr__(self, name, v)
            if len(v) != self.x_dim:
                raise ScmError(f"{name} must have x_dim={self.x_dim} entries")
        if self.s_link is not None:
            object.__setattr__(self, "s_link", tuple(float(c) for c in self.s_link))
            if len(self.s_link) != self.x_dim:
                raise ScmError(f"s_link must have x_dim={self.x_dim} entries")
        if not 0.0 < self.p_s2 < 1.0:
            raise ScmError("p_s2 must lie in (0, 1)")
        if self.sigma_m < 0 or self.sigma_y < 0:
            raise ScmError("noise scales must be non-negative")
        if self.mode not in ("continuous", "binary"):
            raise ScmError(f"unknown mode {self.mode!r}")
        if self.mode == "binary" and self.d ** 2 * self.sigma_m ** 2 + self.sigma_y ** 2 == 0:
            raise ScmError("binary mode needs non-degenerate outcome noise")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g"], d["t"] = list(self.g), list(self.t)
        d["s_link"] = list(self.s_link) if self.s_link is not None else None
        return {"linear": d}


@dataclass(frozen=True)
class StepEffectScm:
    """Continuous-outcome model whose direct effect steps on one feature.

    x ~ N(0, I_p); P(S = s2 | x) = expit(s_link * x_1);
    m = a s + 0.5 x_2 + e_m;  y = tau(x) s + d m + prognostic x_2 + sigma e_y,
    with tau(x) = base_effect + effect * 1{x_moderator > 0}.
    """

    n_features: int = 10
    moderator: int = 0
    effect: float = 0.4
    base_effect: float = 0.0
    a: float = 0.5
    d: float = 0.4
    prognostic: float = 0.5
    s_link: float = 0.0
    sigma: float = 1.0

    def tau(self, x: np.ndarray) -> np.ndarray:
        return self.base_effect + self.effect * (x[:, self.moderator] > 0)


def load_spec(path: str | Path) -> DiscreteScm | LinearScm:
    """Read a JSON model file with a ``"discrete"`` or ``"linear"`` body."""
    with open(path, encoding="utf-8") as fh:
        body = json.load(fh)
    return spec_from_dict(body)


def spec_from_dict(body: dict) -> DiscreteScm | LinearScm:
    if "discrete" in body:
        return DiscreteScm(**body["discrete"])
    if "linear" in body:
        kw = dict(body["linear"])
        for k in ("g", "t", "s_link"):
            if kw.get(k) is not None:
                kw[k] = tuple(kw[k])
        return LinearScm(**kw)
    raise ScmError("model file needs a 'discrete' or 'linear' body")


def _categorical_draw(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of ``probs`` (rows are distributions)."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(len(probs))
    return (u[:, None] >= cdf).sum(axis=1)


def _blocks(n: int, seed: int):
    for b, start in enumerate(range(0, n, BLOCK_ROWS)):
        yield substream(seed, "sample", b), min(BLOCK_ROWS, n - start)


def _sample_discrete(spec: DiscreteScm, n: int, seed: int) -> Dataset:
    xs, ss, ms, ys = [], [], [], []
    for rng, size in _blocks(n, seed):
        x = _categorical_draw(rng, np.broadcast_to(spec.p_x, (size, spec.n_x)))
        s = (rng.random(size) < spec.p_s_given_x[x]).astype(np.int64)
        m = _categorical_draw(rng, spec.p_m_given_sx[s, x])
        y = (rng.random(size) < spec.p_y_given_smx[s, m, x]).astype(np.int64)
        xs.append(x), ss.append(s), ms.append(m), ys.append(y)
    cols = (
        ColumnSpec("x", CATEGORICAL, tuple(f"x{k}" for k in range(spec.n_x))),
        ColumnSpec("s", CATEGORICAL, ("s1", "s2")),
        ColumnSpec("m", CATEGORICAL, tuple(f"m{k}" for k in range(spec.n_m))),
        ColumnSpec("y", CATEGORICAL, ("0", "1")),
    )
    values = dict(zip(("x", "s", "m", "y"), map(np.concatenate, (xs, ss, ms, ys))))
    return Dataset(cols, values, np.arange(n, dtype=np.int64))


def _s_probability(spec: LinearScm, x: np.ndarray) -> np.ndarray:
    if spec.s_link is None:
        return np.full(len(x), spec.p_s2)
    return expit(logit(spec.p_s2) + x @ np.asarray(spec.s_link))


def _sample_linear(spec: LinearScm, n: int, seed: int) -> Dataset:
    parts = []
    g, t = np.asarray(spec.g), np.asarray(spec.t)
    for rng, size in _blocks(n, seed):
        x = rng.standard_normal((size, spec.x_dim))
        s = (rng.random(size) < _s_probability(spec, x)).astype(np.int64)
        m = spec.a * s + x @ g + spec.sigma_m * rng.standard_normal(size)
        y = spec.b * s + spec.d * m + x @ t + spec.sigma_y * rng.standard_normal(size)
        parts.append((x, s, m, y))
    x, s, m, y = (np.concatenate([p[k] for p in parts]) for k in range(4))
    xcols = tuple(ColumnSpec(f"x{j + 1}", CONTINUOUS) for j in range(spec.x_dim))
    values = {f"x{j + 1}": x[:, j].copy() for j in range(spec.x_dim)}
    values.update(s=s, m=m)
    if spec.mode == "binary":
        ycol = ColumnSpec("y", CATEGORICAL, ("0", "1"))
        values["y"] = (y > spec.cut).astype(np.int64)
    else:
        ycol = ColumnSpec("y", CONTINUOUS)
        values["y"] = y
    cols = xcols + (ColumnSpec("s", CATEGORICAL, ("s1", "s2")), ColumnSpec("m", CONTINUOUS), ycol)
    return Dataset(cols, values, np.arange(n, dtype=np.int64))


def _sample_step(spec: StepEffectScm, n: int, seed: int) -> Dataset:
    parts = []
    for rng, size in _blocks(n, seed):
        x = rng.standard_normal((size, spec.n_features))
        s = (rng.random(size) < expit(spec.s_link * x[:, 0])).astype(np.int64)
        m = spec.a * s + 0.5 * x[:, 1] + rng.standard_normal(size)
        y = spec.tau(x) * s + spec.d * m + spec.prognostic * x[:, 1] + spec.sigma * rng.standard_normal(size)
        parts.append((x, s, m, y))
    x, s, m, y = (np.concatenate([p[k] for p in parts]) for k in range(4))
    cols = tuple(ColumnSpec(f"x{j + 1}", CONTINUOUS) for j in range(spec.n_features))
    values = {f"x{j + 1}": x[:, j].copy() for j in range(spec.n_features)}
    values.update(s=s, m=m, y=y)
    cols += (ColumnSpec("s", CATEGORICAL, ("s1", "s2")), ColumnSpec("m", CONTINUOUS), ColumnSpec("y", CONTINUOUS))
    return Dataset(cols, values, np.arange(n, dtype=np.int64))


def sample(spec: DiscreteScm | LinearScm | StepEffectScm, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. rows in topological order.

    Rows are generated in fixed-size blocks, each from its own substream of
    ``seed``, so the output does not depend on how blocks are scheduled.
    """
    if n < 1:
        raise ScmError(f"n must be at least 1, got {n}")
    if isinstance(spec, DiscreteScm):
        return _sample_discrete(spec, n, seed)
    if isinstance(spec, LinearScm):
        return _sample_linear(spec, n, seed)
    if isinstance(spec, StepEffectScm):
        return _sample_step(spec, n, seed)
    raise TypeError(f"unsupported model type {type(spec).__name__}")


def scm_schema(spec: DiscreteScm | LinearScm | StepEffectScm) -> RoleSchema:
    """Role schema matching the columns written by :func:`sample`."""
    if isinstance(spec, DiscreteScm):
        confounders: tuple[str, ...] = ("x",)
    elif isinstance(spec, LinearScm):
        confounders = tuple(f"x{j + 1}" for j in range(spec.x_dim))
    else:
        confounders = tuple(f"x{j + 1}" for j in range(spec.n_features))
    binary = isinstance(spec, DiscreteScm) or (isinstance(spec, LinearScm) and spec.mode == "binary")
    return RoleSchema(sensitive="s", outcome="y", confounders=confounders, mediators=("m",),
                      s1_levels=("s1",), positive_level="1" if binary else None)


def _discrete_effects(spec: DiscreteScm) -> GroundTruth:
    px = spec.p_x
    ps = np.stack([1.0 - spec.p_s_given_x, spec.p_s_given_x])      # [s, x]
    joint_sx = ps * px                                               # P(s, x)
    px_given_s = joint_sx / joint_sx.sum(axis=1, keepdims=True)     # [s, x]
    mu = np.transpose(spec.p_y_given_smx, (0, 2, 1))                 # [s, x, m]
    pm = spec.p_m_given_sx                                           # [s, x, m]

    # y_cf[a, b, x] = E[Y_{S=a, M_{S=b}} | x]
    y_cf = np.einsum("bxm,axm->abx", pm, mu)
    e1 = px_given_s[0]
    e2 = px_given_s[1]
    tv = e2 @ y_cf[1, 1] - e1 @ y_cf[0, 0]
    ctf_de = e1 @ (y_cf[1, 0] - y_cf[0, 0])
    ctf_ie = e1 @ (y_cf[1, 0] - y_cf[1, 1])
    ctf_se = e1 @ y_cf[1, 1] - e2 @ y_cf[1, 1]
    nde = px @ (y_cf[1, 0] - y_cf[0, 0])
    nie = px @ (y_cf[1, 1] - y_cf[1, 0])
    return GroundTruth(*(float(v) for v in (tv, ctf_de, ctf_ie, ctf_se, nde, nie)))


def _gaussian_pair_nodes(cov: np.ndarray, points: int = QUADRATURE_POINTS):
    """Tensor Gauss-Hermite nodes for a 2-d zero-mean Gaussian."""
    z, w = np.polynomial.hermite_e.hermegauss(points)
    w = w / np.sqrt(2.0 * np.pi)
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    zz = np.stack(np.meshgrid(z, z, indexing="ij"), axis=-1).reshape(-1, 2)
    ww = np.outer(w, w).ravel()
    return zz @ root.T, ww


def _linear_effects(spec: LinearScm) -> GroundTruth:
    g, t = np.asarray(spec.g), np.asarray(spec.t)
    w = t + spec.d * g                      # loading of x on the outcome index
    c = np.asarray(spec.s_link) if spec.s_link is not None else np.zeros(spec.x_dim)
    cov = np.array([[w @ w, w @ c], [w @ c, c @ c]])
    nodes, weights = _gaussian_pair_nodes(cov)
    u, v = nodes[:, 0], nodes[:, 1]
    p2 = expit(logit(spec.p_s2) + v)
    dens = {None: weights, 0: weights * (1.0 - p2), 1: weights * p2}
    dens = {k: dv / dv.sum() for k, dv in dens.items()}
    scale = np.hypot(spec.d * spec.sigma_m, spec.sigma_y)

    def cf(a: int, b: int, given: int | None) -> float:
        mean = spec.b * a + spec.d * spec.a * b + u
        val = norm.cdf((mean - spec.cut) / scale) if spec.mode == "binary" else mean
        return float(dens[given] @ val)

    tv = cf(1, 1, 1) - cf(0, 0, 0)
    ctf_de = cf(1, 0, 0) - cf(0, 0, 0)
    ctf_ie = cf(1, 0, 0) - cf(1, 1, 0)
    ctf_se = cf(1, 1, 0) - cf(1, 1, 1)
    nde = cf(1, 0, None) - cf(0, 0, None)
    nie = cf(1, 1, None) - cf(1, 0, None)
    return GroundTruth(tv, ctf_de, ctf_ie, ctf_se, nde, nie)


def true_effects(spec: DiscreteScm | LinearScm, baseline: str = "s1") -> GroundTruth:
    """Exact TV, counterfactual and natural effects of ``spec``.

    Discrete models are enumerated; linear models integrate the Gaussian
    confounders with tensor Gauss-Hermite quadrature (noise is integrated in
    closed form).  ``baseline="s2"`` reports effects with the groups swapped
    (discrete models only).
    """
    if baseline not in ("s1", "s2"):
        raise ValueError("baseline must be 's1' or 's2'")
    if isinstance(spec, DiscreteScm):
        return _discrete_effects(spec if baseline == "s1" else spec.swapped())
    if isinstance(spec, LinearScm):
        if baseline != "s1":
            raise NotImplementedError("baseline swap is only available for discrete models")
        return _linear_effects(spec)
    raise TypeError(f"no exact effects for {type(spec).__name__}")


def step_truth(spec: StepEffectScm) -> dict[str, float]:
    """Direct-effect summaries of a :class:`StepEffectScm` by adaptive quadrature."""
    if spec.moderator == 0:
        def s1_density(z):
            return norm.pdf(z) * (1.0 - expit(spec.s_link * z))
        frac_pos_s1 = quad(s1_density, 0.0, np.inf)[0] / quad(s1_density, -np.inf, np.inf)[0]
    else:
        frac_pos_s1 = 0.5
    return {
        "ctf_de": spec.base_effect + spec.effect * frac_pos_s1,
        "nde": spec.base_effect + spec.effect * 0.5,
        "stratum_gap": spec.effect,
    }
