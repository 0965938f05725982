"""Total variation and its counterfactual decomposition into direct, indirect
and spurious parts, with natural direct/indirect effects and bootstrap CIs.

Notation: ``s = 0`` is the baseline group s1, ``s = 1`` is s2.  With
``mu(s, x, m) = E[Y | S=s, X=x, M=m]`` and
``nu(x) = E[mu(s2, X, M) | S=s2, X=x]`` the estimator is

    ctf_de = mean_{s1}[mu(s2, X, M)] - mean(y | s1)
    ctf_ie = mean_{s1}[mu(s2, X, M) - nu(X)]
    ctf_se = mean_{s1}[nu(X)] - mean(y | s2)

so that ``tv = ctf_de - ctf_ie - ctf_se`` holds by construction.  The natural
effects average over all rows:

    nde = mean[kappa(X)] - mean[lambda(X)]
    nie = mean[nu(X)] - mean[kappa(X)]

where ``kappa(x) = E[mu(s2, X, M) | S=s1, X=x]`` and
``lambda(x) = E[mu(s1, X, M) | S=s1, X=x]``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .learners import LINEAR, LOGISTIC, SQUARED, CrossFitPlan, LearnerSpec, cross_fit_predict
from .rng import substream, subseed
from .tabular import DataError, RoledDataset, encode

EFFECTS = ("tv", "ctf_de", "ctf_ie", "ctf_se", "nde", "nie")
DEFAULT_K = 5
DEFAULT_B = 100
DEFAULT_SEED = 42


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate with a 95% percentile bootstrap interval.

    Without at least two bootstrap replicates the interval and standard
    error are NaN.
    """

    point: float
    ci_low: float = math.nan
    ci_high: float = math.nan
    std_error: float = math.nan
    n_bootstrap: int = 0

    def __post_init__(self):
        if self.n_bootstrap >= 2 and not (self.ci_low <= self.point <= self.ci_high):
            raise ValueError("interval must contain the point estimate")

    @classmethod
    def from_replicates(cls, point: float, replicates: np.ndarray) -> "EffectEstimate":
        reps = np.asarray(replicates, dtype=np.float64)
        if len(reps) < 2:
            return cls(float(point), n_bootstrap=len(reps))
        lo, hi = np.percentile(reps, [2.5, 97.5])
        # a skewed bootstrap can leave the plug-in outside its own interval
        lo, hi = min(float(lo), point), max(float(hi), point)
        return cls(float(point), lo, hi, float(np.std(reps, ddof=1)), len(reps))

    @property
    def has_interval(self) -> bool:
        return self.n_bootstrap >= 2

    def to_dict(self) -> dict:
        return asdict(self)


def default_mu_spec(data: RoledDataset) -> LearnerSpec:
    return LearnerSpec.boosted_stumps(objective=LOGISTIC if data.binary_outcome else SQUARED)


def default_nu_spec() -> LearnerSpec:
    return LearnerSpec.boosted_stumps(objective=SQUARED)


@dataclass(frozen=True)
class DecompositionResult:
    tv: EffectEstimate
    ctf_de: EffectEstimate
    ctf_ie: EffectEstimate
    ctf_se: EffectEstimate
    nde: EffectEstimate
    nie: EffectEstimate
    baseline: tuple[str, ...]
    comparison: tuple[str, ...]
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def effect(self, name: str) -> EffectEstimate:
        if name not in EFFECTS:
            raise KeyError(name)
        return getattr(self, name)

    def points(self) -> dict[str, float]:
        return {name: self.effect(name).point for name in EFFECTS}

    def to_dict(self) -> dict:
        return {
            "effects": {name: self.effect(name).to_dict() for name in EFFECTS},
            "baseline": list(self.baseline),
            "comparison": list(self.comparison),
            "config": self.config,
            "diagnostics": self.diagnostics,
        }


def total_variation(data: RoledDataset) -> EffectEstimate:
    """``mean(y | s2) - mean(y | s1)``."""
    s2 = data.s == 1
    if not s2.any() or s2.all():
        raise DataError("both sensitive groups must be non-empty")
    return EffectEstimate(float(data.y[s2].mean() - data.y[~s2].mean()))


@dataclass(frozen=True)
class _Design:
    full: np.ndarray
    conf: np.ndarray
    s: np.ndarray
    y: np.ndarray

    def take(self, idx: np.ndarray) -> "_Design":
        return _Design(self.full[idx], self.conf[idx], self.s[idx], self.y[idx])


def _design(data: RoledDataset, mu_spec: LearnerSpec) -> _Design:
    view = encode(data, "linear" if mu_spec.kind == LINEAR else "tree")
    full = np.asarray(view.matrix)
    conf = view.select("confounders")
    if conf.shape[1] == 0:
        conf = np.ones((data.n, 1))
    return _Design(full, conf, np.asarray(data.s, dtype=np.int8), np.asarray(data.y, dtype=np.float64))


def _point(d: _Design, mu_spec: LearnerSpec, nu_spec: LearnerSpec, k: int, seed: int) -> tuple[dict, dict]:
    s2 = d.s == 1
    s1 = ~s2
    plan = CrossFitPlan.make(len(d.y), k, subseed(seed, "folds"), strata=d.s)
    at2 = d.full.copy()
    at2[:, 0] = 1.0
    at1 = d.full.copy()
    at1[:, 0] = 0.0
    mu2, mu1 = cross_fit_predict(d.full, d.y, mu_spec, plan, [at2, at1], seed=subseed(seed, "mu"))
    nu = cross_fit_predict(d.conf, mu2, nu_spec, plan, train_mask=s2, seed=subseed(seed, "nu"))
    kappa = cross_fit_predict(d.conf, mu2, nu_spec, plan, train_mask=s1, seed=subseed(seed, "kappa"))
    lam = cross_fit_predict(d.conf, mu1, nu_spec, plan, train_mask=s1, seed=subseed(seed, "lambda"))

    a = float(d.y[s2].mean())
    b = float(d.y[s1].mean())
    m2 = float(mu2[s1].mean())
    mnu = float(nu[s1].mean())
    pop_nu, pop_kappa, pop_lam = float(nu.mean()), float(kappa.mean()), float(lam.mean())
    points = {
        "tv": a - b,
        "ctf_de": m2 - b,
        "ctf_ie": m2 - mnu,
        "ctf_se": mnu - a,
        "nde": pop_kappa - pop_lam,
        "nie": pop_nu - pop_kappa,
    }
    observed = np.where(s2, mu2, mu1)
    diagnostics = {
        "mu_oof_rmse": float(np.sqrt(np.mean((d.y - observed) ** 2))),
        "mu_oof_mean_residual": float(np.mean(d.y - observed)),
        "nu_oof_rmse_s2": float(np.sqrt(np.mean((mu2[s2] - nu[s2]) ** 2))),
        "kappa_oof_rmse_s1": float(np.sqrt(np.mean((mu2[s1] - kappa[s1]) ** 2))),
        "lambda_oof_rmse_s1": float(np.sqrt(np.mean((mu1[s1] - lam[s1]) ** 2))),
        "n_s1": int(s1.sum()),
        "n_s2": int(s2.sum()),
    }
    return points, diagnostics


def _bootstrap_index(s: np.ndarray, seed: int, r: int) -> np.ndarray:
    """Row resample drawn within each group, so both groups keep their size."""
    rng = substream(seed, "bootstrap", r)
    parts = []
    for g in (0, 1):
        rows = np.flatnonzero(s == g)
        parts.append(rows[rng.integers(0, len(rows), len(rows))])
    return np.sort(np.concatenate(parts))


def estimate_decomposition(
    data: RoledDataset,
    mu_spec: LearnerSpec | None = None,
    nu_spec: LearnerSpec | None = None,
    k: int = DEFAULT_K,
    b: int = DEFAULT_B,
    seed: int = DEFAULT_SEED,
    n_jobs: int = 1,
) -> DecompositionResult:
    """Cross-fitted nested-regression decomposition of the s1/s2 outcome gap.

    ``mu_spec`` models ``y`` on (S, X, M); ``nu_spec`` (squared error) models
    the counterfactual predictions on X.  ``b`` bootstrap replicates re-run
    the whole estimator on stratified row resamples.
    """
    mu_spec = mu_spec or default_mu_spec(data)
    nu_spec = nu_spec or default_nu_spec()
    if nu_spec.objective != SQUARED:
        raise ValueError("nu_spec must use the squared_error objective")
    if k < 2:
        raise ValueError("k must be at least 2")
    if b < 0:
        raise ValueError("b must be non-negative")
    n2 = int((data.s == 1).sum())
    n1 = data.n - n2
    if n1 == 0 or n2 == 0:
        raise DataError("both sensitive groups must be non-empty")
    if k > min(n1, n2):
        raise DataError(f"k={k} exceeds the smaller group size {min(n1, n2)}")

    d = _design(data, mu_spec)
    try:
        points, diagnostics = _point(d, mu_spec, nu_spec, k, seed)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise RuntimeError(f"decomposition point estimate failed: {exc}") from exc

    def replicate(r: int) -> list[float]:
        idx = _bootstrap_index(d.s, seed, r)
        try:
            pts, _ = _point(d.take(idx), mu_spec, nu_spec, k, subseed(seed, "replicate", r))
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise RuntimeError(f"bootstrap replicate {r} failed: {exc}") from exc
        return [pts[name] for name in EFFECTS]

    if n_jobs > 1 and b > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            reps = list(pool.map(replicate, range(b)))
    else:
        reps = [replicate(r) for r in range(b)]
    table = np.asarray(reps, dtype=np.float64).reshape(b, len(EFFECTS))

    estimates = {name: EffectEstimate.from_replicates(points[name], table[:, j])
                 for j, name in enumerate(EFFECTS)}
    config = {"mu_spec": mu_spec.to_dict(), "nu_spec": nu_spec.to_dict(), "k": k, "b": b, "seed": seed}
    return DecompositionResult(baseline=data.s1, comparison=data.s2, config=config,
                               diagnostics=diagnostics, **estimates)


def format_cell(point: float, sd: float, digits: int = 3, sd_digits: int = 4) -> str:
    """``"0.016 (0.0001)"``; a missing standard deviation renders as n/a."""
    spread = "n/a" if not math.isfinite(sd) else f"{sd:.{sd_digits}f}"
    return f"{point:.{digits}f} ({spread})"


def _fmt(v: float) -> str:
    return "n/a" if not math.isfinite(v) else f"{v:.6f}"


def decomposition_report(result: DecompositionResult) -> dict:
    """Table-shaped record: one row per effect, cells as ``mean (sd)``."""
    rows = []
    for name in EFFECTS:
        e = result.effect(name)
        rows.append({
            "effect": name,
            "point": _fmt(e.point),
            "std_error": _fmt(e.std_error),
            "ci_low": _fmt(e.ci_low),
            "ci_high": _fmt(e.ci_high),
            "n_bootstrap": e.n_bootstrap,
            "cell": format_cell(e.point, e.std_error),
        })
    return {"baseline": list(result.baseline), "comparison": list(result.comparison), "rows": rows,
            "config": result.config, "diagnostics": {k: _fmt(v) if isinstance(v, float) else v
                                                      for k, v in result.diagnostics.items()}}


def compare_to_truth(result: DecompositionResult, truth: Mapping[str, float]) -> list[dict]:
    """Side-by-side rows of estimate, true value and their difference."""
    rows = []
    for name in EFFECTS:
        if name not in truth:
            continue
        est = result.effect(name).point
        rows.append({"effect": name, "estimate": _fmt(est), "truth": _fmt(float(truth[name])),
                     "difference": _fmt(est - float(truth[name]))})
    return rows


def write_report(result: DecompositionResult, json_path: str | Path, csv_path: str | Path | None = None,
                 truth: Mapping[str, float] | None = None) -> None:
    report = decomposition_report(result)
    if truth is not None:
        report["comparison_to_truth"] = compare_to_truth(result, truth)
    Path(json_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["effect", "point", "std_error", "ci_low", "ci_high", "n_bootstrap"])
            for row in report["rows"]:
                w.writerow([row["effect"], row["point"], row["std_error"], row["ci_low"], row["ci_high"],
                            row["n_bootstrap"]])
